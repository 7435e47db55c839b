#include <cmath>
#include <sstream>

#include <gtest/gtest.h>

#include "widenet/datasets.hpp"
#include "widenet/diagnostics.hpp"

using namespace widenet;

TEST(RandomLabel, Deterministic) {
    const Dataset a = gen_random_label(20, 20, 1);
    const Dataset b = gen_random_label(20, 20, 1);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.y, b.y);
}

TEST(RandomLabel, LabelSupport) {
    const Dataset a = gen_random_label(1000, 3, 2);
    EXPECT_GE(a.y.minCoeff(), -0.5);
    EXPECT_LE(a.y.maxCoeff(), 0.5);
}

TEST(RandomLabel, GramIsNonSingular) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const Dataset a = gen_random_label(20, 20, seed);
        EXPECT_GT(gram(EmbeddingSpec::identity(20), {}, a.x).lambda_min, 0.0) << seed;
    }
}

TEST(RandomLabel, TestSplitIndependentOfTrainSize) {
    const Dataset t1 = gen_random_label(30, 4, 5, Split::test);
    const Dataset small = gen_random_label(10, 4, 5);
    const Dataset large = gen_random_label(40, 4, 5);
    const Dataset t2 = gen_random_label(30, 4, 5, Split::test);
    EXPECT_EQ(t1.x, t2.x);
    EXPECT_EQ(large.x.topRows(10), small.x);
    EXPECT_NE(t1.x.row(0), small.x.row(0));
}

TEST(QuadraticTeacher, SameTeacherDifferentInputs) {
    const Dataset a = gen_quadratic_teacher(10, 4, 7, 1);
    const Dataset b = gen_quadratic_teacher(10, 4, 7, 2);
    EXPECT_NE(a.x, b.x);
    const Teacher t = make_quadratic_teacher(4, 7);
    EXPECT_EQ(forward(t.params, t.config, b.x).f, b.y);
    EXPECT_EQ(t.config.width, 5u);
    EXPECT_EQ(t.config.embedding.embedding_dim, 16u);
}

TEST(QuadraticTeacher, ReproducesOwnLabels) {
    const Dataset a = gen_quadratic_teacher(25, 30, 3, 4);
    const Teacher t = make_quadratic_teacher(30, 3);
    EXPECT_EQ(forward(t.params, t.config, a.x).f, a.y);
}

TEST(Wei, AtomFrequencies) {
    const Dataset w = gen_wei(4000, 5, 1);
    int counts[4] = {0, 0, 0, 0};
    for (Eigen::Index a = 0; a < 4000; ++a)
        for (int k = 0; k < 4; ++k)
            if (w.x(a, 0) == wei_atoms[static_cast<std::size_t>(k)].x1 && w.x(a, 1) == wei_atoms[static_cast<std::size_t>(k)].x2) ++counts[k];
    for (int k = 0; k < 4; ++k) {
        EXPECT_GT(counts[k] / 4000.0, 0.22);
        EXPECT_LT(counts[k] / 4000.0, 0.28);
    }
    EXPECT_EQ(counts[0] + counts[1] + counts[2] + counts[3], 4000);
}

TEST(Wei, LabelsFollowSecondCoordinate) {
    const Dataset w = gen_wei(500, 6, 2);
    for (Eigen::Index a = 0; a < 500; ++a) {
        EXPECT_EQ(w.y[a] == 1.0, w.x(a, 1) == 0.0);
        EXPECT_TRUE(w.y[a] == 1.0 || w.y[a] == -1.0);
        for (Eigen::Index j = 2; j < 6; ++j) EXPECT_LE(std::abs(w.x(a, j)), 1.0);
    }
}

TEST(Wei, LabelMeanNearZero) {
    const Dataset w = gen_wei(10000, 3, 3);
    EXPECT_LT(std::abs(w.y.mean()), 3.0 / std::sqrt(10000.0));
}

TEST(Wei, RejectsSmallDimension) {
    EXPECT_THROW(gen_wei(10, 2, 1), invalid_config);
}

TEST(Csv, HeaderAndPrecision) {
    Dataset ds;
    ds.x = Matrix::Constant(1, 2, 0.1);
    ds.y = Vector::Constant(1, 1.0 / 3.0);
    std::ostringstream os;
    write_dataset_csv(os, ds);
    EXPECT_EQ(os.str(), "x_1,x_2,y\n0.10000000000000001,0.10000000000000001,0.33333333333333331\n");
}

TEST(Kinds, ParseRoundTrip) {
    for (DatasetKind k : {DatasetKind::random_label, DatasetKind::quadratic_teacher, DatasetKind::wei})
        EXPECT_EQ(parse_dataset_kind(to_string(k)), k);
    EXPECT_THROW(parse_dataset_kind("mnist"), invalid_config);
}
