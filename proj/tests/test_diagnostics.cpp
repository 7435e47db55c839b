#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "widenet/datasets.hpp"
#include "widenet/diagnostics.hpp"

using namespace widenet;

namespace {

// E_z[relu(z.x/sqrt d) relu(z.y/sqrt d)] for z ~ N(0, I_d), first-order arc-cosine kernel.
double arccos_relu(const Vector& x, const Vector& y) {
    const double d = static_cast<double>(x.size());
    const double nx = x.norm(), ny = y.norm();
    const double cos_t = std::clamp(x.dot(y) / (nx * ny), -1.0, 1.0);
    const double theta = std::acos(cos_t);
    return nx * ny / (2.0 * std::numbers::pi * d) * (std::sin(theta) + (std::numbers::pi - theta) * cos_t);
}

// Brute-force Monte Carlo with its own generator, independent of the library streams.
double brute_force_relu(const Vector& x, const Vector& y, int samples, unsigned seed) {
    std::mt19937_64 eng(seed);
    std::normal_distribution<double> n01;
    const double s = 1.0 / std::sqrt(static_cast<double>(x.size()));
    double acc = 0.0;
    Vector z(x.size());
    for (int k = 0; k < samples; ++k) {
        for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = n01(eng);
        acc += std::max(0.0, s * z.dot(x)) * std::max(0.0, s * z.dot(y));
    }
    return acc / samples;
}

ModelConfig tanh_config(ScalingKind s, std::size_t m, std::size_t d, std::uint64_t seed) {
    ModelConfig c;
    c.width = m;
    c.embedding = EmbeddingSpec::identity(d);
    c.activation = ActivationSpec::make_tanh();
    c.scaling = ScalingVariant::of(s);
    c.seed = seed;
    return c;
}

} // namespace

TEST(Gram, ScaledBasisGivesIdentity) {
    const std::size_t d = 4;
    const Matrix x = std::sqrt(static_cast<double>(d)) * Matrix::Identity(d, d);
    const GramReport g = gram(EmbeddingSpec::identity(d), {}, x);
    EXPECT_NEAR((g.g - Matrix::Identity(d, d)).cwiseAbs().maxCoeff(), 0.0, 1e-15);
    EXPECT_NEAR(g.lambda_min, 1.0, 1e-12);
    EXPECT_NEAR(g.lambda_max, 1.0, 1e-12);
    EXPECT_EQ(g.kind, GramKind::g0);
}

TEST(Gram, DuplicateRowsAreSingular) {
    Matrix x = gaussian_matrix(RngStream(1, "test/x"), 3, 5);
    x.row(2) = x.row(0);
    EXPECT_NEAR(gram(EmbeddingSpec::identity(5), {}, x).lambda_min, 0.0, 1e-10);
}

TEST(Gram, QuadraticIsSquareOfLinear) {
    const Matrix x = gaussian_matrix(RngStream(2, "test/x"), 8, 5);
    const GramReport q = gram(EmbeddingSpec::quadratic(5), {}, x);
    const GramReport g0 = gram(EmbeddingSpec::identity(5), {}, x);
    EXPECT_LT((q.g - g0.g.cwiseProduct(g0.g)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(q.kind, GramKind::quadratic);
}

TEST(Gram, ReportInvariants) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Matrix x = gaussian_matrix(RngStream(seed, "test/x"), 12, 6);
        const EmbeddingSpec spec = EmbeddingSpec::random_feature(6, 40, ActivationSpec::make_relu(), seed);
        const GramReport g = gram(spec, build_embedding(spec), x);
        EXPECT_GE(g.lambda_min, -1e-9);
        EXPECT_LE(g.lambda_min, g.g_min + 1e-12);
        EXPECT_LE(g.g_min, g.g_max);
        EXPECT_LE(g.g_max, g.lambda_max + 1e-9);
        EXPECT_EQ(g.g, g.g.transpose());
        EXPECT_GE(g.g.diagonal().minCoeff(), 0.0);
    }
}

TEST(GramLimit, ReluDiagonal) {
    const Matrix x = gaussian_matrix(RngStream(3, "test/x"), 2, 6);
    const GramReport g = gram_limit_mc(ActivationSpec::make_relu(), x, 200000, 1);
    for (Eigen::Index a = 0; a < 2; ++a) {
        const double expected = x.row(a).squaredNorm() / (2.0 * 6.0);
        EXPECT_LE(std::abs(g.g(a, a) - expected), 4.0 * g.std_error(a, a));
    }
    EXPECT_EQ(g.mc_samples, 200000u);
}

TEST(GramLimit, LinearMatchesLinearGram) {
    const Matrix x = gaussian_matrix(RngStream(4, "test/x"), 4, 5);
    const GramReport g = gram_limit_mc(ActivationSpec::make_linear(), x, 100000, 2);
    const Matrix g0 = x * x.transpose() / 5.0;
    for (Eigen::Index a = 0; a < 4; ++a)
        for (Eigen::Index b = 0; b < 4; ++b) EXPECT_LE(std::abs(g.g(a, b) - g0(a, b)), 4.0 * g.std_error(a, b) + 1e-15);
}

TEST(GramLimit, ReluOrthogonalPair) {
    const std::size_t d = 4;
    const Matrix x = 2.0 * Matrix::Identity(2, d);
    const GramReport g = gram_limit_mc(ActivationSpec::make_relu(), x, 200000, 3);
    const double closed_form = 1.0 / (2.0 * std::numbers::pi);
    EXPECT_LE(std::abs(g.g(0, 1) - closed_form), 4.0 * g.std_error(0, 1));
    const double brute = brute_force_relu(x.row(0).transpose(), x.row(1).transpose(), 1'000'000, 99);
    EXPECT_NEAR(brute, closed_form, 2e-3);
    EXPECT_NEAR(arccos_relu(x.row(0).transpose(), x.row(1).transpose()), closed_form, 1e-15);
}

TEST(GramLimit, ArcCosineOracleOnRandomPairs) {
    const Matrix x = gaussian_matrix(RngStream(5, "test/x"), 5, 7);
    const GramReport g = gram_limit_mc(ActivationSpec::make_relu(), x, 100000, 4);
    for (Eigen::Index a = 0; a < 5; ++a)
        for (Eigen::Index b = a; b < 5; ++b)
            EXPECT_LE(std::abs(g.g(a, b) - arccos_relu(x.row(a).transpose(), x.row(b).transpose())), 4.0 * g.std_error(a, b));
}

TEST(GramLimit, HalvesAverageToWhole) {
    const Matrix x = gaussian_matrix(RngStream(6, "test/x"), 5, 4);
    const ActivationSpec relu = ActivationSpec::make_relu();
    const GramReport whole = gram_limit_mc_range(relu, x, 8, 0, 3000);
    const GramReport first = gram_limit_mc_range(relu, x, 8, 0, 1500);
    const GramReport second = gram_limit_mc_range(relu, x, 8, 1500, 1500);
    EXPECT_LT((0.5 * (first.g + second.g) - whole.g).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(GramLimit, RejectsFewSamples) {
    EXPECT_THROW(gram_limit_mc(ActivationSpec::make_relu(), Matrix::Ones(2, 2), 999, 1), invalid_config);
}

TEST(Concentration, LinearDeviationShrinks) {
    const Matrix x = gaussian_matrix(RngStream(7, "test/x"), 6, 6);
    const ConcentrationTable t = concentration_probe(ActivationSpec::make_linear(), x, {256, 4096}, 5, 1, 100000);
    ASSERT_EQ(t.rows.size(), 2u);
    EXPECT_LT(t.rows[1].median_deviation, t.rows[0].median_deviation);
}

TEST(Concentration, SinglePointIsScalarGap) {
    const Matrix x = gaussian_matrix(RngStream(8, "test/x"), 1, 3);
    const ConcentrationTable t = concentration_probe(ActivationSpec::make_relu(), x, {64}, 3, 2, 10000);
    const RngStream base(2, "concentration");
    const EmbeddingSpec spec = EmbeddingSpec::random_feature(3, 64, ActivationSpec::make_relu(), 2);
    for (std::size_t k = 0; k < 3; ++k) {
        EmbeddingWeights w;
        w.z = gaussian_matrix(base.child("D64").child("trial" + std::to_string(k)), 64, 3);
        const double g = gram(spec, w, x).g(0, 0);
        EXPECT_NEAR(t.rows[0].deviations[k], std::abs(g - t.reference.g(0, 0)), 1e-14);
    }
}

TEST(Concentration, Validation) {
    const Matrix x = Matrix::Ones(2, 2);
    EXPECT_THROW(concentration_probe(ActivationSpec::make_relu(), x, {64}, 2, 1, 1000), invalid_config);
    EXPECT_THROW(concentration_probe(ActivationSpec::make_relu(), x, {128, 64}, 3, 1, 1000), invalid_config);
    EXPECT_THROW(concentration_probe(ActivationSpec::make_relu(), x, {}, 3, 1, 1000), invalid_config);
}

TEST(ActiveFractionTest, AllInside) {
    const ActiveFraction af = active_fraction(Matrix::Zero(4, 3), {-1.0, 1.0}, false);
    EXPECT_EQ(af.min_over_points, 1.0);
    EXPECT_EQ(af.per_point, Vector::Ones(3));
}

TEST(ActiveFractionTest, HalfInside) {
    Matrix h(4, 2);
    h << 0.0, 0.5, 0.1, -0.5, 5.0, 2.0, -3.0, -7.0;
    const ActiveFraction af = active_fraction(h, {-1.0, 1.0}, false);
    EXPECT_EQ(af.per_point[0], 0.5);
    EXPECT_EQ(af.per_point[1], 0.5);
}

TEST(ActiveFractionTest, GaussianMass) {
    const Matrix h = gaussian_matrix(RngStream(1, "test/h"), 10000, 1);
    EXPECT_NEAR(active_fraction(h, {-1.0, 1.0}, false).min_over_points, 0.6827, 0.02);
}

TEST(ActiveFractionTest, ShrinkUsesMiddleThird) {
    Matrix h(3, 1);
    h << -0.5, 0.0, 0.5;
    EXPECT_DOUBLE_EQ(active_fraction(h, {-1.5, 1.5}, true).min_over_points, 1.0 / 3.0);
    EXPECT_THROW(active_fraction(h, {1.0, -1.0}, false), invalid_config);
    EXPECT_THROW(active_fraction(h, {0.0, std::numeric_limits<double>::infinity()}, false), invalid_config);
}

TEST(TheoryConstantsTest, KappaPlugIn) {
    const TheoryConstants tc = theory_constants({-1.0, 1.0}, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
    EXPECT_DOUBLE_EQ(tc.kappa, 9.0);
    EXPECT_EQ(tc.status, ConstantsStatus::ok);
}

TEST(TheoryConstantsTest, KPlugIn) {
    const TheoryConstants tc = theory_constants({-1.0, 1.0}, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
    const double independent = 2.0 / (6.0 * std::sqrt(2.0 * 3.14159265358979323846)) * std::exp(-1.0);
    EXPECT_NEAR(tc.k_const, independent, 1e-15);
    EXPECT_NEAR(tc.k_const, 0.04891, 2e-5); // quoted value is truncated, exact value 0.0489209
}

TEST(TheoryConstantsTest, RateScalesWithCHatSquared) {
    const TheoryConstants a = theory_constants({-1.0, 1.0}, 0.8, 1.2, 0.3, 2.0, 0.42, 1.0);
    const TheoryConstants b = theory_constants({-1.0, 1.0}, 0.8, 1.2, 0.3, 2.0, 0.42, 2.0);
    EXPECT_NEAR(b.rate_exponent, 4.0 * a.rate_exponent, 1e-15);
    EXPECT_GT(a.kappa, 0.0);
    EXPECT_GT(a.k_const, 0.0);
    EXPECT_GT(a.rate_exponent, 0.0);
}

TEST(TheoryConstantsTest, Monotonicity) {
    const TheoryConstants base = theory_constants({-1.0, 1.0}, 1.0, 1.0, 0.5, 2.0, 0.4, 1.0);
    EXPECT_GT(theory_constants({-1.0, 1.0}, 1.0, 1.0, 0.5, 3.0, 0.4, 1.0).kappa, base.kappa);
    const TheoryConstants wider = theory_constants({-1.0, 1.5}, 1.0, 1.0, 0.5, 2.0, 0.4, 1.0);
    EXPECT_GT(wider.kappa, base.kappa);
    const TheoryConstants same_edge = theory_constants({-1.5, 1.0}, 1.0, 1.0, 0.5, 2.0, 0.4, 1.0);
    const TheoryConstants narrow = theory_constants({-1.5, 0.5}, 1.0, 1.0, 0.5, 2.0, 0.4, 1.0);
    EXPECT_GT(same_edge.k_const, narrow.k_const);
}

TEST(TheoryConstantsTest, DegenerateGram) {
    EXPECT_EQ(theory_constants({-1.0, 1.0}, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0).status, ConstantsStatus::degenerate_gram);
    EXPECT_THROW(theory_constants({0.0, std::numeric_limits<double>::infinity()}, 1, 1, 1, 1, 1, 1), invalid_config);
}

TEST(Lemma1, ZeroStepTraceHoldsBySetInclusion) {
    const ModelConfig c = tanh_config(ScalingKind::ours, 64, 5, 1);
    const Dataset ds = gen_random_label(5, 5, 1);
    TrainConfig t;
    t.steps = 0;
    const TrainingTrace tr = run_training(c, t, ds.x, ds.y);
    const GramReport g = gram(c.embedding, {}, ds.x);
    const Lemma1Report r = lemma1_monitor(tr, theory_constants(g, c.activation, c.c_hat), c.c_hat);
    ASSERT_EQ(r.points.size(), 1u);
    EXPECT_TRUE(r.pass);
    EXPECT_GE(tr.eta.front().min_over_points, tr.eta_shrunk0);
}

TEST(Lemma1, SaturatedFractionPassesWithKnownMargin) {
    TrainingTrace tr;
    tr.eta_shrunk0 = 0.5;
    tr.loss = {{0, 1.0}, {10, 0.5}, {20, 0.0}};
    for (std::size_t s : {0u, 10u, 20u}) tr.eta.push_back({s, Vector::Ones(2), 1.0});
    const TheoryConstants tc = theory_constants({-1.0, 1.0}, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
    const Lemma1Report r = lemma1_monitor(tr, tc, 1.0);
    EXPECT_TRUE(r.pass);
    EXPECT_GE(r.worst_margin, 1.0 - std::pow(0.5, 1.5));
}

TEST(Lemma1, MissingSeriesIsUnavailable) {
    TrainingTrace tr;
    tr.loss = {{0, 1.0}};
    const TheoryConstants tc = theory_constants({-1.0, 1.0}, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0);
    EXPECT_THROW(lemma1_monitor(tr, tc, 1.0), monitor_unavailable);
}

TEST(Lemma1, SmallStepTanhRunPasses) {
    const ModelConfig c = tanh_config(ScalingKind::ours, 2048, 20, 2);
    const Dataset ds = gen_random_label(10, 20, 2);
    TrainConfig t;
    t.steps = 400;
    t.delta = 0.05;
    t.record_every = 10;
    const TrainingTrace tr = run_training(c, t, ds.x, ds.y);
    const GramReport g = gram(c.embedding, {}, ds.x);
    const Lemma1Report r = lemma1_monitor(tr, theory_constants(g, c.activation, c.c_hat), c.c_hat);
    EXPECT_TRUE(r.pass);
    EXPECT_EQ(r.points.size(), 41u);
}

TEST(Pl, ZeroResidualBothZero) {
    const ModelConfig c = tanh_config(ScalingKind::ours, 16, 4, 3);
    const Parameters p = init_params(c);
    const Matrix x = gaussian_matrix(RngStream(3, "test/x"), 5, 4);
    const Vector y = forward(p, c, x).f;
    const PlReport r = pl_monitor(p, c, x, y, gram(c.embedding, {}, x));
    EXPECT_EQ(r.exact_dldt, 0.0);
    EXPECT_EQ(r.bound, 0.0);
    EXPECT_TRUE(r.pass);
}

TEST(Pl, SinglePointEquality) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const ModelConfig c = tanh_config(ScalingKind::ours, 16, 4, seed);
        const Parameters p = init_params(c);
        const Dataset ds = gen_random_label(1, 4, seed);
        const PlReport r = pl_monitor(p, c, ds.x, ds.y, gram(c.embedding, {}, ds.x));
        EXPECT_EQ(r.exact_dldt, r.bound);
        EXPECT_TRUE(r.pass);
    }
}

TEST(Pl, InequalityAndEulerConsistency) {
    for (ScalingKind s : {ScalingKind::ours, ScalingKind::ntk, ScalingKind::mf}) {
        ModelConfig c = tanh_config(s, 8, 5, 4);
        if (s == ScalingKind::mf) c.embedding = EmbeddingSpec::identity(8);
        const Parameters p = init_params(c);
        const Dataset ds = gen_random_label(5, c.embedding.input_dim, 4);
        const GramReport g = gram(c.embedding, {}, ds.x);
        const PlReport r = pl_monitor(p, c, ds.x, ds.y, g);
        EXPECT_TRUE(r.pass) << ScalingVariant::of(s).name();
        EXPECT_LE(r.bound, 0.0);

        const double eps = 1e-7;
        const ForwardState st = forward(p, c, ds.x, &ds.y);
        const Parameters q = gd_step(p, grad_w(p, c, ds.x, st), eps, c.scaling);
        const double fd = (loss(forward(q, c, ds.x).f, ds.y) - loss(st.f, ds.y)) / eps;
        EXPECT_NEAR(fd, r.exact_dldt, 1e-5 * std::max(1.0, std::abs(r.exact_dldt))) << ScalingVariant::of(s).name();
    }
}

TEST(Pl, FlowCoefficientIsInverseWidth) {
    EXPECT_NEAR(gradient_flow_coefficient(ScalingVariant::of(ScalingKind::ours), 64, 10), 1.0 / 64, 1e-15);
    EXPECT_NEAR(gradient_flow_coefficient(ScalingVariant::of(ScalingKind::ntk), 64, 10), 1.0 / 64, 1e-15);
    EXPECT_NEAR(gradient_flow_coefficient(ScalingVariant::of(ScalingKind::mf), 64, 64), 1.0 / 64, 1e-15);
}

TEST(Movement, Basics) {
    const Matrix h = gaussian_matrix(RngStream(1, "test/h"), 6, 4);
    EXPECT_EQ(feature_movement(h, h), Vector::Zero(4));
    const Vector ones = feature_movement(h, (h.array() + 1.0).matrix());
    for (Eigen::Index a = 0; a < 4; ++a) EXPECT_NEAR(ones[a], 1.0, 1e-15);
    EXPECT_THROW(feature_movement(h, Matrix::Zero(6, 3)), structural_error);
}

TEST(Movement, NtkMovesLikeInverseSqrtWidth) {
    double mov[2];
    const std::size_t widths[2] = {256, 4096};
    const Dataset ds = gen_random_label(10, 10, 3);
    for (int k = 0; k < 2; ++k) {
        const ModelConfig c = tanh_config(ScalingKind::ntk, widths[k], 10, 3);
        TrainConfig t;
        t.steps = 300;
        t.delta = 1.0;
        t.record_every = 300;
        t.snapshot_steps = {0, 300};
        const TrainingTrace tr = run_training(c, t, ds.x, ds.y);
        mov[k] = feature_movement(tr.snapshots[0].h, tr.snapshots[1].h).mean();
    }
    const double ratio = mov[1] / mov[0];
    EXPECT_GT(ratio, 0.25 / 2.0);
    EXPECT_LT(ratio, 0.25 * 2.0);
}

TEST(Movement, BoundHoldsOnTrainingRun) {
    const ModelConfig c = tanh_config(ScalingKind::ntk, 64, 6, 9);
    const Dataset ds = gen_random_label(6, 6, 9);
    TrainConfig t;
    t.steps = 100;
    t.delta = 0.5;
    t.record_every = 10;
    t.snapshot_steps = {0, 30, 100};
    const TrainingTrace tr = run_training(c, t, ds.x, ds.y);
    EXPECT_TRUE(movement_bound_all_pairs(tr, c.c_hat, c.activation.lipschitz, c.scaling));
}
