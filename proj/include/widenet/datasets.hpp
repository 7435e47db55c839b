#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <string_view>

#include "widenet/errors.hpp"
#include "widenet/model.hpp"
#include "widenet/numkernel.hpp"

namespace widenet {

enum class DatasetKind { random_label, quadratic_teacher, wei };
enum class Split { train, test };

inline std::string to_string(DatasetKind k) {
    switch (k) {
    case DatasetKind::random_label: return "random_label";
    case DatasetKind::quadratic_teacher: return "quadratic_teacher";
    case DatasetKind::wei: return "wei";
    }
    return "?";
}

inline std::string to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline DatasetKind parse_dataset_kind(std::string_view s) {
    if (s == "random_label") return DatasetKind::random_label;
    if (s == "quadratic_teacher") return DatasetKind::quadratic_teacher;
    if (s == "wei") return DatasetKind::wei;
    throw invalid_config("unknown dataset kind '" + std::string(s) + "'");
}

struct Dataset {
    Matrix x; // n x d
    Vector y;
    DatasetKind kind = DatasetKind::random_label;
    std::uint64_t seed = 0;
    Split split = Split::train;

    [[nodiscard]] std::size_t size() const noexcept { return static_cast<std::size_t>(x.rows()); }
    [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(x.cols()); }
};

// Train and test use different stream ids, and rows are drawn in order, so a
// larger n only appends rows and never changes the test set.
inline RngStream data_stream(DatasetKind kind, std::uint64_t seed, Split split) {
    return RngStream(seed, "data/" + to_string(kind) + "/" + to_string(split));
}

/// x_a i.i.d. N(0, I_d), y_a i.i.d. uniform on [-1/2, 1/2], independent of x.
inline Dataset gen_random_label(std::size_t n, std::size_t d, std::uint64_t seed, Split split = Split::train) {
    if (n < 1 || d < 1) throw invalid_config("random_label needs n, d >= 1");
    const RngStream rng = data_stream(DatasetKind::random_label, seed, split);
    Dataset ds;
    ds.kind = DatasetKind::random_label;
    ds.seed = seed;
    ds.split = split;
    ds.x = gaussian_matrix(rng.child("x"), n, d);
    ds.y = uniform_matrix(rng.child("y"), n, 1, -0.5, 0.5).col(0);
    return ds;
}

struct Teacher {
    ModelConfig config;
    Parameters params;
};

inline constexpr std::size_t teacher_width = 5;

/// Width-5 shallow ReLU network on the quadratic embedding vec(x x^T), ours
/// scaling, c_hat = 1.
inline Teacher make_quadratic_teacher(std::size_t d, std::uint64_t teacher_seed) {
    Teacher t;
    t.config.embedding = EmbeddingSpec::quadratic(d);
    t.config.width = teacher_width;
    t.config.activation = ActivationSpec::make_relu();
    t.config.scaling = ScalingVariant::of(ScalingKind::ours);
    t.config.c_hat = 1.0;
    t.config.seed = teacher_seed;
    t.params = init_params(t.config);
    return t;
}

inline Dataset gen_quadratic_teacher(std::size_t n, std::size_t d, std::uint64_t teacher_seed,
                                     std::uint64_t data_seed, Split split = Split::train) {
    if (n < 1 || d < 1) throw invalid_config("quadratic_teacher needs n, d >= 1");
    const Teacher t = make_quadratic_teacher(d, teacher_seed);
    const RngStream rng = data_stream(DatasetKind::quadratic_teacher, data_seed, split);
    Dataset ds;
    ds.kind = DatasetKind::quadratic_teacher;
    ds.seed = data_seed;
    ds.split = split;
    ds.x = gaussian_matrix(rng.child("x"), n, d);
    ds.y = forward(t.params, t.config, ds.x).f;
    return ds;
}

struct WeiAtom {
    double x1, x2, y;
};

inline constexpr std::array<WeiAtom, 4> wei_atoms{{{1.0, 0.0, 1.0}, {-1.0, 0.0, 1.0}, {0.0, 1.0, -1.0}, {0.0, -1.0, -1.0}}};

/// (x1, x2, y) uniform over the four atoms; x3..xd i.i.d. uniform on [-1, 1].
inline Dataset gen_wei(std::size_t n, std::size_t d, std::uint64_t seed, Split split = Split::train) {
    if (d < 3) throw invalid_config("wei dataset needs d >= 3");
    if (n < 1) throw invalid_config("wei dataset needs n >= 1");
    const RngStream rng = data_stream(DatasetKind::wei, seed, split);
    Dataset ds;
    ds.kind = DatasetKind::wei;
    ds.seed = seed;
    ds.split = split;
    ds.x.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    ds.y.resize(static_cast<Eigen::Index>(n));
    auto atom_eng = rng.child("atom").engine();
    const Matrix noise = uniform_matrix(rng.child("noise"), n, d - 2, -1.0, 1.0);
    for (Eigen::Index a = 0; a < static_cast<Eigen::Index>(n); ++a) {
        const WeiAtom& at = wei_atoms[static_cast<std::size_t>(atom_eng() >> 62)];
        ds.x(a, 0) = at.x1;
        ds.x(a, 1) = at.x2;
        ds.y[a] = at.y;
        ds.x.row(a).tail(static_cast<Eigen::Index>(d - 2)) = noise.row(a);
    }
    return ds;
}

/// CSV with header x_1..x_d,y and 17 significant digits.
inline void write_dataset_csv(std::ostream& os, const Dataset& ds) {
    const auto old_precision = os.precision(17);
    for (std::size_t j = 0; j < ds.dim(); ++j) os << "x_" << (j + 1) << ',';
    os << "y\n";
    for (Eigen::Index a = 0; a < ds.x.rows(); ++a) {
        for (Eigen::Index j = 0; j < ds.x.cols(); ++j) os << ds.x(a, j) << ',';
        os << ds.y[a] << '\n';
    }
    os.precision(old_precision);
}

} // namespace widenet
