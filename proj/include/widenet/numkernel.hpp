#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <string_view>

#include <Eigen/Dense>

#include "widenet/errors.hpp"

namespace widenet {

// Row-major so that row a of a data matrix is the contiguous sample x_a.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char ch : s) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001B3ULL;
    }
    return h;
}

} // namespace detail

/// A named, seeded random stream.
///
/// A stream is a value: it names a sequence rather than holding generator
/// state, so every consumer that asks for `engine()` starts the same sequence.
/// Streams with the same seed but different ids are decorrelated by hashing the
/// id into the engine seed, which lets the data stream stay fixed while the
/// width (and therefore the number of weight draws) changes.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::string id) : seed_(seed), id_(std::move(id)) {}

    [[nodiscard]] std::uint64_t seed() const noexcept { return seed_; }
    [[nodiscard]] const std::string& id() const noexcept { return id_; }

    [[nodiscard]] RngStream child(std::string_view name) const {
        return RngStream(seed_, id_ + "/" + std::string(name));
    }

    [[nodiscard]] std::mt19937_64 engine() const {
        return std::mt19937_64(detail::splitmix64(seed_ ^ detail::splitmix64(detail::fnv1a(id_))));
    }

    friend bool operator==(const RngStream&, const RngStream&) = default;

private:
    std::uint64_t seed_;
    std::string id_;
};

/// i.i.d. N(0,1) entries, filled in row-major order.
inline Matrix gaussian_matrix(const RngStream& rng, std::size_t rows, std::size_t cols) {
    auto eng = rng.engine();
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    double* p = out.data();
    for (std::size_t k = 0; k < rows * cols; ++k) p[k] = normal(eng);
    return out;
}

/// Entries +scale or -scale with probability 1/2 each. The sign pattern depends
/// only on the stream and length, never on scale.
inline Vector rademacher_vector(const RngStream& rng, std::size_t len, double scale) {
    if (!(scale > 0.0) || !std::isfinite(scale))
        throw invalid_config("rademacher scale must be a positive finite number");
    auto eng = rng.engine();
    Vector out(static_cast<Eigen::Index>(len));
    for (std::size_t k = 0; k < len; ++k)
        out[static_cast<Eigen::Index>(k)] = (eng() >> 63) ? scale : -scale;
    return out;
}

/// i.i.d. uniform entries on [lo, hi), row-major.
inline Matrix uniform_matrix(const RngStream& rng, std::size_t rows, std::size_t cols, double lo, double hi) {
    auto eng = rng.engine();
    std::uniform_real_distribution<double> uni(lo, hi);
    Matrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    double* p = out.data();
    for (std::size_t k = 0; k < rows * cols; ++k) p[k] = uni(eng);
    return out;
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& a) {
    return a.allFinite();
}

inline double max_abs(const Matrix& a) {
    return a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
}

struct EigenExtremes {
    double lambda_min = 0.0;
    double lambda_max = 0.0;
};

constexpr std::size_t max_eigen_dim = 2048;

namespace detail {

inline void require_symmetric(const Matrix& a, const char* who) {
    if (a.rows() != a.cols())
        throw structural_error(std::string(who) + ": matrix is not square");
    if (static_cast<std::size_t>(a.rows()) > max_eigen_dim)
        throw structural_error(std::string(who) + ": dimension exceeds " + std::to_string(max_eigen_dim));
    if (!a.allFinite())
        throw numeric_error(std::string(who) + ": non-finite entry");
    const double tol = 1e-12 * std::max(1.0, max_abs(a));
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = i + 1; j < a.cols(); ++j)
            if (std::abs(a(i, j) - a(j, i)) > tol)
                throw structural_error(std::string(who) + ": matrix is not symmetric at (" + std::to_string(i) +
                                       "," + std::to_string(j) + ")");
}

} // namespace detail

/// Full spectrum of a symmetric matrix in ascending order.
///
/// Householder tridiagonalization followed by implicit symmetric QL (Eigen's
/// SelfAdjointEigenSolver). The attainable absolute accuracy is on the order
/// of n * eps * ||A||_F.
inline Vector symmetric_spectrum(const Matrix& a) {
    detail::require_symmetric(a, "symmetric_spectrum");
    if (a.rows() == 0) return Vector();
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success)
        throw numeric_error("symmetric eigensolver did not converge");
    return solver.eigenvalues();
}

/// Smallest and largest eigenvalue of a symmetric matrix.
///
/// `tol` is the accuracy the caller needs; a request below what the solver can
/// guarantee for this matrix is rejected rather than silently unmet.
inline EigenExtremes sym_eig_extremes(const Matrix& a, double tol = 1e-9) {
    if (!(tol > 0.0)) throw invalid_config("eigen tolerance must be positive");
    detail::require_symmetric(a, "sym_eig_extremes");
    if (a.rows() == 0) throw structural_error("sym_eig_extremes: empty matrix");
    const double attainable =
        static_cast<double>(a.rows()) * std::numeric_limits<double>::epsilon() * std::max(a.norm(), 1e-300);
    if (tol < attainable)
        throw numeric_error("requested eigenvalue tolerance " + std::to_string(tol) + " is below attainable accuracy");
    const Vector ev = symmetric_spectrum(a);
    return {ev[0], ev[ev.size() - 1]};
}

/// Spectral norm of a symmetric matrix, i.e. max |lambda|.
inline double symmetric_spectral_norm(const Matrix& a) {
    const Vector ev = symmetric_spectrum(a);
    return std::max(std::abs(ev[0]), std::abs(ev[ev.size() - 1]));
}

} // namespace widenet
