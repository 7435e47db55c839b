#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <string>
#include <vector>

#include "widenet/active_fraction.hpp"
#include "widenet/embedding.hpp"
#include "widenet/errors.hpp"
#include "widenet/model.hpp"
#include "widenet/numkernel.hpp"
#include "widenet/train.hpp"

namespace widenet {

// Slack applied to every inequality monitor: absolute plus relative to the
// magnitude of the bound side.
struct MonitorSlack {
    double absolute = 1e-8;
    double relative = 1e-6;

    [[nodiscard]] double at(double reference) const noexcept { return absolute + relative * std::abs(reference); }
};

enum class GramKind { g0, g1, quadratic, deep, limit_mc };

inline std::string to_string(GramKind k) {
    switch (k) {
    case GramKind::g0: return "g0";
    case GramKind::g1: return "g1";
    case GramKind::quadratic: return "quadratic";
    case GramKind::deep: return "deep";
    case GramKind::limit_mc: return "limit_mc";
    }
    return "?";
}

inline GramKind gram_kind_for(EmbeddingKind k) {
    switch (k) {
    case EmbeddingKind::identity: return GramKind::g0;
    case EmbeddingKind::quadratic: return GramKind::quadratic;
    case EmbeddingKind::random_feature: return GramKind::g1;
    case EmbeddingKind::deep_random: return GramKind::deep;
    }
    return GramKind::g0;
}

struct GramReport {
    Matrix g;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    double g_min = 0.0; // smallest diagonal entry
    double g_max = 0.0; // largest diagonal entry
    GramKind kind = GramKind::g0;
    std::size_t mc_samples = 0;
    Matrix std_error; // limit_mc only
};

namespace detail {

inline void fill_extremes(GramReport& r) {
    const EigenExtremes ex = sym_eig_extremes(r.g);
    r.lambda_min = ex.lambda_min;
    r.lambda_max = ex.lambda_max;
    r.g_min = r.g.diagonal().minCoeff();
    r.g_max = r.g.diagonal().maxCoeff();
}

inline Matrix symmetrized(const Matrix& a) {
    Matrix s = 0.5 * (a + a.transpose());
    return s;
}

} // namespace detail

/// Gram matrix (1/D) Phi Phi^T from already-embedded rows (n x D).
inline GramReport gram_from_features(const Matrix& phi, GramKind kind) {
    if (phi.rows() < 1) throw structural_error("gram needs at least one data point");
    GramReport r;
    r.kind = kind;
    Matrix g(phi.rows(), phi.rows());
    g.noalias() = phi * phi.transpose();
    g /= static_cast<double>(phi.cols());
    r.g = detail::symmetrized(g);
    detail::fill_extremes(r);
    return r;
}

inline GramReport gram(const EmbeddingSpec& spec, const EmbeddingWeights& weights, const Matrix& x) {
    return gram_from_features(embed_batch(spec, weights, x), gram_kind_for(spec.kind));
}

inline constexpr std::size_t mc_block_size = 1000;

namespace detail {

struct McSums {
    Matrix s1; // sum of products
    Matrix s2; // sum of squared products
    std::size_t count = 0;
};

// Sample k of the Monte Carlo average lives in block k / mc_block_size, and
// each block has its own stream, so any block-aligned range can be recomputed
// independently of the others.
inline McSums mc_sums(const ActivationSpec& act, const Matrix& x, std::uint64_t seed, std::size_t first_sample,
                      std::size_t samples) {
    const Eigen::Index n = x.rows();
    const auto d = static_cast<std::size_t>(x.cols());
    const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
    McSums sums{Matrix::Zero(n, n), Matrix::Zero(n, n), 0};
    const RngStream base(seed, "gram_limit_mc");
    std::size_t k = first_sample;
    const std::size_t end = first_sample + samples;
    while (k < end) {
        const std::size_t block = k / mc_block_size;
        const std::size_t offset = k % mc_block_size;
        const std::size_t take = std::min(mc_block_size - offset, end - k);
        const Matrix z_block = gaussian_matrix(base.child("block" + std::to_string(block)), mc_block_size, d);
        const Matrix pre = (z_block.middleRows(static_cast<Eigen::Index>(offset), static_cast<Eigen::Index>(take)) *
                            x.transpose()) * inv_sqrt_d;
        const Matrix s = apply_activation(act, pre);
        const Matrix s_sq = s.cwiseProduct(s);
        sums.s1.noalias() += s.transpose() * s;
        sums.s2.noalias() += s_sq.transpose() * s_sq;
        sums.count += take;
        k += take;
    }
    return sums;
}

} // namespace detail

/// Monte Carlo estimate of the limiting Gram matrix
///   Gbar_ab = E_z[ sigma(z.x_a / sqrt(d)) sigma(z.x_b / sqrt(d)) ],  z ~ N(0, I_d),
/// over samples [first_sample, first_sample + samples). The standard error of
/// each entry is reported in `std_error`.
inline GramReport gram_limit_mc_range(const ActivationSpec& act, const Matrix& x, std::uint64_t seed,
                                      std::size_t first_sample, std::size_t samples) {
    if (x.rows() < 1) throw structural_error("gram_limit_mc needs at least one data point");
    if (samples < 2) throw invalid_config("gram_limit_mc needs at least two samples");
    const detail::McSums sums = detail::mc_sums(act, x, seed, first_sample, samples);
    const double count = static_cast<double>(sums.count);
    GramReport r;
    r.kind = GramKind::limit_mc;
    r.mc_samples = sums.count;
    r.g = detail::symmetrized(sums.s1 / count);
    const Matrix var = ((sums.s2 / count) - r.g.cwiseProduct(r.g)).cwiseMax(0.0) * (count / (count - 1.0));
    r.std_error = (var / count).cwiseSqrt();
    detail::fill_extremes(r);
    return r;
}

inline constexpr std::size_t min_mc_samples = 1000;

inline GramReport gram_limit_mc(const ActivationSpec& act, const Matrix& x, std::size_t samples, std::uint64_t seed) {
    if (samples < min_mc_samples) throw invalid_config("gram_limit_mc needs at least 1000 samples");
    return gram_limit_mc_range(act, x, seed, 0, samples);
}

struct ConcentrationRow {
    std::size_t embedding_dim = 0;
    double median_deviation = 0.0;
    std::vector<double> deviations; // one per trial
};

struct ConcentrationTable {
    std::vector<ConcentrationRow> rows;
    GramReport reference;
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw structural_error("median of empty sample");
    std::sort(v.begin(), v.end());
    const std::size_t mid = v.size() / 2;
    return v.size() % 2 == 1 ? v[mid] : 0.5 * (v[mid - 1] + v[mid]);
}

/// For each D, the median over trials of ||G1 - Gbar||_2, where G1 is the
/// random-feature Gram matrix with D fresh features and Gbar is a
/// high-sample Monte Carlo reference.
inline ConcentrationTable concentration_probe(const ActivationSpec& act, const Matrix& x,
                                              const std::vector<std::size_t>& d_list, std::size_t trials,
                                              std::uint64_t seed, std::size_t reference_samples = 1'000'000) {
    if (d_list.empty()) throw invalid_config("concentration probe needs a non-empty D list");
    if (!std::is_sorted(d_list.begin(), d_list.end()) || d_list.front() < 1)
        throw invalid_config("concentration D list must be ascending and positive");
    if (trials < 3) throw invalid_config("concentration probe needs at least 3 trials");
    ConcentrationTable table;
    table.reference = gram_limit_mc(act, x, reference_samples, seed);
    const RngStream base(seed, "concentration");
    const auto d = static_cast<std::size_t>(x.cols());
    for (std::size_t D : d_list) {
        ConcentrationRow row;
        row.embedding_dim = D;
        const EmbeddingSpec spec = EmbeddingSpec::random_feature(d, D, act, seed);
        for (std::size_t t = 0; t < trials; ++t) {
            EmbeddingWeights w;
            w.z = gaussian_matrix(base.child("D" + std::to_string(D)).child("trial" + std::to_string(t)), D, d);
            const GramReport g1 = gram(spec, w, x);
            row.deviations.push_back(symmetric_spectral_norm(detail::symmetrized(g1.g - table.reference.g)));
        }
        row.median_deviation = median(row.deviations);
        table.rows.push_back(std::move(row));
    }
    return table;
}

enum class ConstantsStatus { ok, degenerate_gram };

struct TheoryConstants {
    ConstantsStatus status = ConstantsStatus::ok;
    double kappa = 0.0;
    double k_const = 0.0;
    double rate_exponent = 0.0;
    Interval interval_used{};
};

/// Constants of the active-region argument:
///   kappa = 9 lambda_max (I_r - I_l) / (2 lambda_min K_sigma')
///   K     = (I_r - I_l) / (6 sqrt(2 pi) g_max) * exp(-max(|I_l|, |I_r|) / g_min^2)
///   rate  = 2^(1/3) lambda_min K_sigma'^2 K c_hat^2
/// The exponent of K is used exactly as published (see README, "Known caveats").
inline TheoryConstants theory_constants(Interval interval, double g_min, double g_max, double lambda_min,
                                        double lambda_max, double k_sigma_prime, double c_hat) {
    if (!interval.finite() || !(interval.lo < interval.hi))
        throw invalid_config("theory constants need a finite interval with lo < hi");
    TheoryConstants tc;
    tc.interval_used = interval;
    if (!(lambda_min > 0.0) || !(g_min > 0.0)) {
        tc.status = ConstantsStatus::degenerate_gram;
        return tc;
    }
    const double width = interval.width();
    tc.kappa = 9.0 * lambda_max * width / (2.0 * lambda_min * k_sigma_prime);
    tc.k_const = width / (6.0 * std::sqrt(2.0 * std::numbers::pi) * g_max) *
                 std::exp(-interval.max_endpoint_magnitude() / (g_min * g_min));
    tc.rate_exponent = std::cbrt(2.0) * lambda_min * k_sigma_prime * k_sigma_prime * tc.k_const * c_hat * c_hat;
    return tc;
}

inline TheoryConstants theory_constants(const GramReport& g, const ActivationSpec& act, double c_hat) {
    return theory_constants(act.surrogate_region, g.g_min, g.g_max, g.lambda_min, g.lambda_max, act.k_sigma_prime,
                            c_hat);
}

struct Lemma1Point {
    std::size_t step = 0;
    double lhs = 0.0; // eta_t^(3/2)
    double rhs = 0.0; // eta~0^(3/2) - kappa (sqrt(L0) - sqrt(Lt)) / c_hat
    double margin = 0.0;
    bool pass = true;
};

struct Lemma1Report {
    std::vector<Lemma1Point> points;
    double worst_margin = 0.0;
    bool pass = true;
};

/// Checks, at every recorded step t,
///   eta_t^(3/2) >= eta~0^(3/2) - kappa (sqrt(L0) - sqrt(Lt)) / c_hat
/// within monitor slack. Only the recorded grid is checked.
inline Lemma1Report lemma1_monitor(const TrainingTrace& trace, const TheoryConstants& constants, double c_hat,
                                   MonitorSlack slack = {}) {
    if (trace.eta.empty() || std::isnan(trace.eta_shrunk0)) throw monitor_unavailable("trace has no active-fraction series");
    if (trace.loss.empty()) throw monitor_unavailable("trace has no loss series");
    if (constants.status != ConstantsStatus::ok) throw monitor_unavailable("Gram matrix is degenerate");
    const double sqrt_l0 = std::sqrt(trace.loss.front().loss);
    const double base = std::pow(trace.eta_shrunk0, 1.5);
    Lemma1Report rep;
    rep.worst_margin = std::numeric_limits<double>::infinity();
    std::size_t li = 0;
    for (const EtaRecord& e : trace.eta) {
        while (li < trace.loss.size() && trace.loss[li].step < e.step) ++li;
        if (li == trace.loss.size() || trace.loss[li].step != e.step) continue;
        Lemma1Point pt;
        pt.step = e.step;
        pt.lhs = std::pow(e.min_over_points, 1.5);
        pt.rhs = base - constants.kappa * (sqrt_l0 - std::sqrt(trace.loss[li].loss)) / c_hat;
        pt.margin = pt.lhs - pt.rhs;
        pt.pass = pt.lhs >= pt.rhs - slack.at(pt.rhs);
        rep.pass = rep.pass && pt.pass;
        rep.worst_margin = std::min(rep.worst_margin, pt.margin);
        rep.points.push_back(pt);
    }
    if (rep.points.empty()) throw monitor_unavailable("active-fraction and loss series share no steps");
    return rep;
}

struct PlReport {
    double exact_dldt = 0.0;
    double bound = 0.0;
    bool pass = true;
};

/// Coefficient k such that, under gradient flow with the variant's learning
/// rate multiplier, dL/dt = -k * sum_i c_i^2 sum_ab G_ab v_ia v_ib with
/// v_ia = r_a sigma'(h_ia). Equals 1/m for ours and ntk, and for mf with D = m.
inline double gradient_flow_coefficient(const ScalingVariant& s, std::size_t m, std::size_t D) {
    const double pg = s.gradient_prefactor(m, D);
    return s.lr_multiplier(m) * pg * pg * static_cast<double>(D);
}

/// Exact continuous-time loss derivative at the current parameters and the
/// lower-eigenvalue bound on it. Both are evaluated along the same summation
/// order so that a 1 x 1 Gram matrix gives bitwise equality.
inline PlReport pl_monitor(const Parameters& p, const ModelConfig& config, const Matrix& x, const Vector& y,
                           const GramReport& g, double relative_slack = 1e-9) {
    const Matrix phi = embed_batch(config.embedding, p.embedding, x);
    const ForwardState st = forward_embedded(p, config, phi, &y);
    const Vector& r = *st.residual;
    const Eigen::Index n = r.size();
    if (g.g.rows() != n) throw structural_error("Gram matrix does not match the data");
    const double coef = gradient_flow_coefficient(config.scaling, p.width(), static_cast<std::size_t>(p.w.cols()));
    double exact = 0.0;
    double bound = 0.0;
    Vector v(n);
    for (Eigen::Index i = 0; i < st.h.rows(); ++i) {
        for (Eigen::Index a = 0; a < n; ++a) v[a] = r[a] * config.activation.derivative(st.h(i, a));
        double quad = 0.0;
        double sq = 0.0;
        for (Eigen::Index a = 0; a < n; ++a) {
            double gv = 0.0;
            for (Eigen::Index b = 0; b < n; ++b) gv += g.g(a, b) * v[b];
            quad += gv * v[a];
            sq += (g.lambda_min * v[a]) * v[a];
        }
        const double c2 = p.c[i] * p.c[i];
        exact += c2 * quad;
        bound += c2 * sq;
    }
    PlReport rep;
    rep.exact_dldt = -coef * exact;
    rep.bound = -coef * bound;
    rep.pass = rep.exact_dldt <= rep.bound + relative_slack * std::abs(rep.bound) && rep.bound <= 0.0;
    return rep;
}

/// Column-wise (1/m) sum_i |H_a(i, x) - H_b(i, x)|.
inline Vector feature_movement(const Matrix& h_a, const Matrix& h_b) {
    if (h_a.rows() != h_b.rows() || h_a.cols() != h_b.cols())
        throw structural_error("feature_movement: snapshot shapes differ");
    if (h_a.rows() == 0) throw structural_error("feature_movement: empty snapshots");
    return (h_a - h_b).cwiseAbs().colwise().sum().transpose() / static_cast<double>(h_a.rows());
}

struct MovementBoundReport {
    Vector movement;     // (1/m) sum_i |dh_i(x)|
    Vector output_bound; // |df(x)| / (c_hat L_sigma m^(1 - output_exponent))
    bool pass = true;
};

/// Feature movement against output movement for two snapshots. For the 1/m
/// output scaling this is
///   (1/m) sum_i |h_i^t1(x) - h_i^t2(x)| >= |f^t1(x) - f^t2(x)| / (c_hat L_sigma),
/// checked with no slack. Other output exponents pick up m^(1 - output_exponent).
inline MovementBoundReport movement_bound(const FeatureSnapshot& s1, const FeatureSnapshot& s2, double c_hat,
                                          double lipschitz, const ScalingVariant& scaling) {
    MovementBoundReport rep;
    rep.movement = feature_movement(s1.h, s2.h);
    const auto m = static_cast<double>(s1.h.rows());
    const double denom = c_hat * lipschitz * std::pow(m, 1.0 - scaling.output_exponent);
    rep.output_bound = (s1.f - s2.f).cwiseAbs() / denom;
    for (Eigen::Index a = 0; a < rep.movement.size(); ++a)
        if (!(rep.movement[a] >= rep.output_bound[a])) rep.pass = false;
    return rep;
}

/// All snapshot pairs of a trace.
inline bool movement_bound_all_pairs(const TrainingTrace& trace, double c_hat, double lipschitz,
                                     const ScalingVariant& scaling) {
    for (std::size_t i = 0; i < trace.snapshots.size(); ++i)
        for (std::size_t j = i + 1; j < trace.snapshots.size(); ++j)
            if (!movement_bound(trace.snapshots[i], trace.snapshots[j], c_hat, lipschitz, scaling).pass) return false;
    return true;
}

} // namespace widenet
