#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

#include "widenet/activation.hpp"
#include "widenet/embedding.hpp"
#include "widenet/errors.hpp"
#include "widenet/numkernel.hpp"

namespace widenet {

enum class ScalingKind { ours, ntk, mf };

/// Width exponents of the three scalings compared in the feature-learning
/// experiment. For width m and embedding dimension D:
///   f   = m^-output_exponent * sum_i c_i sigma(h_i)
///   h_i = D^-hidden_exponent * sum_j W_ij phi_j
///   W  <- W - m^lr_exponent * delta * dL/dW
struct ScalingVariant {
    ScalingKind kind = ScalingKind::ours;
    double output_exponent = 1.0;
    double hidden_exponent = 0.5;
    double lr_exponent = 1.0;

    static constexpr ScalingVariant of(ScalingKind k) noexcept {
        switch (k) {
        case ScalingKind::ours: return {ScalingKind::ours, 1.0, 0.5, 1.0};
        case ScalingKind::ntk: return {ScalingKind::ntk, 0.5, 0.5, 0.0};
        case ScalingKind::mf: return {ScalingKind::mf, 1.0, 1.0, 2.0};
        }
        return {};
    }

    [[nodiscard]] double output_prefactor(std::size_t m) const {
        return std::pow(static_cast<double>(m), -output_exponent);
    }
    [[nodiscard]] double hidden_prefactor(std::size_t D) const {
        return std::pow(static_cast<double>(D), -hidden_exponent);
    }
    [[nodiscard]] double lr_multiplier(std::size_t m) const { return std::pow(static_cast<double>(m), lr_exponent); }
    [[nodiscard]] double gradient_prefactor(std::size_t m, std::size_t D) const {
        return output_prefactor(m) * hidden_prefactor(D);
    }

    [[nodiscard]] std::string name() const {
        switch (kind) {
        case ScalingKind::ours: return "ours";
        case ScalingKind::ntk: return "ntk";
        case ScalingKind::mf: return "mf";
        }
        return "?";
    }

    friend bool operator==(const ScalingVariant&, const ScalingVariant&) = default;
};

inline ScalingVariant parse_scaling(std::string_view s) {
    if (s == "ours") return ScalingVariant::of(ScalingKind::ours);
    if (s == "ntk") return ScalingVariant::of(ScalingKind::ntk);
    if (s == "mf") return ScalingVariant::of(ScalingKind::mf);
    throw invalid_config("unknown scaling '" + std::string(s) + "'");
}

struct ModelConfig {
    EmbeddingSpec embedding;
    std::size_t width = 1; // m
    ActivationSpec activation = ActivationSpec::make_tanh();
    ScalingVariant scaling = ScalingVariant::of(ScalingKind::ours);
    double c_hat = 1.0;
    std::uint64_t seed = 0; // streams "w" and "c"

    [[nodiscard]] std::size_t input_dim() const noexcept { return embedding.input_dim; }
    [[nodiscard]] std::size_t embedding_dim() const noexcept { return embedding.embedding_dim; }

    void validate() const {
        embedding.validate();
        if (width < 1) throw invalid_config("width must be >= 1");
        if (!(c_hat > 0.0) || !std::isfinite(c_hat)) throw invalid_config("c_hat must be positive");
        if (scaling.kind == ScalingKind::ntk && width % 2 != 0)
            throw invalid_config("ntk scaling needs an even width for the antisymmetric initialization");
        if (scaling.kind == ScalingKind::mf && embedding.embedding_dim != width)
            throw invalid_config("mf scaling requires D == m");
    }
};

struct Parameters {
    Matrix w;                   // m x D, trained
    Vector c;                   // m, fixed, |c_i| = c_hat
    EmbeddingWeights embedding; // fixed
    double c_hat = 1.0;

    [[nodiscard]] std::size_t width() const noexcept { return static_cast<std::size_t>(w.rows()); }
};

/// W i.i.d. N(0,1) from stream "w", c scaled Rademacher from stream "c".
///
/// Under ntk the model is symmetrized: neurons 2k and 2k+1 share a row of W
/// and carry opposite output signs, so the initial output is exactly zero.
inline Parameters init_params(const ModelConfig& config) {
    config.validate();
    Parameters p;
    p.c_hat = config.c_hat;
    p.embedding = build_embedding(config.embedding);
    const RngStream w_stream(config.seed, "w");
    const RngStream c_stream(config.seed, "c");
    const std::size_t m = config.width;
    const std::size_t D = config.embedding_dim();
    if (config.scaling.kind == ScalingKind::ntk) {
        const std::size_t half = m / 2;
        const Matrix w_half = gaussian_matrix(w_stream, half, D);
        const Vector c_half = rademacher_vector(c_stream, half, config.c_hat);
        p.w.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(D));
        p.c.resize(static_cast<Eigen::Index>(m));
        for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(half); ++k) {
            p.w.row(2 * k) = w_half.row(k);
            p.w.row(2 * k + 1) = w_half.row(k);
            p.c[2 * k] = c_half[k];
            p.c[2 * k + 1] = -c_half[k];
        }
    } else {
        p.w = gaussian_matrix(w_stream, m, D);
        p.c = rademacher_vector(c_stream, m, config.c_hat);
    }
    return p;
}

struct ForwardState {
    Matrix h;                       // m x n pre-activations, h(i, a) = h_i(x_a)
    Matrix activated;               // sigma(h), same shape as h
    Vector f;                       // n outputs
    std::optional<Vector> residual; // f - y
};

namespace detail {

inline void check_finite_matrix(const Matrix& a, const char* what) {
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            if (!std::isfinite(a(i, j)))
                throw numeric_error(std::string(what) + " is non-finite at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
}

} // namespace detail

/// Pre-activations H = D^-hidden_exponent * W Phi^T for embedded data Phi (n x D).
inline Matrix pre_activations(const Parameters& p, const ScalingVariant& scaling, const Matrix& phi) {
    if (phi.cols() != p.w.cols())
        throw structural_error("embedded data has " + std::to_string(phi.cols()) + " features, W has " +
                               std::to_string(p.w.cols()) + " columns");
    Matrix h(p.w.rows(), phi.rows());
    h.noalias() = p.w * phi.transpose();
    h *= scaling.hidden_prefactor(static_cast<std::size_t>(p.w.cols()));
    return h;
}

/// Output from pre-activations. The neuron sum runs in index order so that
/// antisymmetric neuron pairs cancel exactly.
inline Matrix activate(const Matrix& h, const ActivationSpec& act) {
    Matrix s(h.rows(), h.cols());
    const double* in = h.data();
    double* out = s.data();
    for (Eigen::Index k = 0; k < h.size(); ++k) out[k] = act.value(in[k]);
    return s;
}

// Neurons are summed in index order so that symmetrized pairs cancel exactly.
inline Vector outputs_from_activations(const Matrix& s, const Vector& c, double output_prefactor) {
    Vector f = Vector::Zero(s.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i) f.noalias() += (c[i] * s.row(i)).transpose();
    return f * output_prefactor;
}

inline Vector outputs_from_pre_activations(const Matrix& h, const Vector& c, const ActivationSpec& act,
                                           double output_prefactor) {
    return outputs_from_activations(activate(h, act), c, output_prefactor);
}

inline ForwardState forward_embedded(const Parameters& p, const ModelConfig& config, const Matrix& phi,
                                     const Vector* y = nullptr) {
    ForwardState st;
    st.h = pre_activations(p, config.scaling, phi);
    detail::check_finite_matrix(st.h, "pre-activation");
    st.activated = activate(st.h, config.activation);
    st.f = outputs_from_activations(st.activated, p.c, config.scaling.output_prefactor(p.width()));
    for (Eigen::Index a = 0; a < st.f.size(); ++a)
        if (!std::isfinite(st.f[a])) throw numeric_error("output is non-finite at index " + std::to_string(a));
    if (y != nullptr) {
        if (y->size() != st.f.size()) throw structural_error("target length does not match data");
        st.residual = st.f - *y;
    }
    return st;
}

inline ForwardState forward(const Parameters& p, const ModelConfig& config, const Matrix& x,
                            const Vector* y = nullptr) {
    const Matrix phi = embed_batch(config.embedding, p.embedding, x);
    return forward_embedded(p, config, phi, y);
}

/// Copy of the feature map for later movement analysis.
inline Matrix feature_snapshot(const ForwardState& state) { return state.h; }

} // namespace widenet
