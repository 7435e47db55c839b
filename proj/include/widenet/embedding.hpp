#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "widenet/activation.hpp"
#include "widenet/errors.hpp"
#include "widenet/numkernel.hpp"

namespace widenet {

enum class EmbeddingKind { identity, quadratic, random_feature, deep_random };

inline std::string to_string(EmbeddingKind k) {
    switch (k) {
    case EmbeddingKind::identity: return "identity";
    case EmbeddingKind::quadratic: return "quadratic";
    case EmbeddingKind::random_feature: return "random_feature";
    case EmbeddingKind::deep_random: return "deep_random";
    }
    return "?";
}

inline EmbeddingKind parse_embedding_kind(std::string_view s) {
    if (s == "identity") return EmbeddingKind::identity;
    if (s == "quadratic") return EmbeddingKind::quadratic;
    if (s == "random_feature") return EmbeddingKind::random_feature;
    if (s == "deep_random") return EmbeddingKind::deep_random;
    throw invalid_config("unknown embedding kind '" + std::string(s) + "'");
}

struct EmbeddingSpec {
    EmbeddingKind kind = EmbeddingKind::identity;
    std::size_t input_dim = 1;     // d
    std::size_t embedding_dim = 1; // D
    std::size_t depth = 3;         // L, deep_random only
    ActivationSpec activation = ActivationSpec::make_relu();
    std::uint64_t seed = 0;

    [[nodiscard]] bool is_random() const noexcept {
        return kind == EmbeddingKind::random_feature || kind == EmbeddingKind::deep_random;
    }

    void validate() const {
        if (input_dim < 1 || embedding_dim < 1) throw invalid_config("embedding dimensions must be >= 1");
        switch (kind) {
        case EmbeddingKind::identity:
            if (embedding_dim != input_dim) throw invalid_config("identity embedding requires D == d");
            break;
        case EmbeddingKind::quadratic:
            if (embedding_dim != input_dim * input_dim) throw invalid_config("quadratic embedding requires D == d^2");
            break;
        case EmbeddingKind::random_feature: break;
        case EmbeddingKind::deep_random:
            if (depth < 3) throw invalid_config("deep_random embedding requires depth >= 3");
            break;
        }
    }

    static EmbeddingSpec identity(std::size_t d) { return {EmbeddingKind::identity, d, d, 3, ActivationSpec::make_relu(), 0}; }
    static EmbeddingSpec quadratic(std::size_t d) {
        return {EmbeddingKind::quadratic, d, d * d, 3, ActivationSpec::make_relu(), 0};
    }
    static EmbeddingSpec random_feature(std::size_t d, std::size_t D, ActivationSpec act, std::uint64_t seed) {
        return {EmbeddingKind::random_feature, d, D, 3, act, seed};
    }
    static EmbeddingSpec deep_random(std::size_t d, std::size_t D, std::size_t depth, ActivationSpec act,
                                     std::uint64_t seed) {
        return {EmbeddingKind::deep_random, d, D, depth, act, seed};
    }
};

/// Fixed random weights of a random embedding. `z` is D x d (row j is z_j);
/// `deep_layers` holds the depth-3 fixed D x D layers of a deep embedding.
struct EmbeddingWeights {
    Matrix z;
    std::vector<Matrix> deep_layers;

    [[nodiscard]] bool empty() const noexcept { return z.size() == 0 && deep_layers.empty(); }
};

inline RngStream embedding_stream(std::uint64_t seed) { return RngStream(seed, "embedding"); }

inline EmbeddingWeights build_embedding(const EmbeddingSpec& spec) {
    spec.validate();
    EmbeddingWeights w;
    if (!spec.is_random()) return w;
    const RngStream rng = embedding_stream(spec.seed);
    w.z = gaussian_matrix(rng.child("z"), spec.embedding_dim, spec.input_dim);
    if (spec.kind == EmbeddingKind::deep_random) {
        for (std::size_t l = 1; l + 3 <= spec.depth; ++l)
            w.deep_layers.push_back(
                gaussian_matrix(rng.child("layer" + std::to_string(l)), spec.embedding_dim, spec.embedding_dim));
    }
    return w;
}

namespace detail {

template <typename Derived>
Matrix apply_activation(const ActivationSpec& act, const Eigen::MatrixBase<Derived>& pre) {
    Matrix out(pre.rows(), pre.cols());
    for (Eigen::Index i = 0; i < pre.rows(); ++i)
        for (Eigen::Index j = 0; j < pre.cols(); ++j) out(i, j) = act.value(pre(i, j));
    return out;
}

inline void check_weights(const EmbeddingSpec& spec, const EmbeddingWeights& w) {
    if (!spec.is_random()) return;
    if (static_cast<std::size_t>(w.z.rows()) != spec.embedding_dim ||
        static_cast<std::size_t>(w.z.cols()) != spec.input_dim)
        throw structural_error("embedding weights do not match spec dimensions");
    if (spec.kind == EmbeddingKind::deep_random && w.deep_layers.size() != spec.depth - 3)
        throw structural_error("deep embedding has wrong number of fixed layers");
}

} // namespace detail

/// Embeds every row of X (n x d) and returns Phi (n x D), row a = Phi(x_a).
///
/// The deep variant is evaluated layer by layer over the whole batch:
///   h1 = X z^T / sqrt(d),  h_{l+1} = sigma(h_l) Wbar_l^T / sqrt(D),  Phi = sigma(h_{L-2}).
inline Matrix embed_batch(const EmbeddingSpec& spec, const EmbeddingWeights& weights, const Matrix& x) {
    spec.validate();
    detail::check_weights(spec, weights);
    if (static_cast<std::size_t>(x.cols()) != spec.input_dim)
        throw structural_error("input has " + std::to_string(x.cols()) + " columns, embedding expects " +
                               std::to_string(spec.input_dim));
    const Eigen::Index n = x.rows();
    const Eigen::Index d = x.cols();
    switch (spec.kind) {
    case EmbeddingKind::identity: return x;
    case EmbeddingKind::quadratic: {
        Matrix out(n, d * d);
        for (Eigen::Index a = 0; a < n; ++a)
            for (Eigen::Index i = 0; i < d; ++i)
                for (Eigen::Index j = 0; j < d; ++j) out(a, i * d + j) = x(a, i) * x(a, j);
        return out;
    }
    case EmbeddingKind::random_feature: {
        const Matrix pre = (x * weights.z.transpose()) / std::sqrt(static_cast<double>(d));
        return detail::apply_activation(spec.activation, pre);
    }
    case EmbeddingKind::deep_random: {
        Matrix h = (x * weights.z.transpose()) / std::sqrt(static_cast<double>(d));
        const double inv_sqrt_D = 1.0 / std::sqrt(static_cast<double>(spec.embedding_dim));
        for (const Matrix& layer : weights.deep_layers) {
            const Matrix act = detail::apply_activation(spec.activation, h);
            h = (act * layer.transpose()) * inv_sqrt_D;
        }
        return detail::apply_activation(spec.activation, h);
    }
    }
    return {};
}

inline Vector embed(const EmbeddingSpec& spec, const EmbeddingWeights& weights, const Vector& x) {
    if (static_cast<std::size_t>(x.size()) != spec.input_dim)
        throw structural_error("input vector has length " + std::to_string(x.size()) + ", expected " +
                               std::to_string(spec.input_dim));
    if (!x.allFinite()) throw numeric_error("input vector has non-finite entries");
    const Matrix row = x.transpose();
    return embed_batch(spec, weights, row).row(0).transpose();
}

} // namespace widenet
