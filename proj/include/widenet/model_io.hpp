#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <istream>
#include <ostream>
#include <utility>

#include "widenet/model.hpp"

namespace widenet {

// Binary parameter artifact, all integers and doubles little-endian:
//
//   "WNPR" | u8 version
//   u8 scaling | u8 activation | f64 activation slope | f64 c_hat | u64 seed | u64 m
//   u8 embedding kind | u64 d | u64 D | u64 depth | u64 embedding seed
//   u8 embedding activation | f64 embedding activation slope
//   f64[m*D] W (row-major) | f64[m] c
//   u64 z rows | u64 z cols | f64[rows*cols] z
//   u64 layer count | per layer: f64[D*D]
inline constexpr std::array<char, 4> params_magic{'W', 'N', 'P', 'R'};
inline constexpr std::uint8_t params_format_version = 1;

namespace io_detail {

inline void put_u64(std::ostream& os, std::uint64_t v) {
    std::array<char, 8> b{};
    for (int k = 0; k < 8; ++k) b[static_cast<std::size_t>(k)] = static_cast<char>((v >> (8 * k)) & 0xFF);
    os.write(b.data(), 8);
}

inline void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline void put_f64(std::ostream& os, double v) { put_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline void put_doubles(std::ostream& os, const double* p, std::size_t count) {
    for (std::size_t k = 0; k < count; ++k) put_f64(os, p[k]);
}

inline std::uint64_t get_u64(std::istream& is) {
    std::array<unsigned char, 8> b{};
    if (!is.read(reinterpret_cast<char*>(b.data()), 8)) throw structural_error("parameter artifact truncated");
    std::uint64_t v = 0;
    for (int k = 7; k >= 0; --k) v = (v << 8) | b[static_cast<std::size_t>(k)];
    return v;
}

inline std::uint8_t get_u8(std::istream& is) {
    const int ch = is.get();
    if (ch == std::char_traits<char>::eof()) throw structural_error("parameter artifact truncated");
    return static_cast<std::uint8_t>(ch);
}

inline double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

inline Matrix get_matrix(std::istream& is, std::uint64_t rows, std::uint64_t cols) {
    if (rows > (1ULL << 24) || cols > (1ULL << 24)) throw structural_error("parameter artifact has absurd dimensions");
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = get_f64(is);
    return m;
}

inline ActivationSpec activation_from(std::uint8_t kind, double slope) {
    switch (kind) {
    case 0: return ActivationSpec::make_tanh();
    case 1: return ActivationSpec::make_relu();
    case 2: return ActivationSpec::make_linear();
    case 3: return ActivationSpec::make_leaky_relu(slope);
    default: throw structural_error("unknown activation tag in artifact");
    }
}

} // namespace io_detail

inline void save_parameters(std::ostream& os, const ModelConfig& config, const Parameters& p) {
    using namespace io_detail;
    os.write(params_magic.data(), 4);
    put_u8(os, params_format_version);
    put_u8(os, static_cast<std::uint8_t>(config.scaling.kind));
    put_u8(os, static_cast<std::uint8_t>(config.activation.kind));
    put_f64(os, config.activation.slope);
    put_f64(os, config.c_hat);
    put_u64(os, config.seed);
    put_u64(os, config.width);
    const EmbeddingSpec& e = config.embedding;
    put_u8(os, static_cast<std::uint8_t>(e.kind));
    put_u64(os, e.input_dim);
    put_u64(os, e.embedding_dim);
    put_u64(os, e.depth);
    put_u64(os, e.seed);
    put_u8(os, static_cast<std::uint8_t>(e.activation.kind));
    put_f64(os, e.activation.slope);
    put_doubles(os, p.w.data(), static_cast<std::size_t>(p.w.size()));
    put_doubles(os, p.c.data(), static_cast<std::size_t>(p.c.size()));
    put_u64(os, static_cast<std::uint64_t>(p.embedding.z.rows()));
    put_u64(os, static_cast<std::uint64_t>(p.embedding.z.cols()));
    put_doubles(os, p.embedding.z.data(), static_cast<std::size_t>(p.embedding.z.size()));
    put_u64(os, p.embedding.deep_layers.size());
    for (const Matrix& layer : p.embedding.deep_layers)
        put_doubles(os, layer.data(), static_cast<std::size_t>(layer.size()));
    if (!os) throw error("failed writing parameter artifact");
}

inline std::pair<ModelConfig, Parameters> load_parameters(std::istream& is) {
    using namespace io_detail;
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || magic != params_magic) throw structural_error("not a parameter artifact");
    const std::uint8_t version = get_u8(is);
    if (version != params_format_version)
        throw structural_error("unsupported parameter artifact version " + std::to_string(version));
    ModelConfig config;
    const std::uint8_t scaling = get_u8(is);
    if (scaling > 2) throw structural_error("unknown scaling tag in artifact");
    config.scaling = ScalingVariant::of(static_cast<ScalingKind>(scaling));
    const std::uint8_t act = get_u8(is);
    const double slope = get_f64(is);
    config.activation = activation_from(act, slope);
    config.c_hat = get_f64(is);
    config.seed = get_u64(is);
    config.width = get_u64(is);
    const std::uint8_t ekind = get_u8(is);
    if (ekind > 3) throw structural_error("unknown embedding tag in artifact");
    config.embedding.kind = static_cast<EmbeddingKind>(ekind);
    config.embedding.input_dim = get_u64(is);
    config.embedding.embedding_dim = get_u64(is);
    config.embedding.depth = get_u64(is);
    config.embedding.seed = get_u64(is);
    const std::uint8_t eact = get_u8(is);
    const double eslope = get_f64(is);
    config.embedding.activation = activation_from(eact, eslope);
    config.validate();

    Parameters p;
    p.c_hat = config.c_hat;
    p.w = get_matrix(is, config.width, config.embedding.embedding_dim);
    const Matrix c = get_matrix(is, config.width, 1);
    p.c = c.col(0);
    const std::uint64_t zr = get_u64(is);
    const std::uint64_t zc = get_u64(is);
    p.embedding.z = get_matrix(is, zr, zc);
    const std::uint64_t layers = get_u64(is);
    if (layers > 4096) throw structural_error("parameter artifact has absurd layer count");
    for (std::uint64_t l = 0; l < layers; ++l)
        p.embedding.deep_layers.push_back(get_matrix(is, config.embedding.embedding_dim, config.embedding.embedding_dim));
    return {config, p};
}

} // namespace widenet
