#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <string>
#include <string_view>

#include "widenet/errors.hpp"

namespace widenet {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    [[nodiscard]] bool contains(double u) const noexcept { return u > lo && u < hi; }
    [[nodiscard]] double width() const noexcept { return hi - lo; }
    [[nodiscard]] bool finite() const noexcept { return std::isfinite(lo) && std::isfinite(hi); }
    [[nodiscard]] double max_endpoint_magnitude() const noexcept { return std::max(std::abs(lo), std::abs(hi)); }

    /// (2 lo + hi)/3 .. (lo + 2 hi)/3
    [[nodiscard]] Interval middle_third() const noexcept {
        return {(2.0 * lo + hi) / 3.0, (lo + 2.0 * hi) / 3.0};
    }

    friend bool operator==(const Interval&, const Interval&) = default;
};

enum class ActivationKind { tanh, relu, linear, leaky_relu };

/// Activation together with the constants the convergence monitors need.
///
/// `active_region` is the open interval on which |sigma'| >= k_sigma_prime.
/// For half- or fully-infinite regions, `surrogate_region` is the finite
/// interval used wherever a finite region is required (active fractions, the
/// middle-third construction, theory constants). Both are echoed in reports.
struct ActivationSpec {
    ActivationKind kind = ActivationKind::tanh;
    double slope = 0.0; // leaky_relu only
    double lipschitz = 1.0;
    Interval active_region{-1.0, 1.0};
    Interval surrogate_region{-1.0, 1.0};
    double k_sigma_prime = 0.0;

    [[nodiscard]] double value(double u) const noexcept {
        switch (kind) {
        case ActivationKind::tanh: return std::tanh(u);
        case ActivationKind::relu: return u > 0.0 ? u : 0.0;
        case ActivationKind::linear: return u;
        case ActivationKind::leaky_relu: return u > 0.0 ? u : slope * u;
        }
        return 0.0;
    }

    // Kinks get derivative 0.
    [[nodiscard]] double derivative(double u) const noexcept {
        switch (kind) {
        case ActivationKind::tanh: {
            const double t = std::tanh(u);
            return 1.0 - t * t;
        }
        case ActivationKind::relu: return u > 0.0 ? 1.0 : 0.0;
        case ActivationKind::linear: return 1.0;
        case ActivationKind::leaky_relu: return u > 0.0 ? 1.0 : (u < 0.0 ? slope : 0.0);
        }
        return 0.0;
    }

    // Same as derivative(u) when v == value(u), without re-evaluating tanh.
    [[nodiscard]] double derivative_from_value(double u, double v) const noexcept {
        if (kind == ActivationKind::tanh) return 1.0 - v * v;
        return derivative(u);
    }

    [[nodiscard]] std::string name() const {
        switch (kind) {
        case ActivationKind::tanh: return "tanh";
        case ActivationKind::relu: return "relu";
        case ActivationKind::linear: return "linear";
        case ActivationKind::leaky_relu: {
            char buf[32];
            const auto res = std::to_chars(buf, buf + sizeof buf, slope);
            return "leaky_relu:" + std::string(buf, res.ptr);
        }
        }
        return "?";
    }

    static ActivationSpec make_tanh() {
        const double t = std::tanh(1.0);
        return {ActivationKind::tanh, 0.0, 1.0, {-1.0, 1.0}, {-1.0, 1.0}, 1.0 - t * t};
    }

    static ActivationSpec make_relu() {
        constexpr double inf = std::numeric_limits<double>::infinity();
        return {ActivationKind::relu, 0.0, 1.0, {0.0, inf}, {0.0, 3.0}, 1.0};
    }

    static ActivationSpec make_linear() {
        constexpr double inf = std::numeric_limits<double>::infinity();
        return {ActivationKind::linear, 0.0, 1.0, {-inf, inf}, {-3.0, 3.0}, 1.0};
    }

    static ActivationSpec make_leaky_relu(double slope) {
        if (!(slope > 0.0) || !std::isfinite(slope))
            throw invalid_config("leaky_relu slope must be positive");
        constexpr double inf = std::numeric_limits<double>::infinity();
        return {ActivationKind::leaky_relu, slope, std::max(1.0, slope), {-inf, inf}, {-3.0, 3.0},
                std::min(1.0, slope)};
    }

    /// Accepts "tanh", "relu", "linear", "leaky_relu:<slope>".
    static ActivationSpec parse(std::string_view text) {
        if (text == "tanh") return make_tanh();
        if (text == "relu") return make_relu();
        if (text == "linear") return make_linear();
        constexpr std::string_view leaky = "leaky_relu:";
        if (text.substr(0, leaky.size()) == leaky) {
            const std::string rest(text.substr(leaky.size()));
            double slope = 0.0;
            try {
                std::size_t used = 0;
                slope = std::stod(rest, &used);
                if (used != rest.size()) throw invalid_config("bad leaky_relu slope");
            } catch (const std::logic_error&) {
                throw invalid_config("bad leaky_relu slope '" + rest + "'");
            }
            return make_leaky_relu(slope);
        }
        throw invalid_config("unknown activation '" + std::string(text) + "'");
    }
};

} // namespace widenet
