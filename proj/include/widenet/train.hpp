#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <vector>

#include "widenet/active_fraction.hpp"
#include "widenet/errors.hpp"
#include "widenet/model.hpp"

namespace widenet {

// steps == 0 is allowed and yields a trace holding only the initial record.
struct TrainConfig {
    std::size_t steps = 1;
    double delta = 1.0;
    std::size_t record_every = 1;
    std::vector<std::size_t> snapshot_steps;
    bool record_eta = true;
    std::size_t test_every = 0; // 0: same as record_every
    double divergence_threshold = 1e12;

    void validate() const {
        if (!(delta > 0.0) || !std::isfinite(delta)) throw invalid_config("delta must be positive");
        if (record_every < 1) throw invalid_config("record_every must be >= 1");
    }
};

enum class TestMetric { mean_squared, sign_error };

struct TestSet {
    Matrix x;
    Vector y;
    TestMetric metric = TestMetric::mean_squared;
};

/// Mean squared error, or the 0-1 error of sign(f) against y where sign(0)
/// always counts as an error.
inline double evaluate_test_error(const Vector& f, const Vector& y, TestMetric metric) {
    if (f.size() != y.size() || f.size() == 0) throw structural_error("test outputs and targets must match and be non-empty");
    double acc = 0.0;
    for (Eigen::Index a = 0; a < f.size(); ++a) {
        if (metric == TestMetric::mean_squared) {
            const double r = f[a] - y[a];
            acc += r * r;
        } else {
            const bool correct = (f[a] > 0.0 && y[a] > 0.0) || (f[a] < 0.0 && y[a] < 0.0);
            acc += correct ? 0.0 : 1.0;
        }
    }
    return acc / static_cast<double>(f.size());
}

struct LossRecord {
    std::size_t step = 0;
    double loss = 0.0;
};

struct EtaRecord {
    std::size_t step = 0;
    Vector per_point;
    double min_over_points = 0.0;
};

struct TestRecord {
    std::size_t step = 0;
    double value = 0.0;
};

struct FeatureSnapshot {
    std::size_t step = 0;
    Matrix h;      // m x n on the training inputs
    Vector f;      // training outputs
    Matrix h_test; // m x n_test, empty without a test set
    Vector f_test;
};

struct TrainingTrace {
    std::vector<LossRecord> loss;
    std::vector<EtaRecord> eta;
    std::vector<TestRecord> test_error;
    std::vector<FeatureSnapshot> snapshots;
    double eta_shrunk0 = std::numeric_limits<double>::quiet_NaN(); // initial fraction over the middle third
    Interval interval_used{};
    std::size_t monotone_violations = 0;
    bool diverged = false;
    std::size_t steps_completed = 0;
    Parameters initial_params;
    Parameters final_params;
};

/// 1/2 sum_a (f_a - y_a)^2
inline double loss(const Vector& f, const Vector& y) {
    if (f.size() != y.size()) throw structural_error("loss: length mismatch");
    double acc = 0.0;
    for (Eigen::Index a = 0; a < f.size(); ++a) {
        const double r = f[a] - y[a];
        acc += r * r;
    }
    return 0.5 * acc;
}

/// Per-neuron, per-point back-propagated signal c_i * r_a * sigma'(h_ia).
inline Matrix backprop_signal(const Parameters& p, const ActivationSpec& act, const ForwardState& state) {
    if (!state.residual) throw structural_error("gradient needs a forward state with residuals");
    const Vector& r = *state.residual;
    const bool cached = state.activated.rows() == state.h.rows() && state.activated.cols() == state.h.cols();
    Matrix s(state.h.rows(), state.h.cols());
    for (Eigen::Index i = 0; i < s.rows(); ++i)
        for (Eigen::Index a = 0; a < s.cols(); ++a) {
            const double u = state.h(i, a);
            const double dsig = cached ? act.derivative_from_value(u, state.activated(i, a)) : act.derivative(u);
            s(i, a) = p.c[i] * r[a] * dsig;
        }
    return s;
}

/// dL/dW (m x D) for embedded data Phi (n x D):
///   prefactor * c_i * sum_a r_a sigma'(h_i(x_a)) phi_j(x_a),
/// with prefactor m^-output_exponent * D^-hidden_exponent.
inline Matrix grad_w(const Parameters& p, const ModelConfig& config, const Matrix& phi, const ForwardState& state) {
    if (state.h.rows() != p.w.rows() || state.h.cols() != phi.rows())
        throw structural_error("forward state is inconsistent with parameters and data");
    const Matrix s = backprop_signal(p, config.activation, state);
    Matrix g(p.w.rows(), p.w.cols());
    g.noalias() = s * phi;
    g *= config.scaling.gradient_prefactor(p.width(), static_cast<std::size_t>(p.w.cols()));
    if (!g.allFinite()) throw numeric_error("gradient is non-finite");
    return g;
}

/// W <- W - m^lr_exponent * delta * grad, in place. c and the embedding are untouched.
inline void apply_gd_step(Parameters& p, const Matrix& grad, double delta, const ScalingVariant& scaling) {
    if (grad.rows() != p.w.rows() || grad.cols() != p.w.cols()) throw structural_error("gradient shape mismatch");
    p.w.noalias() -= (scaling.lr_multiplier(p.width()) * delta) * grad;
}

inline Parameters gd_step(const Parameters& p, const Matrix& grad, double delta, const ScalingVariant& scaling) {
    Parameters next = p;
    apply_gd_step(next, grad, delta, scaling);
    return next;
}

/// Full-batch gradient descent on W.
///
/// Records loss (and the active fraction) at step 0, every `record_every`
/// steps, and at the last step. Loss increases are counted, not fatal. A
/// loss above the divergence threshold or a non-finite value stops the run
/// with `diverged` set and the partial trace intact.
inline TrainingTrace run_training(const ModelConfig& model, const TrainConfig& train, const Matrix& x,
                                  const Vector& y, const TestSet* test = nullptr) {
    model.validate();
    train.validate();
    if (x.rows() < 1) throw invalid_config("training set is empty");
    if (y.size() != x.rows()) throw structural_error("targets do not match training inputs");

    TrainingTrace trace;
    trace.interval_used = model.activation.surrogate_region;
    Parameters params = init_params(model);
    trace.initial_params = params;

    const Matrix phi = embed_batch(model.embedding, params.embedding, x);
    Matrix phi_test;
    if (test != nullptr) phi_test = embed_batch(model.embedding, params.embedding, test->x);
    const std::size_t test_every = train.test_every == 0 ? train.record_every : train.test_every;
    const double out_pref = model.scaling.output_prefactor(model.width);

    auto wants_snapshot = [&](std::size_t k) {
        return std::find(train.snapshot_steps.begin(), train.snapshot_steps.end(), k) != train.snapshot_steps.end();
    };

    double previous_loss = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0;; ++k) {
        ForwardState st;
        double current = 0.0;
        try {
            st = forward_embedded(params, model, phi, &y);
            current = loss(st.f, y);
        } catch (const numeric_error&) {
            trace.diverged = true;
            break;
        }
        if (!std::isfinite(current) || current > train.divergence_threshold) {
            trace.diverged = true;
            trace.loss.push_back({k, current});
            break;
        }
        if (k == 0) trace.eta_shrunk0 = active_fraction(st.h, trace.interval_used, true).min_over_points;
        if (current > previous_loss) ++trace.monotone_violations;
        previous_loss = current;

        const bool last = k == train.steps;
        if (k % train.record_every == 0 || last) {
            trace.loss.push_back({k, current});
            if (train.record_eta) {
                ActiveFraction af = active_fraction(st.h, trace.interval_used, false);
                trace.eta.push_back({k, std::move(af.per_point), af.min_over_points});
            }
        }
        const bool snap = wants_snapshot(k);
        if (test != nullptr && (k % test_every == 0 || last || snap)) {
            const Matrix h_test = pre_activations(params, model.scaling, phi_test);
            const Vector f_test = outputs_from_pre_activations(h_test, params.c, model.activation, out_pref);
            if (k % test_every == 0 || last) trace.test_error.push_back({k, evaluate_test_error(f_test, test->y, test->metric)});
            if (snap) trace.snapshots.push_back({k, st.h, st.f, h_test, f_test});
        } else if (snap) {
            trace.snapshots.push_back({k, st.h, st.f, Matrix(), Vector()});
        }
        trace.steps_completed = k;
        if (last) break;

        try {
            apply_gd_step(params, grad_w(params, model, phi, st), train.delta, model.scaling);
        } catch (const numeric_error&) {
            trace.diverged = true;
            break;
        }
    }
    trace.final_params = std::move(params);
    return trace;
}

} // namespace widenet
