#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>

#include <json.hpp>

#include "widenet/diagnostics.hpp"
#include "widenet/model_io.hpp"
#include "widenet/train.hpp"

namespace widenet {

using json = nlohmann::json;

// Non-finite values become null; JSON has no NaN.
inline json json_number(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

inline json to_json(const Interval& i) { return json::array({json_number(i.lo), json_number(i.hi)}); }

inline json matrix_to_json(const Matrix& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(json_number(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

inline json to_json(const GramReport& g, bool include_matrix = true) {
    json j{{"kind", to_string(g.kind)},
           {"n", g.g.rows()},
           {"lambda_min", json_number(g.lambda_min)},
           {"lambda_max", json_number(g.lambda_max)},
           {"g_min", json_number(g.g_min)},
           {"g_max", json_number(g.g_max)}};
    if (g.kind == GramKind::limit_mc) j["mc_samples"] = g.mc_samples;
    if (include_matrix) {
        j["G"] = matrix_to_json(g.g);
        if (g.std_error.size() > 0) j["std_error"] = matrix_to_json(g.std_error);
    }
    return j;
}

inline json to_json(const TheoryConstants& tc) {
    return {{"status", tc.status == ConstantsStatus::ok ? "ok" : "degenerate_gram"},
            {"kappa", json_number(tc.kappa)},
            {"k_const", json_number(tc.k_const)},
            {"rate_exponent", json_number(tc.rate_exponent)},
            {"interval_used", to_json(tc.interval_used)}};
}

inline json to_json(const Lemma1Report& r) {
    json pts = json::array();
    for (const Lemma1Point& p : r.points)
        pts.push_back({{"step", p.step}, {"lhs", json_number(p.lhs)}, {"rhs", json_number(p.rhs)}, {"pass", p.pass}});
    return {{"pass", r.pass}, {"worst_margin", json_number(r.worst_margin)}, {"points", std::move(pts)}};
}

inline json to_json(const PlReport& r) {
    return {{"exact_dLdt", json_number(r.exact_dldt)}, {"bound", json_number(r.bound)}, {"pass", r.pass}};
}

inline json to_json(const ActivationSpec& a) {
    return {{"name", a.name()},
            {"lipschitz", a.lipschitz},
            {"active_region", to_json(a.active_region)},
            {"surrogate_region", to_json(a.surrogate_region)},
            {"k_sigma_prime", a.k_sigma_prime}};
}

inline json to_json(const ModelConfig& c) {
    return {{"width", c.width},
            {"input_dim", c.embedding.input_dim},
            {"embedding_dim", c.embedding.embedding_dim},
            {"embedding", to_string(c.embedding.kind)},
            {"depth", c.embedding.depth},
            {"embedding_seed", c.embedding.seed},
            {"embedding_activation", c.embedding.activation.name()},
            {"activation", to_json(c.activation)},
            {"scaling", c.scaling.name()},
            {"c_hat", c.c_hat},
            {"seed", c.seed}};
}

/// step,loss,eta_min,test_error with 17 significant digits; missing values are "nan".
inline void write_trace_csv(std::ostream& os, const TrainingTrace& trace) {
    std::map<std::size_t, double> eta;
    for (const EtaRecord& e : trace.eta) eta[e.step] = e.min_over_points;
    std::map<std::size_t, double> test;
    for (const TestRecord& t : trace.test_error) test[t.step] = t.value;
    const auto old = os.precision(17);
    os << "step,loss,eta_min,test_error\n";
    constexpr double nan = std::numeric_limits<double>::quiet_NaN();
    for (const LossRecord& l : trace.loss) {
        const auto e = eta.find(l.step);
        const auto t = test.find(l.step);
        os << l.step << ',' << l.loss << ',' << (e == eta.end() ? nan : e->second) << ','
           << (t == test.end() ? nan : t->second) << '\n';
    }
    os.precision(old);
}

// Snapshot sidecar: "WNSN" | u8 version | u64 count | per snapshot:
//   u64 step | u64 m | u64 n | f64[m*n] H | u64 n_test | f64[m*n_test] H_test
inline void write_snapshots(std::ostream& os, const TrainingTrace& trace) {
    using namespace io_detail;
    os.write("WNSN", 4);
    put_u8(os, 1);
    put_u64(os, trace.snapshots.size());
    for (const FeatureSnapshot& s : trace.snapshots) {
        put_u64(os, s.step);
        put_u64(os, static_cast<std::uint64_t>(s.h.rows()));
        put_u64(os, static_cast<std::uint64_t>(s.h.cols()));
        put_doubles(os, s.h.data(), static_cast<std::size_t>(s.h.size()));
        put_u64(os, static_cast<std::uint64_t>(s.h_test.cols()));
        put_doubles(os, s.h_test.data(), static_cast<std::size_t>(s.h_test.size()));
    }
}

/// Scatter data of hidden features: for every snapshot and neuron i, the pair
/// (h_i(first training input), h_i(first test input)).
inline void write_feature_scatter_csv(std::ostream& os, const TrainingTrace& trace) {
    const auto old = os.precision(17);
    os << "step,neuron,h_train0,h_test0\n";
    for (const FeatureSnapshot& s : trace.snapshots) {
        for (Eigen::Index i = 0; i < s.h.rows(); ++i) {
            os << s.step << ',' << i << ',' << s.h(i, 0) << ',';
            if (s.h_test.cols() > 0)
                os << s.h_test(i, 0);
            else
                os << "nan";
            os << '\n';
        }
    }
    os.precision(old);
}

} // namespace widenet
