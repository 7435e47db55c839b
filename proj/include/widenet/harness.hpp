#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "widenet/datasets.hpp"
#include "widenet/diagnostics.hpp"
#include "widenet/model_io.hpp"
#include "widenet/report.hpp"
#include "widenet/train.hpp"

namespace widenet {

enum class ExperimentKind { exp1, exp2, exp3, diag_sweep, custom };

inline std::string to_string(ExperimentKind k) {
    switch (k) {
    case ExperimentKind::exp1: return "exp1";
    case ExperimentKind::exp2: return "exp2";
    case ExperimentKind::exp3: return "exp3";
    case ExperimentKind::diag_sweep: return "diag_sweep";
    case ExperimentKind::custom: return "custom";
    }
    return "?";
}

inline ExperimentKind parse_experiment_kind(std::string_view s) {
    if (s == "exp1") return ExperimentKind::exp1;
    if (s == "exp2") return ExperimentKind::exp2;
    if (s == "exp3") return ExperimentKind::exp3;
    if (s == "diag_sweep") return ExperimentKind::diag_sweep;
    if (s == "custom") return ExperimentKind::custom;
    throw invalid_config("unknown experiment '" + std::string(s) + "'");
}

struct ModelParams {
    std::vector<std::size_t> widths{1024};
    ActivationSpec activation = ActivationSpec::make_tanh();
    std::vector<EmbeddingKind> embeddings{EmbeddingKind::identity};
    std::size_t embedding_dim = 0; // 0: d for identity, d^2 for quadratic, m for random kinds
    std::size_t depth = 3;
    ActivationSpec embedding_activation = ActivationSpec::make_relu();
    double c_hat = 1.0;
};

struct DataParams {
    DatasetKind kind = DatasetKind::random_label;
    std::vector<std::size_t> n_list{20};
    std::size_t d = 20;
    std::vector<std::uint64_t> seeds{1};
    std::size_t test_size = 500;
    std::uint64_t teacher_seed = 0;
};

struct DiagnosticsParams {
    std::size_t mc_samples = 20000;
    std::vector<std::size_t> d_list{256, 1024, 4096};
    std::size_t trials = 5;
    std::size_t reference_samples = 1'000'000;
    bool limit_gram = true; // Monte Carlo limit Gram in the monitor report for random embeddings
};

struct ExperimentConfig {
    ExperimentKind experiment = ExperimentKind::exp1;
    ModelParams model;
    TrainConfig train;
    DataParams data;
    std::vector<ScalingVariant> scalings{ScalingVariant::of(ScalingKind::ours)};
    DiagnosticsParams diagnostics;
    std::string output_dir = "out";
    bool save_params = false;

    void validate() const {
        if (data.n_list.empty()) throw invalid_config("n list is empty");
        if (data.seeds.empty()) throw invalid_config("seeds list is empty");
        if (model.widths.empty()) throw invalid_config("width list is empty");
        if (scalings.empty() && experiment != ExperimentKind::diag_sweep) throw invalid_config("scalings list is empty");
        if (model.embeddings.empty()) throw invalid_config("embedding list is empty");
        if (experiment == ExperimentKind::exp3 && model.embedding_dim != 0 &&
            std::any_of(model.widths.begin(), model.widths.end(),
                        [&](std::size_t m) { return m != model.embedding_dim; }))
            throw invalid_config("exp3 requires D == m");
        train.validate();
    }
};

namespace harness_detail {

inline void check_keys(const json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!obj.is_object()) throw invalid_config(where + " must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
            throw invalid_config("unknown key '" + key + "' in " + where);
    }
}

template <typename T>
std::vector<T> scalar_or_list(const json& v) {
    if (v.is_array()) return v.get<std::vector<T>>();
    return {v.get<T>()};
}

} // namespace harness_detail

/// Defaults for each experiment; keys present in the document override them.
inline ExperimentConfig experiment_defaults(ExperimentKind kind) {
    ExperimentConfig c;
    c.experiment = kind;
    switch (kind) {
    case ExperimentKind::exp1:
    case ExperimentKind::diag_sweep:
    case ExperimentKind::custom:
        c.data.kind = DatasetKind::random_label;
        c.data.d = 20;
        c.data.n_list = {20, 40};
        c.model.activation = ActivationSpec::make_tanh();
        c.model.embeddings = {EmbeddingKind::identity};
        break;
    case ExperimentKind::exp2:
        c.data.kind = DatasetKind::quadratic_teacher;
        c.data.d = 30;
        c.model.activation = ActivationSpec::make_relu();
        c.model.embeddings = {EmbeddingKind::identity, EmbeddingKind::quadratic};
        break;
    case ExperimentKind::exp3:
        c.data.kind = DatasetKind::wei;
        c.data.d = 50;
        c.model.activation = ActivationSpec::make_relu();
        c.model.embedding_activation = ActivationSpec::make_relu();
        c.model.embeddings = {EmbeddingKind::random_feature};
        c.scalings = {ScalingVariant::of(ScalingKind::ours), ScalingVariant::of(ScalingKind::ntk),
                      ScalingVariant::of(ScalingKind::mf)};
        break;
    }
    c.train.steps = 1000;
    c.train.delta = 1.0;
    c.train.record_every = 10;
    return c;
}

/// Parses a config document. Unknown keys anywhere are rejected.
inline ExperimentConfig parse_experiment_config(const json& doc) {
    using harness_detail::check_keys;
    using harness_detail::scalar_or_list;
    check_keys(doc, {"experiment", "model", "train", "data", "scalings", "diagnostics", "output_dir", "save_params"},
               "config");
    if (!doc.contains("experiment")) throw invalid_config("config needs an 'experiment' key");
    try {
        ExperimentConfig c = experiment_defaults(parse_experiment_kind(doc.at("experiment").get<std::string>()));
        if (doc.contains("model")) {
            const json& m = doc["model"];
            check_keys(m, {"width", "activation", "embedding", "embedding_dim", "depth", "embedding_activation", "c_hat"},
                       "model");
            if (m.contains("width")) c.model.widths = scalar_or_list<std::size_t>(m["width"]);
            if (m.contains("activation")) c.model.activation = ActivationSpec::parse(m["activation"].get<std::string>());
            if (m.contains("embedding")) {
                c.model.embeddings.clear();
                for (const auto& e : scalar_or_list<std::string>(m["embedding"]))
                    c.model.embeddings.push_back(parse_embedding_kind(e));
            }
            if (m.contains("embedding_dim")) c.model.embedding_dim = m["embedding_dim"].get<std::size_t>();
            if (m.contains("depth")) c.model.depth = m["depth"].get<std::size_t>();
            if (m.contains("embedding_activation"))
                c.model.embedding_activation = ActivationSpec::parse(m["embedding_activation"].get<std::string>());
            if (m.contains("c_hat")) c.model.c_hat = m["c_hat"].get<double>();
        }
        if (doc.contains("train")) {
            const json& t = doc["train"];
            check_keys(t, {"steps", "delta", "record_every", "snapshot_steps", "record_eta", "test_every"}, "train");
            if (t.contains("steps")) c.train.steps = t["steps"].get<std::size_t>();
            if (t.contains("delta")) c.train.delta = t["delta"].get<double>();
            if (t.contains("record_every")) c.train.record_every = t["record_every"].get<std::size_t>();
            if (t.contains("snapshot_steps")) c.train.snapshot_steps = t["snapshot_steps"].get<std::vector<std::size_t>>();
            if (t.contains("record_eta")) c.train.record_eta = t["record_eta"].get<bool>();
            if (t.contains("test_every")) c.train.test_every = t["test_every"].get<std::size_t>();
        }
        if (doc.contains("data")) {
            const json& d = doc["data"];
            check_keys(d, {"kind", "n", "d", "seeds", "test_size", "teacher_seed"}, "data");
            if (d.contains("kind")) c.data.kind = parse_dataset_kind(d["kind"].get<std::string>());
            if (d.contains("n")) c.data.n_list = scalar_or_list<std::size_t>(d["n"]);
            if (d.contains("d")) c.data.d = d["d"].get<std::size_t>();
            if (d.contains("seeds")) c.data.seeds = scalar_or_list<std::uint64_t>(d["seeds"]);
            if (d.contains("test_size")) c.data.test_size = d["test_size"].get<std::size_t>();
            if (d.contains("teacher_seed")) c.data.teacher_seed = d["teacher_seed"].get<std::uint64_t>();
        }
        if (doc.contains("scalings")) {
            c.scalings.clear();
            for (const auto& s : scalar_or_list<std::string>(doc["scalings"])) c.scalings.push_back(parse_scaling(s));
        }
        if (doc.contains("diagnostics")) {
            const json& g = doc["diagnostics"];
            check_keys(g, {"mc_samples", "d_list", "trials", "reference_samples", "limit_gram"}, "diagnostics");
            if (g.contains("mc_samples")) c.diagnostics.mc_samples = g["mc_samples"].get<std::size_t>();
            if (g.contains("d_list")) c.diagnostics.d_list = g["d_list"].get<std::vector<std::size_t>>();
            if (g.contains("trials")) c.diagnostics.trials = g["trials"].get<std::size_t>();
            if (g.contains("reference_samples"))
                c.diagnostics.reference_samples = g["reference_samples"].get<std::size_t>();
            if (g.contains("limit_gram")) c.diagnostics.limit_gram = g["limit_gram"].get<bool>();
        }
        if (doc.contains("output_dir")) c.output_dir = doc["output_dir"].get<std::string>();
        if (doc.contains("save_params")) c.save_params = doc["save_params"].get<bool>();
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw invalid_config(std::string("malformed config value: ") + e.what());
    }
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw invalid_config("cannot open config " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw invalid_config("config is not valid JSON: " + std::string(e.what()));
    }
    return parse_experiment_config(doc);
}

/// Named presets. "paper" keeps the published widths and step counts
/// (m = 8192, 50000 steps, delta = 1); "desk" is the reduced scale used by the
/// acceptance suite.
inline json preset_config(ExperimentKind kind, std::string_view scale) {
    const bool paper = scale == "paper";
    if (!paper && scale != "desk") throw invalid_config("unknown preset scale '" + std::string(scale) + "'");
    json doc{{"experiment", to_string(kind)}};
    switch (kind) {
    case ExperimentKind::exp1:
        doc["model"] = {{"width", paper ? 8192 : 1024}, {"activation", "tanh"}};
        doc["data"] = {{"n", json::array({20, 40})}, {"d", 20}, {"seeds", json::array({1, 2, 3, 4, 5})}};
        doc["train"] = {{"steps", paper ? 50000 : 5000}, {"delta", 1.0}, {"record_every", paper ? 100 : 10}};
        break;
    case ExperimentKind::exp2:
        doc["model"] = {{"width", paper ? 8192 : 1024}, {"activation", "relu"}};
        doc["data"] = {{"n", paper ? json::array({100, 200, 400, 800}) : json::array({50, 100})},
                       {"d", 30},
                       {"seeds", json::array({1, 2, 3, 4, 5})}};
        doc["train"] = {{"steps", paper ? 50000 : 2000}, {"delta", paper ? 1.0 : 0.05}, {"record_every", 100}};
        break;
    case ExperimentKind::exp3:
        doc["model"] = {{"width", paper ? 8192 : 1024}, {"activation", "relu"}};
        doc["data"] = {{"n", paper ? json::array({400, 600, 800}) : json::array({200})},
                       {"d", 50},
                       {"seeds", json::array({1, 2, 3, 4, 5})}};
        doc["train"] = {{"steps", paper ? 50000 : 600}, {"delta", 1.0}, {"record_every", paper ? 500 : 20}};
        break;
    case ExperimentKind::diag_sweep:
        doc["model"] = {{"activation", "relu"}};
        doc["data"] = {{"n", json::array({10})}, {"d", 10}, {"seeds", json::array({1})}};
        doc["diagnostics"] = {{"d_list", json::array({256, 1024, 4096})}, {"trials", 5}};
        break;
    case ExperimentKind::custom: throw invalid_config("custom experiments have no preset");
    }
    return doc;
}

struct RateFit {
    double slope = 0.0; // per step, of log L
    double r_squared = 0.0;
    std::size_t points = 0;
};

inline constexpr double rate_fit_floor = 1e-8;
inline constexpr std::size_t rate_fit_min_points = 10;

/// Least-squares line through (step, log L) over the window that starts at
/// the first record and stops before the loss first drops below 1e-8 or
/// becomes non-positive.
inline RateFit rate_fit(const std::vector<LossRecord>& series) {
    std::vector<std::pair<double, double>> pts;
    for (const LossRecord& r : series) {
        if (!(r.loss > 0.0) || r.loss < rate_fit_floor || !std::isfinite(r.loss)) break;
        pts.emplace_back(static_cast<double>(r.step), std::log(r.loss));
    }
    if (pts.size() < rate_fit_min_points)
        throw structural_error("rate_fit needs at least 10 positive loss points, got " + std::to_string(pts.size()));
    const double count = static_cast<double>(pts.size());
    double mx = 0.0, my = 0.0;
    for (const auto& [x, y] : pts) {
        mx += x;
        my += y;
    }
    mx /= count;
    my /= count;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (const auto& [x, y] : pts) {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    RateFit fit;
    fit.points = pts.size();
    fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    double ss_res = 0.0;
    for (const auto& [x, y] : pts) {
        const double e = y - (my + fit.slope * (x - mx));
        ss_res += e * e;
    }
    fit.r_squared = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
    return fit;
}

inline TestMetric metric_for(DatasetKind kind) {
    return kind == DatasetKind::wei ? TestMetric::sign_error : TestMetric::mean_squared;
}

/// Test error of a trained model: MSE for regression data, 0-1 sign error for wei.
inline double test_error(const Parameters& p, const ModelConfig& config, const Dataset& test) {
    if (test.size() == 0) throw invalid_config("test set is empty");
    const ForwardState st = forward(p, config, test.x);
    return evaluate_test_error(st.f, test.y, metric_for(test.kind));
}

inline Dataset make_dataset(const DataParams& dp, std::size_t n, std::uint64_t seed, Split split) {
    switch (dp.kind) {
    case DatasetKind::random_label: return gen_random_label(n, dp.d, seed, split);
    case DatasetKind::quadratic_teacher: return gen_quadratic_teacher(n, dp.d, dp.teacher_seed, seed, split);
    case DatasetKind::wei: return gen_wei(n, dp.d, seed, split);
    }
    throw invalid_config("unknown dataset kind");
}

inline ModelConfig make_model_config(const ExperimentConfig& c, std::size_t width, EmbeddingKind embedding,
                                     const ScalingVariant& scaling, std::uint64_t seed) {
    ModelConfig mc;
    mc.width = width;
    mc.activation = c.model.activation;
    mc.scaling = scaling;
    mc.c_hat = c.model.c_hat;
    mc.seed = seed;
    const std::size_t d = c.data.d;
    switch (embedding) {
    case EmbeddingKind::identity: mc.embedding = EmbeddingSpec::identity(d); break;
    case EmbeddingKind::quadratic: mc.embedding = EmbeddingSpec::quadratic(d); break;
    case EmbeddingKind::random_feature:
        mc.embedding = EmbeddingSpec::random_feature(d, c.model.embedding_dim == 0 ? width : c.model.embedding_dim,
                                                     c.model.embedding_activation, seed);
        break;
    case EmbeddingKind::deep_random:
        mc.embedding = EmbeddingSpec::deep_random(d, c.model.embedding_dim == 0 ? width : c.model.embedding_dim,
                                                  c.model.depth, c.model.embedding_activation, seed);
        break;
    }
    return mc;
}

enum class Verdict { pass, fail, na };

inline std::string to_string(Verdict v) {
    switch (v) {
    case Verdict::pass: return "1";
    case Verdict::fail: return "0";
    case Verdict::na: return "na";
    }
    return "na";
}

struct SummaryRow {
    std::string experiment;
    std::string scaling;
    std::size_t n = 0;
    std::size_t m = 0;
    std::uint64_t seed = 0;
    double final_loss = 0.0;
    double test_error = std::numeric_limits<double>::quiet_NaN();
    double rate_slope = std::numeric_limits<double>::quiet_NaN();
    double rate_r2 = std::numeric_limits<double>::quiet_NaN();
    Verdict lemma1 = Verdict::na;
    Verdict pl = Verdict::na;
};

inline constexpr const char* summary_header =
    "experiment,scaling,n,m,seed,final_loss,test_error,rate_slope,rate_r2,lemma1_pass,pl_pass";

inline std::string format_summary_row(const SummaryRow& r) {
    std::ostringstream os;
    os.precision(17);
    os << r.experiment << ',' << r.scaling << ',' << r.n << ',' << r.m << ',' << r.seed << ',' << r.final_loss << ','
       << r.test_error << ',' << r.rate_slope << ',' << r.rate_r2 << ',' << to_string(r.lemma1) << ','
       << to_string(r.pl);
    return os.str();
}

struct CellResult {
    SummaryRow row;
    ModelConfig model;
    TrainingTrace trace;
    GramReport gram;
    json monitors;
    bool movement_pass = true;
    bool diverged = false;
};

/// Gram matrices with lambda_min below this fraction of lambda_max are treated
/// as singular for monitoring purposes.
inline constexpr double degenerate_gram_ratio = 1e-12;

inline bool gram_is_degenerate(const GramReport& g) {
    return !(g.lambda_min > degenerate_gram_ratio * std::max(std::abs(g.lambda_max), 1e-300));
}

/// Trains one grid cell and evaluates every monitor on it.
inline CellResult run_cell(const ExperimentConfig& c, std::size_t n, std::size_t width, EmbeddingKind embedding,
                           const ScalingVariant& scaling, std::uint64_t seed) {
    CellResult out;
    out.model = make_model_config(c, width, embedding, scaling, seed);
    const Dataset train_set = make_dataset(c.data, n, seed, Split::train);
    std::optional<TestSet> test;
    if (c.data.test_size > 0) {
        const Dataset t = make_dataset(c.data, c.data.test_size, seed, Split::test);
        test = TestSet{t.x, t.y, metric_for(c.data.kind)};
    }
    TrainConfig tc = c.train;
    if (tc.snapshot_steps.empty()) tc.snapshot_steps = {0, tc.steps / 2, tc.steps};
    out.trace = run_training(out.model, tc, train_set.x, train_set.y, test ? &*test : nullptr);
    out.diverged = out.trace.diverged;

    const Parameters& init = out.trace.initial_params;
    out.gram = gram(out.model.embedding, init.embedding, train_set.x);
    const bool degenerate = gram_is_degenerate(out.gram);
    const TheoryConstants constants = theory_constants(out.gram, out.model.activation, out.model.c_hat);

    SummaryRow& row = out.row;
    row.experiment = to_string(c.experiment);
    if (c.model.embeddings.size() > 1) row.experiment += "/" + to_string(embedding);
    row.scaling = scaling.name();
    row.n = n;
    row.m = width;
    row.seed = seed;
    row.final_loss = out.trace.loss.empty() ? std::numeric_limits<double>::quiet_NaN() : out.trace.loss.back().loss;
    if (!out.trace.test_error.empty()) row.test_error = out.trace.test_error.back().value;
    try {
        const RateFit fit = rate_fit(out.trace.loss);
        row.rate_slope = fit.slope;
        row.rate_r2 = fit.r_squared;
    } catch (const structural_error&) {
    }

    json monitors{{"model", to_json(out.model)},
                  {"n", n},
                  {"seed", seed},
                  {"steps_completed", out.trace.steps_completed},
                  {"diverged", out.trace.diverged},
                  {"monotone_violations", out.trace.monotone_violations},
                  {"interval_used", to_json(out.trace.interval_used)},
                  {"slack", {{"absolute", MonitorSlack{}.absolute}, {"relative", MonitorSlack{}.relative}}},
                  {"gram", to_json(out.gram, false)},
                  {"theory_constants", to_json(constants)},
                  {"eta_shrunk0", json_number(out.trace.eta_shrunk0)},
                  {"test_metric", metric_for(c.data.kind) == TestMetric::sign_error ? "sign_error_0_1" : "mean_squared"},
                  // A large c_hat relative to this ratio is what the convergence theory asks for.
                  {"gram_condition", json_number(degenerate ? std::numeric_limits<double>::infinity()
                                                            : out.gram.lambda_max / out.gram.lambda_min)}};
    if (out.model.embedding.kind == EmbeddingKind::random_feature && c.diagnostics.limit_gram) {
        const GramReport limit =
            gram_limit_mc(out.model.embedding.activation, train_set.x, c.diagnostics.mc_samples, seed);
        monitors["gram_limit"] = to_json(limit, false);
    }
    if (!degenerate && !out.trace.diverged) {
        if (!out.trace.eta.empty()) {
            const Lemma1Report l1 = lemma1_monitor(out.trace, constants, out.model.c_hat);
            row.lemma1 = l1.pass ? Verdict::pass : Verdict::fail;
            monitors["lemma1"] = {{"pass", l1.pass}, {"worst_margin", json_number(l1.worst_margin)},
                                  {"points_checked", l1.points.size()}};
        }
        const PlReport pl0 = pl_monitor(init, out.model, train_set.x, train_set.y, out.gram);
        const PlReport pl1 = pl_monitor(out.trace.final_params, out.model, train_set.x, train_set.y, out.gram);
        row.pl = (pl0.pass && pl1.pass) ? Verdict::pass : Verdict::fail;
        monitors["pl"] = {{"initial", to_json(pl0)}, {"final", to_json(pl1)}};
    }
    out.movement_pass =
        movement_bound_all_pairs(out.trace, out.model.c_hat, out.model.activation.lipschitz, out.model.scaling);
    monitors["movement_bound_pass"] = out.movement_pass;
    out.monitors = std::move(monitors);
    return out;
}

inline std::string cell_tag(const SummaryRow& r) {
    std::string exp = r.experiment;
    std::replace(exp.begin(), exp.end(), '/', '-');
    return exp + "_" + r.scaling + "_n" + std::to_string(r.n) + "_m" + std::to_string(r.m) + "_s" +
           std::to_string(r.seed);
}

/// Everything a run leaves behind: the rows of summary.csv plus the monitor
/// verdicts the CLI uses for its exit code.
struct RunArtifact {
    std::vector<SummaryRow> rows;
    std::vector<std::string> trace_files;
    bool all_monitors_pass = true;
    std::filesystem::path output_dir;
};

inline void write_cell_files(const std::filesystem::path& dir, const ExperimentConfig& c, const CellResult& cell,
                             RunArtifact& art) {
    namespace fs = std::filesystem;
    const std::string tag = cell_tag(cell.row);
    fs::create_directories(dir / "traces");
    fs::create_directories(dir / "features");
    fs::create_directories(dir / "monitors");
    {
        std::ofstream os(dir / "traces" / (tag + ".csv"));
        write_trace_csv(os, cell.trace);
    }
    {
        std::ofstream os(dir / "traces" / (tag + ".snap"), std::ios::binary);
        write_snapshots(os, cell.trace);
    }
    {
        std::ofstream os(dir / "features" / (tag + ".csv"));
        write_feature_scatter_csv(os, cell.trace);
    }
    {
        std::ofstream os(dir / "monitors" / (tag + ".json"));
        os << cell.monitors.dump(2) << '\n';
    }
    if (c.save_params) {
        fs::create_directories(dir / "params");
        std::ofstream os(dir / "params" / (tag + ".bin"), std::ios::binary);
        save_parameters(os, cell.model, cell.trace.final_params);
    }
    art.trace_files.push_back((fs::path("traces") / (tag + ".csv")).string());
}

inline bool cell_monitors_pass(const CellResult& cell) {
    return cell.row.lemma1 != Verdict::fail && cell.row.pl != Verdict::fail && cell.movement_pass;
}

inline void write_summary(const std::filesystem::path& dir, const std::vector<SummaryRow>& rows) {
    std::ofstream os(dir / "summary.csv");
    os << summary_header << '\n';
    for (const SummaryRow& r : rows) os << format_summary_row(r) << '\n';
}

inline void write_mean_curves(const std::filesystem::path& dir, const std::vector<CellResult>& cells) {
    // (experiment, scaling, n, m) -> step -> (sum loss, count, sum test, test count)
    struct Acc {
        double loss = 0.0;
        std::size_t count = 0;
        double test = 0.0;
        std::size_t test_count = 0;
    };
    std::map<std::tuple<std::string, std::string, std::size_t, std::size_t>, std::map<std::size_t, Acc>> groups;
    for (const CellResult& cell : cells) {
        auto& g = groups[{cell.row.experiment, cell.row.scaling, cell.row.n, cell.row.m}];
        for (const LossRecord& l : cell.trace.loss) {
            g[l.step].loss += l.loss;
            g[l.step].count += 1;
        }
        for (const TestRecord& t : cell.trace.test_error) {
            g[t.step].test += t.value;
            g[t.step].test_count += 1;
        }
    }
    std::ofstream os(dir / "mean_curves.csv");
    os.precision(17);
    os << "experiment,scaling,n,m,step,seeds,mean_loss,mean_test_error\n";
    for (const auto& [key, steps] : groups) {
        for (const auto& [step, acc] : steps) {
            os << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << std::get<3>(key)
               << ',' << step << ',' << acc.count << ','
               << (acc.count ? acc.loss / static_cast<double>(acc.count) : std::numeric_limits<double>::quiet_NaN())
               << ','
               << (acc.test_count ? acc.test / static_cast<double>(acc.test_count)
                                  : std::numeric_limits<double>::quiet_NaN())
               << '\n';
        }
    }
}

inline json config_echo(const ExperimentConfig& c) {
    json scal = json::array();
    for (const auto& s : c.scalings) scal.push_back(s.name());
    json emb = json::array();
    for (const auto& e : c.model.embeddings) emb.push_back(to_string(e));
    return {{"experiment", to_string(c.experiment)},
            {"model",
             {{"width", c.model.widths},
              {"activation", c.model.activation.name()},
              {"embedding", emb},
              {"embedding_dim", c.model.embedding_dim},
              {"depth", c.model.depth},
              {"embedding_activation", c.model.embedding_activation.name()},
              {"c_hat", c.model.c_hat}}},
            {"train",
             {{"steps", c.train.steps},
              {"delta", c.train.delta},
              {"record_every", c.train.record_every},
              {"snapshot_steps", c.train.snapshot_steps},
              {"record_eta", c.train.record_eta},
              {"test_every", c.train.test_every}}},
            {"data",
             {{"kind", to_string(c.data.kind)},
              {"n", c.data.n_list},
              {"d", c.data.d},
              {"seeds", c.data.seeds},
              {"test_size", c.data.test_size},
              {"teacher_seed", c.data.teacher_seed}}},
            {"scalings", scal},
            {"diagnostics",
             {{"mc_samples", c.diagnostics.mc_samples},
              {"d_list", c.diagnostics.d_list},
              {"trials", c.diagnostics.trials},
              {"reference_samples", c.diagnostics.reference_samples},
              {"limit_gram", c.diagnostics.limit_gram}}},
            {"output_dir", c.output_dir},
            {"save_params", c.save_params}};
}

/// Gram report, theory constants and a concentration sweep per (n, seed).
inline RunArtifact run_diag_sweep(const ExperimentConfig& c) {
    namespace fs = std::filesystem;
    RunArtifact art;
    art.output_dir = c.output_dir;
    fs::create_directories(art.output_dir);
    std::ofstream gram_csv(art.output_dir / "diag_gram.csv");
    gram_csv.precision(17);
    gram_csv << "n,seed,kind,lambda_min,lambda_max,g_min,g_max,kappa,k_const,rate_exponent\n";
    std::ofstream conc_csv(art.output_dir / "concentration.csv");
    conc_csv.precision(17);
    conc_csv << "n,seed,D,median_deviation\n";
    for (std::size_t n : c.data.n_list) {
        for (std::uint64_t seed : c.data.seeds) {
            const Dataset ds = make_dataset(c.data, n, seed, Split::train);
            const GramReport g0 = gram(EmbeddingSpec::identity(c.data.d), {}, ds.x);
            const GramReport limit = gram_limit_mc(c.model.embedding_activation, ds.x, c.diagnostics.mc_samples, seed);
            for (const GramReport* g : {&g0, &limit}) {
                const TheoryConstants tc = theory_constants(*g, c.model.activation, c.model.c_hat);
                gram_csv << n << ',' << seed << ',' << to_string(g->kind) << ',' << g->lambda_min << ','
                         << g->lambda_max << ',' << g->g_min << ',' << g->g_max << ',' << tc.kappa << ','
                         << tc.k_const << ',' << tc.rate_exponent << '\n';
                if (g->lambda_min < -1e-9) art.all_monitors_pass = false;
            }
            const ConcentrationTable table =
                concentration_probe(c.model.embedding_activation, ds.x, c.diagnostics.d_list, c.diagnostics.trials,
                                    seed, c.diagnostics.reference_samples);
            for (const ConcentrationRow& r : table.rows)
                conc_csv << n << ',' << seed << ',' << r.embedding_dim << ',' << r.median_deviation << '\n';
        }
    }
    return art;
}

/// Runs the full grid n x width x embedding x scaling x seed, writing per-run
/// traces, snapshot sidecars, feature scatter data and monitor reports, then
/// summary.csv and mean_curves.csv. A diverged run is recorded and the grid
/// continues.
inline RunArtifact run_experiment(const ExperimentConfig& c) {
    namespace fs = std::filesystem;
    c.validate();
    if (c.experiment == ExperimentKind::diag_sweep) return run_diag_sweep(c);
    RunArtifact art;
    art.output_dir = c.output_dir;
    fs::create_directories(art.output_dir);
    {
        std::ofstream os(art.output_dir / "config.json");
        os << config_echo(c).dump(2) << '\n';
    }
    std::vector<CellResult> cells;
    for (std::size_t n : c.data.n_list)
        for (std::size_t width : c.model.widths)
            for (EmbeddingKind emb : c.model.embeddings)
                for (const ScalingVariant& s : c.scalings)
                    for (std::uint64_t seed : c.data.seeds) {
                        CellResult cell = run_cell(c, n, width, emb, s, seed);
                        write_cell_files(art.output_dir, c, cell, art);
                        art.all_monitors_pass = art.all_monitors_pass && cell_monitors_pass(cell);
                        art.rows.push_back(cell.row);
                        // Keep only what the mean curves need.
                        cell.trace.snapshots.clear();
                        cell.trace.initial_params = {};
                        cell.trace.final_params = {};
                        cells.push_back(std::move(cell));
                    }
    write_summary(art.output_dir, art.rows);
    write_mean_curves(art.output_dir, cells);
    return art;
}

} // namespace widenet
