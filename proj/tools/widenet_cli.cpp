#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "widenet/widenet.hpp"

namespace fs = std::filesystem;
using namespace widenet;

namespace {

struct CommonOptions {
    std::string config_path;
    std::string preset;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    bool no_strict = false;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    auto* cfg = cmd->add_option("--config", o.config_path, "JSON experiment config");
    auto* pre = cmd->add_option("--preset", o.preset, "named preset, e.g. exp1:desk or exp3:paper");
    cfg->excludes(pre);
    cmd->add_option("--out", o.out_dir, "output directory (overrides output_dir)");
    cmd->add_option("--seed", o.seed, "run a single seed instead of the config's seed list");
    cmd->add_flag("--no-strict", o.no_strict, "exit 0 even if a monitor fails");
}

ExperimentConfig load(const CommonOptions& o) {
    ExperimentConfig c;
    if (!o.config_path.empty()) {
        c = load_experiment_config(o.config_path);
    } else if (!o.preset.empty()) {
        const auto colon = o.preset.find(':');
        const std::string kind = o.preset.substr(0, colon);
        const std::string scale = colon == std::string::npos ? "desk" : o.preset.substr(colon + 1);
        c = parse_experiment_config(preset_config(parse_experiment_kind(kind), scale));
    } else {
        throw invalid_config("either --config or --preset is required");
    }
    if (!o.out_dir.empty()) c.output_dir = o.out_dir;
    if (o.seed) c.data.seeds = {*o.seed};
    return c;
}

std::ofstream open_out(const fs::path& p) {
    fs::create_directories(p.parent_path());
    std::ofstream os(p);
    if (!os) throw std::runtime_error("cannot write " + p.string());
    os.precision(17);
    return os;
}

int finish(bool pass, const CommonOptions& o) {
    if (!pass) std::cerr << "monitor failure" << (o.no_strict ? " (ignored, --no-strict)" : "") << '\n';
    return (pass || o.no_strict) ? 0 : 1;
}

int cmd_experiment(const CommonOptions& o, bool single) {
    ExperimentConfig c = load(o);
    if (single) {
        c.data.n_list.resize(1);
        c.model.widths.resize(1);
        c.model.embeddings.resize(1);
        c.scalings.resize(1);
        c.data.seeds.resize(1);
    }
    const RunArtifact art = run_experiment(c);
    for (const SummaryRow& r : art.rows) std::cout << format_summary_row(r) << '\n';
    std::cerr << "wrote " << art.output_dir.string() << '\n';
    return finish(art.all_monitors_pass, o);
}

int cmd_gram(const CommonOptions& o) {
    const ExperimentConfig c = load(o);
    const std::uint64_t seed = c.data.seeds.front();
    const Dataset ds = make_dataset(c.data, c.data.n_list.front(), seed, Split::train);
    const ModelConfig mc = make_model_config(c, c.model.widths.front(), c.model.embeddings.front(),
                                             ScalingVariant::of(ScalingKind::ours), seed);
    const EmbeddingWeights w = build_embedding(mc.embedding);
    const GramReport g = gram(mc.embedding, w, ds.x);
    json out{{"gram", to_json(g)}, {"theory_constants", to_json(theory_constants(g, mc.activation, mc.c_hat))}};
    if (mc.embedding.kind == EmbeddingKind::random_feature) {
        const GramReport limit = gram_limit_mc(mc.embedding.activation, ds.x, c.diagnostics.mc_samples, seed);
        out["gram_limit"] = to_json(limit);
        out["theory_constants_limit"] = to_json(theory_constants(limit, mc.activation, mc.c_hat));
    }
    const fs::path dir = c.output_dir;
    open_out(dir / "gram.json") << out.dump(2) << '\n';
    std::cout << "lambda_min " << g.lambda_min << " lambda_max " << g.lambda_max << '\n';
    return finish(!gram_is_degenerate(g), o);
}

int cmd_concentration(const CommonOptions& o) {
    const ExperimentConfig c = load(o);
    const std::uint64_t seed = c.data.seeds.front();
    const Dataset ds = make_dataset(c.data, c.data.n_list.front(), seed, Split::train);
    const ConcentrationTable t = concentration_probe(c.model.embedding_activation, ds.x, c.diagnostics.d_list,
                                                     c.diagnostics.trials, seed, c.diagnostics.reference_samples);
    auto os = open_out(fs::path(c.output_dir) / "concentration.csv");
    os << "D,median_deviation\n";
    for (const ConcentrationRow& r : t.rows) {
        os << r.embedding_dim << ',' << r.median_deviation << '\n';
        std::cout << "D=" << r.embedding_dim << " median deviation " << r.median_deviation << '\n';
    }
    return 0;
}

int cmd_gen_data(const CommonOptions& o) {
    const ExperimentConfig c = load(o);
    for (std::uint64_t seed : c.data.seeds) {
        for (std::size_t n : c.data.n_list) {
            const Dataset tr = make_dataset(c.data, n, seed, Split::train);
            auto os = open_out(fs::path(c.output_dir) /
                               (to_string(c.data.kind) + "_n" + std::to_string(n) + "_s" + std::to_string(seed) + "_train.csv"));
            write_dataset_csv(os, tr);
        }
        if (c.data.test_size > 0) {
            const Dataset te = make_dataset(c.data, c.data.test_size, seed, Split::test);
            auto os = open_out(fs::path(c.output_dir) / (to_string(c.data.kind) + "_s" + std::to_string(seed) + "_test.csv"));
            write_dataset_csv(os, te);
        }
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Shallow and partially trained networks: training runs, Gram diagnostics and experiment grids"};
    app.require_subcommand(1);
    CommonOptions opts;
    auto* train = app.add_subcommand("train", "train a single grid cell (first entry of every list)");
    auto* experiment = app.add_subcommand("experiment", "run the full experiment grid");
    auto* gram_cmd = app.add_subcommand("gram", "Gram matrix, its extreme eigenvalues and theory constants");
    auto* conc = app.add_subcommand("concentration", "random-feature Gram concentration sweep");
    auto* gen = app.add_subcommand("gen-data", "write datasets as CSV");
    for (auto* cmd : {train, experiment, gram_cmd, conc, gen}) add_common(cmd, opts);
    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_experiment(opts, true);
        if (*experiment) return cmd_experiment(opts, false);
        if (*gram_cmd) return cmd_gram(opts);
        if (*conc) return cmd_concentration(opts);
        if (*gen) return cmd_gen_data(opts);
    } catch (const invalid_config& e) {
        std::cerr << "invalid config: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
    return 0;
}
