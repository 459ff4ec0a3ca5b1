#include "flowmoe/cli.hpp"

#include "flowmoe/container.hpp"
#include "flowmoe/error.hpp"
#include "flowmoe/gate.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>
#include <unordered_map>

namespace flowmoe {

namespace fs = std::filesystem;

namespace {

void make_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) throw IoError("cannot create directory " + dir.string());
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    auto out = open_out(path);
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

std::string shortest(double v) {
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

std::size_t count_malicious(const std::vector<FlowRecord>& records) {
    std::size_t n = 0;
    for (const auto& r : records) n += r.label.value_or(0) == 1;
    return n;
}

}  // namespace

void cmd_synth(const RunConfig& config, const fs::path& out_dir) {
    make_dir(out_dir);
    const SyntheticDataset ds = generate_synthetic(config.synth, config.seed);
    const auto train = ds.train_records();
    const auto test = ds.test_records();
    write_flow_csv(out_dir / "train.csv", train, ds.schema);
    write_flow_csv(out_dir / "test.csv", test, ds.schema);

    std::ostringstream m;
    m << "# synthetic benchmark\n";
    m << "train_file = train.csv\n";
    m << "test_file = test.csv\n";
    m << "train_flows = " << train.size() << "\n";
    m << "train_malicious = " << count_malicious(train) << "\n";
    m << "test_flows = " << test.size() << "\n";
    m << "test_malicious = " << count_malicious(test) << "\n";
    m << "feature_cols = ";
    for (std::size_t k = 0; k < ds.schema.feature_cols.size(); ++k) m << (k ? ", " : "") << ds.schema.feature_cols[k];
    m << "\n\n# effective config\n" << config.text;
    write_text(out_dir / "manifest.txt", m.str());
}

TrainedModel cmd_train(const RunConfig& config, const fs::path& out_dir) {
    make_dir(out_dir);
    const PreparedData data = load_run_data(config);
    std::optional<ExpertBundle> resume;
    if (!config.resume.empty()) {
        ModelContainer ck = load_container(config.resume);
        if (!(ck.experts.norm == data.norm)) throw FormatError("checkpoint normalization does not match the data");
        resume = std::move(ck.experts);
    }
    const auto checkpoint = [&](const ModelContainer& c, int stage) {
        if (stage == 1) {
            ModelContainer ck = c;
            ck.config_text = config.text;
            save_container(out_dir / "stage1.fmoe", ck);
        }
    };
    TrainedModel t = run_two_stage(data, config.hyper, resume, checkpoint);
    t.container.config_text = config.text;
    save_container(out_dir / "model.fmoe", t.container);
    t.report.write_epoch_csv(out_dir / "epochs.csv");
    write_text(out_dir / "report.txt", t.report.summary());
    return t;
}

GridResult cmd_eval(const RunConfig& config, const std::optional<fs::path>& model, const fs::path& out_dir) {
    make_dir(out_dir);
    const PreparedData data = load_run_data(config);
    AblationConfig ac;
    ac.hyper = config.hyper;
    ac.drift = config.drift;
    ac.variants = config.variants;
    if (model) ac.preloaded = load_container(*model);
    GridResult grid = run_ablation_grid(data, ac);
    write_grid_csv(out_dir / "grid.csv", grid);
    write_selection_csv(out_dir / "selection.csv", grid);
    return grid;
}

std::size_t cmd_detect(const fs::path& model, const fs::path& flows, const fs::path& out_csv) {
    const ModelContainer c = load_container(model);
    if (!c.gate) throw FormatError(model.string() + " has no gate (stage-1 checkpoint?)");
    const RunConfig rc = c.config_text.empty() ? RunConfig{} : RunConfig::parse(c.config_text, model.string());
    SchemaConfig schema = rc.data.schema;
    schema.labels_optional = true;
    if (schema.feature_cols.size() != c.experts.feature_dim())
        throw SchemaError("model expects " + std::to_string(c.experts.feature_dim()) + " feature columns, config names " +
                          std::to_string(schema.feature_cols.size()));

    const ParseResult parsed = parse_flow_csv(flows, schema);
    std::unordered_map<std::uint64_t, std::size_t> row_of;
    row_of.reserve(parsed.records.size());
    for (std::size_t i = 0; i < parsed.records.size(); ++i) row_of.emplace(parsed.records[i].flow_id, i);

    struct Row {
        int predicted = 0;
        std::uint8_t chosen = kAvgExpert;
        double p_avg = 0.0, p_deg = 0.0;
    };
    std::vector<Row> rows(parsed.records.size());
    for (const TrafficGraph& g : build_windows(parsed.records, rc.data.window_seconds, c.experts.norm)) {
        const MoePrediction p = moe_predict(c.experts, *c.gate, g);
        for (std::size_t e = 0; e < g.edge_count(); ++e) {
            Row& r = rows[row_of.at(g.flow_ids[e])];
            const auto i = static_cast<Eigen::Index>(e);
            r = {p.predicted[e], p.chosen[e], p.gate_probs(i, 0), p.gate_probs(i, 1)};
        }
    }

    auto out = open_out(out_csv);
    out << "flow_id,predicted_label,chosen_expert,gate_prob_avg,gate_prob_deg\n";
    for (std::size_t i = 0; i < rows.size(); ++i)
        out << parsed.records[i].flow_id << ',' << rows[i].predicted << ',' << expert_name(rows[i].chosen) << ','
            << shortest(rows[i].p_avg) << ',' << shortest(rows[i].p_deg) << '\n';
    if (!out) throw IoError("write failed: " + out_csv.string());
    return rows.size();
}

double BenchResult::construction_ratio() const {
    return scaling ? scaling->ratio : 0.0;
}

std::string BenchResult::to_text() const {
    std::ostringstream s;
    s << full.to_text();
    if (scaling) {
        s << "probe_small_flows = " << scaling->small_flows << "\n";
        s << "probe_small_construction_seconds = " << scaling->small_seconds << "\n";
        s << "probe_large_flows = " << scaling->large_flows << "\n";
        s << "probe_large_construction_seconds = " << scaling->large_seconds << "\n";
        s << "probe_rounds = " << scaling->rounds << "\n";
        s << "construction_scaling_ratio = " << construction_ratio() << "\n";
    }
    return s.str();
}

BenchResult cmd_bench(const RunConfig& config, const std::optional<fs::path>& model, const fs::path& out_dir) {
    make_dir(out_dir);
    std::optional<ModelContainer> m;
    if (model) m = load_container(*model);
    BenchResult r;
    {
        // warm-up so the first timed run does not pay one-off costs
        ThroughputConfig warm = config.bench;
        warm.flows = std::min<std::size_t>(config.bench.flows, 50'000);
        throughput_bench(warm, m);
    }
    r.full = throughput_bench(config.bench, m);
    if (config.bench_scaling_probe && config.bench.flows >= 4) r.scaling = construction_scaling(config.bench);
    write_text(out_dir / "bench.txt", r.to_text());
    return r;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Flow-graph mixture-of-experts detector"};
    app.require_subcommand(1);

    std::string config_path, out_path, model_path, flows_path;
    std::optional<std::uint64_t> seed;

    auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config,-c", config_path, "run config file");
        if (needs_config) c->required();
        sub->add_option("--seed", seed, "overrides the config seed");
        sub->add_option("--out,-o", out_path, "output directory")->required();
    };
    auto* synth = app.add_subcommand("synth", "generate the synthetic benchmark as CSV files");
    add_common(synth, false);
    auto* train = app.add_subcommand("train", "two-stage training; writes the model container");
    add_common(train, true);
    auto* eval = app.add_subcommand("eval", "ablation grid under drift scenarios");
    add_common(eval, true);
    eval->add_option("--model,-m", model_path, "trained container used as the full MoE");
    auto* detect = app.add_subcommand("detect", "per-flow predictions from a trained model");
    detect->add_option("--model,-m", model_path, "model container")->required();
    detect->add_option("--flows,-f", flows_path, "flow CSV")->required();
    detect->add_option("--out,-o", out_path, "prediction CSV")->required();
    detect->add_option("--seed", seed, "accepted for uniformity; detection is deterministic");
    auto* bench = app.add_subcommand("bench", "construction and inference throughput");
    add_common(bench, false);
    bench->add_option("--model,-m", model_path, "model container (default: random weights)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp& e) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: usage: " << e.what() << "\n";
        return 2;
    }

    try {
        auto load = [&] {
            if (config_path.empty()) {
                Config c;
                if (seed) c.set("seed", std::to_string(*seed));
                return RunConfig::from_config(c);
            }
            return RunConfig::load(config_path, seed);
        };
        const std::optional<fs::path> model =
            model_path.empty() ? std::nullopt : std::optional<fs::path>(model_path);
        if (synth->parsed()) {
            cmd_synth(load(), out_path);
            out << "wrote " << (fs::path(out_path) / "manifest.txt").string() << "\n";
        } else if (train->parsed()) {
            const TrainedModel t = cmd_train(load(), out_path);
            for (const auto& w : t.report.warnings) err << "warning: " << w << "\n";
            out << "wrote " << (fs::path(out_path) / "model.fmoe").string() << "\n";
        } else if (eval->parsed()) {
            const GridResult g = cmd_eval(load(), model, out_path);
            write_grid_csv(out, g);
        } else if (detect->parsed()) {
            const std::size_t n = cmd_detect(model_path, flows_path, out_path);
            out << "wrote " << n << " predictions to " << out_path << "\n";
        } else if (bench->parsed()) {
            out << cmd_bench(load(), model, out_path).to_text();
        }
    } catch (const Error& e) {
        err << "error: " << e.kind() << ": " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "error: internal: " << e.what() << "\n";
        return 1;
    }
    return 0;
}

}  // namespace flowmoe
