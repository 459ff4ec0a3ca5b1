#include "flowmoe/run_config.hpp"

#include "flowmoe/error.hpp"
#include "flowmoe/random.hpp"

namespace flowmoe {

namespace {

const char* const kTrainKeys[] = {"learning_rate", "epochs", "batch_size", "full_batch_edges", "optimizer"};
const char* const kAugKeys[] = {"alpha", "beta", "gamma", "gamma_mode"};

std::set<std::string> build_known() {
    std::set<std::string> k = {
        "seed",
        "data.source", "data.train", "data.test", "data.flows", "data.split_fraction", "data.window_seconds", "data.src_col", "data.dst_col",
        "data.ts_col", "data.label_col", "data.feature_cols", "data.delimiter", "data.ts_scale",
        "data.max_error_fraction",
        "synth.feature_dim", "synth.train_windows", "synth.test_windows", "synth.flows_per_window",
        "synth.malicious_fraction", "synth.benign_degree_mean", "synth.malicious_degree_mean",
        "synth.node_shift", "synth.server_count", "synth.server_zipf", "synth.window_seconds",
        "model.hidden", "model.activation", "model.gate_readout",
        "train.class_weighting", "train.resume",
        "eval.variants", "eval.drift_alpha", "eval.drift_beta", "eval.drift_gamma", "eval.drift_gamma_mode",
        "eval.drift_repeats", "eval.drift_seed",
        "bench.flows", "bench.feature_dim", "bench.flows_per_window", "bench.batch", "bench.repeats", "bench.scaling_probe",
    };
    for (const char* stage : {"train.stage1.", "train.stage2."})
        for (const char* key : kTrainKeys) k.insert(std::string(stage) + key);
    for (const char* set : {"aug1.", "aug2."})
        for (const char* key : kAugKeys) k.insert(std::string(set) + key);
    return k;
}

std::size_t get_size(const Config& c, const std::string& key, std::size_t fallback) {
    const std::int64_t v = c.get_int(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw ConfigError(key + " must be >= 0");
    return static_cast<std::size_t>(v);
}

void read_train(const Config& c, const std::string& prefix, nn::TrainConfig& t) {
    t.learning_rate = c.get_double(prefix + "learning_rate", t.learning_rate);
    t.epochs = static_cast<int>(c.get_int(prefix + "epochs", t.epochs));
    t.batch_size = get_size(c, prefix + "batch_size", t.batch_size);
    t.full_batch_edges = get_size(c, prefix + "full_batch_edges", t.full_batch_edges);
    t.optimizer = c.get_string(prefix + "optimizer", t.optimizer);
}

void read_aug(const Config& c, const std::string& prefix, AugmentParams& a) {
    a.alpha = c.get_double(prefix + "alpha", a.alpha);
    a.beta = c.get_double(prefix + "beta", a.beta);
    a.gamma = c.get_double(prefix + "gamma", a.gamma);
    a.keep_mode = keep_mode_from_string(c.get_string(prefix + "gamma_mode", to_string(a.keep_mode)));
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

}  // namespace

const std::set<std::string>& known_config_keys() {
    static const std::set<std::string> keys = build_known();
    return keys;
}

RunConfig RunConfig::from_config(const Config& c, const std::filesystem::path& base_dir) {
    c.require_known(known_config_keys());
    RunConfig r;
    r.seed = c.get_u64("seed", r.seed);

    r.data.source = c.get_string("data.source", r.data.source);
    if (r.data.source != "synthetic" && r.data.source != "csv")
        throw ConfigError("data.source must be synthetic or csv, got '" + r.data.source + "'");
    r.data.window_seconds = c.get_double("data.window_seconds", r.data.window_seconds);

    SyntheticConfig& s = r.synth;
    s.feature_dim = get_size(c, "synth.feature_dim", s.feature_dim);
    s.train_windows = get_size(c, "synth.train_windows", s.train_windows);
    s.test_windows = get_size(c, "synth.test_windows", s.test_windows);
    s.flows_per_window = get_size(c, "synth.flows_per_window", s.flows_per_window);
    s.malicious_fraction = c.get_double("synth.malicious_fraction", s.malicious_fraction);
    s.benign_degree_mean = c.get_double("synth.benign_degree_mean", s.benign_degree_mean);
    s.malicious_degree_mean = c.get_double("synth.malicious_degree_mean", s.malicious_degree_mean);
    s.node_shift = c.get_double("synth.node_shift", s.node_shift);
    s.server_count = get_size(c, "synth.server_count", s.server_count);
    s.server_zipf = c.get_double("synth.server_zipf", s.server_zipf);
    s.window_seconds = c.get_double("synth.window_seconds", s.window_seconds);
    s.validate();

    if (r.data.source == "synthetic") {
        r.data.schema = synthetic_schema(s.feature_dim);
        r.data.window_seconds = s.window_seconds;
        for (const char* k : {"data.train", "data.test", "data.flows", "data.split_fraction", "data.feature_cols"})
            if (c.has(k)) throw ConfigError(std::string(k) + " needs data.source = csv");
    } else {
        r.data.train = resolve(base_dir, c.get_string("data.train", ""));
        r.data.test = resolve(base_dir, c.get_string("data.test", ""));
        r.data.flows = resolve(base_dir, c.get_string("data.flows", ""));
        r.data.split_fraction = c.get_double("data.split_fraction", r.data.split_fraction);
        const bool pair = !r.data.train.empty() && !r.data.test.empty();
        if (pair == !r.data.flows.empty() || (!pair && (!r.data.train.empty() || !r.data.test.empty())))
            throw ConfigError("data.source = csv needs either data.train and data.test, or data.flows");
        if (!(r.data.split_fraction > 0.0 && r.data.split_fraction < 1.0))
            throw ConfigError("data.split_fraction must be in (0, 1)");
        r.data.schema.feature_cols = c.get_list("data.feature_cols", {});
    }
    SchemaConfig& sc = r.data.schema;
    sc.src_col = c.get_string("data.src_col", sc.src_col);
    sc.dst_col = c.get_string("data.dst_col", sc.dst_col);
    sc.ts_col = c.get_string("data.ts_col", sc.ts_col);
    sc.label_col = c.get_string("data.label_col", sc.label_col);
    const std::string delim = c.get_string("data.delimiter", std::string(1, sc.delimiter));
    if (delim == "tab" || delim == "\\t")
        sc.delimiter = '\t';
    else if (delim.size() == 1)
        sc.delimiter = delim[0];
    else
        throw ConfigError("data.delimiter must be one character or 'tab'");
    sc.ts_scale = c.get_double("data.ts_scale", sc.ts_scale);
    sc.max_error_fraction = c.get_double("data.max_error_fraction", sc.max_error_fraction);
    sc.validate();
    if (!(r.data.window_seconds > 0.0)) throw ConfigError("data.window_seconds must be > 0");

    HyperConfig& h = r.hyper;
    h.seed = r.seed;
    h.shape.hidden = c.get_size_list("model.hidden", h.shape.hidden);
    h.shape.activation = nn::activation_from_string(c.get_string("model.activation", nn::to_string(h.shape.activation)));
    h.gate_readout = c.get_bool("model.gate_readout", h.gate_readout);
    h.class_weighting = c.get_bool("train.class_weighting", h.class_weighting);
    read_train(c, "train.stage1.", h.stage1);
    read_train(c, "train.stage2.", h.stage2);
    read_aug(c, "aug1.", h.aug1);
    read_aug(c, "aug2.", h.aug2);
    h.validate();
    r.resume = resolve(base_dir, c.get_string("train.resume", ""));

    DriftSettings& d = r.drift;
    d.stat_alpha = c.get_double("eval.drift_alpha", d.stat_alpha);
    d.stat_beta = c.get_double("eval.drift_beta", d.stat_beta);
    d.scale_gamma = c.get_double("eval.drift_gamma", d.scale_gamma);
    d.keep_mode = keep_mode_from_string(c.get_string("eval.drift_gamma_mode", to_string(d.keep_mode)));
    d.repeats = get_size(c, "eval.drift_repeats", d.repeats);
    d.seed = c.get_u64("eval.drift_seed", derive_seed(r.seed, {0x6472696674}));
    d.validate();
    if (c.has("eval.variants")) {
        r.variants.clear();
        for (const auto& name : c.get_list("eval.variants", {})) r.variants.push_back(variant_from_name(name));
        if (r.variants.empty()) throw ConfigError("eval.variants is empty");
    }

    r.bench.flows = get_size(c, "bench.flows", r.bench.flows);
    r.bench.feature_dim = get_size(c, "bench.feature_dim", r.bench.feature_dim);
    r.bench.flows_per_window = get_size(c, "bench.flows_per_window", r.bench.flows_per_window);
    r.bench.batch = get_size(c, "bench.batch", r.bench.batch);
    r.bench.repeats = get_size(c, "bench.repeats", r.bench.repeats);
    r.bench.seed = r.seed;
    r.bench.validate();
    r.bench_scaling_probe = c.get_bool("bench.scaling_probe", r.bench_scaling_probe);

    r.text = c.to_text();
    return r;
}

RunConfig RunConfig::parse(const std::string& text, const std::string& origin) {
    return from_config(Config::parse(text, origin));
}

RunConfig RunConfig::load(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override) {
    Config c = Config::load(path);
    if (seed_override) c.set("seed", std::to_string(*seed_override));
    return from_config(c, path.parent_path());
}

PreparedData load_run_data(const RunConfig& config) {
    if (config.data.source == "synthetic") {
        const SyntheticDataset ds = generate_synthetic(config.synth, config.seed);
        return prepare_windows(ds.train_windows, ds.test_windows);
    }
    SchemaConfig schema = config.data.schema;
    schema.labels_optional = false;
    if (!config.data.flows.empty()) {
        const ParseResult all = parse_flow_csv(config.data.flows, schema);
        const auto [train, test] = split_by_time(all.records, config.data.split_fraction);
        return prepare_data(train, test, config.data.window_seconds);
    }
    const ParseResult train = parse_flow_csv(config.data.train, schema);
    const ParseResult test = parse_flow_csv(config.data.test, schema);
    return prepare_data(train.records, test.records, config.data.window_seconds);
}

}  // namespace flowmoe
