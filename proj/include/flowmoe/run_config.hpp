#pragma once

#include "flowmoe/ablation.hpp"
#include "flowmoe/config.hpp"
#include "flowmoe/synthetic.hpp"
#include "flowmoe/throughput.hpp"
#include "flowmoe/training.hpp"

#include <filesystem>
#include <set>
#include <string>
#include <vector>

namespace flowmoe {

struct DataSettings {
    // "synthetic" (generated from synth.*) or "csv" (train / test files).
    std::string source = "synthetic";
    std::filesystem::path train;
    std::filesystem::path test;
    // Alternative to train / test: one file split by arrival time.
    std::filesystem::path flows;
    double split_fraction = 0.5;
    SchemaConfig schema;
    double window_seconds = 30.0;
};

/// Every parameter of a run, read from one config file. Relative data paths
/// resolve against the config file's directory.
struct RunConfig {
    std::uint64_t seed = 1;
    DataSettings data;
    SyntheticConfig synth;
    HyperConfig hyper;
    DriftSettings drift;
    std::vector<Variant> variants = all_variants();
    std::filesystem::path resume;  // stage-1 checkpoint to start stage 2 from
    ThroughputConfig bench;
    bool bench_scaling_probe = true;
    // Canonical text of the effective config (stored in model containers).
    std::string text;

    static RunConfig from_config(const Config& config, const std::filesystem::path& base_dir = {});
    static RunConfig parse(const std::string& text, const std::string& origin = "<config>");
    static RunConfig load(const std::filesystem::path& path, std::optional<std::uint64_t> seed_override = {});
};

const std::set<std::string>& known_config_keys();

// Synthetic windows or parsed CSV files, normalized with training statistics.
PreparedData load_run_data(const RunConfig& config);

}  // namespace flowmoe
