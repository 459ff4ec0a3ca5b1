#pragma once

#include "flowmoe/ablation.hpp"
#include "flowmoe/run_config.hpp"
#include "flowmoe/throughput.hpp"
#include "flowmoe/training.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>

namespace flowmoe {

// Writes train.csv, test.csv and manifest.txt.
void cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir);

// Writes model.fmoe, stage1.fmoe, report.txt and epochs.csv.
TrainedModel cmd_train(const RunConfig& config, const std::filesystem::path& out_dir);

// Writes grid.csv and selection.csv. With a model, it stands in for the
// trained MoE instead of training one.
GridResult cmd_eval(const RunConfig& config, const std::optional<std::filesystem::path>& model,
                    const std::filesystem::path& out_dir);

/// One row per parsed flow, in input order:
/// flow_id,predicted_label,chosen_expert,gate_prob_avg,gate_prob_deg
/// Returns the row count.
std::size_t cmd_detect(const std::filesystem::path& model, const std::filesystem::path& flows,
                       const std::filesystem::path& out_csv);

struct BenchResult {
    ThroughputReport full;
    std::optional<ScalingProbe> scaling;

    // median construction-time ratio, full size over half size
    double construction_ratio() const;
    std::string to_text() const;
};

// Writes bench.txt.
BenchResult cmd_bench(const RunConfig& config, const std::optional<std::filesystem::path>& model,
                      const std::filesystem::path& out_dir);

/// Entry point. Returns the exit status; failures print one line
/// "error: <kind>: <message>" to err.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace flowmoe
