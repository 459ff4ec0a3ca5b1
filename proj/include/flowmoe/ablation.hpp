#pragma once

#include "flowmoe/augment.hpp"
#include "flowmoe/container.hpp"
#include "flowmoe/metrics.hpp"
#include "flowmoe/training.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace flowmoe {

// none, flow-statistic drift, graph-scale drift, both.
enum class DriftKind { none, statistic, scale, both };

std::string to_string(DriftKind kind);

struct DriftScenario {
    DriftKind kind = DriftKind::none;
    AugmentParams params;  // identity for none
};

// Test-time drift strengths. statistic: (alpha, beta, gamma = keep all);
// scale: (0, 0, scale_gamma); both combines them.
struct DriftSettings {
    double stat_alpha = 1.5;
    double stat_beta = 1.0;
    double scale_gamma = 0.1;
    KeepMode keep_mode = KeepMode::literal;
    // Each test graph is drifted this many times with different seeds.
    std::size_t repeats = 1;
    std::uint64_t seed = 99;

    void validate() const;
};

std::vector<DriftScenario> drift_scenarios(const DriftSettings& settings);

// Drifted copies of the test graphs; the none scenario returns them unchanged.
std::vector<TrafficGraph> apply_scenario(std::span<const TrafficGraph> test, const DriftScenario& scenario,
                                         const DriftSettings& settings);

enum class Variant {
    avg,
    deg,
    avg_aug,
    deg_aug,
    avg_deg,
    avg_deg_aug,
    moe_no_aug,
    moe,
    moe_no_readout,
    moe_weighted,
    moe_one_stage,
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);  // ConfigError on unknown names
const std::vector<Variant>& all_variants();

struct GridCell {
    std::string variant;
    std::string scenario;  // scenario name or "overall"
    MetricsReport metrics;
};

struct SelectionRow {
    std::string scenario;
    std::string expert;
    double fraction = 0.0;
    std::size_t masked = 0;
};

struct GridResult {
    std::vector<GridCell> cells;
    std::vector<SelectionRow> selection;  // full MoE, masked edges only

    const MetricsReport& at(const std::string& variant, const std::string& scenario) const;
};

struct AblationConfig {
    HyperConfig hyper;
    DriftSettings drift;
    std::vector<Variant> variants = all_variants();
    // Trained model reused as the full MoE (and its augmented experts).
    std::optional<ModelContainer> preloaded;
};

/// Trains whatever the requested variants need and evaluates each on every
/// drift scenario, plus an overall row (unweighted mean over scenarios).
GridResult run_ablation_grid(const PreparedData& data, const AblationConfig& config);

// variant,scenario,acc,f1,acc_gate,n_masked
void write_grid_csv(std::ostream& out, const GridResult& grid);
void write_grid_csv(const std::filesystem::path& path, const GridResult& grid);
// scenario,expert,fraction
void write_selection_csv(const std::filesystem::path& path, const GridResult& grid);

}  // namespace flowmoe
