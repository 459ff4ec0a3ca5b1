#pragma once

#include "flowmoe/augment.hpp"
#include "flowmoe/container.hpp"
#include "flowmoe/experts.hpp"
#include "flowmoe/gate.hpp"
#include "flowmoe/ingest.hpp"

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowmoe {

// Normalized training and test windows sharing training-only statistics.
struct PreparedData {
    std::vector<TrafficGraph> train;
    std::vector<TrafficGraph> test;
    NormStats norm;

    std::size_t feature_dim() const { return norm.dim(); }
};

/// Fits edge-feature stats on every training record and degree stats on the
/// training graphs, then builds and normalizes all windows.
PreparedData prepare_windows(std::span<const std::vector<FlowRecord>> train_windows,
                             std::span<const std::vector<FlowRecord>> test_windows);
PreparedData prepare_data(std::span<const FlowRecord> train, std::span<const FlowRecord> test, double window_seconds);

// Graphs of arbitrary records under existing stats (detection path).
std::vector<TrafficGraph> build_windows(std::span<const FlowRecord> records, double window_seconds,
                                        const NormStats& norm);

struct HyperConfig {
    ModelShape shape;
    nn::TrainConfig stage1;  // seed fields are overwritten from `seed`
    nn::TrainConfig stage2;
    AugmentParams aug1{0.2, 0.5, 0.5};
    AugmentParams aug2{0.0, 1.0, 1.0};
    bool gate_readout = true;
    bool class_weighting = false;
    std::uint64_t seed = 1;

    HyperConfig();
    void validate() const;
    nn::TrainConfig stage_config(int stage) const;
};

struct TrainingReport {
    std::vector<EpochRecord> epochs;
    double stage1_seconds = 0.0;
    double stage2_seconds = 0.0;
    std::vector<std::string> warnings;

    // stage,epoch,loss,masked_fraction,skipped_graphs
    void write_epoch_csv(const std::filesystem::path& path) const;
    // key = value summary
    std::string summary() const;
};

struct TrainedModel {
    ModelContainer container;
    TrainingReport report;
};

ExpertTrainResult run_stage1(const PreparedData& data, const HyperConfig& hyper);
GateTrainResult run_stage2(const PreparedData& data, const HyperConfig& hyper, const ExpertBundle& experts);

/// Stage 1 trains the experts under aug1, stage 2 the gate under aug2 with
/// the experts frozen. `resume` skips stage 1 and uses the given experts.
/// `checkpoint` (if set) receives the container after each stage.
TrainedModel run_two_stage(const PreparedData& data, const HyperConfig& hyper,
                           const std::optional<ExpertBundle>& resume = std::nullopt,
                           const std::function<void(const ModelContainer&, int stage)>& checkpoint = {});

// Observer for joint training: called with the supervision used for each
// gate step.
using SupervisionHook = std::function<void(int epoch, std::size_t graph, const GateSupervision&)>;

/// Experts and gate stepped together for stage1.epochs epochs. For each
/// graph, gate labels are recomputed from the current experts on an aug2
/// view, then the experts step on L_cls over an aug1 view and the gate steps
/// on L_gate. The parameter sets are disjoint and the gate labels are
/// constants, so this is one step on L_cls + L_gate.
TrainedModel run_one_stage(const PreparedData& data, const HyperConfig& hyper, const SupervisionHook& hook = {});

}  // namespace flowmoe
