#pragma once

#include "flowmoe/experts.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace flowmoe {

inline constexpr std::uint8_t kAvgExpert = 0;
inline constexpr std::uint8_t kDegExpert = 1;

std::string expert_name(std::uint8_t expert);

struct GateModel {
    nn::MlpModel mlp;
    // false drops the graph readouts from the input (per-flow only).
    bool use_readout = true;

    bool operator==(const GateModel&) const = default;
};

// dim(e_avg) + dim(e_deg), plus dim(g_avg) + dim(g_deg) with readouts.
std::size_t gate_input_dim(std::size_t feature_dim, bool use_readout);

GateModel init_gate(std::size_t feature_dim, const ModelShape& shape, bool use_readout, std::uint64_t seed);

/// e_avg | e_deg | g_avg | g_deg for one edge (the readout half is omitted
/// when use_readout is false).
std::vector<double> gate_input(const TrafficGraph& graph, std::size_t edge, const GraphReadout& readout,
                               bool use_readout = true);

// Gate input rows for edges [begin, end).
nn::Matrix gate_inputs(const TrafficGraph& graph, const GraphReadout& readout, bool use_readout, std::size_t begin,
                       std::size_t end);
nn::Matrix gate_inputs(const TrafficGraph& graph, const GraphReadout& readout, bool use_readout,
                       std::span<const std::uint32_t> edges);

struct GateSupervision {
    std::vector<std::uint8_t> gate_label;  // 0 = avg, 1 = deg
    std::vector<std::uint8_t> mask;        // 1 where the experts' predicted classes differ

    std::size_t size() const { return mask.size(); }
    std::size_t masked_count() const;
    std::vector<std::uint32_t> masked_edges() const;
};

/// gate_label = argmin(loss_avg, loss_deg), ties to avg; mask = 1 iff the
/// experts' argmax classes differ. Losses are computed from `labels` when the
/// outputs do not carry them yet.
GateSupervision gating_labels(const ExpertOutputs& outputs, std::span<const int> labels);

struct GateLoss {
    double loss = 0.0;
    bool no_signal = false;
};

// Masked mean cross-entropy of the gate. An empty mask gives 0 with no_signal.
GateLoss gate_loss(const nn::Matrix& gate_probs, const GateSupervision& supervision);

// Row-wise expert choice: argmax of the gate probabilities, ties to avg.
std::vector<std::uint8_t> choose_experts(const nn::Matrix& gate_probs);

nn::Matrix gate_predict(const GateModel& gate, const TrafficGraph& graph, std::size_t batch = kDefaultInferenceBatch);

struct MoePrediction {
    std::vector<int> predicted;
    std::vector<std::uint8_t> chosen;
    nn::Matrix gate_probs;
    ExpertOutputs experts;
};

/// Hard selection: each edge takes the class predicted by the expert with the
/// larger gate probability. Embeddings are built once per batch and shared by
/// the gate and both experts.
MoePrediction moe_predict(const ExpertBundle& bundle, const GateModel& gate, const TrafficGraph& graph,
                          std::size_t batch = kDefaultInferenceBatch);

struct GateTrainOptions {
    nn::TrainConfig train;
    AugmentParams augment;  // seed ignored, derived per (epoch, graph)
    int stage = 2;
};

struct GateTrainResult {
    GateModel gate;
    std::vector<EpochRecord> history;
    std::vector<std::string> warnings;
};

/// Trains the gate on masked edges only, experts frozen. Expert outputs and
/// supervision are recomputed on every augmented graph.
GateTrainResult train_gate(std::span<const TrafficGraph> graphs, const ExpertBundle& experts, GateModel initial,
                           const GateTrainOptions& options);

// Weighted summation variant: a head classifies the gate-weighted mix of the
// experts' penultimate activations.
struct WeightedMoe {
    GateModel gate;
    nn::MlpModel head;

    bool operator==(const WeightedMoe&) const = default;
};

WeightedMoe init_weighted(const ExpertBundle& bundle, const ModelShape& shape, bool use_readout, std::uint64_t seed);

// Row i: w_avg[i] * z_avg[i] + w_deg[i] * z_deg[i].
nn::Matrix mix_latents(const nn::Matrix& z_avg, const nn::Matrix& z_deg, const nn::Matrix& weights);

struct WeightedPrediction {
    std::vector<int> predicted;
    std::vector<std::uint8_t> chosen;  // argmax of the weights, for gate alignment
    nn::Matrix gate_probs;
};

WeightedPrediction moe_predict_weighted(const ExpertBundle& bundle, const WeightedMoe& model,
                                        const TrafficGraph& graph, std::size_t batch = kDefaultInferenceBatch);

struct WeightedLossGrad {
    double loss = 0.0;
    nn::Gradients head;
    nn::Gradients gate;  // through the softmax weights into the gate
};

// Head cross-entropy on rows of gate inputs `x` and its gradients.
WeightedLossGrad weighted_loss_and_grad(const ExpertBundle& experts, const WeightedMoe& model, const nn::Matrix& x,
                                        std::span<const int> labels);

struct WeightedTrainResult {
    WeightedMoe model;
    std::vector<EpochRecord> history;
};

/// Trains head and gate end to end on the head's cross-entropy over every
/// edge; experts stay frozen.
WeightedTrainResult train_weighted(std::span<const TrafficGraph> graphs, const ExpertBundle& experts,
                                   WeightedMoe initial, const GateTrainOptions& options);

}  // namespace flowmoe
