#pragma once

#include "flowmoe/augment.hpp"
#include "flowmoe/graph.hpp"
#include "flowmoe/ingest.hpp"
#include "flowmoe/nn.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace flowmoe {

inline constexpr std::size_t kDefaultInferenceBatch = 8192;

// Hidden layout shared by experts, gate and the weighted head.
struct ModelShape {
    std::vector<std::size_t> hidden{64, 64};
    nn::Activation activation = nn::Activation::relu;

    void validate() const;
    // in, hidden..., 2
    std::vector<std::size_t> dims(std::size_t input_dim) const;
};

struct ExpertBundle {
    nn::MlpModel avg_expert;  // input 3 d
    nn::MlpModel deg_expert;  // input d + 2
    NormStats norm;

    std::size_t feature_dim() const { return norm.dim(); }
    // Throws DimensionError unless both experts match the embedding dims.
    void validate() const;

    bool operator==(const ExpertBundle&) const = default;
};

ExpertBundle init_experts(const NormStats& norm, const ModelShape& shape, std::uint64_t seed);

// Per-edge expert outputs. Losses are empty until expert_losses is called.
struct ExpertOutputs {
    nn::Matrix p_avg;
    nn::Matrix p_deg;
    std::vector<double> loss_avg;
    std::vector<double> loss_deg;

    std::size_t size() const { return static_cast<std::size_t>(p_avg.rows()); }
    bool has_losses() const { return loss_avg.size() == size() && !loss_avg.empty(); }
};

// Class with the larger probability; ties go to class 0.
inline int argmax2(double p0, double p1) { return p1 > p0 ? 1 : 0; }

/// Runs one model over all edge embeddings of `kind`, batch rows at a time.
/// Batches are independent, so results do not depend on the batch size.
nn::Matrix predict_edges(const nn::MlpModel& model, const TrafficGraph& graph, FeatureKind kind,
                         std::size_t batch = kDefaultInferenceBatch);

ExpertOutputs expert_predict(const ExpertBundle& bundle, const TrafficGraph& graph,
                             std::size_t batch = kDefaultInferenceBatch);

// Fills per-edge cross-entropy losses. Labels must cover every edge.
void expert_losses(ExpertOutputs& outputs, std::span<const int> labels);

// Mean over edges of (loss_avg + loss_deg). Throws on an empty edge set.
double expert_training_loss(std::span<const double> loss_avg, std::span<const double> loss_deg);

// Per-class weights n / (2 n_c) so both classes carry equal total weight.
std::vector<double> inverse_frequency_weights(std::span<const int> labels);

// One classifier trained from edge embeddings of one feature kind.
struct ClassifierSlot {
    nn::MlpModel* model = nullptr;
    FeatureKind kind = FeatureKind::avg;
};

struct EpochRecord {
    int stage = 1;
    int epoch = 0;
    double loss = 0.0;
    // Fraction of edges with gate signal (stage 2) or 0.
    double masked_fraction = 0.0;
    std::size_t skipped_graphs = 0;
};

struct ClassifierTrainOptions {
    nn::TrainConfig train;
    AugmentParams augment;  // seed is ignored; a fresh one is derived per (epoch, graph)
    bool class_weighting = false;
    int stage = 1;
};

/// Trains the slots jointly from the sum of their mean cross-entropies. Each
/// slot has its own optimizer state, so a slot's update depends only on its
/// own loss term. Per epoch every graph is augmented with a seed derived from
/// (train.seed, epoch, graph index); empty results are skipped. Graphs with
/// more than train.full_batch_edges edges are stepped in shuffled batches.
std::vector<EpochRecord> train_classifiers(std::span<const TrafficGraph> graphs, std::span<ClassifierSlot> slots,
                                           const ClassifierTrainOptions& options);

struct ExpertTrainResult {
    ExpertBundle bundle;
    std::vector<EpochRecord> history;
};

ExpertTrainResult train_experts(std::span<const TrafficGraph> graphs, ExpertBundle initial,
                                const ClassifierTrainOptions& options);

// Row order for one graph: empty when it fits one full batch, otherwise a
// seeded shuffle cut into batch_size chunks.
std::vector<std::vector<std::uint32_t>> plan_batches(std::size_t rows, const nn::TrainConfig& train,
                                                     std::uint64_t seed);
nn::Matrix gather_rows(const nn::Matrix& x, std::span<const std::uint32_t> rows);

// Seed for the augmentation of one graph in one epoch.
std::uint64_t augmentation_seed(std::uint64_t base, int stage, int epoch, std::size_t graph_index);
std::uint64_t shuffle_seed(std::uint64_t base, int stage, int epoch, std::size_t graph_index);

}  // namespace flowmoe
