#include "flowmoe/experts.hpp"

#include "flowmoe/error.hpp"
#include "flowmoe/parallel.hpp"
#include "flowmoe/random.hpp"

#include <algorithm>
#include <numeric>

namespace flowmoe {

void ModelShape::validate() const {
    for (auto w : hidden)
        if (w < 1) throw ConfigError("hidden layer widths must be >= 1");
}

std::vector<std::size_t> ModelShape::dims(std::size_t input_dim) const {
    std::vector<std::size_t> d{input_dim};
    d.insert(d.end(), hidden.begin(), hidden.end());
    d.push_back(2);
    return d;
}

void ExpertBundle::validate() const {
    const std::size_t d = feature_dim();
    if (avg_expert.layer_dims.empty() || deg_expert.layer_dims.empty())
        throw DimensionError("expert bundle is missing a model");
    if (avg_expert.input_dim() != embedding_dim(FeatureKind::avg, d))
        throw DimensionError("avg expert expects " + std::to_string(avg_expert.input_dim()) + " inputs, embeddings have " +
                             std::to_string(embedding_dim(FeatureKind::avg, d)));
    if (deg_expert.input_dim() != embedding_dim(FeatureKind::deg, d))
        throw DimensionError("deg expert expects " + std::to_string(deg_expert.input_dim()) + " inputs, embeddings have " +
                             std::to_string(embedding_dim(FeatureKind::deg, d)));
    if (avg_expert.output_dim() != 2 || deg_expert.output_dim() != 2)
        throw DimensionError("experts must have two outputs");
}

ExpertBundle init_experts(const NormStats& norm, const ModelShape& shape, std::uint64_t seed) {
    shape.validate();
    ExpertBundle b;
    b.norm = norm;
    const std::size_t d = norm.dim();
    b.avg_expert = nn::mlp_init(shape.dims(embedding_dim(FeatureKind::avg, d)), derive_seed(seed, {1}), shape.activation);
    b.deg_expert = nn::mlp_init(shape.dims(embedding_dim(FeatureKind::deg, d)), derive_seed(seed, {2}), shape.activation);
    return b;
}

nn::Matrix predict_edges(const nn::MlpModel& model, const TrafficGraph& graph, FeatureKind kind, std::size_t batch) {
    if (batch < 1) throw ConfigError("inference batch must be >= 1");
    if (model.input_dim() != embedding_dim(kind, graph.feature_dim))
        throw DimensionError("model expects " + std::to_string(model.input_dim()) + " inputs, " + to_string(kind) +
                             " embeddings have " + std::to_string(embedding_dim(kind, graph.feature_dim)));
    const std::size_t m = graph.edge_count();
    nn::Matrix out(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(model.output_dim()));
    const std::size_t chunks = (m + batch - 1) / batch;
    parallel_for(chunks, [&](std::size_t c) {
        const std::size_t begin = c * batch, end = std::min(m, begin + batch);
        const nn::Matrix x = embed_edges(graph, kind, begin, end);
        out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) = nn::mlp_forward(model, x);
    });
    return out;
}

ExpertOutputs expert_predict(const ExpertBundle& bundle, const TrafficGraph& graph, std::size_t batch) {
    bundle.validate();
    if (graph.feature_dim != bundle.feature_dim() && !graph.empty())
        throw DimensionError("graph has " + std::to_string(graph.feature_dim) + " features, bundle expects " +
                             std::to_string(bundle.feature_dim()));
    ExpertOutputs out;
    out.p_avg = predict_edges(bundle.avg_expert, graph, FeatureKind::avg, batch);
    out.p_deg = predict_edges(bundle.deg_expert, graph, FeatureKind::deg, batch);
    return out;
}

void expert_losses(ExpertOutputs& outputs, std::span<const int> labels) {
    const std::size_t m = outputs.size();
    if (labels.size() != m) throw DimensionError("need one label per edge");
    outputs.loss_avg.resize(m);
    outputs.loss_deg.resize(m);
    for (std::size_t e = 0; e < m; ++e) {
        const auto i = static_cast<Eigen::Index>(e);
        const double pa[2] = {outputs.p_avg(i, 0), outputs.p_avg(i, 1)};
        const double pd[2] = {outputs.p_deg(i, 0), outputs.p_deg(i, 1)};
        outputs.loss_avg[e] = nn::cross_entropy(pa, labels[e]);
        outputs.loss_deg[e] = nn::cross_entropy(pd, labels[e]);
    }
}

double expert_training_loss(std::span<const double> loss_avg, std::span<const double> loss_deg) {
    if (loss_avg.size() != loss_deg.size()) throw DimensionError("loss vectors differ in length");
    if (loss_avg.empty()) throw TrainingError("training loss of an empty edge set");
    double sum = 0.0;
    for (std::size_t e = 0; e < loss_avg.size(); ++e) sum += loss_avg[e] + loss_deg[e];
    return sum / static_cast<double>(loss_avg.size());
}

std::vector<double> inverse_frequency_weights(std::span<const int> labels) {
    double count[2] = {0.0, 0.0};
    for (int y : labels) {
        if (y != 0 && y != 1) throw DimensionError("labels must be 0 or 1");
        count[y] += 1.0;
    }
    const double n = static_cast<double>(labels.size());
    std::vector<double> w(labels.size());
    for (std::size_t i = 0; i < labels.size(); ++i) w[i] = n / (2.0 * count[labels[i]]);
    return w;
}

std::uint64_t shuffle_seed(std::uint64_t base, int stage, int epoch, std::size_t graph_index) {
    return derive_seed(base, {0x73687566, static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(graph_index)});
}

std::uint64_t augmentation_seed(std::uint64_t base, int stage, int epoch, std::size_t graph_index) {
    return derive_seed(base, {0x617567, static_cast<std::uint64_t>(stage), static_cast<std::uint64_t>(epoch),
                              static_cast<std::uint64_t>(graph_index)});
}

nn::Matrix gather_rows(const nn::Matrix& x, std::span<const std::uint32_t> rows) {
    nn::Matrix out(static_cast<Eigen::Index>(rows.size()), x.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = x.row(rows[i]);
    return out;
}

std::vector<std::vector<std::uint32_t>> plan_batches(std::size_t m, const nn::TrainConfig& train, std::uint64_t seed) {
    std::vector<std::vector<std::uint32_t>> batches;
    if (m <= train.full_batch_edges) return batches;
    std::vector<std::uint32_t> order(m);
    std::iota(order.begin(), order.end(), 0u);
    Rng rng(seed);
    for (std::size_t i = m; i > 1; --i) std::swap(order[i - 1], order[rng.index(i)]);
    for (std::size_t b = 0; b < m; b += train.batch_size)
        batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(m, b + train.batch_size)));
    return batches;
}

std::vector<EpochRecord> train_classifiers(std::span<const TrafficGraph> graphs, std::span<ClassifierSlot> slots,
                                           const ClassifierTrainOptions& options) {
    options.train.validate();
    options.augment.validate();
    if (slots.empty()) throw TrainingError("nothing to train");
    for (const auto& s : slots)
        if (s.model == nullptr) throw TrainingError("classifier slot has no model");
    if (graphs.empty() && options.train.epochs > 0) throw TrainingError("empty training set");

    std::vector<nn::Optimizer> optimizers;
    for (std::size_t k = 0; k < slots.size(); ++k) optimizers.emplace_back(options.train);

    std::vector<EpochRecord> history;
    for (int epoch = 0; epoch < options.train.epochs; ++epoch) {
        EpochRecord rec;
        rec.stage = options.stage;
        rec.epoch = epoch;
        double loss_sum = 0.0;
        std::size_t steps = 0;
        for (std::size_t gi = 0; gi < graphs.size(); ++gi) {
            const TrafficGraph* g = &graphs[gi];
            TrafficGraph augmented;
            if (!options.augment.is_identity()) {
                AugmentParams p = options.augment;
                p.seed = augmentation_seed(options.train.seed, options.stage, epoch, gi);
                augmented = augment(*g, p);
                g = &augmented;
            }
            if (g->empty()) {
                ++rec.skipped_graphs;
                continue;
            }
            const std::vector<int> labels = g->edge_labels();
            std::vector<nn::Matrix> inputs;
            for (const auto& s : slots) inputs.push_back(embed_all(*g, s.kind));

            const std::size_t m = g->edge_count();
            const auto batches = plan_batches(m, options.train, shuffle_seed(options.train.seed, options.stage, epoch, gi));

            auto step = [&](std::span<const int> y, auto&& input_of) {
                const std::vector<double> w = options.class_weighting ? inverse_frequency_weights(y) : std::vector<double>{};
                double total = 0.0;
                for (std::size_t k = 0; k < slots.size(); ++k) {
                    auto lg = nn::loss_and_grad(*slots[k].model, input_of(k), y, w);
                    optimizers[k].step(*slots[k].model, lg.grads);
                    total += lg.loss;
                }
                loss_sum += total;
                ++steps;
            };

            if (batches.empty()) {
                step(labels, [&](std::size_t k) -> const nn::Matrix& { return inputs[k]; });
            } else {
                for (const auto& rows : batches) {
                    std::vector<int> y(rows.size());
                    for (std::size_t i = 0; i < rows.size(); ++i) y[i] = labels[rows[i]];
                    std::vector<nn::Matrix> xb;
                    for (const auto& x : inputs) xb.push_back(gather_rows(x, rows));
                    step(y, [&](std::size_t k) -> const nn::Matrix& { return xb[k]; });
                }
            }
        }
        rec.loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
        history.push_back(rec);
    }
    return history;
}

ExpertTrainResult train_experts(std::span<const TrafficGraph> graphs, ExpertBundle initial,
                                const ClassifierTrainOptions& options) {
    initial.validate();
    ExpertTrainResult r{std::move(initial), {}};
    ClassifierSlot slots[2] = {{&r.bundle.avg_expert, FeatureKind::avg}, {&r.bundle.deg_expert, FeatureKind::deg}};
    r.history = train_classifiers(graphs, slots, options);
    return r;
}

}  // namespace flowmoe
