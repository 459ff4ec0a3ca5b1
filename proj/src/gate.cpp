#include "flowmoe/gate.hpp"

#include "flowmoe/error.hpp"
#include "flowmoe/parallel.hpp"
#include "flowmoe/random.hpp"

#include <algorithm>

namespace flowmoe {

std::string expert_name(std::uint8_t expert) { return expert == kAvgExpert ? "avg" : "deg"; }

std::size_t gate_input_dim(std::size_t d, bool use_readout) {
    const std::size_t per_flow = embedding_dim(FeatureKind::avg, d) + embedding_dim(FeatureKind::deg, d);
    return use_readout ? 2 * per_flow : per_flow;
}

GateModel init_gate(std::size_t feature_dim, const ModelShape& shape, bool use_readout, std::uint64_t seed) {
    shape.validate();
    GateModel g;
    g.use_readout = use_readout;
    g.mlp = nn::mlp_init(shape.dims(gate_input_dim(feature_dim, use_readout)), derive_seed(seed, {3}), shape.activation);
    return g;
}

namespace {

void check_readout(const TrafficGraph& g, const GraphReadout& r) {
    if (r.g_avg.size() != embedding_dim(FeatureKind::avg, g.feature_dim) ||
        r.g_deg.size() != embedding_dim(FeatureKind::deg, g.feature_dim))
        throw DimensionError("readout does not match the graph's feature dimension");
}

void check_gate(const GateModel& gate, std::size_t feature_dim) {
    if (gate.mlp.input_dim() != gate_input_dim(feature_dim, gate.use_readout))
        throw DimensionError("gate expects " + std::to_string(gate.mlp.input_dim()) + " inputs, graph gives " +
                             std::to_string(gate_input_dim(feature_dim, gate.use_readout)));
    if (gate.mlp.output_dim() != 2) throw DimensionError("gate must have two outputs");
}

}  // namespace

nn::Matrix gate_inputs(const TrafficGraph& g, const GraphReadout& r, bool use_readout, std::size_t begin,
                       std::size_t end) {
    if (begin > end || end > g.edge_count()) throw DimensionError("edge range out of bounds");
    if (use_readout) check_readout(g, r);
    const std::size_t d = g.feature_dim;
    const auto avg_dim = static_cast<Eigen::Index>(embedding_dim(FeatureKind::avg, d));
    const auto deg_dim = static_cast<Eigen::Index>(embedding_dim(FeatureKind::deg, d));
    nn::Matrix x(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(gate_input_dim(d, use_readout)));
    embed_edges_into(g, FeatureKind::avg, begin, end, x, 0);
    embed_edges_into(g, FeatureKind::deg, begin, end, x, avg_dim);
    if (use_readout) {
        const Eigen::Map<const Eigen::RowVectorXd> ga(r.g_avg.data(), avg_dim);
        const Eigen::Map<const Eigen::RowVectorXd> gd(r.g_deg.data(), deg_dim);
        x.middleCols(avg_dim + deg_dim, avg_dim).rowwise() = ga;
        x.middleCols(2 * avg_dim + deg_dim, deg_dim).rowwise() = gd;
    }
    return x;
}

nn::Matrix gate_inputs(const TrafficGraph& g, const GraphReadout& r, bool use_readout,
                       std::span<const std::uint32_t> edges) {
    return gather_rows(gate_inputs(g, r, use_readout, 0, g.edge_count()), edges);
}

std::vector<double> gate_input(const TrafficGraph& g, std::size_t edge, const GraphReadout& r, bool use_readout) {
    if (edge >= g.edge_count()) throw DimensionError("edge index " + std::to_string(edge) + " out of range");
    const nn::Matrix x = gate_inputs(g, r, use_readout, edge, edge + 1);
    return {x.data(), x.data() + x.cols()};
}

std::size_t GateSupervision::masked_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

std::vector<std::uint32_t> GateSupervision::masked_edges() const {
    std::vector<std::uint32_t> out;
    for (std::size_t e = 0; e < mask.size(); ++e)
        if (mask[e]) out.push_back(static_cast<std::uint32_t>(e));
    return out;
}

GateSupervision gating_labels(const ExpertOutputs& outputs, std::span<const int> labels) {
    const std::size_t m = outputs.size();
    if (labels.size() != m) throw DimensionError("need one label per edge");
    const ExpertOutputs* src = &outputs;
    ExpertOutputs with_losses;
    if (!outputs.has_losses() && m > 0) {
        with_losses = outputs;
        expert_losses(with_losses, labels);
        src = &with_losses;
    }
    GateSupervision s;
    s.gate_label.resize(m);
    s.mask.resize(m);
    for (std::size_t e = 0; e < m; ++e) {
        const auto i = static_cast<Eigen::Index>(e);
        s.gate_label[e] = src->loss_deg[e] < src->loss_avg[e] ? kDegExpert : kAvgExpert;
        const int ya = argmax2(outputs.p_avg(i, 0), outputs.p_avg(i, 1));
        const int yd = argmax2(outputs.p_deg(i, 0), outputs.p_deg(i, 1));
        s.mask[e] = ya != yd ? 1 : 0;
    }
    return s;
}

GateLoss gate_loss(const nn::Matrix& p, const GateSupervision& s) {
    if (static_cast<std::size_t>(p.rows()) != s.size()) throw DimensionError("gate output and supervision differ in length");
    GateLoss out;
    double sum = 0.0, count = 0.0;
    for (std::size_t e = 0; e < s.size(); ++e) {
        if (!s.mask[e]) continue;
        const auto i = static_cast<Eigen::Index>(e);
        const double row[2] = {p(i, 0), p(i, 1)};
        sum += nn::cross_entropy(row, s.gate_label[e]);
        count += 1.0;
    }
    if (count == 0.0) {
        out.no_signal = true;
        return out;
    }
    out.loss = sum / count;
    return out;
}

std::vector<std::uint8_t> choose_experts(const nn::Matrix& p) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        out[static_cast<std::size_t>(i)] = static_cast<std::uint8_t>(argmax2(p(i, 0), p(i, 1)));
    return out;
}

nn::Matrix gate_predict(const GateModel& gate, const TrafficGraph& g, std::size_t batch) {
    if (batch < 1) throw ConfigError("inference batch must be >= 1");
    check_gate(gate, g.feature_dim);
    const GraphReadout r = gate.use_readout ? compute_readout(g) : GraphReadout{};
    const std::size_t m = g.edge_count();
    nn::Matrix out(static_cast<Eigen::Index>(m), 2);
    parallel_for((m + batch - 1) / batch, [&](std::size_t c) {
        const std::size_t begin = c * batch, end = std::min(m, begin + batch);
        out.middleRows(static_cast<Eigen::Index>(begin), static_cast<Eigen::Index>(end - begin)) =
            nn::mlp_forward(gate.mlp, gate_inputs(g, r, gate.use_readout, begin, end));
    });
    return out;
}

MoePrediction moe_predict(const ExpertBundle& bundle, const GateModel& gate, const TrafficGraph& g, std::size_t batch) {
    if (batch < 1) throw ConfigError("inference batch must be >= 1");
    bundle.validate();
    const std::size_t d = bundle.feature_dim();
    if (!g.empty() && g.feature_dim != d)
        throw DimensionError("graph has " + std::to_string(g.feature_dim) + " features, bundle expects " + std::to_string(d));
    check_gate(gate, d);

    const std::size_t m = g.edge_count();
    const auto rows = static_cast<Eigen::Index>(m);
    MoePrediction out;
    out.experts.p_avg.resize(rows, 2);
    out.experts.p_deg.resize(rows, 2);
    out.gate_probs.resize(rows, 2);
    out.predicted.resize(m);
    out.chosen.resize(m);
    if (m == 0) return out;

    const GraphReadout r = gate.use_readout ? compute_readout(g) : GraphReadout{};
    const auto avg_dim = static_cast<Eigen::Index>(embedding_dim(FeatureKind::avg, d));
    const auto deg_dim = static_cast<Eigen::Index>(embedding_dim(FeatureKind::deg, d));
    parallel_for((m + batch - 1) / batch, [&](std::size_t c) {
        const std::size_t begin = c * batch, end = std::min(m, begin + batch);
        const auto b0 = static_cast<Eigen::Index>(begin), n = static_cast<Eigen::Index>(end - begin);
        const nn::Matrix x = gate_inputs(g, r, gate.use_readout, begin, end);
        out.experts.p_avg.middleRows(b0, n) = nn::mlp_forward(bundle.avg_expert, x.leftCols(avg_dim));
        out.experts.p_deg.middleRows(b0, n) = nn::mlp_forward(bundle.deg_expert, x.middleCols(avg_dim, deg_dim));
        out.gate_probs.middleRows(b0, n) = nn::mlp_forward(gate.mlp, x);
        for (std::size_t e = begin; e < end; ++e) {
            const auto i = static_cast<Eigen::Index>(e);
            const auto k = static_cast<std::uint8_t>(argmax2(out.gate_probs(i, 0), out.gate_probs(i, 1)));
            const nn::Matrix& p = k == kAvgExpert ? out.experts.p_avg : out.experts.p_deg;
            out.chosen[e] = k;
            out.predicted[e] = argmax2(p(i, 0), p(i, 1));
        }
    });
    return out;
}

GateTrainResult train_gate(std::span<const TrafficGraph> graphs, const ExpertBundle& experts, GateModel initial,
                           const GateTrainOptions& options) {
    options.train.validate();
    options.augment.validate();
    experts.validate();
    check_gate(initial, experts.feature_dim());
    if (graphs.empty() && options.train.epochs > 0) throw TrainingError("empty training set");

    GateTrainResult result{std::move(initial), {}, {}};
    nn::Optimizer opt(options.train);
    for (int epoch = 0; epoch < options.train.epochs; ++epoch) {
        EpochRecord rec;
        rec.stage = options.stage;
        rec.epoch = epoch;
        double loss_sum = 0.0, masked = 0.0, edges = 0.0;
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
            ExpertOutputs eo = expert_predict(experts, *g);
            expert_losses(eo, labels);
            const GateSupervision sup = gating_labels(eo, labels);
            const auto rows = sup.masked_edges();
            edges += static_cast<double>(g->edge_count());
            masked += static_cast<double>(rows.size());
            if (rows.empty()) continue;

            const GraphReadout r = result.gate.use_readout ? compute_readout(*g) : GraphReadout{};
            const nn::Matrix x = gate_inputs(*g, r, result.gate.use_readout, rows);
            std::vector<int> y(rows.size());
            for (std::size_t i = 0; i < rows.size(); ++i) y[i] = sup.gate_label[rows[i]];

            const auto batches = plan_batches(rows.size(), options.train, shuffle_seed(options.train.seed, options.stage, epoch, gi));
            if (batches.empty()) {
                auto lg = nn::loss_and_grad(result.gate.mlp, x, y);
                opt.step(result.gate.mlp, lg.grads);
                loss_sum += lg.loss;
                ++steps;
            } else {
                for (const auto& b : batches) {
                    std::vector<int> yb(b.size());
                    for (std::size_t i = 0; i < b.size(); ++i) yb[i] = y[b[i]];
                    auto lg = nn::loss_and_grad(result.gate.mlp, gather_rows(x, b), yb);
                    opt.step(result.gate.mlp, lg.grads);
                    loss_sum += lg.loss;
                    ++steps;
                }
            }
        }
        rec.loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
        rec.masked_fraction = edges > 0.0 ? masked / edges : 0.0;
        if (steps == 0)
            result.warnings.push_back("epoch " + std::to_string(epoch) + ": no masked edges, gate not updated");
        result.history.push_back(rec);
    }
    return result;
}

WeightedMoe init_weighted(const ExpertBundle& bundle, const ModelShape& shape, bool use_readout, std::uint64_t seed) {
    bundle.validate();
    if (bundle.avg_expert.latent_dim() != bundle.deg_expert.latent_dim())
        throw DimensionError("weighted summation needs experts with equal latent widths");
    WeightedMoe w;
    w.gate = init_gate(bundle.feature_dim(), shape, use_readout, seed);
    w.head = nn::mlp_init(shape.dims(bundle.avg_expert.latent_dim()), derive_seed(seed, {4}), shape.activation);
    return w;
}

nn::Matrix mix_latents(const nn::Matrix& z_avg, const nn::Matrix& z_deg, const nn::Matrix& w) {
    if (z_avg.rows() != z_deg.rows() || z_avg.cols() != z_deg.cols())
        throw DimensionError("expert latents differ in shape");
    if (w.rows() != z_avg.rows() || w.cols() != 2) throw DimensionError("need one weight pair per row");
    return w.col(0).asDiagonal() * z_avg + w.col(1).asDiagonal() * z_deg;
}

namespace {

void check_weighted(const ExpertBundle& bundle, const WeightedMoe& model) {
    bundle.validate();
    check_gate(model.gate, bundle.feature_dim());
    const std::size_t latent = bundle.avg_expert.latent_dim();
    if (bundle.deg_expert.latent_dim() != latent || model.head.input_dim() != latent)
        throw DimensionError("latent widths of experts and head must agree");
}

}  // namespace

WeightedPrediction moe_predict_weighted(const ExpertBundle& bundle, const WeightedMoe& model, const TrafficGraph& g,
                                        std::size_t batch) {
    if (batch < 1) throw ConfigError("inference batch must be >= 1");
    check_weighted(bundle, model);
    const std::size_t d = bundle.feature_dim();
    const std::size_t m = g.edge_count();
    WeightedPrediction out;
    out.gate_probs.resize(static_cast<Eigen::Index>(m), 2);
    out.predicted.resize(m);
    out.chosen.resize(m);
    if (m == 0) return out;
    const GraphReadout r = model.gate.use_readout ? compute_readout(g) : GraphReadout{};
    const auto avg_dim = static_cast<Eigen::Index>(embedding_dim(FeatureKind::avg, d));
    const auto deg_dim = static_cast<Eigen::Index>(embedding_dim(FeatureKind::deg, d));
    parallel_for((m + batch - 1) / batch, [&](std::size_t c) {
        const std::size_t begin = c * batch, end = std::min(m, begin + batch);
        const nn::Matrix x = gate_inputs(g, r, model.gate.use_readout, begin, end);
        const nn::Matrix w = nn::mlp_forward(model.gate.mlp, x);
        const nn::Matrix z = mix_latents(nn::mlp_latent(bundle.avg_expert, x.leftCols(avg_dim)),
                                         nn::mlp_latent(bundle.deg_expert, x.middleCols(avg_dim, deg_dim)), w);
        const nn::Matrix p = nn::mlp_forward(model.head, z);
        out.gate_probs.middleRows(static_cast<Eigen::Index>(begin), w.rows()) = w;
        for (std::size_t e = begin; e < end; ++e) {
            const auto i = static_cast<Eigen::Index>(e - begin);
            out.predicted[e] = argmax2(p(i, 0), p(i, 1));
            out.chosen[e] = static_cast<std::uint8_t>(argmax2(w(i, 0), w(i, 1)));
        }
    });
    return out;
}

WeightedLossGrad weighted_loss_and_grad(const ExpertBundle& experts, const WeightedMoe& model, const nn::Matrix& x,
                                        std::span<const int> labels) {
    const std::size_t d = experts.feature_dim();
    const auto avg_dim = static_cast<Eigen::Index>(embedding_dim(FeatureKind::avg, d));
    const auto deg_dim = static_cast<Eigen::Index>(embedding_dim(FeatureKind::deg, d));
    const nn::Matrix z_avg = nn::mlp_latent(experts.avg_expert, x.leftCols(avg_dim));
    const nn::Matrix z_deg = nn::mlp_latent(experts.deg_expert, x.middleCols(avg_dim, deg_dim));
    const nn::ForwardCache gc = nn::forward_cached(model.gate.mlp, x);
    const nn::Matrix w = nn::softmax_rows(gc.logits);
    const nn::Matrix mixed = mix_latents(z_avg, z_deg, w);
    auto head = nn::loss_and_grad(model.head, mixed, labels, {}, true);
    const nn::Matrix& dz = head.grads.input;
    // d loss / d weight_k, then through the softmax.
    const Eigen::VectorXd dw_avg = dz.cwiseProduct(z_avg).rowwise().sum();
    const Eigen::VectorXd dw_deg = dz.cwiseProduct(z_deg).rowwise().sum();
    const Eigen::VectorXd mean = w.col(0).cwiseProduct(dw_avg) + w.col(1).cwiseProduct(dw_deg);
    nn::Matrix dlogits(w.rows(), 2);
    dlogits.col(0) = w.col(0).cwiseProduct(dw_avg - mean);
    dlogits.col(1) = w.col(1).cwiseProduct(dw_deg - mean);
    WeightedLossGrad out;
    out.loss = head.loss;
    out.gate = nn::backward_from_logits(model.gate.mlp, gc, dlogits);
    head.grads.input.resize(0, 0);
    out.head = std::move(head.grads);
    return out;
}

WeightedTrainResult train_weighted(std::span<const TrafficGraph> graphs, const ExpertBundle& experts,
                                   WeightedMoe initial, const GateTrainOptions& options) {
    options.train.validate();
    options.augment.validate();
    check_weighted(experts, initial);
    if (graphs.empty() && options.train.epochs > 0) throw TrainingError("empty training set");

    WeightedTrainResult result{std::move(initial), {}};
    nn::Optimizer gate_opt(options.train), head_opt(options.train);

    auto step = [&](const nn::Matrix& x, std::span<const int> y) {
        const WeightedLossGrad lg = weighted_loss_and_grad(experts, result.model, x, y);
        head_opt.step(result.model.head, lg.head);
        gate_opt.step(result.model.gate.mlp, lg.gate);
        return lg.loss;
    };

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
            const GraphReadout r = result.model.gate.use_readout ? compute_readout(*g) : GraphReadout{};
            const nn::Matrix x = gate_inputs(*g, r, result.model.gate.use_readout, 0, g->edge_count());
            const auto batches = plan_batches(g->edge_count(), options.train,
                                              shuffle_seed(options.train.seed, options.stage, epoch, gi));
            if (batches.empty()) {
                loss_sum += step(x, labels);
                ++steps;
            } else {
                for (const auto& b : batches) {
                    std::vector<int> yb(b.size());
                    for (std::size_t i = 0; i < b.size(); ++i) yb[i] = labels[b[i]];
                    loss_sum += step(gather_rows(x, b), yb);
                    ++steps;
                }
            }
        }
        rec.loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
        result.history.push_back(rec);
    }
    return result;
}

}  // namespace flowmoe
