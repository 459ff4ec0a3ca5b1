#include "flowmoe/training.hpp"

#include "flowmoe/error.hpp"
#include "flowmoe/random.hpp"

#include <chrono>
#include <fstream>
#include <sstream>

namespace flowmoe {

PreparedData prepare_windows(std::span<const std::vector<FlowRecord>> train_windows,
                             std::span<const std::vector<FlowRecord>> test_windows) {
    std::vector<FlowRecord> all_train;
    for (const auto& w : train_windows) all_train.insert(all_train.end(), w.begin(), w.end());
    if (all_train.empty()) throw TrainingError("empty training set");
    for (const auto& r : all_train)
        if (!r.label) throw TrainingError("training flow " + std::to_string(r.flow_id) + " has no label");

    PreparedData data;
    data.norm = fit_normalization(all_train);
    std::vector<TrafficGraph> raw;
    for (const auto& w : train_windows) {
        if (w.empty()) continue;
        TrafficGraph g = build_graph(w);
        compute_node_features(g);
        raw.push_back(std::move(g));
    }
    fit_degree_normalization(data.norm, raw);
    for (auto& g : raw) {
        normalize_graph(g, data.norm);
        data.train.push_back(std::move(g));
    }
    for (const auto& w : test_windows)
        if (!w.empty()) data.test.push_back(build_normalized_graph(w, data.norm));
    return data;
}

PreparedData prepare_data(std::span<const FlowRecord> train, std::span<const FlowRecord> test, double window_seconds) {
    const auto tw = window_flows(train, window_seconds);
    const auto vw = window_flows(test, window_seconds);
    return prepare_windows(tw, vw);
}

std::vector<TrafficGraph> build_windows(std::span<const FlowRecord> records, double window_seconds,
                                        const NormStats& norm) {
    std::vector<TrafficGraph> out;
    for (const auto& w : window_flows(records, window_seconds)) out.push_back(build_normalized_graph(w, norm));
    return out;
}

HyperConfig::HyperConfig() = default;

void HyperConfig::validate() const {
    shape.validate();
    stage1.validate();
    stage2.validate();
    aug1.validate();
    aug2.validate();
}

nn::TrainConfig HyperConfig::stage_config(int stage) const {
    nn::TrainConfig c = stage == 1 ? stage1 : stage2;
    c.seed = derive_seed(seed, {0x7472, static_cast<std::uint64_t>(stage)});
    return c;
}

void TrainingReport::write_epoch_csv(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "stage,epoch,loss,masked_fraction,skipped_graphs\n";
    for (const auto& e : epochs)
        out << e.stage << ',' << e.epoch << ',' << e.loss << ',' << e.masked_fraction << ',' << e.skipped_graphs << '\n';
}

std::string TrainingReport::summary() const {
    std::ostringstream s;
    s.precision(6);
    s << "stage1_seconds = " << stage1_seconds << "\n";
    s << "stage2_seconds = " << stage2_seconds << "\n";
    s << "epochs_recorded = " << epochs.size() << "\n";
    for (int stage = 0; stage <= 2; ++stage) {
        const EpochRecord* last = nullptr;
        for (const auto& e : epochs)
            if (e.stage == stage) last = &e;
        if (last) s << "final_loss_stage" << stage << " = " << last->loss << "\n";
    }
    s << "warnings = " << warnings.size() << "\n";
    return s.str();
}

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

ExpertTrainResult run_stage1(const PreparedData& data, const HyperConfig& hyper) {
    hyper.validate();
    if (data.train.empty()) throw TrainingError("empty training set");
    ClassifierTrainOptions opt;
    opt.train = hyper.stage_config(1);
    opt.augment = hyper.aug1;
    opt.class_weighting = hyper.class_weighting;
    opt.stage = 1;
    return train_experts(data.train, init_experts(data.norm, hyper.shape, derive_seed(hyper.seed, {0x696e6974})), opt);
}

GateTrainResult run_stage2(const PreparedData& data, const HyperConfig& hyper, const ExpertBundle& experts) {
    hyper.validate();
    if (data.train.empty()) throw TrainingError("empty training set");
    GateTrainOptions opt;
    opt.train = hyper.stage_config(2);
    opt.augment = hyper.aug2;
    opt.stage = 2;
    GateModel init = init_gate(experts.feature_dim(), hyper.shape, hyper.gate_readout, derive_seed(hyper.seed, {0x67617465}));
    return train_gate(data.train, experts, std::move(init), opt);
}

TrainedModel run_two_stage(const PreparedData& data, const HyperConfig& hyper, const std::optional<ExpertBundle>& resume,
                           const std::function<void(const ModelContainer&, int)>& checkpoint) {
    hyper.validate();
    if (data.train.empty()) throw TrainingError("empty training set");
    TrainedModel out;
    auto t0 = std::chrono::steady_clock::now();
    if (resume) {
        resume->validate();
        if (resume->norm != data.norm) throw TrainingError("checkpoint normalization does not match the training data");
        out.container.experts = *resume;
    } else {
        auto s1 = run_stage1(data, hyper);
        out.container.experts = std::move(s1.bundle);
        out.report.epochs = std::move(s1.history);
    }
    out.report.stage1_seconds = seconds_since(t0);
    if (checkpoint) checkpoint(out.container, 1);

    t0 = std::chrono::steady_clock::now();
    auto s2 = run_stage2(data, hyper, out.container.experts);
    out.container.gate = std::move(s2.gate);
    out.report.epochs.insert(out.report.epochs.end(), s2.history.begin(), s2.history.end());
    out.report.warnings = std::move(s2.warnings);
    out.report.stage2_seconds = seconds_since(t0);
    if (checkpoint) checkpoint(out.container, 2);
    return out;
}

TrainedModel run_one_stage(const PreparedData& data, const HyperConfig& hyper, const SupervisionHook& hook) {
    hyper.validate();
    if (data.train.empty()) throw TrainingError("empty training set");
    const auto t0 = std::chrono::steady_clock::now();
    const nn::TrainConfig tc1 = hyper.stage_config(1);
    const nn::TrainConfig tc2 = hyper.stage_config(2);

    ExpertBundle experts = init_experts(data.norm, hyper.shape, derive_seed(hyper.seed, {0x696e6974}));
    GateModel gate = init_gate(experts.feature_dim(), hyper.shape, hyper.gate_readout, derive_seed(hyper.seed, {0x67617465}));
    nn::Optimizer opt_avg(tc1), opt_deg(tc1), opt_gate(tc2);

    TrainedModel out;
    for (int epoch = 0; epoch < tc1.epochs; ++epoch) {
        EpochRecord rec;
        rec.stage = 0;
        rec.epoch = epoch;
        double loss_sum = 0.0, masked = 0.0, edges = 0.0;
        std::size_t steps = 0;
        for (std::size_t gi = 0; gi < data.train.size(); ++gi) {
            const TrafficGraph& base = data.train[gi];
            auto view = [&](const AugmentParams& params, int stage) {
                AugmentParams p = params;
                p.seed = augmentation_seed(stage == 1 ? tc1.seed : tc2.seed, stage, epoch, gi);
                return params.is_identity() ? base : augment(base, p);
            };
            const TrafficGraph g1 = view(hyper.aug1, 1);
            const TrafficGraph g2 = view(hyper.aug2, 2);

            // Gate supervision from the experts as they are before this step.
            GateSupervision sup;
            std::vector<std::uint32_t> rows;
            if (!g2.empty()) {
                const auto labels2 = g2.edge_labels();
                ExpertOutputs eo = expert_predict(experts, g2);
                expert_losses(eo, labels2);
                sup = gating_labels(eo, labels2);
                rows = sup.masked_edges();
                edges += static_cast<double>(g2.edge_count());
                masked += static_cast<double>(rows.size());
                if (hook) hook(epoch, gi, sup);
            }

            double step_loss = 0.0;
            bool stepped = false;
            if (!g1.empty()) {
                const auto labels1 = g1.edge_labels();
                const std::vector<double> w = hyper.class_weighting ? inverse_frequency_weights(labels1) : std::vector<double>{};
                auto la = nn::loss_and_grad(experts.avg_expert, embed_all(g1, FeatureKind::avg), labels1, w);
                auto ld = nn::loss_and_grad(experts.deg_expert, embed_all(g1, FeatureKind::deg), labels1, w);
                opt_avg.step(experts.avg_expert, la.grads);
                opt_deg.step(experts.deg_expert, ld.grads);
                step_loss += la.loss + ld.loss;
                stepped = true;
            } else {
                ++rec.skipped_graphs;
            }
            if (!rows.empty()) {
                const GraphReadout r = gate.use_readout ? compute_readout(g2) : GraphReadout{};
                std::vector<int> y(rows.size());
                for (std::size_t i = 0; i < rows.size(); ++i) y[i] = sup.gate_label[rows[i]];
                auto lg = nn::loss_and_grad(gate.mlp, gate_inputs(g2, r, gate.use_readout, rows), y);
                opt_gate.step(gate.mlp, lg.grads);
                step_loss += lg.loss;
                stepped = true;
            }
            if (stepped) {
                loss_sum += step_loss;
                ++steps;
            }
        }
        rec.loss = steps ? loss_sum / static_cast<double>(steps) : 0.0;
        rec.masked_fraction = edges > 0.0 ? masked / edges : 0.0;
        out.report.epochs.push_back(rec);
    }
    out.container.experts = std::move(experts);
    out.container.gate = std::move(gate);
    out.report.stage1_seconds = seconds_since(t0);
    return out;
}

}  // namespace flowmoe
