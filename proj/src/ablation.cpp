#include "flowmoe/ablation.hpp"

#include "flowmoe/error.hpp"
#include "flowmoe/random.hpp"

#include <fstream>
#include <map>

namespace flowmoe {

std::string to_string(DriftKind kind) {
    switch (kind) {
        case DriftKind::none: return "none";
        case DriftKind::statistic: return "drift1";
        case DriftKind::scale: return "drift2";
        case DriftKind::both: return "drift12";
    }
    return "unknown";
}

void DriftSettings::validate() const {
    if (repeats < 1) throw ConfigError("eval.repeats must be >= 1");
    for (const auto& s : drift_scenarios(*this)) s.params.validate();
}

std::vector<DriftScenario> drift_scenarios(const DriftSettings& s) {
    const double keep_all = s.keep_mode == KeepMode::literal ? 1.0 : 0.0;
    std::vector<DriftScenario> out;
    out.push_back({DriftKind::none, AugmentParams::identity()});
    out.push_back({DriftKind::statistic, {s.stat_alpha, s.stat_beta, keep_all, 0, s.keep_mode}});
    out.push_back({DriftKind::scale, {0.0, 0.0, s.scale_gamma, 0, s.keep_mode}});
    out.push_back({DriftKind::both, {s.stat_alpha, s.stat_beta, s.scale_gamma, 0, s.keep_mode}});
    return out;
}

std::vector<TrafficGraph> apply_scenario(std::span<const TrafficGraph> test, const DriftScenario& scenario,
                                         const DriftSettings& settings) {
    if (scenario.kind == DriftKind::none || scenario.params.is_identity())
        return {test.begin(), test.end()};
    std::vector<TrafficGraph> out;
    for (std::size_t r = 0; r < settings.repeats; ++r)
        for (std::size_t i = 0; i < test.size(); ++i) {
            AugmentParams p = scenario.params;
            p.seed = derive_seed(settings.seed, {static_cast<std::uint64_t>(scenario.kind), r, i});
            TrafficGraph g = augment(test[i], p);
            if (!g.empty()) out.push_back(std::move(g));
        }
    return out;
}

namespace {

const std::map<Variant, std::string>& variant_names() {
    static const std::map<Variant, std::string> names = {
        {Variant::avg, "avg"},
        {Variant::deg, "deg"},
        {Variant::avg_aug, "avg_aug"},
        {Variant::deg_aug, "deg_aug"},
        {Variant::avg_deg, "avg_deg"},
        {Variant::avg_deg_aug, "avg_deg_aug"},
        {Variant::moe_no_aug, "moe_no_aug"},
        {Variant::moe, "moe"},
        {Variant::moe_no_readout, "moe_no_readout"},
        {Variant::moe_weighted, "moe_weighted"},
        {Variant::moe_one_stage, "moe_one_stage"},
    };
    return names;
}

}  // namespace

std::string variant_name(Variant v) { return variant_names().at(v); }

Variant variant_from_name(const std::string& name) {
    for (const auto& [v, n] : variant_names())
        if (n == name) return v;
    throw ConfigError("unknown variant '" + name + "'");
}

const std::vector<Variant>& all_variants() {
    static const std::vector<Variant> all = [] {
        std::vector<Variant> v;
        for (const auto& [k, n] : variant_names()) v.push_back(k);
        return v;
    }();
    return all;
}

const MetricsReport& GridResult::at(const std::string& variant, const std::string& scenario) const {
    for (const auto& c : cells)
        if (c.variant == variant && c.scenario == scenario) return c.metrics;
    throw ConfigError("no grid cell for " + variant + " / " + scenario);
}

namespace {

struct Models {
    std::optional<ExpertBundle> plain, aug;
    std::optional<nn::MlpModel> avg_deg_plain, avg_deg_aug;
    std::optional<GateModel> gate_plain, gate_aug, gate_no_readout;
    std::optional<WeightedMoe> weighted;
    std::optional<ModelContainer> one_stage;
};

bool needs(const std::vector<Variant>& vs, std::initializer_list<Variant> any) {
    for (auto v : vs)
        for (auto a : any)
            if (v == a) return true;
    return false;
}

HyperConfig without_augmentation(HyperConfig h) {
    h.aug1 = AugmentParams::identity();
    h.aug2 = AugmentParams::identity();
    return h;
}

nn::MlpModel train_joint_embedding(const PreparedData& data, const HyperConfig& hyper) {
    nn::MlpModel model = nn::mlp_init(hyper.shape.dims(embedding_dim(FeatureKind::avg_deg, data.feature_dim())),
                                      derive_seed(hyper.seed, {0x61766764}), hyper.shape.activation);
    ClassifierSlot slot{&model, FeatureKind::avg_deg};
    ClassifierTrainOptions opt;
    opt.train = hyper.stage_config(1);
    opt.augment = hyper.aug1;
    opt.class_weighting = hyper.class_weighting;
    train_classifiers(data.train, std::span<ClassifierSlot>(&slot, 1), opt);
    return model;
}

Models train_models(const PreparedData& data, const AblationConfig& cfg) {
    const auto& vs = cfg.variants;
    const HyperConfig& aug = cfg.hyper;
    const HyperConfig plain = without_augmentation(cfg.hyper);
    Models m;
    if (needs(vs, {Variant::avg, Variant::deg, Variant::moe_no_aug})) m.plain = run_stage1(data, plain).bundle;
    if (needs(vs, {Variant::moe_no_aug})) {
        HyperConfig h = plain;
        h.gate_readout = true;
        m.gate_plain = run_stage2(data, h, *m.plain).gate;
    }
    if (cfg.preloaded) {
        if (!cfg.preloaded->gate) throw TrainingError("preloaded model has no gate");
        m.aug = cfg.preloaded->experts;
        m.gate_aug = cfg.preloaded->gate;
    }
    if (!m.aug && needs(vs, {Variant::avg_aug, Variant::deg_aug, Variant::moe, Variant::moe_no_readout, Variant::moe_weighted}))
        m.aug = run_stage1(data, aug).bundle;
    if (!m.gate_aug && needs(vs, {Variant::moe})) {
        HyperConfig h = aug;
        h.gate_readout = true;
        m.gate_aug = run_stage2(data, h, *m.aug).gate;
    }
    if (needs(vs, {Variant::moe_no_readout})) {
        HyperConfig h = aug;
        h.gate_readout = false;
        m.gate_no_readout = run_stage2(data, h, *m.aug).gate;
    }
    if (needs(vs, {Variant::moe_weighted})) {
        GateTrainOptions opt;
        opt.train = aug.stage_config(2);
        opt.augment = aug.aug2;
        WeightedMoe init = init_weighted(*m.aug, aug.shape, true, derive_seed(aug.seed, {0x77656967}));
        m.weighted = train_weighted(data.train, *m.aug, std::move(init), opt).model;
    }
    if (needs(vs, {Variant::avg_deg})) m.avg_deg_plain = train_joint_embedding(data, plain);
    if (needs(vs, {Variant::avg_deg_aug})) m.avg_deg_aug = train_joint_embedding(data, aug);
    if (needs(vs, {Variant::moe_one_stage})) {
        HyperConfig h = aug;
        h.gate_readout = true;
        m.one_stage = run_one_stage(data, h).container;
    }
    return m;
}

struct ScenarioTally {
    MetricsAccumulator metrics;
    std::size_t to_avg = 0, to_deg = 0;
};

void evaluate_graph(Variant v, const Models& m, const TrafficGraph& g, ScenarioTally& t) {
    const std::vector<int> labels = g.edge_labels();
    auto single = [&](const nn::MlpModel& model, FeatureKind kind) {
        t.metrics.add(argmax_classes(predict_edges(model, g, kind)), labels);
    };
    auto hard = [&](const ExpertBundle& experts, const GateModel& gate) {
        const MoePrediction p = moe_predict(experts, gate, g);
        const GateSupervision s = gating_labels(p.experts, labels);
        t.metrics.add(p.predicted, labels);
        t.metrics.add_gate(p.chosen, s);
        for (std::size_t e = 0; e < s.size(); ++e)
            if (s.mask[e]) ++(p.chosen[e] == kAvgExpert ? t.to_avg : t.to_deg);
    };
    switch (v) {
        case Variant::avg: single(m.plain->avg_expert, FeatureKind::avg); break;
        case Variant::deg: single(m.plain->deg_expert, FeatureKind::deg); break;
        case Variant::avg_aug: single(m.aug->avg_expert, FeatureKind::avg); break;
        case Variant::deg_aug: single(m.aug->deg_expert, FeatureKind::deg); break;
        case Variant::avg_deg: single(*m.avg_deg_plain, FeatureKind::avg_deg); break;
        case Variant::avg_deg_aug: single(*m.avg_deg_aug, FeatureKind::avg_deg); break;
        case Variant::moe_no_aug: hard(*m.plain, *m.gate_plain); break;
        case Variant::moe: hard(*m.aug, *m.gate_aug); break;
        case Variant::moe_no_readout: hard(*m.aug, *m.gate_no_readout); break;
        case Variant::moe_one_stage: hard(m.one_stage->experts, *m.one_stage->gate); break;
        case Variant::moe_weighted: {
            const WeightedPrediction p = moe_predict_weighted(*m.aug, *m.weighted, g);
            ExpertOutputs eo = expert_predict(*m.aug, g);
            const GateSupervision s = gating_labels(eo, labels);
            t.metrics.add(p.predicted, labels);
            t.metrics.add_gate(p.chosen, s);
            break;
        }
    }
}

MetricsReport mean_report(const std::vector<MetricsReport>& rs) {
    MetricsReport o;
    double gate_sum = 0.0;
    std::size_t gate_n = 0;
    for (const auto& r : rs) {
        o.acc += r.acc;
        o.f1 += r.f1;
        o.precision += r.precision;
        o.recall += r.recall;
        o.tp += r.tp;
        o.fp += r.fp;
        o.tn += r.tn;
        o.fn += r.fn;
        o.n_masked += r.n_masked;
        o.gate_hits += r.gate_hits;
        if (r.acc_gate) {
            gate_sum += *r.acc_gate;
            ++gate_n;
        }
    }
    const double n = static_cast<double>(rs.size());
    o.acc /= n;
    o.f1 /= n;
    o.precision /= n;
    o.recall /= n;
    if (gate_n) o.acc_gate = gate_sum / static_cast<double>(gate_n);
    return o;
}

}  // namespace

GridResult run_ablation_grid(const PreparedData& data, const AblationConfig& cfg) {
    cfg.hyper.validate();
    cfg.drift.validate();
    if (cfg.variants.empty()) throw ConfigError("no variants requested");
    if (cfg.preloaded && cfg.preloaded->experts.norm != data.norm)
        throw TrainingError("model was trained with different normalization statistics than this data");
    const Models models = train_models(data, cfg);

    GridResult grid;
    const auto scenarios = drift_scenarios(cfg.drift);
    std::map<Variant, std::vector<MetricsReport>> per_variant;
    for (const auto& sc : scenarios) {
        const std::vector<TrafficGraph> graphs = apply_scenario(data.test, sc, cfg.drift);
        if (graphs.empty()) throw TrainingError("scenario " + to_string(sc.kind) + " left no test edges");
        for (auto v : cfg.variants) {
            ScenarioTally tally;
            for (const auto& g : graphs) evaluate_graph(v, models, g, tally);
            const MetricsReport r = tally.metrics.report();
            grid.cells.push_back({variant_name(v), to_string(sc.kind), r});
            per_variant[v].push_back(r);
            if (v == Variant::moe) {
                const std::size_t n = tally.to_avg + tally.to_deg;
                auto frac = [n](std::size_t k) { return n ? static_cast<double>(k) / static_cast<double>(n) : 0.0; };
                grid.selection.push_back({to_string(sc.kind), "avg", frac(tally.to_avg), n});
                grid.selection.push_back({to_string(sc.kind), "deg", frac(tally.to_deg), n});
            }
        }
    }
    for (auto v : cfg.variants) grid.cells.push_back({variant_name(v), "overall", mean_report(per_variant[v])});
    return grid;
}

void write_grid_csv(std::ostream& out, const GridResult& grid) {
    out.precision(17);
    out << "variant,scenario,acc,f1,acc_gate,n_masked\n";
    for (const auto& c : grid.cells) {
        out << c.variant << ',' << c.scenario << ',' << c.metrics.acc << ',' << c.metrics.f1 << ',';
        if (c.metrics.acc_gate) out << *c.metrics.acc_gate;
        out << ',' << c.metrics.n_masked << '\n';
    }
}

void write_grid_csv(const std::filesystem::path& path, const GridResult& grid) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    write_grid_csv(out, grid);
}

void write_selection_csv(const std::filesystem::path& path, const GridResult& grid) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path.string());
    out.precision(17);
    out << "scenario,expert,fraction\n";
    for (const auto& r : grid.selection) out << r.scenario << ',' << r.expert << ',' << r.fraction << '\n';
}

}  // namespace flowmoe
