#include "flowmoe/augment.hpp"

#include "flowmoe/error.hpp"
#include "flowmoe/random.hpp"

#include <cmath>

namespace flowmoe {

std::string to_string(KeepMode mode) { return mode == KeepMode::literal ? "literal" : "complement"; }

KeepMode keep_mode_from_string(const std::string& name) {
    if (name == "literal") return KeepMode::literal;
    if (name == "complement") return KeepMode::complement;
    throw ConfigError("unknown gamma mode '" + name + "' (expected literal or complement)");
}

void AugmentParams::validate() const {
    if (!std::isfinite(alpha) || alpha < 0.0) throw ConfigError("augmentation alpha must be finite and >= 0");
    if (!std::isfinite(beta) || beta < 0.0) throw ConfigError("augmentation beta must be finite and >= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("augmentation gamma must lie in [0, 1]");
}

bool AugmentParams::is_identity() const {
    const bool keeps_all = keep_mode == KeepMode::literal ? gamma == 1.0 : gamma == 0.0;
    return !perturbs() && keeps_all;
}

namespace {

double draw_keep_probability(Rng& rng, const AugmentParams& p) {
    const double lo = p.keep_mode == KeepMode::literal ? p.gamma : 1.0 - p.gamma;
    return rng.uniform(lo, 1.0);
}

TrafficGraph drop_with(const TrafficGraph& g, const AugmentParams& p, Rng& rng) {
    const double a = draw_keep_probability(rng, p);
    std::vector<std::uint32_t> kept;
    kept.reserve(g.edge_count());
    for (std::size_t e = 0; e < g.edge_count(); ++e)
        if (rng.uniform() <= a) kept.push_back(static_cast<std::uint32_t>(e));
    if (kept.size() == g.edge_count()) return g;
    return edge_subgraph(g, kept);
}

TrafficGraph perturb_with(TrafficGraph out, const AugmentParams& p, Rng& rng) {
    if (!p.perturbs() || out.empty()) return out;
    const double b = rng.uniform(-p.alpha, p.alpha);
    const double sigma = rng.uniform(0.0, p.beta);
    for (double& x : out.edge_features) x += rng.normal(0.0, sigma) + b;
    compute_node_features(out);
    return out;
}

}  // namespace

TrafficGraph perturb_statistics(const TrafficGraph& graph, const AugmentParams& params) {
    params.validate();
    Rng rng(derive_seed(params.seed, {0x70657274}));
    return perturb_with(graph, params, rng);
}

TrafficGraph drop_edges(const TrafficGraph& graph, const AugmentParams& params) {
    params.validate();
    Rng rng(derive_seed(params.seed, {0x64726f70}));
    return drop_with(graph, params, rng);
}

TrafficGraph augment(const TrafficGraph& graph, const AugmentParams& params) {
    params.validate();
    Rng rng(derive_seed(params.seed, {0x61756720}));
    TrafficGraph dropped = drop_with(graph, params, rng);
    if (dropped.empty()) return dropped;
    return perturb_with(std::move(dropped), params, rng);
}

}  // namespace flowmoe
