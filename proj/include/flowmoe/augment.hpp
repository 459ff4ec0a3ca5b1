#pragma once

#include "flowmoe/graph.hpp"

#include <cstdint>
#include <string>

namespace flowmoe {

// How the edge-keep probability a is drawn from gamma.
//   literal:    a ~ U(gamma, 1)      gamma = 1 keeps every edge
//   complement: a ~ U(1 - gamma, 1)  gamma = 0 keeps every edge
enum class KeepMode { literal, complement };

std::string to_string(KeepMode mode);
KeepMode keep_mode_from_string(const std::string& name);

/// Drift augmentation knobs. alpha bounds the per-graph bias b ~ U(-alpha,
/// alpha); beta bounds the noise scale sigma ~ U(0, beta); gamma bounds the
/// edge-keep probability (see KeepMode). Feature-space values are z-score
/// units since augmentation runs on normalized graphs.
struct AugmentParams {
    double alpha = 0.0;
    double beta = 0.0;
    double gamma = 1.0;
    std::uint64_t seed = 0;
    KeepMode keep_mode = KeepMode::literal;

    void validate() const;
    bool perturbs() const { return alpha != 0.0 || beta != 0.0; }
    // True when these parameters can never change a graph.
    bool is_identity() const;

    static AugmentParams identity() { return {}; }
};

/// F' = F + eps + b with b ~ U(-alpha, alpha) and sigma ~ U(0, beta) drawn once
/// per call, eps ~ N(0, sigma) (sigma is the standard deviation) drawn per
/// element. Node features are recomputed. alpha = beta = 0 returns an
/// unmodified copy.
TrafficGraph perturb_statistics(const TrafficGraph& graph, const AugmentParams& params);

/// Draws a once per call, then keeps edge e iff m_e <= a with m_e ~ U(0, 1).
/// Orphaned nodes are removed and indices compacted. Dropping every edge
/// yields the empty-graph sentinel (TrafficGraph::empty()).
TrafficGraph drop_edges(const TrafficGraph& graph, const AugmentParams& params);

/// Edge dropping followed by statistic perturbation, both driven by one RNG
/// stream seeded from params.seed. Never mutates the input.
TrafficGraph augment(const TrafficGraph& graph, const AugmentParams& params);

}  // namespace flowmoe
