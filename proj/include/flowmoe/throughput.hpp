#pragma once

#include "flowmoe/container.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

namespace flowmoe {

struct ThroughputConfig {
    std::size_t flows = 1'000'000;
    std::size_t feature_dim = 4;
    std::size_t flows_per_window = 100'000;
    std::size_t batch = 8192;
    // builds per window; the fastest one counts
    std::size_t repeats = 5;
    std::uint64_t seed = 1;

    void validate() const;
};

struct StageTiming {
    double seconds = 0.0;
    double flows_per_second = 0.0;
};

struct ThroughputReport {
    std::size_t flows = 0;
    std::size_t windows = 0;
    StageTiming construction;  // window graphs: interning, edges, normalization, node features
    StageTiming processing;    // embeddings, readouts, gate and expert forward passes
    StageTiming total;  // construction + processing
    // Graph storage (edges, features, node tables) per flow.
    double graph_bytes_per_flow = 0.0;
    // Process peak resident set, 0 where unavailable.
    std::size_t peak_rss_bytes = 0;

    std::string to_text() const;
};

/// Times graph construction and MoE inference separately over synthetic
/// flows. Without a model a randomly initialized one is used (the cost does
/// not depend on the weights).
ThroughputReport throughput_bench(const ThroughputConfig& config,
                                  const std::optional<ModelContainer>& model = std::nullopt);

/// Construction time of `flows` against `flows / 2` records, measured in
/// alternating rounds. ratio is the median over rounds of large / small.
struct ScalingProbe {
    std::size_t small_flows = 0;
    std::size_t large_flows = 0;
    double small_seconds = 0.0;  // fastest round
    double large_seconds = 0.0;
    double ratio = 0.0;
    std::size_t rounds = 0;
};

ScalingProbe construction_scaling(const ThroughputConfig& config, std::size_t rounds = 7);

std::size_t peak_rss_bytes();

}  // namespace flowmoe
