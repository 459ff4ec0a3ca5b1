#pragma once

#include "flowmoe/augment.hpp"
#include "flowmoe/ingest.hpp"

#include <cstdint>
#include <vector>

namespace flowmoe {

/// Benchmark traffic where single flows are nearly uninformative but graph
/// context separates the classes.
///
/// Benign clients draw a per-node sign pattern s in {-shift, +shift}^d and
/// emit flows s + N(0, 1); their degree is 1 + Poisson(benign_degree_mean - 1).
/// Attackers emit N(0, 1 + shift^2) flows (same per-feature mean and variance
/// as benign flows overall) with degree 1 + Poisson(malicious_degree_mean - 1).
/// Every flow goes to a server drawn from a Zipf-like popularity over
/// server_count servers. The latent values are then mapped to raw
/// NetFlow-like units by a fixed per-column affine map.
struct SyntheticConfig {
    std::size_t feature_dim = 4;
    std::size_t train_windows = 12;
    std::size_t test_windows = 12;
    std::size_t flows_per_window = 1000;
    double malicious_fraction = 0.5;
    double benign_degree_mean = 3.0;
    double malicious_degree_mean = 12.0;
    double node_shift = 1.0;
    std::size_t server_count = 200;
    double server_zipf = 1.0;
    double window_seconds = 30.0;
    // Applied to training windows in raw feature units.
    AugmentParams train_augment;

    void validate() const;
};

struct SyntheticDataset {
    std::vector<std::vector<FlowRecord>> train_windows;
    std::vector<std::vector<FlowRecord>> test_windows;
    SchemaConfig schema;

    // Concatenated windows with flow_id renumbered by row.
    std::vector<FlowRecord> train_records() const;
    std::vector<FlowRecord> test_records() const;
};

SchemaConfig synthetic_schema(std::size_t feature_dim);

// Deterministic in (config, seed).
SyntheticDataset generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

}  // namespace flowmoe
