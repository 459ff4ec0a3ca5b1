#pragma once

#include "flowmoe/experts.hpp"
#include "flowmoe/gate.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace flowmoe {

// Malicious (1) is the positive class.
struct MetricsReport {
    double acc = 0.0;
    double f1 = 0.0;
    double precision = 0.0;
    double recall = 0.0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    // Fraction of masked edges routed to the lower-loss expert.
    std::optional<double> acc_gate;
    std::size_t n_masked = 0;
    std::size_t gate_hits = 0;

    std::size_t total() const { return tp + fp + tn + fn; }
};

/// Accumulates confusion counts (and optionally gate alignment) over several
/// graphs; report() derives the ratios, with 0/0 taken as 0.
class MetricsAccumulator {
public:
    void add(std::span<const int> predicted, std::span<const int> labels);
    void add_gate(std::span<const std::uint8_t> chosen, const GateSupervision& supervision);
    MetricsReport report() const;

private:
    std::size_t tp_ = 0, fp_ = 0, tn_ = 0, fn_ = 0;
    std::size_t masked_ = 0, hits_ = 0;
    bool has_gate_ = false;
};

MetricsReport compute_metrics(std::span<const int> predicted, std::span<const int> labels);
MetricsReport compute_metrics(std::span<const int> predicted, std::span<const int> labels,
                              std::span<const std::uint8_t> chosen, const GateSupervision& supervision);

std::vector<int> argmax_classes(const nn::Matrix& probs);

struct OracleResult {
    std::vector<int> predicted;
    std::vector<std::uint8_t> chosen;
    MetricsReport metrics;
};

// Per edge, the class of the expert with the lower cross-entropy (ties to avg).
OracleResult oracle_select(const ExpertOutputs& outputs, std::span<const int> labels);

}  // namespace flowmoe
