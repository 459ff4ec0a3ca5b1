#include "flowmoe/metrics.hpp"

#include "flowmoe/error.hpp"

namespace flowmoe {

void MetricsAccumulator::add(std::span<const int> predicted, std::span<const int> labels) {
    if (predicted.size() != labels.size()) throw DimensionError("predictions and labels differ in length");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const bool p = predicted[i] == 1, y = labels[i] == 1;
        if (p && y) ++tp_;
        else if (p) ++fp_;
        else if (y) ++fn_;
        else ++tn_;
    }
}

void MetricsAccumulator::add_gate(std::span<const std::uint8_t> chosen, const GateSupervision& s) {
    if (chosen.size() != s.size()) throw DimensionError("gate choices and supervision differ in length");
    has_gate_ = true;
    for (std::size_t i = 0; i < chosen.size(); ++i) {
        if (!s.mask[i]) continue;
        ++masked_;
        if (chosen[i] == s.gate_label[i]) ++hits_;
    }
}

MetricsReport MetricsAccumulator::report() const {
    MetricsReport r;
    r.tp = tp_;
    r.fp = fp_;
    r.tn = tn_;
    r.fn = fn_;
    auto ratio = [](double a, double b) { return b == 0.0 ? 0.0 : a / b; };
    r.acc = ratio(static_cast<double>(tp_ + tn_), static_cast<double>(r.total()));
    r.precision = ratio(static_cast<double>(tp_), static_cast<double>(tp_ + fp_));
    r.recall = ratio(static_cast<double>(tp_), static_cast<double>(tp_ + fn_));
    r.f1 = ratio(2.0 * r.precision * r.recall, r.precision + r.recall);
    if (has_gate_) {
        r.n_masked = masked_;
        r.gate_hits = hits_;
        if (masked_ > 0) r.acc_gate = static_cast<double>(hits_) / static_cast<double>(masked_);
    }
    return r;
}

MetricsReport compute_metrics(std::span<const int> predicted, std::span<const int> labels) {
    MetricsAccumulator acc;
    acc.add(predicted, labels);
    return acc.report();
}

MetricsReport compute_metrics(std::span<const int> predicted, std::span<const int> labels,
                              std::span<const std::uint8_t> chosen, const GateSupervision& supervision) {
    MetricsAccumulator acc;
    acc.add(predicted, labels);
    acc.add_gate(chosen, supervision);
    return acc.report();
}

std::vector<int> argmax_classes(const nn::Matrix& p) {
    if (p.cols() != 2) throw DimensionError("expected two probability columns");
    std::vector<int> out(static_cast<std::size_t>(p.rows()));
    for (Eigen::Index i = 0; i < p.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax2(p(i, 0), p(i, 1));
    return out;
}

OracleResult oracle_select(const ExpertOutputs& outputs, std::span<const int> labels) {
    const GateSupervision s = gating_labels(outputs, labels);
    OracleResult r;
    r.chosen = s.gate_label;
    r.predicted.resize(labels.size());
    for (std::size_t e = 0; e < labels.size(); ++e) {
        const auto i = static_cast<Eigen::Index>(e);
        const nn::Matrix& p = r.chosen[e] == kAvgExpert ? outputs.p_avg : outputs.p_deg;
        r.predicted[e] = argmax2(p(i, 0), p(i, 1));
    }
    r.metrics = compute_metrics(r.predicted, labels, r.chosen, s);
    return r;
}

}  // namespace flowmoe
