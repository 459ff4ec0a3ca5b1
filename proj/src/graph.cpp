#include "flowmoe/graph.hpp"

#include "flowmoe/error.hpp"

#include <cmath>
#include <fstream>

namespace flowmoe {

std::string to_string(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::avg: return "avg";
        case FeatureKind::deg: return "deg";
        case FeatureKind::avg_deg: return "avg_deg";
    }
    return "unknown";
}

std::size_t embedding_dim(FeatureKind kind, std::size_t d) {
    switch (kind) {
        case FeatureKind::avg: return 3 * d;
        case FeatureKind::deg: return d + 2;
        case FeatureKind::avg_deg: return 3 * d + 2;
    }
    return 0;
}

bool TrafficGraph::fully_labeled() const {
    for (auto l : labels)
        if (l == kNoLabel) return false;
    return true;
}

std::vector<int> TrafficGraph::edge_labels() const {
    std::vector<int> out(labels.size());
    for (std::size_t e = 0; e < labels.size(); ++e) {
        if (labels[e] == kNoLabel) throw DimensionError("edge " + std::to_string(e) + " has no label");
        out[e] = labels[e];
    }
    return out;
}

TrafficGraph build_graph(std::span<const FlowRecord> records) {
    TrafficGraph g;
    if (records.empty()) return g;
    g.feature_dim = records.front().features.size();
    const std::size_t m = records.size();
    g.src.resize(m);
    g.dst.resize(m);
    g.labels.resize(m);
    g.flow_ids.resize(m);
    g.edge_features.resize(m * g.feature_dim);
    g.node_of_ip.reserve(m);

    auto intern = [&g](const std::string& ip) {
        auto [it, inserted] = g.node_of_ip.try_emplace(ip, static_cast<std::uint32_t>(g.node_ips.size()));
        if (inserted) g.node_ips.push_back(ip);
        return it->second;
    };
    for (std::size_t e = 0; e < m; ++e) {
        const auto& r = records[e];
        if (r.features.size() != g.feature_dim) throw DimensionError("records disagree on feature count");
        g.src[e] = intern(r.src_ip);
        g.dst[e] = intern(r.dst_ip);
        g.labels[e] = r.label ? static_cast<std::int8_t>(*r.label) : kNoLabel;
        g.flow_ids[e] = r.flow_id;
        std::copy(r.features.begin(), r.features.end(), g.edge_features.begin() + static_cast<std::ptrdiff_t>(e * g.feature_dim));
    }
    return g;
}

void compute_node_features(TrafficGraph& g) {
    const std::size_t n = g.node_count();
    const std::size_t d = g.feature_dim;
    g.h_avg.assign(n * d, 0.0);
    g.h_deg.assign(n, 0.0);
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        const double* f = g.edge_features.data() + e * d;
        double* out_row = g.h_avg.data() + static_cast<std::size_t>(g.src[e]) * d;
        for (std::size_t k = 0; k < d; ++k) out_row[k] += f[k];
        double* in_row = g.h_avg.data() + static_cast<std::size_t>(g.dst[e]) * d;
        for (std::size_t k = 0; k < d; ++k) in_row[k] += f[k];
        g.h_deg[g.src[e]] += 1.0;
        g.h_deg[g.dst[e]] += 1.0;
    }
    for (std::size_t u = 0; u < n; ++u) {
        double* row = g.h_avg.data() + u * d;
        for (std::size_t k = 0; k < d; ++k) row[k] /= g.h_deg[u];
    }
    g.features_ready = true;
}

void normalize_graph(TrafficGraph& g, const NormStats& stats) {
    if (g.normalized) throw DimensionError("graph is already normalized");
    if (!g.empty() && stats.dim() != g.feature_dim)
        throw DimensionError("normalization stats have " + std::to_string(stats.dim()) + " features, graph has " +
                             std::to_string(g.feature_dim));
    for (std::size_t e = 0; e < g.edge_count(); ++e) normalize_in_place(g.feature(e), stats);
    g.deg_mean = stats.deg_mean;
    g.deg_std = stats.deg_std;
    g.normalized = true;
    compute_node_features(g);
}

void fit_degree_normalization(NormStats& stats, std::span<const TrafficGraph> graphs) {
    double n = 0.0, mean = 0.0, m2 = 0.0;
    for (const auto& g : graphs) {
        if (!g.features_ready) throw DimensionError("degree normalization needs computed node features");
        for (double deg : g.h_deg) {
            const double x = std::log1p(deg);
            n += 1.0;
            const double delta = x - mean;
            mean += delta / n;
            m2 += delta * (x - mean);
        }
    }
    if (n == 0.0) throw DimensionError("no nodes to fit degree normalization");
    stats.deg_mean = mean;
    stats.deg_std = std::max(std::sqrt(m2 / n), kStdFloor);
}

TrafficGraph build_normalized_graph(std::span<const FlowRecord> records, const NormStats& stats) {
    TrafficGraph g = build_graph(records);
    normalize_graph(g, stats);
    return g;
}

TrafficGraph edge_subgraph(const TrafficGraph& g, std::span<const std::uint32_t> kept) {
    TrafficGraph out;
    out.feature_dim = g.feature_dim;
    out.deg_mean = g.deg_mean;
    out.deg_std = g.deg_std;
    out.normalized = g.normalized;

    std::vector<char> alive(g.node_count(), 0);
    for (auto e : kept) {
        if (e >= g.edge_count()) throw DimensionError("edge index out of range");
        alive[g.src[e]] = 1;
        alive[g.dst[e]] = 1;
    }
    std::vector<std::uint32_t> remap(g.node_count(), 0);
    for (std::size_t u = 0; u < g.node_count(); ++u) {
        if (!alive[u]) continue;
        remap[u] = static_cast<std::uint32_t>(out.node_ips.size());
        out.node_of_ip.emplace(g.node_ips[u], remap[u]);
        out.node_ips.push_back(g.node_ips[u]);
    }
    const std::size_t m = kept.size(), d = g.feature_dim;
    out.src.resize(m);
    out.dst.resize(m);
    out.labels.resize(m);
    out.flow_ids.resize(m);
    out.edge_features.resize(m * d);
    for (std::size_t i = 0; i < m; ++i) {
        const auto e = kept[i];
        out.src[i] = remap[g.src[e]];
        out.dst[i] = remap[g.dst[e]];
        out.labels[i] = g.labels[e];
        out.flow_ids[i] = g.flow_ids[e];
        auto f = g.feature(e);
        std::copy(f.begin(), f.end(), out.edge_features.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    compute_node_features(out);
    return out;
}

namespace {

void require_features(const TrafficGraph& g) {
    if (!g.features_ready) throw DimensionError("node features have not been computed");
}

template <typename Sink>
void emit_embedding(const TrafficGraph& g, std::size_t e, FeatureKind kind, Sink&& put) {
    const std::size_t u = g.src[e], v = g.dst[e];
    switch (kind) {
        case FeatureKind::avg:
            for (double x : g.avg_row(u)) put(x);
            for (double x : g.avg_row(v)) put(x);
            break;
        case FeatureKind::deg:
            put(g.normalized_degree(u));
            put(g.normalized_degree(v));
            break;
        case FeatureKind::avg_deg:
            for (double x : g.avg_row(u)) put(x);
            put(g.normalized_degree(u));
            for (double x : g.avg_row(v)) put(x);
            put(g.normalized_degree(v));
            break;
    }
    for (double x : g.feature(e)) put(x);
}

}  // namespace

std::vector<double> flow_embedding(const TrafficGraph& g, std::size_t edge, FeatureKind kind) {
    require_features(g);
    if (edge >= g.edge_count()) throw DimensionError("edge index " + std::to_string(edge) + " out of range");
    std::vector<double> out;
    out.reserve(embedding_dim(kind, g.feature_dim));
    emit_embedding(g, edge, kind, [&](double x) { out.push_back(x); });
    return out;
}

void embed_edges_into(const TrafficGraph& g, FeatureKind kind, std::size_t begin, std::size_t end, nn::Matrix& out,
                      Eigen::Index col) {
    require_features(g);
    if (begin > end || end > g.edge_count()) throw DimensionError("edge range out of bounds");
    const auto dim = static_cast<Eigen::Index>(embedding_dim(kind, g.feature_dim));
    if (out.rows() < static_cast<Eigen::Index>(end - begin) || out.cols() < col + dim)
        throw DimensionError("embedding output block too small");
    for (std::size_t e = begin; e < end; ++e) {
        double* row = out.data() + static_cast<Eigen::Index>(e - begin) * out.cols() + col;
        emit_embedding(g, e, kind, [&row](double x) { *row++ = x; });
    }
}

nn::Matrix embed_edges(const TrafficGraph& g, FeatureKind kind, std::size_t begin, std::size_t end) {
    nn::Matrix out(static_cast<Eigen::Index>(end - begin), static_cast<Eigen::Index>(embedding_dim(kind, g.feature_dim)));
    embed_edges_into(g, kind, begin, end, out);
    return out;
}

nn::Matrix embed_all(const TrafficGraph& g, FeatureKind kind) { return embed_edges(g, kind, 0, g.edge_count()); }

std::vector<double> readout(const TrafficGraph& g, FeatureKind kind) {
    require_features(g);
    std::vector<double> sum(embedding_dim(kind, g.feature_dim), 0.0);
    if (g.empty()) return sum;
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        std::size_t k = 0;
        emit_embedding(g, e, kind, [&](double x) { sum[k++] += x; });
    }
    const double m = static_cast<double>(g.edge_count());
    for (auto& x : sum) x /= m;
    return sum;
}

GraphReadout compute_readout(const TrafficGraph& g) {
    return {readout(g, FeatureKind::avg), readout(g, FeatureKind::deg)};
}

void write_graph_dump(const TrafficGraph& g, const std::filesystem::path& edge_path,
                      const std::filesystem::path& node_path) {
    std::ofstream edges(edge_path);
    if (!edges) throw IoError("cannot write " + edge_path.string());
    edges.precision(17);
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        edges << g.src[e] << ',' << g.dst[e];
        for (double x : g.feature(e)) edges << ',' << x;
        edges << ',';
        if (g.labels[e] != kNoLabel) edges << static_cast<int>(g.labels[e]);
        edges << '\n';
    }
    std::ofstream nodes(node_path);
    if (!nodes) throw IoError("cannot write " + node_path.string());
    for (std::size_t u = 0; u < g.node_count(); ++u) nodes << g.node_ips[u] << ',' << u << '\n';
}

}  // namespace flowmoe
