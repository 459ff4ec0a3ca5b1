#pragma once

#include "flowmoe/ingest.hpp"
#include "flowmoe/nn.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace flowmoe {

// Node feature used to build a flow embedding.
//   avg:     h_avg[u] | h_avg[v] | f            (3 d)
//   deg:     deg[u]   | deg[v]   | f            (d + 2)
//   avg_deg: h_avg[u], deg[u] | h_avg[v], deg[v] | f   (3 d + 2)
// deg entries are normalized degrees (see TrafficGraph::normalized_degree).
enum class FeatureKind { avg, deg, avg_deg };

std::string to_string(FeatureKind kind);
std::size_t embedding_dim(FeatureKind kind, std::size_t feature_dim);

inline constexpr std::int8_t kNoLabel = -1;

/// Directed flow multigraph for one time window.
///
/// Nodes are IPs interned in first-appearance order (source before
/// destination within a record). Each record is one edge; parallel edges and
/// self loops are kept. Edge data is stored column-wise; edge features are a
/// row-major |E| x d block.
struct TrafficGraph {
    std::size_t feature_dim = 0;
    std::vector<std::string> node_ips;
    std::unordered_map<std::string, std::uint32_t> node_of_ip;

    std::vector<std::uint32_t> src;
    std::vector<std::uint32_t> dst;
    std::vector<double> edge_features;
    std::vector<std::int8_t> labels;
    std::vector<std::uint64_t> flow_ids;

    // Filled by compute_node_features: n x d average of incident edge
    // features, and the raw incident edge count (in + out).
    std::vector<double> h_avg;
    std::vector<double> h_deg;
    bool features_ready = false;

    // Degree normalizer: (log1p(deg) - deg_mean) / deg_std. Identity-scaled
    // log1p until normalize_graph installs training statistics.
    double deg_mean = 0.0;
    double deg_std = 1.0;
    bool normalized = false;

    std::size_t node_count() const { return node_ips.size(); }
    std::size_t edge_count() const { return src.size(); }
    // The sentinel returned when augmentation drops every edge.
    bool empty() const { return src.empty(); }

    std::span<const double> feature(std::size_t e) const {
        return {edge_features.data() + e * feature_dim, feature_dim};
    }
    std::span<double> feature(std::size_t e) { return {edge_features.data() + e * feature_dim, feature_dim}; }
    std::span<const double> avg_row(std::size_t u) const { return {h_avg.data() + u * feature_dim, feature_dim}; }
    double normalized_degree(std::size_t u) const { return (std::log1p(h_deg[u]) - deg_mean) / deg_std; }

    bool fully_labeled() const;
    std::vector<int> edge_labels() const;  // throws if any edge is unlabeled
};

// Interns endpoints with a hash table and adds one edge per record. Node
// features are left unpopulated.
TrafficGraph build_graph(std::span<const FlowRecord> records);

// h_avg[u] = (sum of incoming f + sum of outgoing f) / (in + out degree),
// h_deg[u] = in + out degree, both from the current edge features. Sums are
// accumulated in edge order; a self loop counts as an in and an out edge.
void compute_node_features(TrafficGraph& graph);

// z-scores the edge features with the training stats, installs the degree
// normalizer and recomputes node features from the normalized edges.
void normalize_graph(TrafficGraph& graph, const NormStats& stats);

// Fits stats.deg_mean / deg_std over log1p(degree) of every node of the
// (feature-computed) training graphs.
void fit_degree_normalization(NormStats& stats, std::span<const TrafficGraph> graphs);

// Builds, computes node features and normalizes.
TrafficGraph build_normalized_graph(std::span<const FlowRecord> records, const NormStats& stats);

// Keeps the listed edges (in order) and compacts nodes, preserving the
// relative order of surviving node indices. Node features are recomputed.
TrafficGraph edge_subgraph(const TrafficGraph& graph, std::span<const std::uint32_t> kept_edges);

std::vector<double> flow_embedding(const TrafficGraph& graph, std::size_t edge, FeatureKind kind);

// Writes embeddings of edges [begin, end) into rows of `out` starting at
// column `col`.
void embed_edges_into(const TrafficGraph& graph, FeatureKind kind, std::size_t begin, std::size_t end,
                      nn::Matrix& out, Eigen::Index col = 0);
nn::Matrix embed_edges(const TrafficGraph& graph, FeatureKind kind, std::size_t begin, std::size_t end);
nn::Matrix embed_all(const TrafficGraph& graph, FeatureKind kind);

// Mean of all edge embeddings of one kind.
std::vector<double> readout(const TrafficGraph& graph, FeatureKind kind);

struct GraphReadout {
    std::vector<double> g_avg;
    std::vector<double> g_deg;
};

GraphReadout compute_readout(const TrafficGraph& graph);

// Debug dump: edges as "u,v,f1,...,fd,label" and nodes as "ip,index".
void write_graph_dump(const TrafficGraph& graph, const std::filesystem::path& edge_path,
                      const std::filesystem::path& node_path);

}  // namespace flowmoe
