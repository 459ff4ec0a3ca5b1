#pragma once

// Fixture builders shared by the unit tests.

#include "flowmoe/graph.hpp"
#include "flowmoe/ingest.hpp"
#include "flowmoe/random.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace testing {

inline flowmoe::FlowRecord flow(std::string src, std::string dst, std::vector<double> f, int label = 0,
                                double ts = 0.0) {
    flowmoe::FlowRecord r;
    r.src_ip = std::move(src);
    r.dst_ip = std::move(dst);
    r.features = std::move(f);
    r.label = label;
    r.timestamp = ts;
    return r;
}

// Random labeled records over `nodes` IPs (self loops and parallel edges
// included by chance).
inline std::vector<flowmoe::FlowRecord> random_records(std::size_t count, std::size_t nodes, std::size_t d,
                                                       std::uint64_t seed) {
    flowmoe::Rng rng(seed);
    std::vector<flowmoe::FlowRecord> out;
    for (std::size_t i = 0; i < count; ++i) {
        std::vector<double> f(d);
        for (auto& x : f) x = rng.normal(0.0, 1.0);
        auto r = flow("10.0.0." + std::to_string(rng.index(nodes)), "10.0.0." + std::to_string(rng.index(nodes)), f,
                      static_cast<int>(rng.index(2)), static_cast<double>(i));
        r.flow_id = i;
        out.push_back(std::move(r));
    }
    return out;
}

inline flowmoe::TrafficGraph random_graph(std::size_t edges, std::size_t nodes, std::size_t d, std::uint64_t seed) {
    const auto recs = random_records(edges, nodes, d, seed);
    auto g = flowmoe::build_graph(recs);
    flowmoe::compute_node_features(g);
    return g;
}

// Brute-force node features: every node scans every edge.
struct NaiveFeatures {
    std::vector<double> avg;  // n x d
    std::vector<double> deg;
};

inline NaiveFeatures naive_node_features(const flowmoe::TrafficGraph& g) {
    const std::size_t n = g.node_count(), d = g.feature_dim;
    NaiveFeatures out{std::vector<double>(n * d, 0.0), std::vector<double>(n, 0.0)};
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t e = 0; e < g.edge_count(); ++e) {
            const int hits = (g.src[e] == u) + (g.dst[e] == u);
            for (int h = 0; h < hits; ++h) {
                out.deg[u] += 1.0;
                for (std::size_t k = 0; k < d; ++k) out.avg[u * d + k] += g.feature(e)[k];
            }
        }
        for (std::size_t k = 0; k < d; ++k) out.avg[u * d + k] /= out.deg[u];
    }
    return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("flowmoe_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

}  // namespace testing
