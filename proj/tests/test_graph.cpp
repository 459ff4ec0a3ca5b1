#include "flowmoe/error.hpp"
#include "flowmoe/graph.hpp"

#include "support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

using namespace flowmoe;
using testing::flow;

TEST_CASE("first-appearance interning") {
    std::vector<FlowRecord> recs = {flow("A", "B", {1}), flow("A", "C", {2})};
    const auto g = build_graph(recs);
    CHECK(g.node_count() == 3);
    CHECK(g.edge_count() == 2);
    CHECK(g.node_of_ip.at("A") == 0);
    CHECK(g.node_of_ip.at("B") == 1);
    CHECK(g.node_of_ip.at("C") == 2);
    CHECK_FALSE(g.features_ready);
}

TEST_CASE("identical records become parallel edges") {
    std::vector<FlowRecord> recs = {flow("A", "B", {1}), flow("A", "B", {1})};
    auto g = build_graph(recs);
    CHECK(g.edge_count() == 2);
    CHECK(g.node_count() == 2);
    compute_node_features(g);
    CHECK(g.h_deg[0] == 2.0);
}

TEST_CASE("hash interning agrees with a sort-based interner") {
    const auto recs = testing::random_records(100000, 5000, 1, 9);
    const auto g = build_graph(recs);

    std::vector<std::string> ips;
    for (const auto& r : recs) {
        ips.push_back(r.src_ip);
        ips.push_back(r.dst_ip);
    }
    std::sort(ips.begin(), ips.end());
    ips.erase(std::unique(ips.begin(), ips.end()), ips.end());
    REQUIRE(g.node_count() == ips.size());

    // Canonical relabel: node -> rank of its IP in sorted order.
    std::vector<std::size_t> canon(g.node_count());
    for (std::size_t u = 0; u < g.node_count(); ++u)
        canon[u] = static_cast<std::size_t>(std::lower_bound(ips.begin(), ips.end(), g.node_ips[u]) - ips.begin());
    for (std::size_t e = 0; e < recs.size(); ++e) {
        const auto su = static_cast<std::size_t>(std::lower_bound(ips.begin(), ips.end(), recs[e].src_ip) - ips.begin());
        const auto sv = static_cast<std::size_t>(std::lower_bound(ips.begin(), ips.end(), recs[e].dst_ip) - ips.begin());
        if (canon[g.src[e]] != su || canon[g.dst[e]] != sv) {
            FAIL("edge " << e << " differs from the sort-based graph");
        }
    }
    // First appearance: the first edge touching node u precedes that of u + 1.
    std::vector<std::size_t> first(g.node_count(), recs.size() * 2);
    for (std::size_t e = 0; e < g.edge_count(); ++e) {
        first[g.src[e]] = std::min(first[g.src[e]], 2 * e);
        first[g.dst[e]] = std::min(first[g.dst[e]], 2 * e + 1);
    }
    CHECK(std::is_sorted(first.begin(), first.end()));
}

TEST_CASE("two-edge node features") {
    std::vector<FlowRecord> recs = {flow("X", "U", {10, 2}), flow("U", "Y", {20, 4})};
    auto g = build_graph(recs);
    compute_node_features(g);
    const auto u = g.node_of_ip.at("U");
    CHECK(g.avg_row(u)[0] == 15.0);
    CHECK(g.avg_row(u)[1] == 3.0);
    CHECK(g.h_deg[u] == 2.0);
}

TEST_CASE("isolated pair") {
    std::vector<FlowRecord> recs = {flow("A", "B", {3, -1})};
    auto g = build_graph(recs);
    compute_node_features(g);
    for (std::size_t u = 0; u < 2; ++u) {
        CHECK(g.avg_row(u)[0] == 3.0);
        CHECK(g.avg_row(u)[1] == -1.0);
        CHECK(g.h_deg[u] == 1.0);
    }
}

TEST_CASE("self loop counts as incoming and outgoing") {
    std::vector<FlowRecord> recs = {flow("A", "A", {4}), flow("A", "B", {1})};
    auto g = build_graph(recs);
    compute_node_features(g);
    CHECK(g.h_deg[0] == 3.0);
    CHECK(g.avg_row(0)[0] == doctest::Approx(3.0));  // (4 + 4 + 1) / 3
}

TEST_CASE("node features match the brute-force oracle") {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const auto g = testing::random_graph(500, 60, 3, seed);
        const auto naive = testing::naive_node_features(g);
        for (std::size_t u = 0; u < g.node_count(); ++u) {
            CHECK(g.h_deg[u] == naive.deg[u]);
            for (std::size_t k = 0; k < 3; ++k) CHECK(g.h_avg[u * 3 + k] == naive.avg[u * 3 + k]);
        }
    }
}

TEST_CASE("degree sum is twice the edge count") {
    const auto g = testing::random_graph(777, 90, 2, 4);
    CHECK(std::accumulate(g.h_deg.begin(), g.h_deg.end(), 0.0) == 2.0 * 777);
    for (std::size_t u = 0; u < g.node_count(); ++u) CHECK(g.h_deg[u] >= 1.0);
}

TEST_CASE("constant edge features give constant averages") {
    auto recs = testing::random_records(300, 40, 2, 5);
    for (auto& r : recs) r.features = {0.375, -2.5};
    auto g = build_graph(recs);
    compute_node_features(g);
    for (std::size_t u = 0; u < g.node_count(); ++u) {
        CHECK(g.avg_row(u)[0] == doctest::Approx(0.375).epsilon(1e-14));
        CHECK(g.avg_row(u)[1] == doctest::Approx(-2.5).epsilon(1e-14));
    }
}

TEST_CASE("relabeling nodes permutes feature rows") {
    auto recs = testing::random_records(200, 30, 2, 6);
    auto g = build_graph(recs);
    compute_node_features(g);
    std::reverse(recs.begin(), recs.end());  // changes first-appearance order
    auto h = build_graph(recs);
    compute_node_features(h);
    REQUIRE(g.node_count() == h.node_count());
    for (std::size_t u = 0; u < g.node_count(); ++u) {
        const auto v = h.node_of_ip.at(g.node_ips[u]);
        CHECK(g.h_deg[u] == h.h_deg[v]);
        for (std::size_t k = 0; k < 2; ++k) CHECK(g.avg_row(u)[k] == doctest::Approx(h.avg_row(v)[k]).epsilon(1e-12));
    }
}

TEST_CASE("embedding layout") {
    std::vector<FlowRecord> recs;
    for (int i = 0; i < 3; ++i) recs.push_back(flow("U", "a" + std::to_string(i), {1, 1, 1, 1}));
    for (int i = 0; i < 4; ++i) recs.push_back(flow("b" + std::to_string(i), "V", {1, 1, 1, 1}));
    recs.push_back(flow("U", "V", {1, 1, 1, 1}));
    auto g = build_graph(recs);
    compute_node_features(g);
    const std::size_t e = 7;
    const auto deg = flow_embedding(g, e, FeatureKind::deg);
    REQUIRE(deg.size() == 6);
    CHECK(deg[0] == g.normalized_degree(g.node_of_ip.at("U")));
    CHECK(deg[0] == std::log1p(4.0));
    CHECK(deg[1] == std::log1p(5.0));
    for (std::size_t k = 2; k < 6; ++k) CHECK(deg[k] == 1.0);
    CHECK(flow_embedding(g, e, FeatureKind::avg).size() == 12);
    CHECK(flow_embedding(g, e, FeatureKind::avg_deg).size() == 14);
    CHECK(embedding_dim(FeatureKind::avg, 4) == 12);
    CHECK(embedding_dim(FeatureKind::deg, 4) == 6);
    CHECK_THROWS_AS(flow_embedding(g, 8, FeatureKind::avg), DimensionError);
}

TEST_CASE("permuting the edge feature permutes only the tail") {
    std::vector<FlowRecord> recs = {flow("A", "B", {1, 2, 3}), flow("B", "C", {4, 5, 6})};
    auto g = build_graph(recs);
    compute_node_features(g);
    const auto before = flow_embedding(g, 1, FeatureKind::avg);
    // Reverse edge 1's feature in place without touching node features.
    auto f = g.feature(1);
    std::reverse(f.begin(), f.end());
    const auto after = flow_embedding(g, 1, FeatureKind::avg);
    for (std::size_t k = 0; k < 6; ++k) CHECK(before[k] == after[k]);
    for (std::size_t k = 0; k < 3; ++k) CHECK(after[6 + k] == before[8 - k]);
}

TEST_CASE("batch embedding equals per-edge embedding") {
    const auto g = testing::random_graph(120, 20, 3, 8);
    for (FeatureKind kind : {FeatureKind::avg, FeatureKind::deg, FeatureKind::avg_deg}) {
        const nn::Matrix all = embed_all(g, kind);
        for (std::size_t e = 0; e < g.edge_count(); ++e) {
            const auto v = flow_embedding(g, e, kind);
            for (std::size_t k = 0; k < v.size(); ++k) CHECK(all(static_cast<Eigen::Index>(e), static_cast<Eigen::Index>(k)) == v[k]);
        }
    }
}

TEST_CASE("readout") {
    std::vector<FlowRecord> one = {flow("A", "B", {2, 3})};
    auto g1 = build_graph(one);
    compute_node_features(g1);
    CHECK(readout(g1, FeatureKind::avg) == flow_embedding(g1, 0, FeatureKind::avg));

    auto recs = testing::random_records(200, 25, 2, 10);
    auto g = build_graph(recs);
    compute_node_features(g);
    const auto r = readout(g, FeatureKind::avg);
    std::vector<double> naive(6, 0.0);
    for (std::size_t e = 0; e < 200; ++e) {
        const auto v = flow_embedding(g, e, FeatureKind::avg);
        for (std::size_t k = 0; k < 6; ++k) naive[k] += v[k];
    }
    for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(r[k] - naive[k] / 200.0) < 1e-10);

    auto doubled = recs;
    doubled.insert(doubled.end(), recs.begin(), recs.end());
    auto g2 = build_graph(doubled);
    compute_node_features(g2);
    const auto r2 = readout(g2, FeatureKind::deg);
    const auto r1 = readout(g, FeatureKind::deg);
    // Degrees double, so only the flow-feature tail is comparable for deg.
    for (std::size_t k = 2; k < 4; ++k) CHECK(r2[k] == doctest::Approx(r1[k]).epsilon(1e-12));
    const auto ra = readout(g2, FeatureKind::avg);
    for (std::size_t k = 0; k < 6; ++k) CHECK(ra[k] == doctest::Approx(r[k]).epsilon(1e-12));

    auto shuffled = recs;
    std::rotate(shuffled.begin(), shuffled.begin() + 73, shuffled.end());
    auto g3 = build_graph(shuffled);
    compute_node_features(g3);
    const auto r3 = readout(g3, FeatureKind::avg);
    for (std::size_t k = 0; k < 6; ++k) CHECK(r3[k] == doctest::Approx(r[k]).epsilon(1e-12));
}

TEST_CASE("normalization pipeline") {
    const auto recs = testing::random_records(300, 30, 2, 11);
    NormStats s = fit_normalization(recs);
    std::vector<TrafficGraph> train;
    train.push_back(build_graph(recs));
    compute_node_features(train.back());
    fit_degree_normalization(s, train);

    const auto g = build_normalized_graph(recs, s);
    CHECK(g.normalized);
    for (std::size_t e = 0; e < g.edge_count(); ++e)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(g.feature(e)[k] == doctest::Approx((recs[e].features[k] - s.mean[k]) / s.std[k]).epsilon(1e-14));

    // Averaging commutes with the affine z-score.
    const auto& raw = train.back();
    for (std::size_t u = 0; u < g.node_count(); ++u)
        for (std::size_t k = 0; k < 2; ++k)
            CHECK(g.avg_row(u)[k] == doctest::Approx((raw.avg_row(u)[k] - s.mean[k]) / s.std[k]).epsilon(1e-10));

    // Degree z-scores have zero mean over the training nodes.
    double sum = 0.0;
    for (std::size_t u = 0; u < g.node_count(); ++u) sum += g.normalized_degree(u);
    CHECK(std::abs(sum / static_cast<double>(g.node_count())) < 1e-10);

    TrafficGraph again = g;
    CHECK_THROWS_AS(normalize_graph(again, s), DimensionError);
}

TEST_CASE("edge subgraph compacts nodes") {
    std::vector<FlowRecord> recs = {flow("A", "B", {1}), flow("C", "D", {2}), flow("B", "C", {3})};
    auto g = build_graph(recs);
    compute_node_features(g);
    const std::uint32_t keep[] = {0, 2};
    const auto s = edge_subgraph(g, keep);
    CHECK(s.node_count() == 3);
    CHECK(s.node_ips == std::vector<std::string>{"A", "B", "C"});
    CHECK(s.h_deg == std::vector<double>{1, 2, 1});
    CHECK(s.avg_row(1)[0] == 2.0);
}

TEST_CASE("graph dump") {
    std::vector<FlowRecord> recs = {flow("A", "B", {1.5}, 1), flow("B", "A", {2}, 0)};
    auto g = build_graph(recs);
    compute_node_features(g);
    const auto dir = testing::temp_dir("dump");
    write_graph_dump(g, dir / "edges.csv", dir / "nodes.csv");
    std::ifstream edges(dir / "edges.csv"), nodes(dir / "nodes.csv");
    std::string line;
    std::getline(edges, line);
    CHECK(line == "0,1,1.5,1");
    std::getline(nodes, line);
    CHECK(line == "A,0");
}
