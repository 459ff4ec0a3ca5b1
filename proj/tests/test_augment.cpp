#include "flowmoe/augment.hpp"
#include "flowmoe/error.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace flowmoe;

namespace {

bool same_edges(const TrafficGraph& a, const TrafficGraph& b) {
    return a.src == b.src && a.dst == b.dst && a.edge_features == b.edge_features && a.labels == b.labels &&
           a.flow_ids == b.flow_ids && a.node_ips == b.node_ips;
}

AugmentParams params(double alpha, double beta, double gamma, std::uint64_t seed,
                     KeepMode mode = KeepMode::literal) {
    AugmentParams p{alpha, beta, gamma, seed, mode};
    return p;
}

}  // namespace

TEST_CASE("identity parameters leave the graph bit-identical") {
    const auto g = testing::random_graph(400, 50, 4, 1);
    for (auto p : {params(0, 0, 1, 5), params(0, 0, 0, 5, KeepMode::complement)}) {
        CHECK(p.is_identity());
        const auto out = augment(g, p);
        CHECK(same_edges(g, out));
        CHECK(out.h_avg == g.h_avg);
        CHECK(out.h_deg == g.h_deg);
        CHECK(same_edges(perturb_statistics(g, p), g));
        CHECK(same_edges(drop_edges(g, p), g));
    }
}

TEST_CASE("augment never mutates its input") {
    const auto g = testing::random_graph(300, 40, 3, 2);
    const auto copy = g;
    const auto out = augment(g, params(0.2, 0.5, 0.5, 9));
    CHECK(same_edges(g, copy));
    CHECK(g.h_avg == copy.h_avg);
    CHECK_FALSE(same_edges(out, g));
}

TEST_CASE("augmented node features satisfy the recompute oracle") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        const auto g = testing::random_graph(500, 70, 3, seed);
        const auto out = augment(g, params(0.2, 0.5, 0.5, seed * 31));
        if (out.empty()) continue;
        const auto naive = testing::naive_node_features(out);
        REQUIRE(out.h_deg.size() == out.node_count());
        for (std::size_t u = 0; u < out.node_count(); ++u) {
            CHECK(out.h_deg[u] == naive.deg[u]);
            for (std::size_t k = 0; k < 3; ++k) CHECK(out.h_avg[u * 3 + k] == naive.avg[u * 3 + k]);
        }
        // No orphaned nodes after compaction.
        for (double d : out.h_deg) CHECK(d >= 1.0);
    }
}

TEST_CASE("surviving edges keep their records and order") {
    const auto g = testing::random_graph(500, 70, 2, 3);
    const auto out = drop_edges(g, params(0, 0, 0.3, 4));
    REQUIRE(out.edge_count() > 0);
    std::size_t cursor = 0;
    for (std::size_t e = 0; e < out.edge_count(); ++e) {
        while (g.flow_ids[cursor] != out.flow_ids[e]) ++cursor;
        CHECK(g.node_ips[g.src[cursor]] == out.node_ips[out.src[e]]);
        CHECK(g.node_ips[g.dst[cursor]] == out.node_ips[out.dst[e]]);
        CHECK(g.labels[cursor] == out.labels[e]);
        CHECK(g.feature(cursor)[0] == out.feature(e)[0]);
    }
}

TEST_CASE("bias only: one shared offset bounded by alpha") {
    const auto g = testing::random_graph(1000, 100, 4, 4);
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto out = perturb_statistics(g, params(0.7, 0, 1, seed));
        const double b = out.edge_features[0] - g.edge_features[0];
        CHECK(std::abs(b) <= 0.7);
        for (std::size_t i = 0; i < g.edge_features.size(); ++i)
            CHECK(out.edge_features[i] - g.edge_features[i] == doctest::Approx(b).epsilon(1e-12));
    }
}

TEST_CASE("noise only: zero-mean shift within three standard errors") {
    const auto g = testing::random_graph(25000, 2000, 4, 5);  // 10^5 elements
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto out = perturb_statistics(g, params(0, 1.0, 1, seed));
        const std::size_t n = g.edge_features.size();
        double sum = 0.0, sq = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = out.edge_features[i] - g.edge_features[i];
            sum += d;
            sq += d * d;
        }
        const double mean = sum / static_cast<double>(n);
        const double sd = std::sqrt(sq / static_cast<double>(n) - mean * mean);
        CHECK(sd <= 1.0 + 0.02);
        CHECK(std::abs(mean) <= 3.0 * sd / std::sqrt(static_cast<double>(n)) + 1e-15);
    }
}

TEST_CASE("perturbation is deterministic per seed") {
    const auto g = testing::random_graph(200, 30, 2, 6);
    CHECK(same_edges(augment(g, params(0.2, 0.5, 0.5, 77)), augment(g, params(0.2, 0.5, 0.5, 77))));
    CHECK_FALSE(augment(g, params(0.2, 0.5, 1, 77)).edge_features == augment(g, params(0.2, 0.5, 1, 78)).edge_features);
}

TEST_CASE("kept fraction follows the per-call keep probability") {
    const auto g = testing::random_graph(20000, 3000, 1, 7);
    const double m = static_cast<double>(g.edge_count());
    double total = 0.0;
    const int draws = 200;
    for (int s = 0; s < draws; ++s) {
        const double kept = static_cast<double>(drop_edges(g, params(0, 0, 0.5, static_cast<std::uint64_t>(s))).edge_count()) / m;
        // a in [0.5, 1]; binomial slack of 3 sd at a = 0.5
        CHECK(kept >= 0.5 - 3.0 * std::sqrt(0.25 / m));
        CHECK(kept <= 1.0);
        total += kept;
    }
    // E[a] = 0.75, sd of the mean over draws ~ 0.144 / sqrt(200)
    CHECK(std::abs(total / draws - 0.75) < 0.035);

    double comp = 0.0;
    for (int s = 0; s < 50; ++s)
        comp += static_cast<double>(drop_edges(g, params(0, 0, 0.2, static_cast<std::uint64_t>(s), KeepMode::complement)).edge_count()) / m;
    // complement: a ~ U(0.8, 1)
    CHECK(std::abs(comp / 50 - 0.9) < 0.03);
}

TEST_CASE("dropping every edge yields the empty sentinel") {
    std::vector<FlowRecord> one = {testing::flow("A", "B", {1})};
    auto g = build_graph(one);
    compute_node_features(g);
    bool seen = false;
    for (std::uint64_t s = 0; s < 100 && !seen; ++s) {
        const auto out = augment(g, params(0.1, 0.1, 0.0, s));
        if (out.empty()) {
            seen = true;
            CHECK(out.node_count() == 0);
        }
    }
    CHECK(seen);
}

TEST_CASE("parameter validation") {
    CHECK_THROWS_AS(params(-1, 0, 1, 0).validate(), ConfigError);
    CHECK_THROWS_AS(params(0, -0.1, 1, 0).validate(), ConfigError);
    CHECK_THROWS_AS(params(0, 0, 1.5, 0).validate(), ConfigError);
    CHECK_THROWS_AS(params(std::nan(""), 0, 1, 0).validate(), ConfigError);
    CHECK(keep_mode_from_string("complement") == KeepMode::complement);
    CHECK_THROWS_AS(keep_mode_from_string("inverse"), ConfigError);
}
