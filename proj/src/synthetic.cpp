#include "flowmoe/synthetic.hpp"

#include "flowmoe/error.hpp"
#include "flowmoe/graph.hpp"
#include "flowmoe/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

namespace flowmoe {

void SyntheticConfig::validate() const {
    if (feature_dim < 1) throw ConfigError("synth.feature_dim must be >= 1");
    if (train_windows < 1 || test_windows < 1) throw ConfigError("synth needs at least one train and one test window");
    if (flows_per_window < 2) throw ConfigError("synth.flows_per_window must be >= 2");
    if (!(malicious_fraction > 0.0 && malicious_fraction < 1.0))
        throw ConfigError("invalid class balance: synth.malicious_fraction must lie strictly between 0 and 1");
    if (!(benign_degree_mean >= 1.0) || !(malicious_degree_mean >= 1.0))
        throw ConfigError("synth degree means must be >= 1");
    if (!std::isfinite(node_shift) || node_shift < 0.0) throw ConfigError("synth.node_shift must be >= 0");
    if (server_count < 1) throw ConfigError("synth.server_count must be >= 1");
    if (!(window_seconds > 0.0)) throw ConfigError("synth.window_seconds must be positive");
    train_augment.validate();
}

SchemaConfig synthetic_schema(std::size_t d) {
    static const char* names[] = {"in_bytes", "out_bytes", "in_pkts", "out_pkts", "duration_ms"};
    SchemaConfig s;
    for (std::size_t k = 0; k < d; ++k) s.feature_cols.push_back(k < 5 ? names[k] : "feat_" + std::to_string(k));
    return s;
}

namespace {

// Raw = offset + scale * latent, per column.
double raw_offset(std::size_t k) {
    static const double v[] = {1500.0, 900.0, 12.0, 10.0, 800.0};
    return k < 5 ? v[k] : 100.0;
}
double raw_scale(std::size_t k) {
    static const double v[] = {400.0, 250.0, 3.0, 2.5, 200.0};
    return k < 5 ? v[k] : 10.0;
}

std::string ip4(unsigned a, std::uint64_t n) {
    return std::to_string(a) + "." + std::to_string((n >> 16) & 0xff) + "." + std::to_string((n >> 8) & 0xff) + "." +
           std::to_string(n & 0xff);
}

struct Flow {
    std::string src, dst;
    std::vector<double> latent;
    int label;
};

std::vector<FlowRecord> generate_window(const SyntheticConfig& c, Rng& rng, std::size_t window_index,
                                        std::uint64_t& client_counter, std::uint64_t& attacker_counter,
                                        const std::vector<double>& server_cdf) {
    const std::size_t d = c.feature_dim;
    const std::size_t total = c.flows_per_window;
    const auto n_mal = static_cast<std::size_t>(std::llround(c.malicious_fraction * static_cast<double>(total)));
    const std::size_t n_ben = total - n_mal;

    auto pick_server = [&]() {
        const double u = rng.uniform();
        const auto it = std::upper_bound(server_cdf.begin(), server_cdf.end(), u);
        const auto s = static_cast<std::size_t>(std::min<std::ptrdiff_t>(it - server_cdf.begin(),
                                                                         static_cast<std::ptrdiff_t>(server_cdf.size()) - 1));
        return ip4(192, 0xa80000 + s);
    };

    std::vector<Flow> flows;
    flows.reserve(total);
    const double mal_sd = std::sqrt(1.0 + c.node_shift * c.node_shift);
    for (std::size_t made = 0; made < n_mal;) {
        const std::string src = ip4(172, 0x100000 + attacker_counter++);
        const std::size_t k = std::min<std::size_t>(1 + rng.poisson(c.malicious_degree_mean - 1.0), n_mal - made);
        for (std::size_t j = 0; j < k; ++j) {
            Flow f{src, pick_server(), std::vector<double>(d), 1};
            for (auto& x : f.latent) x = rng.normal(0.0, mal_sd);
            flows.push_back(std::move(f));
        }
        made += k;
    }
    std::vector<double> shift(d);
    for (std::size_t made = 0; made < n_ben;) {
        const std::string src = ip4(10, client_counter++);
        for (auto& s : shift) s = rng.bernoulli(0.5) ? c.node_shift : -c.node_shift;
        const std::size_t k = std::min<std::size_t>(1 + rng.poisson(c.benign_degree_mean - 1.0), n_ben - made);
        for (std::size_t j = 0; j < k; ++j) {
            Flow f{src, pick_server(), std::vector<double>(d), 0};
            for (std::size_t i = 0; i < d; ++i) f.latent[i] = shift[i] + rng.normal();
            flows.push_back(std::move(f));
        }
        made += k;
    }

    // Interleave flows and give them sorted arrival times inside the window.
    for (std::size_t i = flows.size(); i > 1; --i) std::swap(flows[i - 1], flows[rng.index(i)]);
    std::vector<double> ts(flows.size());
    const double t0 = static_cast<double>(window_index) * c.window_seconds;
    for (auto& t : ts) t = t0 + rng.uniform() * c.window_seconds;
    std::sort(ts.begin(), ts.end());

    std::vector<FlowRecord> out(flows.size());
    for (std::size_t i = 0; i < flows.size(); ++i) {
        auto& r = out[i];
        r.src_ip = std::move(flows[i].src);
        r.dst_ip = std::move(flows[i].dst);
        r.timestamp = ts[i];
        r.label = flows[i].label;
        r.features.resize(d);
        for (std::size_t k = 0; k < d; ++k) r.features[k] = raw_offset(k) + raw_scale(k) * flows[i].latent[k];
    }
    return out;
}

// Applies graph augmentation to a raw window and maps the surviving edges
// back to records (matched by flow_id, which is the row inside the window).
std::vector<FlowRecord> augment_window(const std::vector<FlowRecord>& window, const AugmentParams& params) {
    std::vector<FlowRecord> rows = window;
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].flow_id = i;
    TrafficGraph g = build_graph(rows);
    compute_node_features(g);
    const TrafficGraph a = augment(g, params);
    std::vector<FlowRecord> out;
    out.reserve(a.edge_count());
    for (std::size_t e = 0; e < a.edge_count(); ++e) {
        FlowRecord r = rows[a.flow_ids[e]];
        auto f = a.feature(e);
        r.features.assign(f.begin(), f.end());
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<FlowRecord> concat(const std::vector<std::vector<FlowRecord>>& windows) {
    std::vector<FlowRecord> out;
    for (const auto& w : windows) out.insert(out.end(), w.begin(), w.end());
    for (std::size_t i = 0; i < out.size(); ++i) out[i].flow_id = i;
    return out;
}

}  // namespace

std::vector<FlowRecord> SyntheticDataset::train_records() const { return concat(train_windows); }
std::vector<FlowRecord> SyntheticDataset::test_records() const { return concat(test_windows); }

SyntheticDataset generate_synthetic(const SyntheticConfig& c, std::uint64_t seed) {
    c.validate();
    SyntheticDataset ds;
    ds.schema = synthetic_schema(c.feature_dim);

    std::vector<double> cdf(c.server_count);
    double acc = 0.0;
    for (std::size_t s = 0; s < c.server_count; ++s) {
        acc += 1.0 / std::pow(static_cast<double>(s + 1), c.server_zipf);
        cdf[s] = acc;
    }
    for (auto& x : cdf) x /= acc;

    Rng rng(derive_seed(seed, {0x73796e74}));
    std::uint64_t clients = 1, attackers = 1;
    const std::size_t windows = c.train_windows + c.test_windows;
    for (std::size_t w = 0; w < windows; ++w) {
        auto records = generate_window(c, rng, w, clients, attackers, cdf);
        if (w < c.train_windows) {
            if (!c.train_augment.is_identity()) {
                AugmentParams p = c.train_augment;
                p.seed = derive_seed(seed, {0x70726561, w});
                records = augment_window(records, p);
            }
            ds.train_windows.push_back(std::move(records));
        } else {
            ds.test_windows.push_back(std::move(records));
        }
    }
    for (auto* set : {&ds.train_windows, &ds.test_windows}) {
        std::uint64_t id = 0;
        for (auto& w : *set)
            for (auto& r : w) r.flow_id = id++;
    }
    return ds;
}

}  // namespace flowmoe
