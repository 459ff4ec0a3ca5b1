#include "flowmoe/error.hpp"
#include "flowmoe/experts.hpp"
#include "flowmoe/metrics.hpp"
#include "flowmoe/synthetic.hpp"
#include "flowmoe/training.hpp"

#include "support.hpp"

#include <doctest.h>

#include <cmath>

using namespace flowmoe;

namespace {

NormStats identity_norm(std::size_t d) {
    NormStats s;
    s.mean.assign(d, 0.0);
    s.std.assign(d, 1.0);
    return s;
}

ExpertBundle zero_bundle(std::size_t d) {
    ExpertBundle b;
    b.norm = identity_norm(d);
    ModelShape shape;
    b.avg_expert = nn::mlp_zero(shape.dims(3 * d));
    b.deg_expert = nn::mlp_zero(shape.dims(d + 2));
    return b;
}

}  // namespace

TEST_CASE("zero experts predict one half everywhere") {
    const auto g = testing::random_graph(50, 10, 4, 1);
    const auto out = expert_predict(zero_bundle(4), g);
    REQUIRE(out.size() == 50);
    CHECK((out.p_avg.array() == 0.5).all());
    CHECK((out.p_deg.array() == 0.5).all());
}

TEST_CASE("bundle dimension checks") {
    auto b = init_experts(identity_norm(4), ModelShape{}, 1);
    CHECK_NOTHROW(b.validate());
    CHECK(b.avg_expert.input_dim() == 12);
    CHECK(b.deg_expert.input_dim() == 6);
    const auto g3 = testing::random_graph(20, 5, 3, 2);
    CHECK_THROWS_AS(expert_predict(b, g3), DimensionError);
    std::swap(b.avg_expert, b.deg_expert);
    CHECK_THROWS_AS(b.validate(), DimensionError);
}

TEST_CASE("batch size does not change predictions") {
    const auto b = init_experts(identity_norm(3), ModelShape{}, 4);
    const auto g = testing::random_graph(333, 40, 3, 5);
    const auto one = expert_predict(b, g, 1);
    const auto big = expert_predict(b, g, 4096);
    const auto odd = expert_predict(b, g, 17);
    CHECK((one.p_avg - big.p_avg).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((one.p_deg - big.p_deg).cwiseAbs().maxCoeff() < 1e-9);
    CHECK((odd.p_avg - big.p_avg).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("edge order does not change an edge's prediction") {
    const auto b = init_experts(identity_norm(2), ModelShape{}, 6);
    auto recs = testing::random_records(120, 15, 2, 7);
    auto g = build_graph(recs);
    compute_node_features(g);
    std::reverse(recs.begin(), recs.end());
    auto h = build_graph(recs);
    compute_node_features(h);
    const auto pg = expert_predict(b, g), ph = expert_predict(b, h);
    for (std::size_t e = 0; e < 120; ++e) {
        const auto i = static_cast<Eigen::Index>(e), j = static_cast<Eigen::Index>(119 - e);
        CHECK(pg.p_avg(i, 1) == doctest::Approx(ph.p_avg(j, 1)).epsilon(1e-12));
        CHECK(pg.p_deg(i, 1) == doctest::Approx(ph.p_deg(j, 1)).epsilon(1e-12));
    }
}

TEST_CASE("per-edge losses compose cross entropy") {
    const auto b = init_experts(identity_norm(2), ModelShape{}, 8);
    const auto g = testing::random_graph(100, 20, 2, 9);
    auto out = expert_predict(b, g);
    CHECK_FALSE(out.has_losses());
    const auto y = g.edge_labels();
    expert_losses(out, y);
    REQUIRE(out.has_losses());
    for (std::size_t e = 0; e < 100; ++e) {
        const auto i = static_cast<Eigen::Index>(e);
        const double pa[2] = {out.p_avg(i, 0), out.p_avg(i, 1)};
        CHECK(out.loss_avg[e] == nn::cross_entropy(pa, y[e]));
        CHECK(out.loss_avg[e] >= 0.0);
    }
    CHECK_THROWS_AS(expert_losses(out, std::vector<int>(5, 0)), DimensionError);

    auto half = expert_predict(zero_bundle(2), g);
    expert_losses(half, y);
    for (double l : half.loss_deg) CHECK(l == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("perfect predictions give near-zero loss") {
    ExpertOutputs o;
    o.p_avg = nn::Matrix(2, 2);
    o.p_avg << 1.0, 0.0, 0.0, 1.0;
    o.p_deg = o.p_avg;
    expert_losses(o, std::vector<int>{0, 1});
    for (double l : o.loss_avg) CHECK(l <= 1e-6);
}

TEST_CASE("summed training loss") {
    CHECK(expert_training_loss(std::vector<double>{0.2}, std::vector<double>{0.4}) == doctest::Approx(0.6));
    CHECK(expert_training_loss(std::vector<double>(3, 0.0), std::vector<double>(3, 0.0)) == 0.0);
    CHECK_THROWS_AS(expert_training_loss(std::vector<double>{}, std::vector<double>{}), TrainingError);
    Rng rng(3);
    std::vector<double> a(50), d(50);
    double direct = 0.0;
    for (int i = 0; i < 50; ++i) {
        a[i] = rng.uniform(0, 3);
        d[i] = rng.uniform(0, 3);
        direct += a[i] + d[i];
    }
    CHECK(std::abs(expert_training_loss(a, d) - direct / 50) < 1e-12);
}

TEST_CASE("experts are decoupled through the summed loss") {
    // Each expert's update depends only on its own term: training both
    // together leaves avg identical to training avg alone.
    std::vector<TrafficGraph> graphs;
    for (std::uint64_t s = 0; s < 3; ++s) graphs.push_back(testing::random_graph(200, 30, 2, s + 20));
    const auto init = init_experts(identity_norm(2), ModelShape{{8}, nn::Activation::relu}, 3);
    ClassifierTrainOptions opt;
    opt.train.epochs = 5;
    opt.augment = {0.2, 0.5, 0.5};
    const auto joint = train_experts(graphs, init, opt);

    nn::MlpModel alone = init.avg_expert;
    ClassifierSlot slot[1] = {{&alone, FeatureKind::avg}};
    train_classifiers(graphs, slot, opt);
    CHECK(alone == joint.bundle.avg_expert);
}

TEST_CASE("zero epochs return the initial bundle") {
    std::vector<TrafficGraph> graphs = {testing::random_graph(50, 10, 2, 1)};
    const auto init = init_experts(identity_norm(2), ModelShape{}, 3);
    ClassifierTrainOptions opt;
    opt.train.epochs = 0;
    const auto r = train_experts(graphs, init, opt);
    CHECK(r.bundle == init);
    CHECK(r.history.empty());
}

TEST_CASE("identity augmentation equals raw training") {
    std::vector<TrafficGraph> graphs = {testing::random_graph(80, 12, 2, 4), testing::random_graph(90, 12, 2, 5)};
    const auto init = init_experts(identity_norm(2), ModelShape{{8}, nn::Activation::relu}, 5);
    ClassifierTrainOptions raw;
    raw.train.epochs = 4;
    auto ident = raw;
    ident.augment = {0.0, 0.0, 1.0, 123};
    const auto a = train_experts(graphs, init, raw);
    const auto b = train_experts(graphs, init, ident);
    CHECK(a.bundle == b.bundle);
    REQUIRE(a.history.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) CHECK(a.history[i].loss == b.history[i].loss);
}

TEST_CASE("batched steps for large graphs") {
    std::vector<TrafficGraph> graphs = {testing::random_graph(300, 30, 2, 6)};
    const auto init = init_experts(identity_norm(2), ModelShape{{4}, nn::Activation::relu}, 6);
    ClassifierTrainOptions opt;
    opt.train.epochs = 2;
    opt.train.full_batch_edges = 100;
    opt.train.batch_size = 64;
    const auto a = train_experts(graphs, init, opt);
    const auto b = train_experts(graphs, init, opt);
    CHECK(a.bundle == b.bundle);
    CHECK_FALSE(a.bundle == init);

    const auto plan = plan_batches(300, opt.train, 9);
    REQUIRE(plan.size() == 5);
    std::vector<int> seen(300, 0);
    for (const auto& batch : plan)
        for (auto r : batch) ++seen[r];
    for (int s : seen) CHECK(s == 1);
    CHECK(plan_batches(100, opt.train, 9).empty());
}

TEST_CASE("inverse frequency weights balance the classes") {
    const std::vector<int> y = {0, 0, 0, 1};
    const auto w = inverse_frequency_weights(y);
    CHECK(w[0] == doctest::Approx(4.0 / 6.0));
    CHECK(w[3] == doctest::Approx(2.0));
    CHECK(w[0] * 3 == doctest::Approx(w[3]));
}

TEST_CASE("plain experts reach 0.95 on no-drift synthetic data") {
    SyntheticConfig sc;
    sc.train_windows = 6;
    sc.test_windows = 4;
    const auto ds = generate_synthetic(sc, 5);
    const auto data = prepare_windows(ds.train_windows, ds.test_windows);
    HyperConfig h;
    h.aug1 = AugmentParams::identity();
    const auto bundle = run_stage1(data, h).bundle;
    MetricsAccumulator avg, deg;
    for (const auto& g : data.test) {
        const auto out = expert_predict(bundle, g);
        const auto y = g.edge_labels();
        avg.add(argmax_classes(out.p_avg), y);
        deg.add(argmax_classes(out.p_deg), y);
    }
    CHECK(avg.report().acc >= 0.95);
    CHECK(deg.report().acc >= 0.95);
}
