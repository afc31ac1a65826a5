#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "micc/errors.hpp"
#include "micc/fusion.hpp"

using namespace micc;

namespace {
Tensor random_tensor(std::vector<size_t> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor t(std::move(shape));
    for (size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
    return t;
}

FusionNet make_net(ParamStore& store, size_t d_p, size_t layers, size_t hidden, double lambda, uint64_t seed) {
    Rng rng(seed);
    return FusionNet::create(store, "fusion", d_p, FusionNet::Config{layers, hidden, lambda}, rng);
}
}  // namespace

TEST_CASE("ffn scores: constant collapse and hand evaluation") {
    ParamStore store;
    FusionNet net = make_net(store, 3, 2, 4, 0.7, 1);
    store.at("fusion.w1").tensor.fill(0.0);
    store.at("fusion.b1").tensor.fill(0.0);
    store.at("fusion.b2").tensor.fill(1.25);
    Rng rng(2);
    Tensor patches = random_tensor({5, 3}, rng);
    Tensor scores = net.scores_value(patches);
    for (size_t i = 0; i < 5; ++i) CHECK(scores[i] == doctest::Approx(1.25).epsilon(1e-15));

    // hand-set 2x2 network on a single patch
    ParamStore store2;
    FusionNet tiny = make_net(store2, 2, 2, 2, 0.7, 3);
    store2.at("fusion.w1").tensor = Tensor::matrix(2, 2, {0.5, -1.0, 2.0, 0.25});
    store2.at("fusion.b1").tensor = Tensor::matrix(1, 2, {0.1, -0.2});
    store2.at("fusion.w2").tensor = Tensor::matrix(2, 1, {1.5, -0.5});
    store2.at("fusion.b2").tensor = Tensor::matrix(1, 1, {0.3});
    Tensor p = Tensor::matrix(1, 2, {0.4, -0.6});
    // hidden = relu(w1 p + b1); score = w2 . hidden + b2
    double h0 = std::max(0.0, 0.5 * 0.4 + 2.0 * (-0.6) + 0.1);
    double h1 = std::max(0.0, -1.0 * 0.4 + 0.25 * (-0.6) + (-0.2));
    double want = 1.5 * h0 + (-0.5) * h1 + 0.3;
    CHECK(tiny.scores_value(p)[0] == doctest::Approx(want).epsilon(1e-12));

    CHECK_THROWS_AS(net.scores_value(random_tensor({2, 5}, rng)), ShapeError);
    CHECK_THROWS_AS(make_net(store2, 2, 1, 2, 0.7, 4), ConfigError);  // fewer than 2 linear layers
}

TEST_CASE("deeper scorer stacks hidden layers") {
    ParamStore store;
    FusionNet net = make_net(store, 4, 4, 6, 0.5, 5);
    CHECK(store.at("fusion.w1").tensor.rows() == 4);
    CHECK(store.at("fusion.w2").tensor.rows() == 6);
    CHECK(store.at("fusion.w3").tensor.cols() == 6);
    CHECK(store.at("fusion.w4").tensor.cols() == 1);
    Rng rng(6);
    Tensor scores = net.scores_value(random_tensor({3, 4}, rng));
    CHECK(scores.rows() == 3);
    CHECK(scores.cols() == 1);
}

TEST_CASE("blend: endpoints and the raw affine rule") {
    Tape tape;
    Var fc = tape.constant(Tensor::column({1.0, 2.0, 3.0}));
    Var dot = tape.constant(Tensor::column({-1.0, 0.5, 4.0}));
    Var at1 = blend_scores(fc, dot, 1.0);
    Var at0 = blend_scores(fc, dot, 0.0);
    for (size_t i = 0; i < 3; ++i) {
        CHECK(at1.value()[i] == fc.value()[i]);
        CHECK(at0.value()[i] == dot.value()[i]);
    }
    // the paper's best WEIBO setting, computed raw
    Var weibo = blend_scores(fc, dot, 0.65);
    for (size_t i = 0; i < 3; ++i)
        CHECK(weibo.value()[i] == doctest::Approx(0.65 * fc.value()[i] + 0.35 * dot.value()[i]).epsilon(1e-15));

    Var short_dot = tape.constant(Tensor::column({1.0}));
    CHECK_THROWS_AS(blend_scores(fc, short_dot, 0.5), ShapeError);
    CHECK_THROWS_AS(blend_scores(fc, dot, 1.5), ConfigError);
}

TEST_CASE("fuse: weighted-sum endpoint, uniform weights, shift invariance") {
    ParamStore store;
    FusionNet net = make_net(store, 3, 2, 4, 0.0, 7);  // lambda 0: scores are the relevance vector
    Rng rng(8);
    Tensor t_feat = random_tensor({1, 3}, rng);
    Tensor selected = random_tensor({2, 3}, rng);

    // alpha = softmax([800, 0]) = exactly [1, 0] in float64
    FusedValue extreme = net.fuse_value(t_feat, selected, {800.0, 0.0});
    CHECK(extreme.alpha[0] == 1.0);
    CHECK(extreme.alpha[1] == 0.0);
    for (size_t j = 0; j < 3; ++j) CHECK(extreme.v_refact[j] == selected.at(0, j));

    // equal scores over four patches: alpha = 0.25 each, v_refact = mean
    Tensor four = random_tensor({4, 3}, rng);
    FusedValue uniform = net.fuse_value(t_feat, four, {2.0, 2.0, 2.0, 2.0});
    for (size_t i = 0; i < 4; ++i) CHECK(uniform.alpha[i] == doctest::Approx(0.25).epsilon(1e-12));
    for (size_t j = 0; j < 3; ++j) {
        double mean = (four.at(0, j) + four.at(1, j) + four.at(2, j) + four.at(3, j)) / 4.0;
        CHECK(uniform.v_refact[j] == doctest::Approx(mean).epsilon(1e-12));
    }

    // adding +5 to every blended score changes nothing
    FusedValue base = net.fuse_value(t_feat, four, {0.1, -0.4, 0.9, 0.2});
    FusedValue shifted = net.fuse_value(t_feat, four, {5.1, 4.6, 5.9, 5.2});
    for (size_t i = 0; i < 4; ++i) CHECK(std::fabs(base.alpha[i] - shifted.alpha[i]) < 1e-10);
    for (size_t j = 0; j < 3; ++j) CHECK(std::fabs(base.v_refact[j] - shifted.v_refact[j]) < 1e-10);
}

TEST_CASE("alpha is a probability distribution; padded slots are exact zeros") {
    ParamStore store;
    FusionNet net = make_net(store, 4, 2, 8, 0.7, 9);
    Rng rng(10);
    for (int trial = 0; trial < 20; ++trial) {
        size_t n = 1 + rng.index(6);
        Tensor t_feat = random_tensor({1, 4}, rng);
        Tensor sel = random_tensor({n, 4}, rng);
        std::vector<double> rel(n);
        for (auto& v : rel) v = rng.uniform(-2, 2);
        FusedValue f = net.fuse_value(t_feat, sel, rel, 8);
        REQUIRE(f.alpha.size() == 8);
        double sum = 0.0;
        for (size_t i = 0; i < 8; ++i) {
            if (i < n) {
                CHECK(f.alpha[i] >= 0.0);
                CHECK(f.alpha_valid[i]);
                sum += f.alpha[i];
            } else {
                CHECK(f.alpha[i] == 0.0);
                CHECK_FALSE(f.alpha_valid[i]);
            }
        }
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));

        // v_refact stays inside the per-coordinate hull of the selected patches
        for (size_t j = 0; j < 4; ++j) {
            double lo = sel.at(0, j), hi = sel.at(0, j);
            for (size_t i = 1; i < n; ++i) {
                lo = std::min(lo, sel.at(i, j));
                hi = std::max(hi, sel.at(i, j));
            }
            CHECK(f.v_refact[j] >= lo - 1e-12);
            CHECK(f.v_refact[j] <= hi + 1e-12);
        }
    }
}

TEST_CASE("lambda endpoint equivalences hold for the full fuse output") {
    Rng rng(11);
    Tensor t_feat = random_tensor({1, 3}, rng);
    Tensor sel = random_tensor({3, 3}, rng);
    std::vector<double> rel = {0.4, -1.2, 0.9};
    std::vector<double> zeros = {0.0, 0.0, 0.0};

    ParamStore s1, s2;
    FusionNet at1 = make_net(s1, 3, 2, 4, 1.0, 12);
    FusedValue with_rel = at1.fuse_value(t_feat, sel, rel);
    FusedValue with_zeros = at1.fuse_value(t_feat, sel, zeros);
    for (size_t i = 0; i < with_rel.feature.size(); ++i)
        CHECK(std::fabs(with_rel.feature[i] - with_zeros.feature[i]) <= 1e-12);

    FusionNet at0 = make_net(s2, 3, 2, 4, 0.0, 12);
    FusedValue a = at0.fuse_value(t_feat, sel, rel);
    // at lambda=0 the scorer is irrelevant: zero its weights, same output
    s2.at("fusion.w1").tensor.fill(0.0);
    s2.at("fusion.w2").tensor.fill(0.0);
    s2.at("fusion.b2").tensor.fill(7.0);
    FusedValue b = at0.fuse_value(t_feat, sel, rel);
    for (size_t i = 0; i < a.feature.size(); ++i) CHECK(std::fabs(a.feature[i] - b.feature[i]) <= 1e-12);
}

TEST_CASE("concatenation preserves both halves bit-exactly") {
    ParamStore store;
    FusionNet net = make_net(store, 5, 2, 4, 0.3, 13);
    Rng rng(14);
    Tensor t_feat = random_tensor({1, 5}, rng);
    Tensor sel = random_tensor({4, 5}, rng);
    FusedValue f = net.fuse_value(t_feat, sel, {1, 2, 3, 4});
    REQUIRE(f.feature.cols() == 10);
    for (size_t j = 0; j < 5; ++j) {
        CHECK(f.feature[j] == t_feat[j]);
        CHECK(f.feature[5 + j] == f.v_refact[j]);
    }
}

TEST_CASE("fuse rejects an empty selection") {
    ParamStore store;
    FusionNet net = make_net(store, 3, 2, 4, 0.5, 15);
    Tensor t_feat = Tensor::row({1, 2, 3});
    CHECK_THROWS_AS(net.fuse_value(t_feat, Tensor::matrix(1, 3, {1, 2, 3}), {}), ShapeError);
}
