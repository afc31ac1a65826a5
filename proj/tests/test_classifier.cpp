#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "micc/classifier.hpp"
#include "micc/errors.hpp"

using namespace micc;

TEST_CASE("head: zeroed output layer gives 0.5, eval mode is deterministic") {
    ParamStore store;
    Rng rng(1);
    ClassifierHead head = ClassifierHead::create(store, "cls", 6, ClassifierHead::Config{8, 0.3}, rng);
    store.at("cls.w2").tensor.fill(0.0);
    store.at("cls.b2").tensor.fill(0.0);
    Tensor f({1, 6});
    for (size_t i = 0; i < 6; ++i) f[i] = rng.uniform(-2, 2);
    CHECK(head.forward_value(f) == doctest::Approx(0.5).epsilon(1e-15));

    ParamStore store2;
    ClassifierHead head2 = ClassifierHead::create(store2, "cls", 6, ClassifierHead::Config{8, 0.3}, rng);
    CHECK(head2.forward_value(f) == head2.forward_value(f));  // no stochasticity in eval
}

TEST_CASE("head: hand-evaluated 2-wide network") {
    ParamStore store;
    Rng rng(2);
    ClassifierHead head = ClassifierHead::create(store, "cls", 2, ClassifierHead::Config{2, 0.5}, rng);
    store.at("cls.w1").tensor = Tensor::matrix(2, 2, {0.8, -0.3, 0.2, 1.1});
    store.at("cls.b1").tensor = Tensor::matrix(1, 2, {0.05, -0.15});
    store.at("cls.ln.scale").tensor = Tensor::matrix(1, 2, {1.2, 0.9});
    store.at("cls.ln.shift").tensor = Tensor::matrix(1, 2, {0.01, -0.02});
    store.at("cls.w2").tensor = Tensor::matrix(2, 1, {0.7, -0.4});
    store.at("cls.b2").tensor = Tensor::matrix(1, 1, {0.1});

    Tensor f = Tensor::matrix(1, 2, {0.6, -0.9});
    // D1 = W1' F + b1 (dropout is the identity in eval mode)
    double d0 = 0.8 * 0.6 + 0.2 * (-0.9) + 0.05;
    double d1 = -0.3 * 0.6 + 1.1 * (-0.9) - 0.15;
    double r0 = std::max(0.0, d0), r1 = std::max(0.0, d1);
    // layer norm over the 2-wide hidden vector
    double mean = (r0 + r1) / 2.0;
    double var = ((r0 - mean) * (r0 - mean) + (r1 - mean) * (r1 - mean)) / 2.0;
    double inv = 1.0 / std::sqrt(var + 1e-5);
    double h0 = 1.2 * (r0 - mean) * inv + 0.01;
    double h1 = 0.9 * (r1 - mean) * inv - 0.02;
    double logit = 0.7 * h0 - 0.4 * h1 + 0.1;
    double want = 1.0 / (1.0 + std::exp(-logit));
    CHECK(head.forward_value(f) == doctest::Approx(want).epsilon(1e-12));

    CHECK_THROWS_AS(head.forward_value(Tensor::matrix(1, 3, {1, 2, 3})), ShapeError);
}

TEST_CASE("head: training dropout perturbs, gradients flow to every parameter") {
    ParamStore store;
    Rng rng(3);
    ClassifierHead head = ClassifierHead::create(store, "cls", 4, ClassifierHead::Config{16, 0.4}, rng);
    Tensor f({2, 4});
    for (size_t i = 0; i < f.size(); ++i) f[i] = rng.uniform(-1, 1);
    Tape tape;
    Rng drop(77);
    Var yhat = head.forward(tape, tape.constant(f), true, drop);
    Var loss = binary_cross_entropy(yhat, Tensor::column({1.0, 0.0}));
    tape.backward(loss);
    for (const auto& p : store) {
        REQUIRE_FALSE(p->grad.empty());
        double norm = 0.0;
        for (size_t i = 0; i < p->grad.size(); ++i) norm += p->grad[i] * p->grad[i];
        INFO(p->name);
        CHECK(norm > 0.0);
    }
}

TEST_CASE("decide: inclusive 0.5 boundary, monotone") {
    CHECK(decide(0.7) == 1);
    CHECK(decide(0.5) == 1);
    CHECK(decide(0.49) == 0);
    CHECK(decide(0.0) == 0);
    CHECK(decide(1.0) == 1);
    double prev = -1;
    for (double y : {0.0, 0.2, 0.499, 0.5, 0.8, 1.0}) {
        CHECK(decide(y) >= prev);
        prev = decide(y);
    }
}

TEST_CASE("metrics: hand confusion case and degenerate conventions") {
    // TP=3 TN=4 FP=1 FN=2
    std::vector<int> preds = {1, 1, 1, 0, 0, 0, 0, 1, 0, 0};
    std::vector<int> labels = {1, 1, 1, 0, 0, 0, 0, 0, 1, 1};
    MetricsReport m = compute_metrics(preds, labels);
    CHECK(m.tp == 3);
    CHECK(m.tn == 4);
    CHECK(m.fp == 1);
    CHECK(m.fn == 2);
    CHECK(m.accuracy == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(m.precision == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(2.0 * 0.75 * 0.6 / 1.35).epsilon(1e-9));

    // recompute the metrics from the emitted counts
    const double total = m.tp + m.tn + m.fp + m.fn;
    CHECK(m.accuracy == doctest::Approx((m.tp + m.tn) / total).epsilon(1e-12));
    CHECK(m.precision == doctest::Approx(double(m.tp) / (m.tp + m.fp)).epsilon(1e-12));
    CHECK(m.recall == doctest::Approx(double(m.tp) / (m.tp + m.fn)).epsilon(1e-12));
    CHECK(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)).epsilon(1e-12));

    MetricsReport perfect = compute_metrics({1, 0, 1}, {1, 0, 1});
    CHECK(perfect.accuracy == 1.0);
    CHECK(perfect.precision == 1.0);
    CHECK(perfect.recall == 1.0);
    CHECK(perfect.f1 == 1.0);

    MetricsReport none = compute_metrics({0, 0}, {0, 0});
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);

    CHECK_THROWS_AS(compute_metrics({}, {}), DataError);
    CHECK_THROWS_AS(compute_metrics({1}, {1, 0}), DataError);
}

TEST_CASE("bce is permutation-invariant over the batch") {
    Tape tape;
    Tensor yhat = Tensor::column({0.9, 0.2, 0.7, 0.4});
    Tensor y = Tensor::column({1, 0, 1, 0});
    Var l1 = binary_cross_entropy(tape.constant(yhat), y);
    Tensor yhat_p = Tensor::column({0.4, 0.7, 0.2, 0.9});
    Tensor y_p = Tensor::column({0, 1, 0, 1});
    Var l2 = binary_cross_entropy(tape.constant(yhat_p), y_p);
    CHECK(l1.value().item() == doctest::Approx(l2.value().item()).epsilon(1e-15));
}
