#include "micc/classifier.hpp"

#include <cmath>

#include "micc/errors.hpp"

namespace micc {

ClassifierHead ClassifierHead::create(ParamStore& store, const std::string& prefix, size_t input_width, const Config& cfg,
                                      Rng& rng) {
    ClassifierHead head;
    head.cfg_ = cfg;
    const double b1 = 1.0 / std::sqrt(static_cast<double>(input_width));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(cfg.hidden));
    head.w1_ = &store.create_uniform(prefix + ".w1", {input_width, cfg.hidden}, rng, -b1, b1);
    head.b1_ = &store.create(prefix + ".b1", Tensor::zeros({1, cfg.hidden}));
    head.ln_g_ = &store.create(prefix + ".ln.scale", Tensor::full({1, cfg.hidden}, 1.0));
    head.ln_b_ = &store.create(prefix + ".ln.shift", Tensor::zeros({1, cfg.hidden}));
    head.w2_ = &store.create_uniform(prefix + ".w2", {cfg.hidden, 1}, rng, -b2, b2);
    head.b2_ = &store.create(prefix + ".b2", Tensor::zeros({1, 1}));
    return head;
}

Var ClassifierHead::forward(Tape& tape, Var features, bool training, Rng& rng) const {
    if (features.value().cols() != w1_->tensor.rows())
        throw ShapeError("classifier: feature width " + shape_str(features.value()) + " vs " + shape_str(w1_->tensor));
    Var d1 = dropout(add_rowvec(matmul(features, tape.param(*w1_)), tape.param(*b1_)), cfg_.dropout, rng, training);
    Var hidden = layer_norm(relu(d1), tape.param(*ln_g_), tape.param(*ln_b_));
    return sigmoid(add_rowvec(matmul(hidden, tape.param(*w2_)), tape.param(*b2_)));
}

double ClassifierHead::forward_value(const Tensor& feature) const {
    Tape tape;
    Rng unused(0);
    return forward(tape, tape.constant(feature), false, unused).value().item();
}

int decide(double yhat) { return yhat >= 0.5 ? 1 : 0; }

MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.empty() || predictions.size() != labels.size())
        throw DataError("metrics: need equal, non-empty prediction and label lists");
    MetricsReport r;
    for (size_t i = 0; i < predictions.size(); ++i) {
        const bool pred = predictions[i] == 1;
        const bool truth = labels[i] == 1;
        if (pred && truth)
            ++r.tp;
        else if (!pred && !truth)
            ++r.tn;
        else if (pred && !truth)
            ++r.fp;
        else
            ++r.fn;
    }
    const double total = static_cast<double>(r.tp + r.tn + r.fp + r.fn);
    r.accuracy = static_cast<double>(r.tp + r.tn) / total;
    r.precision = r.tp + r.fp == 0 ? 0.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fp);
    r.recall = r.tp + r.fn == 0 ? 0.0 : static_cast<double>(r.tp) / static_cast<double>(r.tp + r.fn);
    r.f1 = r.precision + r.recall == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
    return r;
}

}  // namespace micc
