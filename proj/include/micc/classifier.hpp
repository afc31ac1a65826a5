#pragma once

#include <string>
#include <vector>

#include "micc/graph.hpp"
#include "micc/optim.hpp"

namespace micc {

// Rumor judgment head: D1 = Dropout(W1'F + b1), hidden = LayerNorm(ReLU(D1)),
// yhat = sigmoid(w2' hidden + b2). The norm sits on the hidden vector; applied
// to the final scalar it would wipe out the logit.
class ClassifierHead {
public:
    struct Config {
        size_t hidden = 256;
        double dropout = 0.3;
    };

    static ClassifierHead create(ParamStore& store, const std::string& prefix, size_t input_width, const Config& cfg, Rng& rng);

    Var forward(Tape& tape, Var features, bool training, Rng& rng) const;  // (B x width) -> (B x 1)
    double forward_value(const Tensor& feature) const;                     // single row, eval mode

    size_t input_width() const { return w1_->tensor.rows(); }

private:
    Config cfg_;
    Parameter *w1_ = nullptr, *b1_ = nullptr;
    Parameter *ln_g_ = nullptr, *ln_b_ = nullptr;
    Parameter *w2_ = nullptr, *b2_ = nullptr;
};

// rumor = positive class = 1; the 0.5 boundary is inclusive.
int decide(double yhat);

struct MetricsReport {
    size_t tp = 0, tn = 0, fp = 0, fn = 0;
    double accuracy = 0.0, precision = 0.0, recall = 0.0, f1 = 0.0;
};

MetricsReport compute_metrics(const std::vector<int>& predictions, const std::vector<int>& labels);

}  // namespace micc
