#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "micc/tensor.hpp"

namespace micc {

struct Parameter;

// Contiguous row span inside a stacked matrix. Batch members are concatenated
// row-wise and ops that must not mix samples (attention, pooling) take ranges.
struct Range {
    size_t begin = 0;
    size_t len = 0;
};

struct Node {
    Tensor value;
    Tensor grad;  // allocated on first touch during backward
    bool requires_grad = false;
    std::function<void()> backward;
    Parameter* param = nullptr;
};

class Tape;

class Var {
public:
    Var() = default;
    const Tensor& value() const { return node_->value; }
    const Tensor& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    bool valid() const { return node_ != nullptr; }

private:
    friend class Tape;
    Var(Tape* tape, Node* node) : tape_(tape), node_(node) {}
    Tape* tape_ = nullptr;
    Node* node_ = nullptr;

    friend Node* node_of(Var v);
    friend Tape* tape_of(Var v);
};

inline Node* node_of(Var v) { return v.node_; }
inline Tape* tape_of(Var v) { return v.tape_; }

// Reverse-mode tape. Nodes are appended in creation order, which is already a
// topological order, so backward is a single reverse sweep. One logical
// thread mutates a tape at a time.
class Tape {
public:
    Var constant(Tensor v) { return leaf(std::move(v), false); }
    Var leaf(Tensor v, bool requires_grad);
    // One leaf per Parameter per tape; repeated calls return the same node so
    // shared weights accumulate gradients additively.
    Var param(Parameter& p);

    // Seeds d(loss)=1 and sweeps the tape; afterwards every reachable
    // Parameter leaf has been folded into Parameter::grad.
    void backward(Var loss);

    Var make(Tensor value, bool requires_grad, std::function<void()> bw);
    size_t node_count() const { return nodes_.size(); }

    static Tensor& grad_buf(Node* n);

private:
    std::vector<std::unique_ptr<Node>> nodes_;
    std::vector<std::pair<Parameter*, Node*>> param_leaves_;
};

// ---- forward primitives (all differentiable, recorded on the tape) ----

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
Var add_rowvec(Var a, Var rowvec);  // (R,C) + (1,C)
Var relu(Var a);
Var sigmoid(Var a);
Var softmax_rows(Var a);     // softmax over the last axis of a 2-D tensor
Var logsumexp_rows(Var a);   // (R,C) -> (R,1), max-shifted
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);
Var dropout(Var x, double rate, Rng& rng, bool training);
Var mean_rows(Var x);  // (R,C) -> (1,C)
Var mean_rows_ranges(Var x, std::vector<Range> ranges);  // -> (B,C)
Var concat_rows(const std::vector<Var>& xs);
Var concat_cols(const std::vector<Var>& xs);
Var slice_rows(Var x, Range r);
Var select_rows(Var x, std::vector<size_t> idx);
Var embedding(Var table, std::vector<int> ids);
Var sum_all(Var x);   // -> (1,1)
Var mean_all(Var x);  // -> (1,1)
Var reshape(Var x, size_t rows, size_t cols);    // row-major relabel, same size
Var pow_scalar(Var x, double p);                 // elementwise x^p, x > 0 for fractional p
Var mul_by_scalar(Var x, Var s);                 // broadcast multiply by a (1,1) tensor
Var binary_cross_entropy(Var yhat, Tensor targets);  // mean over batch; clamps yhat

// Fused scaled-dot-product attention over per-sample row ranges. q/k/v are
// (R,d) with d divisible by heads; each range attends only within itself.
Var multi_head_attention(Var q, Var k, Var v, std::vector<Range> ranges, size_t heads);
Var attention(Var q, Var k, Var v);  // single-range, single-head convenience

// Forward-only attention probabilities for one head block; shared with the
// fused op so tests see the exact kernel the encoder uses.
Tensor sdpa_probs(const Tensor& qh, const Tensor& kh);

}  // namespace micc
