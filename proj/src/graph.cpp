#include "micc/graph.hpp"

#include <cmath>
#include <utility>

#include "micc/errors.hpp"
#include "micc/gemm.hpp"
#include "micc/optim.hpp"

namespace micc {

namespace {

void require_2d(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t));
}

bool any_requires(std::initializer_list<Var> vs) {
    for (Var v : vs)
        if (v.requires_grad()) return true;
    return false;
}

// Copies a column block [c0, c0+w) of rows [r0, r0+h) into a dense h x w buffer.
void gather_block(const Tensor& src, size_t r0, size_t c0, size_t h, size_t w, double* dst) {
    const double* s = src.data() + r0 * src.cols() + c0;
    for (size_t i = 0; i < h; ++i) {
        const double* row = s + i * src.cols();
        std::copy(row, row + w, dst + i * w);
    }
}

void scatter_block_add(Tensor& dst, size_t r0, size_t c0, size_t h, size_t w, const double* src) {
    double* d = dst.data() + r0 * dst.cols() + c0;
    for (size_t i = 0; i < h; ++i) {
        double* row = d + i * dst.cols();
        for (size_t j = 0; j < w; ++j) row[j] += src[i * w + j];
    }
}

void softmax_rows_inplace(Tensor& t) {
    const size_t r = t.rows(), c = t.cols();
    for (size_t i = 0; i < r; ++i) {
        double* row = t.data() + i * c;
        double mx = row[0];
        for (size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (size_t j = 0; j < c; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        for (size_t j = 0; j < c; ++j) row[j] /= sum;
    }
}

}  // namespace

Var Tape::leaf(Tensor v, bool requires_grad) {
    nodes_.push_back(std::make_unique<Node>());
    Node* n = nodes_.back().get();
    n->value = std::move(v);
    n->requires_grad = requires_grad;
    return Var(this, n);
}

Var Tape::param(Parameter& p) {
    for (auto& [param, node] : param_leaves_)
        if (param == &p) return Var(this, node);
    Var v = leaf(p.tensor, !p.frozen);
    node_of(v)->param = &p;
    param_leaves_.emplace_back(&p, node_of(v));
    return v;
}

Tensor& Tape::grad_buf(Node* n) {
    if (n->grad.empty()) n->grad = Tensor::zeros(n->value.shape());
    return n->grad;
}

void Tape::backward(Var loss) {
    if (tape_of(loss) != this) throw ConfigError("backward: loss lives on another tape");
    Node* top = node_of(loss);
    if (top->value.size() != 1) throw ShapeError("backward: loss must be scalar, got " + shape_str(top->value));
    grad_buf(top)[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        Node* n = it->get();
        if (n->requires_grad && n->backward && !n->grad.empty()) n->backward();
    }
    for (auto& [param, node] : param_leaves_) {
        if (node->grad.empty()) continue;
        if (param->grad.empty()) param->grad = Tensor::zeros(param->tensor.shape());
        param->grad.add_(node->grad);
    }
}

Var Tape::make(Tensor value, bool requires_grad, std::function<void()> bw) {
    Var v = leaf(std::move(value), requires_grad);
    if (requires_grad) node_of(v)->backward = std::move(bw);
    return v;
}

namespace {
void accum(Node* n, const Tensor& g) {
    if (!n->requires_grad) return;
    Tape::grad_buf(n).add_(g);
}
}  // namespace

Var matmul(Var a, Var b) {
    require_2d(a.value(), "matmul");
    require_2d(b.value(), "matmul");
    const size_t m = a.value().rows(), k = a.value().cols(), n = b.value().cols();
    if (b.value().rows() != k)
        throw ShapeError("matmul: inner dimensions disagree, " + shape_str(a.value()) + " * " + shape_str(b.value()));
    Tensor out({m, n});
    gemm(false, false, m, n, k, 1.0, a.value().data(), k, b.value().data(), n, 0.0, out.data(), n);
    Tape* t = tape_of(a);
    Node *na = node_of(a), *nb = node_of(b);
    Var v = t->leaf(std::move(out), any_requires({a, b}));
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [na, nb, no, m, n, k]() {
            const Tensor& dy = no->grad;
            if (na->requires_grad)
                gemm(false, true, m, k, n, 1.0, dy.data(), n, nb->value.data(), n, 1.0, Tape::grad_buf(na).data(), k);
            if (nb->requires_grad)
                gemm(true, false, k, n, m, 1.0, na->value.data(), k, dy.data(), n, 1.0, Tape::grad_buf(nb).data(), n);
        };
    return v;
}

Var transpose(Var a) {
    require_2d(a.value(), "transpose");
    const size_t r = a.value().rows(), c = a.value().cols();
    Tensor out({c, r});
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out.at(j, i) = a.value().at(i, j);
    Tape* t = tape_of(a);
    Node* na = node_of(a);
    Var v = t->leaf(std::move(out), a.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [na, no, r, c]() {
            Tensor& da = Tape::grad_buf(na);
            for (size_t i = 0; i < r; ++i)
                for (size_t j = 0; j < c; ++j) da.at(i, j) += no->grad.at(j, i);
        };
    return v;
}

namespace {
Var elementwise_binary(const char* name, Var a, Var b, double sign_b) {
    if (!a.value().same_shape(b.value()))
        throw ShapeError(std::string(name) + ": shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
    Tensor out = a.value();
    out.axpy_(sign_b, b.value());
    Tape* t = tape_of(a);
    Node *na = node_of(a), *nb = node_of(b);
    Var v = t->leaf(std::move(out), any_requires({a, b}));
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [na, nb, no, sign_b]() {
            accum(na, no->grad);
            if (nb->requires_grad) Tape::grad_buf(nb).axpy_(sign_b, no->grad);
        };
    return v;
}
}  // namespace

Var add(Var a, Var b) { return elementwise_binary("add", a, b, 1.0); }
Var sub(Var a, Var b) { return elementwise_binary("sub", a, b, -1.0); }

Var mul(Var a, Var b) {
    if (!a.value().same_shape(b.value()))
        throw ShapeError("mul: shape mismatch " + shape_str(a.value()) + " vs " + shape_str(b.value()));
    Tensor out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
    Tape* t = tape_of(a);
    Node *na = node_of(a), *nb = node_of(b);
    Var v = t->leaf(std::move(out), any_requires({a, b}));
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [na, nb, no]() {
            if (na->requires_grad) {
                Tensor& da = Tape::grad_buf(na);
                for (size_t i = 0; i < da.size(); ++i) da[i] += no->grad[i] * nb->value[i];
            }
            if (nb->requires_grad) {
                Tensor& db = Tape::grad_buf(nb);
                for (size_t i = 0; i < db.size(); ++i) db[i] += no->grad[i] * na->value[i];
            }
        };
    return v;
}

Var scale(Var a, double c) {
    Tensor out = a.value();
    out.scale_(c);
    Tape* t = tape_of(a);
    Node* na = node_of(a);
    Var v = t->leaf(std::move(out), a.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [na, no, c]() { Tape::grad_buf(na).axpy_(c, no->grad); };
    return v;
}

Var add_rowvec(Var a, Var rowvec) {
    require_2d(a.value(), "add_rowvec");
    require_2d(rowvec.value(), "add_rowvec");
    const size_t r = a.value().rows(), c = a.value().cols();
    if (rowvec.value().rows() != 1 || rowvec.value().cols() != c)
        throw ShapeError("add_rowvec: " + shape_str(a.value()) + " + " + shape_str(rowvec.value()));
    Tensor out = a.value();
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out[i * c + j] += rowvec.value()[j];
    Tape* t = tape_of(a);
    Node *na = node_of(a), *nb = node_of(rowvec);
    Var v = t->leaf(std::move(out), any_requires({a, rowvec}));
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [na, nb, no, r, c]() {
            accum(na, no->grad);
            if (nb->requires_grad) {
                Tensor& db = Tape::grad_buf(nb);
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < c; ++j) db[j] += no->grad[i * c + j];
            }
        };
    return v;
}

Var relu(Var a) {
    Tensor out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
    Tape* t = tape_of(a);
    Node* na = node_of(a);
    Var v = t->leaf(std::move(out), a.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [na, no]() {
            Tensor& da = Tape::grad_buf(na);
            for (size_t i = 0; i < da.size(); ++i)
                if (na->value[i] > 0.0) da[i] += no->grad[i];
        };
    return v;
}

Var sigmoid(Var a) {
    Tensor out = a.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
    Tape* t = tape_of(a);
    Node* na = node_of(a);
    Var v = t->leaf(std::move(out), a.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [na, no]() {
            Tensor& da = Tape::grad_buf(na);
            for (size_t i = 0; i < da.size(); ++i) {
                double s = no->value[i];
                da[i] += no->grad[i] * s * (1.0 - s);
            }
        };
    return v;
}

Var softmax_rows(Var a) {
    require_2d(a.value(), "softmax");
    Tensor out = a.value();
    softmax_rows_inplace(out);
    Tape* t = tape_of(a);
    Node* na = node_of(a);
    Var v = t->leaf(std::move(out), a.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [na, no]() {
            const size_t r = no->value.rows(), c = no->value.cols();
            Tensor& da = Tape::grad_buf(na);
            for (size_t i = 0; i < r; ++i) {
                const double* p = no->value.data() + i * c;
                const double* dy = no->grad.data() + i * c;
                double dot = 0.0;
                for (size_t j = 0; j < c; ++j) dot += dy[j] * p[j];
                double* dx = da.data() + i * c;
                for (size_t j = 0; j < c; ++j) dx[j] += p[j] * (dy[j] - dot);
            }
        };
    return v;
}

Var logsumexp_rows(Var a) {
    require_2d(a.value(), "logsumexp");
    const size_t r = a.value().rows(), c = a.value().cols();
    Tensor out({r, 1});
    for (size_t i = 0; i < r; ++i) {
        const double* row = a.value().data() + i * c;
        double mx = row[0];
        for (size_t j = 1; j < c; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (size_t j = 0; j < c; ++j) sum += std::exp(row[j] - mx);
        out[i] = mx + std::log(sum);
    }
    Tape* t = tape_of(a);
    Node* na = node_of(a);
    Var v = t->leaf(std::move(out), a.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [na, no, r, c]() {
            Tensor& da = Tape::grad_buf(na);
            for (size_t i = 0; i < r; ++i) {
                const double lse = no->value[i];
                const double g = no->grad[i];
                const double* row = na->value.data() + i * c;
                double* dx = da.data() + i * c;
                for (size_t j = 0; j < c; ++j) dx[j] += g * std::exp(row[j] - lse);
            }
        };
    return v;
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    require_2d(x.value(), "layer_norm");
    const size_t r = x.value().rows(), c = x.value().cols();
    if (gamma.value().rows() != 1 || gamma.value().cols() != c || !gamma.value().same_shape(beta.value()))
        throw ShapeError("layer_norm: scale/shift must be [1x" + std::to_string(c) + "], got " + shape_str(gamma.value()) + " / " +
                         shape_str(beta.value()));
    Tensor out({r, c});
    auto xhat = std::make_shared<Tensor>(Tensor({r, c}));
    auto inv_std = std::make_shared<std::vector<double>>(r);
    for (size_t i = 0; i < r; ++i) {
        const double* row = x.value().data() + i * c;
        double mean = 0.0;
        for (size_t j = 0; j < c; ++j) mean += row[j];
        mean /= static_cast<double>(c);
        double var = 0.0;
        for (size_t j = 0; j < c; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= static_cast<double>(c);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[i] = is;
        for (size_t j = 0; j < c; ++j) {
            double xh = (row[j] - mean) * is;
            (*xhat)[i * c + j] = xh;
            out[i * c + j] = gamma.value()[j] * xh + beta.value()[j];
        }
    }
    Tape* t = tape_of(x);
    Node *nx = node_of(x), *ng = node_of(gamma), *nb = node_of(beta);
    Var v = t->leaf(std::move(out), any_requires({x, gamma, beta}));
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [nx, ng, nb, no, xhat, inv_std, r, c]() {
            for (size_t i = 0; i < r; ++i) {
                const double* dy = no->grad.data() + i * c;
                const double* xh = xhat->data() + i * c;
                if (ng->requires_grad) {
                    Tensor& dg = Tape::grad_buf(ng);
                    for (size_t j = 0; j < c; ++j) dg[j] += dy[j] * xh[j];
                }
                if (nb->requires_grad) {
                    Tensor& db = Tape::grad_buf(nb);
                    for (size_t j = 0; j < c; ++j) db[j] += dy[j];
                }
                if (nx->requires_grad) {
                    double mean_g = 0.0, mean_gx = 0.0;
                    for (size_t j = 0; j < c; ++j) {
                        double g = dy[j] * ng->value[j];
                        mean_g += g;
                        mean_gx += g * xh[j];
                    }
                    mean_g /= static_cast<double>(c);
                    mean_gx /= static_cast<double>(c);
                    Tensor& dx = Tape::grad_buf(nx);
                    const double is = (*inv_std)[i];
                    for (size_t j = 0; j < c; ++j) {
                        double g = dy[j] * ng->value[j];
                        dx[i * c + j] += is * (g - mean_g - xh[j] * mean_gx);
                    }
                }
            }
        };
    return v;
}

Var dropout(Var x, double rate, Rng& rng, bool training) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
    if (!training || rate == 0.0) return x;  // evaluation mode is the identity
    const double keep = 1.0 - rate;
    auto mask = std::make_shared<Tensor>(Tensor(x.value().shape()));
    Tensor out = x.value();
    for (size_t i = 0; i < out.size(); ++i) {
        double m = rng.uniform() < keep ? 1.0 / keep : 0.0;
        (*mask)[i] = m;
        out[i] *= m;
    }
    Tape* t = tape_of(x);
    Node* nx = node_of(x);
    Var v = t->leaf(std::move(out), x.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [nx, no, mask]() {
            Tensor& dx = Tape::grad_buf(nx);
            for (size_t i = 0; i < dx.size(); ++i) dx[i] += no->grad[i] * (*mask)[i];
        };
    return v;
}

Var mean_rows(Var x) { return mean_rows_ranges(x, {Range{0, x.value().rows()}}); }

Var mean_rows_ranges(Var x, std::vector<Range> ranges) {
    require_2d(x.value(), "mean_rows");
    const size_t c = x.value().cols();
    Tensor out({ranges.size(), c});
    for (size_t b = 0; b < ranges.size(); ++b) {
        const Range& r = ranges[b];
        if (r.len == 0) throw ShapeError("mean_rows: empty range");
        if (r.begin + r.len > x.value().rows()) throw ShapeError("mean_rows: range exceeds " + shape_str(x.value()));
        for (size_t i = 0; i < r.len; ++i) {
            const double* row = x.value().data() + (r.begin + i) * c;
            for (size_t j = 0; j < c; ++j) out[b * c + j] += row[j];
        }
        for (size_t j = 0; j < c; ++j) out[b * c + j] /= static_cast<double>(r.len);
    }
    Tape* t = tape_of(x);
    Node* nx = node_of(x);
    Var v = t->leaf(std::move(out), x.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [nx, no, ranges = std::move(ranges), c]() {
            Tensor& dx = Tape::grad_buf(nx);
            for (size_t b = 0; b < ranges.size(); ++b) {
                const Range& r = ranges[b];
                const double inv = 1.0 / static_cast<double>(r.len);
                for (size_t i = 0; i < r.len; ++i) {
                    double* row = dx.data() + (r.begin + i) * c;
                    for (size_t j = 0; j < c; ++j) row[j] += no->grad[b * c + j] * inv;
                }
            }
        };
    return v;
}

namespace {
Var concat_impl(const std::vector<Var>& xs, bool along_rows) {
    if (xs.empty()) throw ShapeError("concat: empty input list");
    for (const Var& x : xs) require_2d(x.value(), "concat");
    size_t total = 0;
    const size_t other = along_rows ? xs[0].value().cols() : xs[0].value().rows();
    for (const Var& x : xs) {
        size_t o = along_rows ? x.value().cols() : x.value().rows();
        if (o != other) throw ShapeError("concat: incompatible " + shape_str(x.value()));
        total += along_rows ? x.value().rows() : x.value().cols();
    }
    Tensor out = along_rows ? Tensor({total, other}) : Tensor({other, total});
    size_t off = 0;
    for (const Var& x : xs) {
        const Tensor& v = x.value();
        if (along_rows) {
            std::copy(v.data(), v.data() + v.size(), out.data() + off * other);
            off += v.rows();
        } else {
            for (size_t i = 0; i < other; ++i)
                std::copy(v.data() + i * v.cols(), v.data() + (i + 1) * v.cols(), out.data() + i * total + off);
            off += v.cols();
        }
    }
    bool req = false;
    for (const Var& x : xs) req = req || x.requires_grad();
    Tape* t = tape_of(xs[0]);
    std::vector<Node*> nodes;
    for (const Var& x : xs) nodes.push_back(node_of(x));
    Var v = t->leaf(std::move(out), req);
    Node* no = node_of(v);
    if (req)
        no->backward = [nodes, no, along_rows, other]() {
            size_t off = 0;
            for (Node* n : nodes) {
                const size_t span = along_rows ? n->value.rows() : n->value.cols();
                if (n->requires_grad) {
                    Tensor& d = Tape::grad_buf(n);
                    if (along_rows) {
                        for (size_t i = 0; i < d.size(); ++i) d[i] += no->grad[off * other + i];
                    } else {
                        const size_t total = no->value.cols();
                        for (size_t i = 0; i < other; ++i)
                            for (size_t j = 0; j < span; ++j) d[i * span + j] += no->grad[i * total + off + j];
                    }
                }
                off += span;
            }
        };
    return v;
}
}  // namespace

Var concat_rows(const std::vector<Var>& xs) { return concat_impl(xs, true); }
Var concat_cols(const std::vector<Var>& xs) { return concat_impl(xs, false); }

Var slice_rows(Var x, Range r) {
    require_2d(x.value(), "slice_rows");
    if (r.begin + r.len > x.value().rows()) throw ShapeError("slice_rows: range exceeds " + shape_str(x.value()));
    const size_t c = x.value().cols();
    Tensor out({r.len, c});
    std::copy(x.value().data() + r.begin * c, x.value().data() + (r.begin + r.len) * c, out.data());
    Tape* t = tape_of(x);
    Node* nx = node_of(x);
    Var v = t->leaf(std::move(out), x.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [nx, no, r, c]() {
            Tensor& dx = Tape::grad_buf(nx);
            for (size_t i = 0; i < r.len * c; ++i) dx[r.begin * c + i] += no->grad[i];
        };
    return v;
}

Var select_rows(Var x, std::vector<size_t> idx) {
    require_2d(x.value(), "select_rows");
    const size_t c = x.value().cols();
    for (size_t i : idx)
        if (i >= x.value().rows()) throw ShapeError("select_rows: index " + std::to_string(i) + " out of " + shape_str(x.value()));
    Tensor out({idx.size(), c});
    for (size_t i = 0; i < idx.size(); ++i)
        std::copy(x.value().data() + idx[i] * c, x.value().data() + (idx[i] + 1) * c, out.data() + i * c);
    Tape* t = tape_of(x);
    Node* nx = node_of(x);
    Var v = t->leaf(std::move(out), x.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [nx, no, idx = std::move(idx), c]() {
            Tensor& dx = Tape::grad_buf(nx);
            for (size_t i = 0; i < idx.size(); ++i)
                for (size_t j = 0; j < c; ++j) dx[idx[i] * c + j] += no->grad[i * c + j];
        };
    return v;
}

Var embedding(Var table, std::vector<int> ids) {
    require_2d(table.value(), "embedding");
    const size_t d = table.value().cols();
    for (int id : ids)
        if (id < 0 || static_cast<size_t>(id) >= table.value().rows())
            throw ShapeError("embedding: id " + std::to_string(id) + " out of " + shape_str(table.value()));
    Tensor out({ids.size(), d});
    for (size_t i = 0; i < ids.size(); ++i)
        std::copy(table.value().data() + static_cast<size_t>(ids[i]) * d, table.value().data() + (static_cast<size_t>(ids[i]) + 1) * d,
                  out.data() + i * d);
    Tape* t = tape_of(table);
    Node* nt = node_of(table);
    Var v = t->leaf(std::move(out), table.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [nt, no, ids = std::move(ids), d]() {
            Tensor& dt = Tape::grad_buf(nt);
            for (size_t i = 0; i < ids.size(); ++i)
                for (size_t j = 0; j < d; ++j) dt[static_cast<size_t>(ids[i]) * d + j] += no->grad[i * d + j];
        };
    return v;
}

Var sum_all(Var x) {
    double s = 0.0;
    for (size_t i = 0; i < x.value().size(); ++i) s += x.value()[i];
    Tape* t = tape_of(x);
    Node* nx = node_of(x);
    Var v = t->leaf(Tensor::scalar(s), x.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [nx, no]() {
            Tensor& dx = Tape::grad_buf(nx);
            const double g = no->grad[0];
            for (size_t i = 0; i < dx.size(); ++i) dx[i] += g;
        };
    return v;
}

Var mean_all(Var x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.value().size())); }

Var reshape(Var x, size_t rows, size_t cols) {
    if (rows * cols != x.value().size())
        throw ShapeError("reshape: cannot view " + shape_str(x.value()) + " as " + shape_str({rows, cols}));
    Tensor out({rows, cols});
    std::copy(x.value().data(), x.value().data() + x.value().size(), out.data());
    Tape* t = tape_of(x);
    Node* nx = node_of(x);
    Var v = t->leaf(std::move(out), x.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [nx, no]() {
            Tensor& dx = Tape::grad_buf(nx);
            for (size_t i = 0; i < dx.size(); ++i) dx[i] += no->grad[i];
        };
    return v;
}

Var pow_scalar(Var x, double p) {
    Tensor out = x.value();
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::pow(out[i], p);
    Tape* t = tape_of(x);
    Node* nx = node_of(x);
    Var v = t->leaf(std::move(out), x.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [nx, no, p]() {
            Tensor& dx = Tape::grad_buf(nx);
            for (size_t i = 0; i < dx.size(); ++i) dx[i] += no->grad[i] * p * std::pow(nx->value[i], p - 1.0);
        };
    return v;
}

Var mul_by_scalar(Var x, Var s) {
    if (s.value().size() != 1) throw ShapeError("mul_by_scalar: scalar operand has shape " + shape_str(s.value()));
    const double sv = s.value()[0];
    Tensor out = x.value();
    out.scale_(sv);
    Tape* t = tape_of(x);
    Node *nx = node_of(x), *ns = node_of(s);
    Var v = t->leaf(std::move(out), any_requires({x, s}));
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [nx, ns, no, sv]() {
            if (nx->requires_grad) Tape::grad_buf(nx).axpy_(sv, no->grad);
            if (ns->requires_grad) {
                double acc = 0.0;
                for (size_t i = 0; i < no->grad.size(); ++i) acc += no->grad[i] * nx->value[i];
                Tape::grad_buf(ns)[0] += acc;
            }
        };
    return v;
}

Var binary_cross_entropy(Var yhat, Tensor targets) {
    if (!yhat.value().same_shape(targets))
        throw ShapeError("bce: prediction " + shape_str(yhat.value()) + " vs target " + shape_str(targets));
    const size_t n = targets.size();
    auto clamped = std::make_shared<Tensor>(yhat.value());
    double loss = 0.0;
    for (size_t i = 0; i < n; ++i) {
        double p = std::min(std::max((*clamped)[i], 1e-12), 1.0 - 1e-12);
        (*clamped)[i] = p;
        double y = targets[i];
        loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    loss /= static_cast<double>(n);
    Tape* t = tape_of(yhat);
    Node* ny = node_of(yhat);
    Var v = t->leaf(Tensor::scalar(loss), yhat.requires_grad());
    Node* no = node_of(v);
    if (no->requires_grad)
        no->backward = [ny, no, clamped, targets = std::move(targets), n]() {
            Tensor& dy = Tape::grad_buf(ny);
            const double g = no->grad[0] / static_cast<double>(n);
            for (size_t i = 0; i < n; ++i) {
                double p = (*clamped)[i];
                dy[i] += g * (p - targets[i]) / (p * (1.0 - p));
            }
        };
    return v;
}

Tensor sdpa_probs(const Tensor& qh, const Tensor& kh) {
    const size_t n = qh.rows(), m = kh.rows(), dh = qh.cols();
    if (kh.cols() != dh) throw ShapeError("sdpa: query/key width mismatch " + shape_str(qh) + " vs " + shape_str(kh));
    Tensor scores({n, m});
    gemm(false, true, n, m, dh, 1.0 / std::sqrt(static_cast<double>(dh)), qh.data(), dh, kh.data(), dh, 0.0, scores.data(), m);
    softmax_rows_inplace(scores);
    return scores;
}

Var multi_head_attention(Var q, Var k, Var v, std::vector<Range> ranges, size_t heads) {
    require_2d(q.value(), "attention");
    const size_t rows = q.value().rows(), d = q.value().cols();
    if (!q.value().same_shape(k.value()) || !q.value().same_shape(v.value()))
        throw ShapeError("attention: q/k/v shapes differ, " + shape_str(q.value()) + " / " + shape_str(k.value()) + " / " +
                         shape_str(v.value()));
    if (heads == 0 || d % heads != 0)
        throw ShapeError("attention: width " + std::to_string(d) + " not divisible by " + std::to_string(heads) + " heads");
    const size_t dh = d / heads;
    for (const Range& r : ranges)
        if (r.len == 0 || r.begin + r.len > rows) throw ShapeError("attention: bad range");

    Tensor out({rows, d});
    auto probs = std::make_shared<std::vector<Tensor>>();  // per (range, head)
    probs->reserve(ranges.size() * heads);
    std::vector<double> qh, kh, vh, oh;
    for (const Range& r : ranges) {
        qh.resize(r.len * dh);
        kh.resize(r.len * dh);
        vh.resize(r.len * dh);
        oh.resize(r.len * dh);
        for (size_t h = 0; h < heads; ++h) {
            gather_block(q.value(), r.begin, h * dh, r.len, dh, qh.data());
            gather_block(k.value(), r.begin, h * dh, r.len, dh, kh.data());
            gather_block(v.value(), r.begin, h * dh, r.len, dh, vh.data());
            Tensor p({r.len, r.len});
            gemm(false, true, r.len, r.len, dh, 1.0 / std::sqrt(static_cast<double>(dh)), qh.data(), dh, kh.data(), dh, 0.0, p.data(),
                 r.len);
            softmax_rows_inplace(p);
            gemm(false, false, r.len, dh, r.len, 1.0, p.data(), r.len, vh.data(), dh, 0.0, oh.data(), dh);
            scatter_block_add(out, r.begin, h * dh, r.len, dh, oh.data());
            probs->push_back(std::move(p));
        }
    }

    Tape* t = tape_of(q);
    Node *nq = node_of(q), *nk = node_of(k), *nv = node_of(v);
    Var res = t->leaf(std::move(out), any_requires({q, k, v}));
    Node* no = node_of(res);
    if (no->requires_grad)
        no->backward = [nq, nk, nv, no, probs, ranges = std::move(ranges), heads, dh]() {
            const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
            std::vector<double> qh, kh, vh, doh, dqh, dkh, dvh;
            size_t pi = 0;
            for (const Range& r : ranges) {
                const size_t n = r.len;
                qh.resize(n * dh);
                kh.resize(n * dh);
                vh.resize(n * dh);
                doh.resize(n * dh);
                dqh.resize(n * dh);
                dkh.resize(n * dh);
                dvh.resize(n * dh);
                for (size_t h = 0; h < heads; ++h, ++pi) {
                    const Tensor& p = (*probs)[pi];
                    gather_block(no->grad, r.begin, h * dh, n, dh, doh.data());
                    gather_block(nq->value, r.begin, h * dh, n, dh, qh.data());
                    gather_block(nk->value, r.begin, h * dh, n, dh, kh.data());
                    gather_block(nv->value, r.begin, h * dh, n, dh, vh.data());
                    if (nv->requires_grad) {
                        gemm(true, false, n, dh, n, 1.0, p.data(), n, doh.data(), dh, 0.0, dvh.data(), dh);
                        scatter_block_add(Tape::grad_buf(nv), r.begin, h * dh, n, dh, dvh.data());
                    }
                    if (nq->requires_grad || nk->requires_grad) {
                        Tensor dp({n, n});
                        gemm(false, true, n, n, dh, 1.0, doh.data(), dh, vh.data(), dh, 0.0, dp.data(), n);
                        Tensor ds({n, n});
                        for (size_t i = 0; i < n; ++i) {
                            double dot = 0.0;
                            for (size_t j = 0; j < n; ++j) dot += dp.at(i, j) * p.at(i, j);
                            for (size_t j = 0; j < n; ++j) ds.at(i, j) = p.at(i, j) * (dp.at(i, j) - dot);
                        }
                        if (nq->requires_grad) {
                            gemm(false, false, n, dh, n, inv_sqrt, ds.data(), n, kh.data(), dh, 0.0, dqh.data(), dh);
                            scatter_block_add(Tape::grad_buf(nq), r.begin, h * dh, n, dh, dqh.data());
                        }
                        if (nk->requires_grad) {
                            gemm(true, false, n, dh, n, inv_sqrt, ds.data(), n, qh.data(), dh, 0.0, dkh.data(), dh);
                            scatter_block_add(Tape::grad_buf(nk), r.begin, h * dh, n, dh, dkh.data());
                        }
                    }
                }
            }
        };
    return res;
}

Var attention(Var q, Var k, Var v) {
    // Compositional single-head SDPA; unlike the fused op this also covers
    // cross-attention where the query has fewer rows than keys/values.
    const size_t dk = q.value().cols();
    if (k.value().cols() != dk || k.value().rows() != v.value().rows())
        throw ShapeError("attention: incompatible " + shape_str(q.value()) + " / " + shape_str(k.value()) + " / " +
                         shape_str(v.value()));
    Var scores = scale(matmul(q, transpose(k)), 1.0 / std::sqrt(static_cast<double>(dk)));
    return matmul(softmax_rows(scores), v);
}

}  // namespace micc
