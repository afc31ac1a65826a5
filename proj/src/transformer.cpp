#include "micc/transformer.hpp"

#include <cmath>

#include "micc/errors.hpp"

namespace micc {

TransformerStack TransformerStack::create(ParamStore& store, const std::string& prefix, size_t d_model, size_t heads,
                                          size_t n_layers, size_t ff_width, Rng& rng) {
    if (heads == 0 || d_model % heads != 0)
        throw ConfigError("transformer: d_model " + std::to_string(d_model) + " not divisible by " + std::to_string(heads) + " heads");
    TransformerStack s;
    s.d_model = d_model;
    s.heads = heads;
    const double wb = 1.0 / std::sqrt(static_cast<double>(d_model));
    const double fb = 1.0 / std::sqrt(static_cast<double>(ff_width));
    for (size_t l = 0; l < n_layers; ++l) {
        const std::string p = prefix + ".block" + std::to_string(l);
        Layer layer;
        layer.ln1_g = &store.create(p + ".ln1.scale", Tensor::full({1, d_model}, 1.0));
        layer.ln1_b = &store.create(p + ".ln1.shift", Tensor::zeros({1, d_model}));
        layer.wq = &store.create_uniform(p + ".attn.wq", {d_model, d_model}, rng, -wb, wb);
        layer.wk = &store.create_uniform(p + ".attn.wk", {d_model, d_model}, rng, -wb, wb);
        layer.wv = &store.create_uniform(p + ".attn.wv", {d_model, d_model}, rng, -wb, wb);
        layer.wo = &store.create_uniform(p + ".attn.wo", {d_model, d_model}, rng, -wb, wb);
        layer.ln2_g = &store.create(p + ".ln2.scale", Tensor::full({1, d_model}, 1.0));
        layer.ln2_b = &store.create(p + ".ln2.shift", Tensor::zeros({1, d_model}));
        layer.ff1_w = &store.create_uniform(p + ".ffn.w1", {d_model, ff_width}, rng, -wb, wb);
        layer.ff1_b = &store.create(p + ".ffn.b1", Tensor::zeros({1, ff_width}));
        layer.ff2_w = &store.create_uniform(p + ".ffn.w2", {ff_width, d_model}, rng, -fb, fb);
        layer.ff2_b = &store.create(p + ".ffn.b2", Tensor::zeros({1, d_model}));
        s.layers.push_back(layer);
    }
    s.lnf_g = &store.create(prefix + ".lnf.scale", Tensor::full({1, d_model}, 1.0));
    s.lnf_b = &store.create(prefix + ".lnf.shift", Tensor::zeros({1, d_model}));
    return s;
}

Var TransformerStack::apply(Tape& tape, Var x, const std::vector<Range>& ranges) const {
    for (const Layer& l : layers) {
        Var h = layer_norm(x, tape.param(*l.ln1_g), tape.param(*l.ln1_b));
        Var att = multi_head_attention(matmul(h, tape.param(*l.wq)), matmul(h, tape.param(*l.wk)), matmul(h, tape.param(*l.wv)),
                                       ranges, heads);
        x = add(x, matmul(att, tape.param(*l.wo)));
        Var h2 = layer_norm(x, tape.param(*l.ln2_g), tape.param(*l.ln2_b));
        Var f = relu(add_rowvec(matmul(h2, tape.param(*l.ff1_w)), tape.param(*l.ff1_b)));
        x = add(x, add_rowvec(matmul(f, tape.param(*l.ff2_w)), tape.param(*l.ff2_b)));
    }
    return layer_norm(x, tape.param(*lnf_g), tape.param(*lnf_b));
}

}  // namespace micc
