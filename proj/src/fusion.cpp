#include "micc/fusion.hpp"

#include <cmath>

#include "micc/errors.hpp"

namespace micc {

Var blend_scores(Var fc, Var dot, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("blend: lambda must lie in [0,1], got " + std::to_string(lambda));
    if (!fc.value().same_shape(dot.value()))
        throw ShapeError("blend: score lengths differ, " + shape_str(fc.value()) + " vs " + shape_str(dot.value()));
    return add(scale(fc, lambda), scale(dot, 1.0 - lambda));
}

FusionNet FusionNet::create(ParamStore& store, const std::string& prefix, size_t patch_dim, const Config& cfg, Rng& rng) {
    if (cfg.layers < 2) throw ConfigError("fusion: scorer needs at least 2 linear layers");
    if (cfg.lambda < 0.0 || cfg.lambda > 1.0) throw ConfigError("fusion: lambda must lie in [0,1]");
    FusionNet net;
    net.cfg_ = cfg;
    for (size_t l = 0; l < cfg.layers; ++l) {
        const size_t in = l == 0 ? patch_dim : cfg.hidden;
        const size_t out = l + 1 == cfg.layers ? 1 : cfg.hidden;
        const double b = 1.0 / std::sqrt(static_cast<double>(in));
        net.weights_.push_back(&store.create_uniform(prefix + ".w" + std::to_string(l + 1), {in, out}, rng, -b, b));
        net.biases_.push_back(&store.create(prefix + ".b" + std::to_string(l + 1), Tensor::zeros({1, out})));
    }
    return net;
}

Var FusionNet::scores(Tape& tape, Var patches) const {
    if (patches.value().cols() != weights_[0]->tensor.rows())
        throw ShapeError("fusion: patch width " + shape_str(patches.value()) + " vs " + shape_str(weights_[0]->tensor));
    Var x = patches;
    for (size_t l = 0; l < weights_.size(); ++l) {
        x = add_rowvec(matmul(x, tape.param(*weights_[l])), tape.param(*biases_[l]));
        if (l + 1 < weights_.size()) x = relu(x);
    }
    return x;
}

Tensor FusionNet::scores_value(const Tensor& patches) const {
    Tape tape;
    Var x = tape.constant(patches);
    for (size_t l = 0; l < weights_.size(); ++l) {
        if (x.value().cols() != weights_[l]->tensor.rows())
            throw ShapeError("fusion: patch width " + shape_str(patches) + " vs " + shape_str(weights_[l]->tensor));
        x = add_rowvec(matmul(x, tape.constant(weights_[l]->tensor)), tape.constant(biases_[l]->tensor));
        if (l + 1 < weights_.size()) x = relu(x);
    }
    return x.value();
}

FusionNet::Fused FusionNet::fuse(Tape& tape, Var text_feature, Var selected, Var rel) const {
    if (selected.value().rows() < 1) throw DataError("fusion: no selected patches");
    Var fc = scores(tape, selected);
    Var blended = blend_scores(fc, rel, cfg_.lambda);
    Fused out;
    out.alpha = softmax_rows(transpose(blended));    // (1 x n)
    out.v_refact = matmul(out.alpha, selected);      // (1 x d')
    out.feature = concat_cols({text_feature, out.v_refact});
    return out;
}

FusedValue FusionNet::fuse_value(const Tensor& text_feature, const Tensor& selected, const std::vector<double>& rel,
                                 size_t pad_to) const {
    if (selected.rows() < 1) throw DataError("fusion: no selected patches");
    if (rel.size() != selected.rows()) throw ShapeError("fusion: relevance length vs selected rows");
    Tape tape;
    Fused f = fuse(tape, tape.constant(text_feature), tape.constant(selected), tape.constant(Tensor::column(rel)));
    FusedValue out;
    out.feature = f.feature.value();
    out.v_refact = f.v_refact.value();
    const size_t n = selected.rows();
    const size_t width = std::max(pad_to, n);
    out.alpha.assign(width, 0.0);
    out.alpha_valid.assign(width, false);
    for (size_t i = 0; i < n; ++i) {
        out.alpha[i] = f.alpha.value()[i];
        out.alpha_valid[i] = true;
    }
    return out;
}

}  // namespace micc
