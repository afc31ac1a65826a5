#pragma once

#include <string>
#include <vector>

#include "micc/alignment.hpp"
#include "micc/graph.hpp"
#include "micc/optim.hpp"

namespace micc {

// score = lambda * score_fc + (1 - lambda) * score_dot, on raw values.
Var blend_scores(Var fc, Var dot, double lambda);

struct FusedValue {
    Tensor feature;   // F = T (+) V_refact, (1 x 2d')
    Tensor v_refact;  // (1 x d')
    std::vector<double> alpha;       // per selected slot, padded positions exactly 0
    std::vector<bool> alpha_valid;   // padded-slot mask aligned with alpha
};

// Scale-Aware Fusion Network: a feed-forward salience scorer blended with the
// relevance vector, masked softmax weights, weighted patch aggregation and
// concatenation with the text feature.
class FusionNet {
public:
    struct Config {
        size_t layers = 2;  // total linear layers in the scorer
        size_t hidden = 256;
        double lambda = 0.7;
    };

    static FusionNet create(ParamStore& store, const std::string& prefix, size_t patch_dim, const Config& cfg, Rng& rng);

    // score_fc for each patch row; (n x 1).
    Var scores(Tape& tape, Var patches) const;
    Tensor scores_value(const Tensor& patches) const;

    struct Fused {
        Var feature;   // (1 x 2d')
        Var v_refact;  // (1 x d')
        Var alpha;     // (1 x n) over the selected patches
    };
    // selected: (n x d') patch rows, rel: (n x 1) their relevance scores.
    Fused fuse(Tape& tape, Var text_feature, Var selected, Var rel) const;

    // Value-level path used by eval/infer; `pad_to` right-pads alpha with
    // exact zeros for under-filled selections.
    FusedValue fuse_value(const Tensor& text_feature, const Tensor& selected, const std::vector<double>& rel, size_t pad_to = 0) const;

    const Config& config() const { return cfg_; }

private:
    Config cfg_;
    std::vector<Parameter*> weights_;  // layer i weight
    std::vector<Parameter*> biases_;   // layer i bias
};

}  // namespace micc
