#pragma once

#include <string>
#include <vector>

#include "micc/graph.hpp"
#include "micc/optim.hpp"

namespace micc {

// Pre-norm residual Transformer stack shared by the text and visual branches:
// x += Wo * MHA(LN(x)); x += FFN(LN(x)); final LN. No attention/FFN dropout.
struct TransformerStack {
    struct Layer {
        Parameter *ln1_g, *ln1_b;
        Parameter *wq, *wk, *wv, *wo;
        Parameter *ln2_g, *ln2_b;
        Parameter *ff1_w, *ff1_b, *ff2_w, *ff2_b;
    };

    size_t d_model = 0;
    size_t heads = 0;
    std::vector<Layer> layers;
    Parameter *lnf_g = nullptr, *lnf_b = nullptr;

    static TransformerStack create(ParamStore& store, const std::string& prefix, size_t d_model, size_t heads, size_t n_layers,
                                   size_t ff_width, Rng& rng);

    // x: stacked rows, ranges: the per-sample spans attention may not cross.
    Var apply(Tape& tape, Var x, const std::vector<Range>& ranges) const;
};

}  // namespace micc
