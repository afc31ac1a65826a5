#pragma once

#include <string>
#include <vector>

#include "micc/graph.hpp"
#include "micc/optim.hpp"
#include "micc/text_encoder.hpp"
#include "micc/visual_encoder.hpp"

namespace micc {

// Bias-free two-layer MLP head: W2 * ReLU(W1 * x), applied row-wise.
struct ProjectionHead {
    Parameter* w1 = nullptr;  // (d_in x hidden)
    Parameter* w2 = nullptr;  // (hidden x d_out)

    static ProjectionHead create(ParamStore& store, const std::string& prefix, size_t d_in, size_t hidden, size_t d_out, Rng& rng);
    Var apply(Tape& tape, Var rows) const;
    Tensor apply_value(const Tensor& rows) const;
    size_t out_dim() const { return w2->tensor.cols(); }
};

// The multi-scale visual feature set M: per-scale projected patch vectors,
// zero-padded across scales to one rectangular store with a validity mask.
struct MultiScalePatches {
    size_t dim = 0;
    size_t max_slots = 0;
    std::vector<Tensor> slots;            // per scale: (max_slots x dim), invalid rows exactly zero
    std::vector<size_t> valid_counts;     // per scale
    std::vector<std::vector<bool>> mask;  // [scale][slot]

    size_t n_scales() const { return slots.size(); }
    static MultiScalePatches from_scales(const std::vector<Tensor>& per_scale_rows);
};

struct SclipOutput {
    Tensor text_feature;  // T, (1 x d')
    MultiScalePatches patches;
};

// Mean over valid rows only; errors on zero valid rows.
Tensor pool_valid(const Tensor& rows, const std::vector<bool>& valid);

// One-directional InfoNCE (text ranks images); `symmetric` averages in the
// reverse direction. Similarity is the raw dot product.
Var info_nce_loss(Tape& tape, Var text, Var image, double tau, bool symmetric = false);
double info_nce_loss_value(const Tensor& text, const Tensor& image, double tau, bool symmetric = false);

// The full SCLIP encoder: both branches plus the contrastive projection heads.
class Sclip {
public:
    struct Config {
        TextEncoder::Config text;
        VisualEncoder::Config visual;
        size_t proj_hidden = 256;
        size_t proj_dim = 128;  // d'
        double tau = 0.07;
    };

    static Sclip create(ParamStore& store, size_t vocab_size, const Config& cfg, Rng& rng);

    const TextEncoder& text_encoder() const { return text_; }
    const VisualEncoder& visual_encoder() const { return visual_; }
    const ProjectionHead& text_head() const { return text_head_; }
    const ProjectionHead& image_head() const { return image_head_; }
    const Config& config() const { return cfg_; }

    // Batched graph pieces. T/V are (B x d').
    Var text_global(Tape& tape, const std::vector<TokenSequence>& seqs) const;
    Var patch_projections(Tape& tape, const std::vector<const Tensor*>& images, std::vector<Range>* sample_ranges) const;
    Var image_global(Tape& tape, const std::vector<const Tensor*>& images) const;
    Var pretrain_loss(Tape& tape, const std::vector<TokenSequence>& seqs, const std::vector<const Tensor*>& images,
                      bool symmetric) const;

    // Value-level single pair; eval mode. Emits T and zero-padded M.
    SclipOutput encode_pair(const TokenSequence& seq, const Tensor& image) const;

    // Stage-1 contract: freeze both encoder branches, train only the heads.
    static void apply_stage1_freeze(ParamStore& store);

private:
    Config cfg_;
    TextEncoder text_;
    VisualEncoder visual_;
    ProjectionHead text_head_;
    ProjectionHead image_head_;
};

}  // namespace micc
