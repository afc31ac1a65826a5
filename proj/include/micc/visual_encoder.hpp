#pragma once

#include <string>
#include <vector>

#include "micc/graph.hpp"
#include "micc/optim.hpp"
#include "micc/transformer.hpp"

namespace micc {

// Float image (3, H, W), values in [0,1].
void check_image(const Tensor& image);

struct ScaleConfig {
    std::vector<size_t> kernels;  // strictly increasing receptive-field sides
    size_t channels = 64;         // patch embedding width C
    void validate(size_t height, size_t width) const;
};

// Non-overlapping k x k windows flattened row-major; each row is the raw
// (channel, dy, dx) pixel block of one patch, ready for the linear kernel.
Tensor extract_patches(const Tensor& image, size_t kernel);

struct PatchSequence {
    size_t scale_index = 0;
    size_t grid_h = 0, grid_w = 0;  // H/k, W/k
    Tensor vectors;                 // (N_s x C)
    size_t count() const { return grid_h * grid_w; }
};

class VisualEncoder {
public:
    struct Config {
        ScaleConfig scales{{32, 64}, 64};
        size_t d_model = 128;
        size_t heads = 4;
        size_t layers = 2;
        bool per_scale_attention = false;  // joint by default; ablation splits attention per scale
    };

    static VisualEncoder create(ParamStore& store, const std::string& prefix, const Config& cfg, Rng& rng);

    // Conv-as-matmul with stride = kernel, using the scale's learned kernel.
    PatchSequence patchify_scale(const Tensor& image, size_t scale_index) const;

    // Batched encode of same-sized images: returns stacked G ((B*m) x d_model)
    // plus one attention range per sample (or one per sample-scale when split).
    Var encode(Tape& tape, const std::vector<const Tensor*>& images, std::vector<Range>* sample_ranges) const;
    // Same, but concatenating scales in the given order (each patch keeps its
    // own scale-type embedding). The joint Transformer has no positional
    // signal besides those embeddings, so outputs permute with the order.
    Var encode_ordered(Tape& tape, const std::vector<const Tensor*>& images, const std::vector<size_t>& scale_order,
                       std::vector<Range>* sample_ranges) const;

    size_t n_scales() const { return cfg_.scales.kernels.size(); }
    size_t patches_at_scale(size_t side, size_t scale_index) const;
    size_t patches_per_image(size_t side) const;  // m
    // Within one sample block rows are scale-major: this is the (scale, patch)
    // -> row bijection.
    size_t row_of(size_t side, size_t scale_index, size_t patch) const;
    std::vector<Range> scale_spans(size_t side) const;  // per-scale row ranges inside a sample

    const Config& config() const { return cfg_; }

private:
    Config cfg_;
    std::vector<Parameter*> patch_kernels_;  // per scale: (3k^2 x C)
    std::vector<Parameter*> patch_biases_;   // per scale: (1 x C)
    Parameter* input_proj_ = nullptr;        // C -> d_model
    Parameter* scale_embed_ = nullptr;       // (n_scales x d_model)
    TransformerStack blocks_;
};

}  // namespace micc
