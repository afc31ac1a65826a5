#pragma once

#include <json.hpp>

#include <string>
#include <vector>

namespace micc {

enum class Ablation {
    None,
    NoAlignPatches,   // skip Top-K, mean all valid projected patches
    NoAlignGlobal,    // project the pooled encoder-level global image feature
    NoFusionConcat,   // concat selected patches + text directly
    NoFusionProject,  // linear-reduce the selected patches, then concat
    CosineRelevance,  // cosine in place of the dot product
    AttentionFusion,  // cross-attention readout instead of concatenation
};

Ablation ablation_from_string(const std::string& name);
std::string ablation_to_string(Ablation a);

// Every field has a pinned default; table-derived ones are covered by the
// golden-config test.
struct RunConfig {
    std::vector<size_t> scales = {32, 64};
    size_t top_k = 2;
    size_t fusion_layers = 2;
    size_t fusion_hidden = 256;
    double lambda = 0.7;
    double tau = 0.07;

    size_t d_model = 128;
    size_t proj_dim = 128;     // d'
    size_t proj_hidden = 256;  // h_p
    size_t patch_channels = 64;
    size_t classifier_hidden = 256;
    double dropout = 0.3;
    size_t max_len = 64;
    size_t image_size = 192;
    size_t text_layers = 2, text_heads = 4;
    size_t visual_layers = 2, visual_heads = 4;

    double stage1_lr = 5e-4;
    size_t stage1_batch = 64;
    size_t stage1_epochs = 5;
    double stage2_lr = 2e-4;
    size_t stage2_batch = 32;
    size_t stage2_epochs = 20;
    double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;

    uint64_t seed = 42;
    bool symmetric_nce = false;
    bool global_topk = false;
    bool per_scale_attention = false;
    std::string ablation = "none";

    static RunConfig from_json(const nlohmann::json& j);  // unknown keys are errors
    nlohmann::json to_json() const;
    static RunConfig load(const std::string& path);
    void validate() const;
    Ablation ablation_kind() const { return ablation_from_string(ablation); }
};

}  // namespace micc
