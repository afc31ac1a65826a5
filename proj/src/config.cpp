#include "micc/config.hpp"

#include <fstream>
#include <set>

#include "micc/errors.hpp"

using nlohmann::json;

namespace micc {

Ablation ablation_from_string(const std::string& name) {
    if (name == "none") return Ablation::None;
    if (name == "no-align-patches") return Ablation::NoAlignPatches;
    if (name == "no-align-global") return Ablation::NoAlignGlobal;
    if (name == "no-fusion-concat") return Ablation::NoFusionConcat;
    if (name == "no-fusion-project") return Ablation::NoFusionProject;
    if (name == "cosine-relevance") return Ablation::CosineRelevance;
    if (name == "attention-fusion") return Ablation::AttentionFusion;
    throw ConfigError("unknown ablation variant: " + name);
}

std::string ablation_to_string(Ablation a) {
    switch (a) {
        case Ablation::None: return "none";
        case Ablation::NoAlignPatches: return "no-align-patches";
        case Ablation::NoAlignGlobal: return "no-align-global";
        case Ablation::NoFusionConcat: return "no-fusion-concat";
        case Ablation::NoFusionProject: return "no-fusion-project";
        case Ablation::CosineRelevance: return "cosine-relevance";
        case Ablation::AttentionFusion: return "attention-fusion";
    }
    return "none";
}

namespace {
template <class T>
void read_field(const json& j, std::set<std::string>& seen, const char* key, T& out) {
    seen.insert(key);
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
    }
}
}  // namespace

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    RunConfig c;
    std::set<std::string> seen;
    read_field(j, seen, "scales", c.scales);
    read_field(j, seen, "top_k", c.top_k);
    read_field(j, seen, "fusion_layers", c.fusion_layers);
    read_field(j, seen, "fusion_hidden", c.fusion_hidden);
    read_field(j, seen, "lambda", c.lambda);
    read_field(j, seen, "tau", c.tau);
    read_field(j, seen, "d_model", c.d_model);
    read_field(j, seen, "proj_dim", c.proj_dim);
    read_field(j, seen, "proj_hidden", c.proj_hidden);
    read_field(j, seen, "patch_channels", c.patch_channels);
    read_field(j, seen, "classifier_hidden", c.classifier_hidden);
    read_field(j, seen, "dropout", c.dropout);
    read_field(j, seen, "max_len", c.max_len);
    read_field(j, seen, "image_size", c.image_size);
    read_field(j, seen, "text_layers", c.text_layers);
    read_field(j, seen, "text_heads", c.text_heads);
    read_field(j, seen, "visual_layers", c.visual_layers);
    read_field(j, seen, "visual_heads", c.visual_heads);
    read_field(j, seen, "stage1_lr", c.stage1_lr);
    read_field(j, seen, "stage1_batch", c.stage1_batch);
    read_field(j, seen, "stage1_epochs", c.stage1_epochs);
    read_field(j, seen, "stage2_lr", c.stage2_lr);
    read_field(j, seen, "stage2_batch", c.stage2_batch);
    read_field(j, seen, "stage2_epochs", c.stage2_epochs);
    read_field(j, seen, "adam_beta1", c.adam_beta1);
    read_field(j, seen, "adam_beta2", c.adam_beta2);
    read_field(j, seen, "adam_eps", c.adam_eps);
    read_field(j, seen, "seed", c.seed);
    read_field(j, seen, "symmetric_nce", c.symmetric_nce);
    read_field(j, seen, "global_topk", c.global_topk);
    read_field(j, seen, "per_scale_attention", c.per_scale_attention);
    read_field(j, seen, "ablation", c.ablation);
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!seen.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");
    c.validate();
    return c;
}

json RunConfig::to_json() const {
    json j;
    j["scales"] = scales;
    j["top_k"] = top_k;
    j["fusion_layers"] = fusion_layers;
    j["fusion_hidden"] = fusion_hidden;
    j["lambda"] = lambda;
    j["tau"] = tau;
    j["d_model"] = d_model;
    j["proj_dim"] = proj_dim;
    j["proj_hidden"] = proj_hidden;
    j["patch_channels"] = patch_channels;
    j["classifier_hidden"] = classifier_hidden;
    j["dropout"] = dropout;
    j["max_len"] = max_len;
    j["image_size"] = image_size;
    j["text_layers"] = text_layers;
    j["text_heads"] = text_heads;
    j["visual_layers"] = visual_layers;
    j["visual_heads"] = visual_heads;
    j["stage1_lr"] = stage1_lr;
    j["stage1_batch"] = stage1_batch;
    j["stage1_epochs"] = stage1_epochs;
    j["stage2_lr"] = stage2_lr;
    j["stage2_batch"] = stage2_batch;
    j["stage2_epochs"] = stage2_epochs;
    j["adam_beta1"] = adam_beta1;
    j["adam_beta2"] = adam_beta2;
    j["adam_eps"] = adam_eps;
    j["seed"] = seed;
    j["symmetric_nce"] = symmetric_nce;
    j["global_topk"] = global_topk;
    j["per_scale_attention"] = per_scale_attention;
    j["ablation"] = ablation;
    return j;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("config: " + path + " is not valid JSON: " + e.what());
    }
    return from_json(j);
}

void RunConfig::validate() const {
    if (scales.empty()) throw ConfigError("config: scales must be non-empty");
    for (size_t i = 1; i < scales.size(); ++i)
        if (scales[i] <= scales[i - 1]) throw ConfigError("config: scales must be strictly increasing");
    for (size_t k : scales)
        if (k == 0 || image_size % k != 0)
            throw ConfigError("config: image_size " + std::to_string(image_size) + " not divisible by scale " + std::to_string(k));
    if (top_k < 1) throw ConfigError("config: top_k must be at least 1");
    if (lambda < 0.0 || lambda > 1.0) throw ConfigError("config: lambda must lie in [0,1]");
    if (tau <= 0.0) throw ConfigError("config: tau must be positive");
    if (d_model % 2 != 0) throw ConfigError("config: d_model must be even");
    if (d_model % text_heads != 0 || d_model % visual_heads != 0)
        throw ConfigError("config: d_model must be divisible by the head counts");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("config: dropout must lie in [0,1)");
    if (fusion_layers < 2) throw ConfigError("config: fusion_layers must be at least 2");
    if (stage1_batch < 2) throw ConfigError("config: stage1_batch must be at least 2");
    if (stage2_batch < 1) throw ConfigError("config: stage2_batch must be at least 1");
    if (max_len < 2) throw ConfigError("config: max_len must be at least 2");
    ablation_from_string(ablation);
}

}  // namespace micc
