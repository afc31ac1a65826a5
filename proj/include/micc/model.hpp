#pragma once

#include <optional>
#include <string>
#include <vector>

#include "micc/alignment.hpp"
#include "micc/classifier.hpp"
#include "micc/config.hpp"
#include "micc/fusion.hpp"
#include "micc/image_io.hpp"
#include "micc/sclip.hpp"

namespace micc {

struct SampleDiagnostics {
    RelevanceMatrix relevance;
    SelectedRegions selected;
    std::vector<double> alpha;       // padded to scales*K, exact zeros at masked slots
    std::vector<bool> alpha_valid;
    double yhat = 0.0;
};

// The full pipeline: SCLIP encoder, cross-modal Top-K alignment, scale-aware
// fusion and the rumor judgment head, wired per RunConfig (ablation included).
class MiccModel {
public:
    MiccModel(RunConfig cfg, std::vector<std::string> vocab_tokens);

    const RunConfig& config() const { return cfg_; }
    const Vocabulary& vocab() const { return vocab_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const Sclip& sclip() const { return sclip_; }

    void apply_stage1_freeze() { Sclip::apply_stage1_freeze(params_); }
    void unfreeze_all() { params_.unfreeze_all(); }
    // Unfrozen parameters that actually participate under the current wiring.
    std::vector<Parameter*> trainable_params();

    TokenSequence tokenize_text(const std::string& text) const;
    Tensor image_tensor(const ImageU8& image) const;  // resized to config size

    // Stage-1 loss over a paired batch.
    Var pretrain_loss(Tape& tape, const std::vector<TokenSequence>& seqs, const std::vector<const Tensor*>& images) const;
    // Same loss over cached frozen-encoder outputs (H and G row blocks).
    Var pretrain_loss_cached(Tape& tape, const std::vector<const Tensor*>& text_states,
                             const std::vector<const Tensor*>& visual_states) const;

    // Stage-2 forward: (B x 1) rumor probabilities.
    Var classify(Tape& tape, const std::vector<TokenSequence>& seqs, const std::vector<const Tensor*>& images, bool training,
                 Rng& dropout_rng, std::vector<SampleDiagnostics>* diagnostics = nullptr) const;

    // Value-level single-sample inference (eval mode, diagnostics filled).
    SampleDiagnostics predict(const std::string& text, const ImageU8& image) const;

    size_t classifier_input_width() const;
    size_t total_selected_slots() const;  // Sigma_i min(K, N_i) at the config image size

private:
    Var per_sample_feature(Tape& tape, Var text_row, Var patch_rows, Var encoder_rows, SampleDiagnostics* diag) const;

    RunConfig cfg_;
    Vocabulary vocab_;
    ParamStore params_;
    Sclip sclip_;
    FusionNet fusion_;
    ClassifierHead head_;
    Parameter* reduce_w_ = nullptr;  // only for the no-fusion-project variant
};

uint64_t params_hash(const ParamStore& store, const std::string& prefix = "");

}  // namespace micc
