#include "micc/model.hpp"

#include <cmath>

#include "micc/errors.hpp"

namespace micc {

namespace {
Sclip::Config sclip_config(const RunConfig& cfg) {
    Sclip::Config sc;
    sc.text.d_model = cfg.d_model;
    sc.text.heads = cfg.text_heads;
    sc.text.layers = cfg.text_layers;
    sc.text.max_len = cfg.max_len;
    sc.visual.scales = ScaleConfig{cfg.scales, cfg.patch_channels};
    sc.visual.d_model = cfg.d_model;
    sc.visual.heads = cfg.visual_heads;
    sc.visual.layers = cfg.visual_layers;
    sc.visual.per_scale_attention = cfg.per_scale_attention;
    sc.proj_hidden = cfg.proj_hidden;
    sc.proj_dim = cfg.proj_dim;
    sc.tau = cfg.tau;
    return sc;
}
}  // namespace

MiccModel::MiccModel(RunConfig cfg, std::vector<std::string> vocab_tokens) : cfg_(std::move(cfg)) {
    cfg_.validate();
    vocab_ = Vocabulary::from_tokens(vocab_tokens);
    Rng rng(cfg_.seed);
    sclip_ = Sclip::create(params_, vocab_.size(), sclip_config(cfg_), rng);
    fusion_ = FusionNet::create(params_, "fusion", cfg_.proj_dim, FusionNet::Config{cfg_.fusion_layers, cfg_.fusion_hidden, cfg_.lambda},
                                rng);
    head_ = ClassifierHead::create(params_, "classifier", classifier_input_width(),
                                   ClassifierHead::Config{cfg_.classifier_hidden, cfg_.dropout}, rng);
    if (cfg_.ablation_kind() == Ablation::NoFusionProject) {
        const size_t in = total_selected_slots() * cfg_.proj_dim;
        const double b = 1.0 / std::sqrt(static_cast<double>(in));
        reduce_w_ = &params_.create_uniform("reduce.w", {in, cfg_.proj_dim}, rng, -b, b);
    }
}

size_t MiccModel::total_selected_slots() const {
    size_t total = 0;
    for (size_t k : cfg_.scales) {
        const size_t per_side = cfg_.image_size / k;
        total += std::min(cfg_.top_k, per_side * per_side);
    }
    return total;
}

size_t MiccModel::classifier_input_width() const {
    switch (cfg_.ablation_kind()) {
        case Ablation::NoFusionConcat:
            return cfg_.proj_dim * (1 + total_selected_slots());
        case Ablation::AttentionFusion:
            return cfg_.proj_dim;
        default:
            return 2 * cfg_.proj_dim;
    }
}

std::vector<Parameter*> MiccModel::trainable_params() {
    const Ablation ab = cfg_.ablation_kind();
    const bool fusion_active = ab == Ablation::None || ab == Ablation::CosineRelevance;
    std::vector<Parameter*> out;
    for (auto& p : params_) {
        if (p->frozen) continue;
        if (!fusion_active && p->name.rfind("fusion.", 0) == 0) continue;
        out.push_back(p.get());
    }
    return out;
}

TokenSequence MiccModel::tokenize_text(const std::string& text) const { return tokenize(text, vocab_, cfg_.max_len); }

Tensor MiccModel::image_tensor(const ImageU8& image) const {
    return to_float_image(resize_nearest(image, cfg_.image_size, cfg_.image_size));
}

Var MiccModel::pretrain_loss(Tape& tape, const std::vector<TokenSequence>& seqs, const std::vector<const Tensor*>& images) const {
    return sclip_.pretrain_loss(tape, seqs, images, cfg_.symmetric_nce);
}

Var MiccModel::pretrain_loss_cached(Tape& tape, const std::vector<const Tensor*>& text_states,
                                    const std::vector<const Tensor*>& visual_states) const {
    if (text_states.size() != visual_states.size() || text_states.empty())
        throw DataError("pretrain: cached batch must pair text with visual states");
    auto stack = [&tape](const std::vector<const Tensor*>& blocks, std::vector<Range>& ranges) {
        std::vector<Var> rows;
        size_t off = 0;
        for (const Tensor* b : blocks) {
            rows.push_back(tape.constant(*b));
            ranges.push_back({off, b->rows()});
            off += b->rows();
        }
        return concat_rows(rows);
    };
    std::vector<Range> text_ranges, visual_ranges;
    Var h = stack(text_states, text_ranges);
    Var g = stack(visual_states, visual_ranges);
    Var t = mean_rows_ranges(sclip_.text_head().apply(tape, h), text_ranges);
    Var v = mean_rows_ranges(sclip_.image_head().apply(tape, g), visual_ranges);
    return info_nce_loss(tape, t, v, cfg_.tau, cfg_.symmetric_nce);
}

Var MiccModel::per_sample_feature(Tape& tape, Var text_row, Var patch_rows, Var encoder_rows, SampleDiagnostics* diag) const {
    const Ablation ab = cfg_.ablation_kind();
    if (ab == Ablation::NoAlignPatches) return concat_cols({text_row, mean_rows(patch_rows)});
    if (ab == Ablation::NoAlignGlobal)
        return concat_cols({text_row, sclip_.image_head().apply(tape, mean_rows(encoder_rows))});

    // relevance scores per patch, (m x 1)
    Var rel = matmul(patch_rows, transpose(text_row));
    if (ab == Ablation::CosineRelevance) {
        const size_t d = cfg_.proj_dim;
        Var ones = tape.constant(Tensor::full({d, 1}, 1.0));
        Var inv_patch = pow_scalar(add(matmul(mul(patch_rows, patch_rows), ones), tape.constant(Tensor::full({rel.value().rows(), 1}, 1e-12))), -0.5);
        Var inv_text = pow_scalar(add(matmul(mul(text_row, text_row), ones), tape.constant(Tensor::full({1, 1}, 1e-12))), -0.5);
        rel = mul_by_scalar(mul(rel, inv_patch), inv_text);
    }

    // hard Top-K over the forward values; gradients flow through the selected
    // entries only
    const std::vector<Range> spans = sclip_.visual_encoder().scale_spans(cfg_.image_size);
    RelevanceMatrix matrix;
    size_t max_slots = 0;
    for (const Range& sp : spans) max_slots = std::max(max_slots, sp.len);
    for (const Range& sp : spans) {
        std::vector<double> row(max_slots, RelevanceMatrix::kMasked);
        std::vector<bool> valid(max_slots, false);
        for (size_t i = 0; i < sp.len; ++i) {
            row[i] = rel.value()[sp.begin + i];
            valid[i] = true;
        }
        matrix.scores.push_back(std::move(row));
        matrix.valid.push_back(std::move(valid));
    }
    SelectedRegions selected = cfg_.global_topk ? top_k_select_global(matrix, cfg_.top_k) : top_k_select(matrix, cfg_.top_k);

    std::vector<size_t> rows;
    for (const SelectedRegion& e : selected.entries) rows.push_back(spans[e.scale].begin + e.patch);
    Var sel = select_rows(patch_rows, rows);
    Var rsel = select_rows(rel, rows);

    if (diag) {
        diag->relevance = matrix;
        diag->selected = selected;
    }

    switch (ab) {
        case Ablation::None:
        case Ablation::CosineRelevance: {
            FusionNet::Fused fused = fusion_.fuse(tape, text_row, sel, rsel);
            if (diag) {
                const size_t width = total_selected_slots();
                diag->alpha.assign(width, 0.0);
                diag->alpha_valid.assign(width, false);
                for (size_t i = 0; i < fused.alpha.value().size(); ++i) {
                    diag->alpha[i] = fused.alpha.value()[i];
                    diag->alpha_valid[i] = true;
                }
            }
            return fused.feature;
        }
        case Ablation::NoFusionConcat:
        case Ablation::NoFusionProject: {
            Var flat = reshape(sel, 1, rows.size() * cfg_.proj_dim);
            const size_t want = total_selected_slots() * cfg_.proj_dim;
            if (flat.value().cols() < want)
                flat = concat_cols({flat, tape.constant(Tensor::zeros({1, want - flat.value().cols()}))});
            if (ab == Ablation::NoFusionConcat) return concat_cols({text_row, flat});
            return concat_cols({text_row, matmul(flat, tape.param(*reduce_w_))});
        }
        case Ablation::AttentionFusion:
            return add(text_row, attention(text_row, sel, sel));
        default:
            throw ConfigError("unreachable ablation wiring");
    }
}

Var MiccModel::classify(Tape& tape, const std::vector<TokenSequence>& seqs, const std::vector<const Tensor*>& images, bool training,
                        Rng& dropout_rng, std::vector<SampleDiagnostics>* diagnostics) const {
    if (seqs.size() != images.size() || seqs.empty()) throw DataError("classify: batch must pair texts with images");
    Var t = sclip_.text_global(tape, seqs);
    std::vector<Range> sample_ranges;
    Var g = sclip_.visual_encoder().encode(tape, images, &sample_ranges);
    Var projected = sclip_.image_head().apply(tape, g);

    if (diagnostics) diagnostics->assign(seqs.size(), {});
    std::vector<Var> features;
    for (size_t s = 0; s < seqs.size(); ++s) {
        Var text_row = slice_rows(t, {s, 1});
        Var patch_rows = slice_rows(projected, sample_ranges[s]);
        Var encoder_rows = slice_rows(g, sample_ranges[s]);
        features.push_back(per_sample_feature(tape, text_row, patch_rows, encoder_rows, diagnostics ? &(*diagnostics)[s] : nullptr));
    }
    Var yhat = head_.forward(tape, concat_rows(features), training, dropout_rng);
    if (!yhat.value().all_finite()) throw NumericError("classify: non-finite prediction");
    if (diagnostics)
        for (size_t s = 0; s < seqs.size(); ++s) (*diagnostics)[s].yhat = yhat.value()[s];
    return yhat;
}

SampleDiagnostics MiccModel::predict(const std::string& text, const ImageU8& image) const {
    Tape tape;
    Rng unused(0);
    Tensor img = image_tensor(image);
    std::vector<SampleDiagnostics> diag;
    classify(tape, {tokenize_text(text)}, {&img}, false, unused, &diag);
    return diag[0];
}

uint64_t params_hash(const ParamStore& store, const std::string& prefix) {
    return store.hash_where([&](const Parameter& p) { return prefix.empty() || p.name.rfind(prefix, 0) == 0; });
}

}  // namespace micc
