#include "micc/sclip.hpp"

#include <cmath>

#include "micc/errors.hpp"

namespace micc {

ProjectionHead ProjectionHead::create(ParamStore& store, const std::string& prefix, size_t d_in, size_t hidden, size_t d_out,
                                      Rng& rng) {
    ProjectionHead head;
    const double b1 = 1.0 / std::sqrt(static_cast<double>(d_in));
    const double b2 = 1.0 / std::sqrt(static_cast<double>(hidden));
    head.w1 = &store.create_uniform(prefix + ".w1", {d_in, hidden}, rng, -b1, b1);
    head.w2 = &store.create_uniform(prefix + ".w2", {hidden, d_out}, rng, -b2, b2);
    return head;
}

Var ProjectionHead::apply(Tape& tape, Var rows) const {
    if (rows.value().cols() != w1->tensor.rows())
        throw ShapeError("projection head: input width " + shape_str(rows.value()) + " vs " + shape_str(w1->tensor));
    return matmul(relu(matmul(rows, tape.param(*w1))), tape.param(*w2));
}

Tensor ProjectionHead::apply_value(const Tensor& rows) const {
    if (rows.cols() != w1->tensor.rows())
        throw ShapeError("projection head: input width " + shape_str(rows) + " vs " + shape_str(w1->tensor));
    Tape tape;
    return matmul(relu(matmul(tape.constant(rows), tape.constant(w1->tensor))), tape.constant(w2->tensor)).value();
}

MultiScalePatches MultiScalePatches::from_scales(const std::vector<Tensor>& per_scale_rows) {
    MultiScalePatches m;
    if (per_scale_rows.empty()) throw DataError("patch set: no scales");
    m.dim = per_scale_rows[0].cols();
    for (const Tensor& t : per_scale_rows) m.max_slots = std::max(m.max_slots, t.rows());
    for (const Tensor& t : per_scale_rows) {
        if (t.cols() != m.dim) throw ShapeError("patch set: mixed dims " + shape_str(t));
        Tensor padded({m.max_slots, m.dim});
        std::copy(t.data(), t.data() + t.size(), padded.data());
        m.slots.push_back(std::move(padded));
        m.valid_counts.push_back(t.rows());
        std::vector<bool> mk(m.max_slots, false);
        for (size_t i = 0; i < t.rows(); ++i) mk[i] = true;
        m.mask.push_back(std::move(mk));
    }
    return m;
}

Tensor pool_valid(const Tensor& rows, const std::vector<bool>& valid) {
    if (valid.size() != rows.rows()) throw ShapeError("pool: mask length " + std::to_string(valid.size()) + " vs " + shape_str(rows));
    Tensor out({1, rows.cols()});
    size_t n = 0;
    for (size_t i = 0; i < rows.rows(); ++i) {
        if (!valid[i]) continue;
        ++n;
        for (size_t j = 0; j < rows.cols(); ++j) out[j] += rows.at(i, j);
    }
    if (n == 0) throw DataError("pool: no valid rows");
    out.scale_(1.0 / static_cast<double>(n));
    return out;
}

Var info_nce_loss(Tape& tape, Var text, Var image, double tau, bool symmetric) {
    if (tau <= 0.0) throw ConfigError("info_nce: temperature must be positive");
    if (text.value().rows() < 1 || !text.value().same_shape(image.value()))
        throw ShapeError("info_nce: embedding shapes " + shape_str(text.value()) + " vs " + shape_str(image.value()));
    const size_t n = text.value().rows();
    Var sims = scale(matmul(text, transpose(image)), 1.0 / tau);
    if (!sims.value().all_finite()) throw NumericError("info_nce: non-finite similarity");
    Var eye = tape.constant(Tensor::identity(n));
    auto one_direction = [&](Var logits) {
        Var lse = logsumexp_rows(logits);
        Var positives = sum_all(mul(logits, eye));
        return scale(sub(sum_all(lse), positives), 1.0 / static_cast<double>(n));
    };
    Var loss = one_direction(sims);
    if (symmetric) loss = scale(add(loss, one_direction(transpose(sims))), 0.5);
    return loss;
}

double info_nce_loss_value(const Tensor& text, const Tensor& image, double tau, bool symmetric) {
    Tape tape;
    return info_nce_loss(tape, tape.constant(text), tape.constant(image), tau, symmetric).value().item();
}

Sclip Sclip::create(ParamStore& store, size_t vocab_size, const Config& cfg, Rng& rng) {
    Sclip s;
    s.cfg_ = cfg;
    s.text_ = TextEncoder::create(store, "text", vocab_size, cfg.text, rng);
    s.visual_ = VisualEncoder::create(store, "visual", cfg.visual, rng);
    s.text_head_ = ProjectionHead::create(store, "proj.text", cfg.text.d_model, cfg.proj_hidden, cfg.proj_dim, rng);
    s.image_head_ = ProjectionHead::create(store, "proj.image", cfg.visual.d_model, cfg.proj_hidden, cfg.proj_dim, rng);
    return s;
}

Var Sclip::text_global(Tape& tape, const std::vector<TokenSequence>& seqs) const {
    std::vector<Range> ranges;
    Var h = text_.encode(tape, seqs, &ranges);
    return mean_rows_ranges(text_head_.apply(tape, h), ranges);
}

Var Sclip::patch_projections(Tape& tape, const std::vector<const Tensor*>& images, std::vector<Range>* sample_ranges) const {
    Var g = visual_.encode(tape, images, sample_ranges);
    return image_head_.apply(tape, g);
}

Var Sclip::image_global(Tape& tape, const std::vector<const Tensor*>& images) const {
    std::vector<Range> ranges;
    Var projected = patch_projections(tape, images, &ranges);
    return mean_rows_ranges(projected, ranges);
}

Var Sclip::pretrain_loss(Tape& tape, const std::vector<TokenSequence>& seqs, const std::vector<const Tensor*>& images,
                         bool symmetric) const {
    if (seqs.size() != images.size() || seqs.empty()) throw DataError("pretrain: batch must pair texts with images");
    return info_nce_loss(tape, text_global(tape, seqs), image_global(tape, images), cfg_.tau, symmetric);
}

SclipOutput Sclip::encode_pair(const TokenSequence& seq, const Tensor& image) const {
    Tape tape;
    SclipOutput out;
    out.text_feature = text_global(tape, {seq}).value();

    std::vector<Range> sample_ranges;
    Var projected = patch_projections(tape, {&image}, &sample_ranges);
    const Tensor& rows = projected.value();
    const std::vector<Range> spans = visual_.scale_spans(image.dim(1));
    std::vector<Tensor> per_scale;
    for (const Range& sp : spans) {
        Tensor block({sp.len, rows.cols()});
        std::copy(rows.data() + sp.begin * rows.cols(), rows.data() + (sp.begin + sp.len) * rows.cols(), block.data());
        per_scale.push_back(std::move(block));
    }
    out.patches = MultiScalePatches::from_scales(per_scale);
    return out;
}

void Sclip::apply_stage1_freeze(ParamStore& store) {
    store.freeze_all();
    store.set_frozen("proj.", false);
}

}  // namespace micc
