#include "micc/visual_encoder.hpp"

#include <cmath>

#include "micc/errors.hpp"
#include "micc/gemm.hpp"

namespace micc {

void check_image(const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) throw DataError("image: expected shape [3xHxW], got " + shape_str(image));
}

void ScaleConfig::validate(size_t height, size_t width) const {
    if (kernels.empty()) throw ConfigError("scales: need at least one receptive field");
    if (channels == 0) throw ConfigError("scales: channel count must be positive");
    size_t prev = 0;
    for (size_t k : kernels) {
        if (k == 0 || k <= prev) throw ConfigError("scales: kernel sizes must be strictly increasing and positive");
        if (k > std::min(height, width))
            throw ConfigError("scales: kernel " + std::to_string(k) + " exceeds image " + std::to_string(height) + "x" +
                              std::to_string(width));
        prev = k;
    }
}

Tensor extract_patches(const Tensor& image, size_t kernel) {
    check_image(image);
    const size_t h = image.dim(1), w = image.dim(2);
    if (kernel == 0 || h % kernel != 0 || w % kernel != 0)
        throw DataError("patchify: image " + std::to_string(h) + "x" + std::to_string(w) + " not divisible by scale " +
                        std::to_string(kernel));
    const size_t gh = h / kernel, gw = w / kernel;
    Tensor out({gh * gw, 3 * kernel * kernel});
    const double* img = image.data();
    for (size_t py = 0; py < gh; ++py)
        for (size_t px = 0; px < gw; ++px) {
            double* row = out.data() + (py * gw + px) * out.cols();
            for (size_t c = 0; c < 3; ++c)
                for (size_t dy = 0; dy < kernel; ++dy) {
                    const double* src = img + c * h * w + (py * kernel + dy) * w + px * kernel;
                    std::copy(src, src + kernel, row + c * kernel * kernel + dy * kernel);
                }
        }
    return out;
}

VisualEncoder VisualEncoder::create(ParamStore& store, const std::string& prefix, const Config& cfg, Rng& rng) {
    VisualEncoder enc;
    enc.cfg_ = cfg;
    const size_t c = cfg.scales.channels;
    for (size_t s = 0; s < cfg.scales.kernels.size(); ++s) {
        const size_t k = cfg.scales.kernels[s];
        const size_t fan_in = 3 * k * k;
        const double b = 1.0 / std::sqrt(static_cast<double>(fan_in));
        enc.patch_kernels_.push_back(
            &store.create_uniform(prefix + ".patchify" + std::to_string(k) + ".kernel", {fan_in, c}, rng, -b, b));
        enc.patch_biases_.push_back(&store.create(prefix + ".patchify" + std::to_string(k) + ".bias", Tensor::zeros({1, c})));
    }
    const double pb = 1.0 / std::sqrt(static_cast<double>(c));
    enc.input_proj_ = &store.create_uniform(prefix + ".input_proj", {c, cfg.d_model}, rng, -pb, pb);
    const double eb = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    enc.scale_embed_ = &store.create_uniform(prefix + ".scale_embed", {cfg.scales.kernels.size(), cfg.d_model}, rng, -eb, eb);
    enc.blocks_ = TransformerStack::create(store, prefix, cfg.d_model, cfg.heads, cfg.layers, 4 * cfg.d_model, rng);
    return enc;
}

PatchSequence VisualEncoder::patchify_scale(const Tensor& image, size_t scale_index) const {
    if (scale_index >= n_scales()) throw ConfigError("patchify: no scale index " + std::to_string(scale_index));
    check_image(image);
    cfg_.scales.validate(image.dim(1), image.dim(2));
    const size_t k = cfg_.scales.kernels[scale_index];
    Tensor patches = extract_patches(image, k);
    const Tensor& w = patch_kernels_[scale_index]->tensor;
    const Tensor& b = patch_biases_[scale_index]->tensor;
    PatchSequence seq;
    seq.scale_index = scale_index;
    seq.grid_h = image.dim(1) / k;
    seq.grid_w = image.dim(2) / k;
    seq.vectors = Tensor({patches.rows(), w.cols()});
    gemm(false, false, patches.rows(), w.cols(), patches.cols(), 1.0, patches.data(), patches.cols(), w.data(), w.cols(), 0.0,
         seq.vectors.data(), w.cols());
    for (size_t i = 0; i < seq.vectors.rows(); ++i)
        for (size_t j = 0; j < seq.vectors.cols(); ++j) seq.vectors.at(i, j) += b[j];
    return seq;
}

size_t VisualEncoder::patches_at_scale(size_t side, size_t scale_index) const {
    const size_t k = cfg_.scales.kernels[scale_index];
    if (side % k != 0)
        throw DataError("patchify: image " + std::to_string(side) + "x" + std::to_string(side) + " not divisible by scale " +
                        std::to_string(k));
    return (side / k) * (side / k);
}

size_t VisualEncoder::patches_per_image(size_t side) const {
    size_t m = 0;
    for (size_t s = 0; s < n_scales(); ++s) m += patches_at_scale(side, s);
    return m;
}

size_t VisualEncoder::row_of(size_t side, size_t scale_index, size_t patch) const {
    size_t row = 0;
    for (size_t s = 0; s < scale_index; ++s) row += patches_at_scale(side, s);
    return row + patch;
}

std::vector<Range> VisualEncoder::scale_spans(size_t side) const {
    std::vector<Range> spans;
    size_t off = 0;
    for (size_t s = 0; s < n_scales(); ++s) {
        size_t n = patches_at_scale(side, s);
        spans.push_back({off, n});
        off += n;
    }
    return spans;
}

Var VisualEncoder::encode(Tape& tape, const std::vector<const Tensor*>& images, std::vector<Range>* sample_ranges) const {
    std::vector<size_t> order(n_scales());
    for (size_t s = 0; s < order.size(); ++s) order[s] = s;
    return encode_ordered(tape, images, order, sample_ranges);
}

Var VisualEncoder::encode_ordered(Tape& tape, const std::vector<const Tensor*>& images, const std::vector<size_t>& scale_order,
                                  std::vector<Range>* sample_ranges) const {
    if (images.empty()) throw DataError("visual encoder: empty batch");
    if (scale_order.size() != n_scales()) throw ConfigError("visual encoder: scale order must list every scale once");
    const size_t side = images[0]->dim(1);
    for (const Tensor* img : images) {
        check_image(*img);
        if (img->dim(1) != side || img->dim(2) != side)
            throw DataError("visual encoder: batched images must share one size, got " + shape_str(*img));
    }
    cfg_.scales.validate(side, side);
    const size_t batch = images.size();
    const size_t m = patches_per_image(side);

    // Per scale: stack every sample's raw patch rows and run one big linear map.
    std::vector<Var> per_scale;  // each ((B*N_s) x C), sample-major within the scale
    for (size_t s = 0; s < n_scales(); ++s) {
        const size_t k = cfg_.scales.kernels[s];
        const size_t ns = patches_at_scale(side, s);
        Tensor raw({batch * ns, 3 * k * k});
        for (size_t b = 0; b < batch; ++b) {
            Tensor p = extract_patches(*images[b], k);
            std::copy(p.data(), p.data() + p.size(), raw.data() + b * ns * raw.cols());
        }
        Var projected = add_rowvec(matmul(tape.constant(std::move(raw)), tape.param(*patch_kernels_[s])),
                                   tape.param(*patch_biases_[s]));
        per_scale.push_back(projected);
    }

    // Reorder (scale-major of samples) -> (sample-major, scale-major inside).
    std::vector<size_t> order(batch * m);
    std::vector<int> scale_ids(batch * m);
    {
        std::vector<size_t> scale_base(n_scales());
        size_t base = 0;
        for (size_t s = 0; s < n_scales(); ++s) {
            scale_base[s] = base;
            base += batch * patches_at_scale(side, s);
        }
        size_t row = 0;
        for (size_t b = 0; b < batch; ++b)
            for (size_t s : scale_order) {
                const size_t ns = patches_at_scale(side, s);
                for (size_t j = 0; j < ns; ++j, ++row) {
                    order[row] = scale_base[s] + b * ns + j;
                    scale_ids[row] = static_cast<int>(s);
                }
            }
    }
    Var stacked = select_rows(concat_rows(per_scale), std::move(order));
    Var x = add(matmul(stacked, tape.param(*input_proj_)), embedding(tape.param(*scale_embed_), std::move(scale_ids)));

    std::vector<Range> attn_ranges;
    std::vector<Range> samples;
    for (size_t b = 0; b < batch; ++b) {
        samples.push_back({b * m, m});
        if (cfg_.per_scale_attention) {
            size_t off = b * m;
            for (size_t s : scale_order) {
                const size_t ns = patches_at_scale(side, s);
                attn_ranges.push_back({off, ns});
                off += ns;
            }
        } else {
            attn_ranges.push_back({b * m, m});
        }
    }
    Var g = blocks_.apply(tape, x, attn_ranges);
    if (sample_ranges) *sample_ranges = std::move(samples);
    return g;
}

}  // namespace micc
