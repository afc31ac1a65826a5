#pragma once

#include <limits>
#include <vector>

#include "micc/sclip.hpp"
#include "micc/tensor.hpp"

namespace micc {

// Per-scale dot scores between T and each patch. Masked slots carry the
// sentinel and are excluded from selection by mask, never by value.
struct RelevanceMatrix {
    static constexpr double kMasked = -std::numeric_limits<double>::infinity();

    std::vector<std::vector<double>> scores;  // [scale][slot]
    std::vector<std::vector<bool>> valid;     // [scale][slot]

    size_t n_scales() const { return scores.size(); }
    size_t slots() const { return scores.empty() ? 0 : scores[0].size(); }
};

RelevanceMatrix relevance_matrix(const Tensor& text_feature, const MultiScalePatches& patches);
RelevanceMatrix cosine_relevance_matrix(const Tensor& text_feature, const MultiScalePatches& patches);

struct SelectedRegion {
    size_t scale = 0;
    size_t patch = 0;  // slot index within the scale
    double score = 0.0;
};

// M' plus its relevance vector r. Entries are scale-major, descending score
// within each scale; ties go to the lower patch index.
struct SelectedRegions {
    std::vector<SelectedRegion> entries;
    std::vector<size_t> per_scale_counts;  // min(K, valid patches at that scale)

    std::vector<double> relevance() const;  // r, aligned with entries
};

// Per-scale Top-K over valid slots. Fewer than K valid patches at a scale
// saturates to all of them.
SelectedRegions top_k_select(const RelevanceMatrix& rel, size_t k);
// Study flag: one Top-K pool across all scales instead of per row.
SelectedRegions top_k_select_global(const RelevanceMatrix& rel, size_t k);

}  // namespace micc
