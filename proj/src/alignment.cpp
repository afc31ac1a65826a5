#include "micc/alignment.hpp"

#include <algorithm>
#include <cmath>

#include "micc/errors.hpp"

namespace micc {

namespace {

RelevanceMatrix relevance_impl(const Tensor& text_feature, const MultiScalePatches& patches, bool cosine) {
    if (text_feature.size() != patches.dim)
        throw ShapeError("relevance: text dim " + shape_str(text_feature) + " vs patch dim " + std::to_string(patches.dim));
    const double* t = text_feature.data();
    double t_norm = 0.0;
    if (cosine) {
        for (size_t j = 0; j < patches.dim; ++j) t_norm += t[j] * t[j];
        t_norm = std::sqrt(t_norm);
    }
    RelevanceMatrix rel;
    for (size_t s = 0; s < patches.n_scales(); ++s) {
        std::vector<double> row(patches.max_slots, RelevanceMatrix::kMasked);
        for (size_t i = 0; i < patches.max_slots; ++i) {
            if (!patches.mask[s][i]) continue;
            const double* v = patches.slots[s].data() + i * patches.dim;
            double dot = 0.0;
            for (size_t j = 0; j < patches.dim; ++j) dot += t[j] * v[j];
            if (cosine) {
                double v_norm = 0.0;
                for (size_t j = 0; j < patches.dim; ++j) v_norm += v[j] * v[j];
                dot /= std::sqrt(v_norm) * t_norm + 1e-12;
            }
            row[i] = dot;
        }
        rel.scores.push_back(std::move(row));
        rel.valid.push_back(patches.mask[s]);
    }
    return rel;
}

void check_k(size_t k) {
    if (k < 1) throw ConfigError("top_k: K must be at least 1");
}

std::vector<SelectedRegion> scale_candidates(const RelevanceMatrix& rel, size_t s) {
    std::vector<SelectedRegion> cand;
    for (size_t i = 0; i < rel.scores[s].size(); ++i)
        if (rel.valid[s][i]) cand.push_back({s, i, rel.scores[s][i]});
    return cand;
}

void sort_desc_tie_low_index(std::vector<SelectedRegion>& v) {
    std::stable_sort(v.begin(), v.end(), [](const SelectedRegion& a, const SelectedRegion& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.scale != b.scale) return a.scale < b.scale;
        return a.patch < b.patch;
    });
}

}  // namespace

RelevanceMatrix relevance_matrix(const Tensor& text_feature, const MultiScalePatches& patches) {
    return relevance_impl(text_feature, patches, false);
}

RelevanceMatrix cosine_relevance_matrix(const Tensor& text_feature, const MultiScalePatches& patches) {
    return relevance_impl(text_feature, patches, true);
}

std::vector<double> SelectedRegions::relevance() const {
    std::vector<double> r;
    r.reserve(entries.size());
    for (const SelectedRegion& e : entries) r.push_back(e.score);
    return r;
}

SelectedRegions top_k_select(const RelevanceMatrix& rel, size_t k) {
    check_k(k);
    SelectedRegions out;
    size_t total_valid = 0;
    for (size_t s = 0; s < rel.n_scales(); ++s) {
        std::vector<SelectedRegion> cand = scale_candidates(rel, s);
        total_valid += cand.size();
        sort_desc_tie_low_index(cand);
        const size_t take = std::min(k, cand.size());
        out.per_scale_counts.push_back(take);
        out.entries.insert(out.entries.end(), cand.begin(), cand.begin() + static_cast<long>(take));
    }
    if (total_valid == 0) throw DataError("top_k: no valid patches at any scale");
    return out;
}

SelectedRegions top_k_select_global(const RelevanceMatrix& rel, size_t k) {
    check_k(k);
    std::vector<SelectedRegion> cand;
    for (size_t s = 0; s < rel.n_scales(); ++s) {
        std::vector<SelectedRegion> c = scale_candidates(rel, s);
        cand.insert(cand.end(), c.begin(), c.end());
    }
    if (cand.empty()) throw DataError("top_k: no valid patches at any scale");
    sort_desc_tie_low_index(cand);
    cand.resize(std::min(k, cand.size()));
    // keep the scale-major output convention
    std::stable_sort(cand.begin(), cand.end(), [](const SelectedRegion& a, const SelectedRegion& b) { return a.scale < b.scale; });
    SelectedRegions out;
    out.per_scale_counts.assign(rel.n_scales(), 0);
    for (const SelectedRegion& e : cand) ++out.per_scale_counts[e.scale];
    out.entries = std::move(cand);
    return out;
}

}  // namespace micc
