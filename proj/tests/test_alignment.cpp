#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "micc/alignment.hpp"
#include "micc/errors.hpp"

using namespace micc;

namespace {

MultiScalePatches patches_from(const std::vector<std::vector<std::vector<double>>>& per_scale_rows) {
    std::vector<Tensor> scales;
    for (const auto& rows : per_scale_rows) {
        Tensor t({rows.size(), rows[0].size()});
        for (size_t i = 0; i < rows.size(); ++i)
            for (size_t j = 0; j < rows[i].size(); ++j) t.at(i, j) = rows[i][j];
        scales.push_back(std::move(t));
    }
    return MultiScalePatches::from_scales(scales);
}

RelevanceMatrix matrix_from(const std::vector<std::vector<double>>& scores, const std::vector<std::vector<bool>>& valid) {
    RelevanceMatrix m;
    m.scores = scores;
    m.valid = valid;
    return m;
}

// Independent oracle: full sort with the same deterministic tie rule, then
// take the first K valid entries per scale.
SelectedRegions top_k_oracle(const RelevanceMatrix& rel, size_t k) {
    SelectedRegions out;
    for (size_t s = 0; s < rel.n_scales(); ++s) {
        std::vector<SelectedRegion> all;
        for (size_t i = 0; i < rel.scores[s].size(); ++i)
            if (rel.valid[s][i]) all.push_back({s, i, rel.scores[s][i]});
        std::sort(all.begin(), all.end(), [](const SelectedRegion& a, const SelectedRegion& b) {
            return a.score != b.score ? a.score > b.score : a.patch < b.patch;
        });
        size_t take = std::min(k, all.size());
        out.per_scale_counts.push_back(take);
        for (size_t i = 0; i < take; ++i) out.entries.push_back(all[i]);
    }
    return out;
}

bool same_selection(const SelectedRegions& a, const SelectedRegions& b) {
    if (a.per_scale_counts != b.per_scale_counts || a.entries.size() != b.entries.size()) return false;
    for (size_t i = 0; i < a.entries.size(); ++i)
        if (a.entries[i].scale != b.entries[i].scale || a.entries[i].patch != b.entries[i].patch ||
            a.entries[i].score != b.entries[i].score)
            return false;
    return true;
}

}  // namespace

TEST_CASE("relevance matrix: orthogonal, self-dot, hand oracle") {
    MultiScalePatches m = patches_from({{{1, 0, 0}, {0, 1, 0}}});
    Tensor t_orth = Tensor::row({0, 0, 5});
    RelevanceMatrix r = relevance_matrix(t_orth, m);
    CHECK(r.scores[0][0] == 0.0);
    CHECK(r.scores[0][1] == 0.0);

    Tensor t_self = Tensor::row({1, 0, 0});
    CHECK(relevance_matrix(t_self, m).scores[0][0] == doctest::Approx(1.0));  // |T|^2

    Rng rng(1);
    Tensor t_rand({1, 3}), p0({1, 3});
    std::vector<std::vector<double>> rows(3, std::vector<double>(3));
    for (auto& row : rows)
        for (auto& v : row) v = rng.uniform(-1, 1);
    for (size_t j = 0; j < 3; ++j) t_rand[j] = rng.uniform(-1, 1);
    MultiScalePatches m3 = patches_from({rows});
    RelevanceMatrix r3 = relevance_matrix(t_rand, m3);
    for (size_t i = 0; i < 3; ++i) {
        double want = 0.0;
        for (size_t j = 0; j < 3; ++j) want += t_rand[j] * rows[i][j];  // elementwise multiply-sum
        CHECK(r3.scores[0][i] == doctest::Approx(want).epsilon(1e-12));
    }

    CHECK_THROWS_AS(relevance_matrix(Tensor::row({1, 2}), m), ShapeError);
}

TEST_CASE("relevance matrix: masked slots carry the sentinel") {
    MultiScalePatches m = patches_from({{{1, 0}, {0, 1}, {1, 1}}, {{2, 2}}});
    CHECK(m.max_slots == 3);
    RelevanceMatrix r = relevance_matrix(Tensor::row({1, 1}), m);
    CHECK(r.scores[1][1] == RelevanceMatrix::kMasked);
    CHECK(r.scores[1][2] == RelevanceMatrix::kMasked);
    CHECK_FALSE(r.valid[1][1]);
}

TEST_CASE("top_k: tie broken by lowest index") {
    RelevanceMatrix rel = matrix_from({{0.2, 0.9, -0.5, 0.9}}, {{true, true, true, true}});
    SelectedRegions sel = top_k_select(rel, 2);
    REQUIRE(sel.entries.size() == 2);
    CHECK(sel.entries[0].patch == 1);
    CHECK(sel.entries[1].patch == 3);
}

TEST_CASE("top_k: saturation and mask exclusion") {
    RelevanceMatrix rel = matrix_from({{0.3, -0.1, 0.7}}, {{true, true, true}});
    SelectedRegions all = top_k_select(rel, 10);
    REQUIRE(all.entries.size() == 3);
    CHECK(all.entries[0].patch == 2);
    CHECK(all.entries[1].patch == 0);
    CHECK(all.entries[2].patch == 1);
    CHECK(all.per_scale_counts[0] == 3);

    // the padded 0 is never selected despite being the max raw value
    RelevanceMatrix masked = matrix_from({{-1.0, 0.0, -2.0}}, {{true, false, true}});
    SelectedRegions sel = top_k_select(masked, 2);
    REQUIRE(sel.entries.size() == 2);
    CHECK(sel.entries[0].patch == 0);
    CHECK(sel.entries[1].patch == 2);
}

TEST_CASE("top_k: error paths") {
    RelevanceMatrix rel = matrix_from({{1.0}}, {{false}});
    CHECK_THROWS_AS(top_k_select(rel, 2), DataError);
    RelevanceMatrix ok = matrix_from({{1.0}}, {{true}});
    CHECK_THROWS_AS(top_k_select(ok, 0), ConfigError);
}

TEST_CASE("oracle equivalence on 1000 random masked matrices with forced ties") {
    Rng rng(99);
    for (int trial = 0; trial < 1000; ++trial) {
        const size_t scales = 1 + rng.index(4);
        const size_t slots = 1 + rng.index(64);
        RelevanceMatrix rel;
        bool any_valid = false;
        for (size_t s = 0; s < scales; ++s) {
            std::vector<double> scores(slots);
            std::vector<bool> valid(slots);
            for (size_t i = 0; i < slots; ++i) {
                valid[i] = rng.uniform() < 0.8;
                any_valid = any_valid || valid[i];
                // quantized scores force frequent exact ties
                scores[i] = valid[i] ? std::floor(rng.uniform(-4.0, 4.0)) * 0.5 : RelevanceMatrix::kMasked;
            }
            rel.scores.push_back(std::move(scores));
            rel.valid.push_back(std::move(valid));
        }
        const size_t k = 1 + rng.index(8);
        if (!any_valid) {
            CHECK_THROWS_AS(top_k_select(rel, k), DataError);
            continue;
        }
        CHECK(same_selection(top_k_select(rel, k), top_k_oracle(rel, k)));
    }
}

TEST_CASE("monotone consistency: raising an unselected score brings it in") {
    RelevanceMatrix rel = matrix_from({{0.5, 0.4, 0.3, 0.2}}, {{true, true, true, true}});
    SelectedRegions before = top_k_select(rel, 2);
    CHECK(before.entries[0].patch == 0);
    CHECK(before.entries[1].patch == 1);
    rel.scores[0][3] = 0.45;  // above the current 2nd place
    SelectedRegions after = top_k_select(rel, 2);
    CHECK(after.entries[0].patch == 0);
    CHECK(after.entries[1].patch == 3);
}

TEST_CASE("shift covariance: constant offset never changes the selected set") {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        RelevanceMatrix rel;
        std::vector<double> scores(12);
        std::vector<bool> valid(12, true);
        for (auto& v : scores) v = rng.uniform(-2, 2);
        rel.scores.push_back(scores);
        rel.valid.push_back(valid);
        SelectedRegions a = top_k_select(rel, 3);
        for (auto& v : rel.scores[0]) v += 5.0;
        SelectedRegions b = top_k_select(rel, 3);
        REQUIRE(a.entries.size() == b.entries.size());
        for (size_t i = 0; i < a.entries.size(); ++i) CHECK(a.entries[i].patch == b.entries[i].patch);
    }
}

TEST_CASE("r reconstructs bit-exactly from the matrix via origin indices") {
    Rng rng(13);
    RelevanceMatrix rel;
    for (size_t s = 0; s < 3; ++s) {
        std::vector<double> scores(9);
        std::vector<bool> valid(9, true);
        for (auto& v : scores) v = rng.uniform(-3, 3);
        rel.scores.push_back(scores);
        rel.valid.push_back(valid);
    }
    SelectedRegions sel = top_k_select(rel, 4);
    std::vector<double> r = sel.relevance();
    REQUIRE(r.size() == sel.entries.size());
    for (size_t i = 0; i < sel.entries.size(); ++i) {
        const SelectedRegion& e = sel.entries[i];
        CHECK(r[i] == rel.scores[e.scale][e.patch]);  // bit-exact
    }
}

TEST_CASE("global top-k pools across scales") {
    RelevanceMatrix rel = matrix_from({{0.9, 0.1}, {0.8, 0.7}}, {{true, true}, {true, true}});
    SelectedRegions sel = top_k_select_global(rel, 3);
    REQUIRE(sel.entries.size() == 3);
    CHECK(sel.per_scale_counts[0] == 1);
    CHECK(sel.per_scale_counts[1] == 2);
    // scale-major output order
    CHECK(sel.entries[0].scale == 0);
    CHECK(sel.entries[1].scale == 1);
    CHECK(sel.entries[2].scale == 1);
}

TEST_CASE("cosine relevance stays within [-1, 1]") {
    Rng rng(17);
    std::vector<std::vector<double>> rows(5, std::vector<double>(8));
    for (auto& row : rows)
        for (auto& v : row) v = rng.uniform(-2, 2);
    MultiScalePatches m = patches_from({rows});
    Tensor t({1, 8});
    for (size_t j = 0; j < 8; ++j) t[j] = rng.uniform(-2, 2);
    RelevanceMatrix r = cosine_relevance_matrix(t, m);
    for (size_t i = 0; i < 5; ++i) {
        CHECK(r.scores[0][i] <= 1.0 + 1e-9);
        CHECK(r.scores[0][i] >= -1.0 - 1e-9);
    }
}
