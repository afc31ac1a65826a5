#pragma once

// Test-side oracles that read rendered scenes back out of pixels,
// independent of the generator's internals.

#include <cmath>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "micc/data.hpp"
#include "micc/image_io.hpp"
#include "micc/text_encoder.hpp"

namespace micc_test {

// The renderer uses exact palette colors on a white background, so color
// identity is an exact byte match. Objects never touch (they sit in distinct
// grid cells at radius 0.35*cell), so each connected component of one color
// is one object; shapes are told apart by filled area
// (square 4r^2 > circle pi r^2 > triangle 2r^2).
inline std::set<std::pair<std::string, std::string>> rendered_pairs(const micc::ImageU8& img) {
    const auto& colors = micc::palette_colors();
    const auto& shapes = micc::palette_shapes();
    const uint8_t palette[4][3] = {{220, 30, 30}, {30, 180, 30}, {30, 30, 220}, {230, 220, 30}};
    const double cell = static_cast<double>(img.width) / 3.0;
    const double r = 0.35 * cell;
    const double areas[3] = {M_PI * r * r, 4.0 * r * r, 2.0 * r * r};  // circle, square, triangle
    std::set<std::pair<std::string, std::string>> out;
    for (size_t c = 0; c < 4; ++c) {
        std::vector<char> mask(img.width * img.height, 0);
        for (size_t y = 0; y < img.height; ++y)
            for (size_t x = 0; x < img.width; ++x) {
                const uint8_t* px = img.pixel(y, x);
                mask[y * img.width + x] = px[0] == palette[c][0] && px[1] == palette[c][1] && px[2] == palette[c][2];
            }
        std::vector<size_t> stack;
        for (size_t start = 0; start < mask.size(); ++start) {
            if (!mask[start]) continue;
            size_t component = 0;
            stack.push_back(start);
            mask[start] = 0;
            while (!stack.empty()) {
                size_t cur = stack.back();
                stack.pop_back();
                ++component;
                const size_t y = cur / img.width, x = cur % img.width;
                const long moves[4][2] = {{0, 1}, {0, -1}, {1, 0}, {-1, 0}};
                for (const auto& mv : moves) {
                    const long ny = static_cast<long>(y) + mv[0], nx = static_cast<long>(x) + mv[1];
                    if (ny < 0 || nx < 0 || ny >= static_cast<long>(img.height) || nx >= static_cast<long>(img.width)) continue;
                    const size_t ni = static_cast<size_t>(ny) * img.width + static_cast<size_t>(nx);
                    if (mask[ni]) {
                        mask[ni] = 0;
                        stack.push_back(ni);
                    }
                }
            }
            double best_diff = 1e18;
            size_t best_shape = 0;
            for (size_t s = 0; s < 3; ++s) {
                double diff = std::fabs(static_cast<double>(component) - areas[s]);
                if (diff < best_diff) {
                    best_diff = diff;
                    best_shape = s;
                }
            }
            out.insert({colors[c], shapes[best_shape]});
        }
    }
    return out;
}

inline std::set<std::pair<std::string, std::string>> claimed_pairs(const std::string& caption) {
    std::vector<std::string> words = micc::split_tokens(caption);
    std::set<std::pair<std::string, std::string>> out;
    for (size_t i = 0; i + 1 < words.size(); i += 2) out.insert({words[i], words[i + 1]});
    return out;
}

// Minimal logistic-regression probe (full-batch gradient descent); the
// unimodal baselines in the data tests and acceptance run are built on it.
struct LinearProbe {
    std::vector<double> w;
    double b = 0.0;

    static LinearProbe train(const std::vector<std::vector<double>>& x, const std::vector<int>& y, size_t epochs = 300,
                             double lr = 0.5) {
        LinearProbe p;
        p.w.assign(x.empty() ? 0 : x[0].size(), 0.0);
        const double n = static_cast<double>(x.size());
        for (size_t e = 0; e < epochs; ++e) {
            std::vector<double> gw(p.w.size(), 0.0);
            double gb = 0.0;
            for (size_t i = 0; i < x.size(); ++i) {
                double z = p.b;
                for (size_t j = 0; j < p.w.size(); ++j) z += p.w[j] * x[i][j];
                double err = 1.0 / (1.0 + std::exp(-z)) - y[i];
                for (size_t j = 0; j < p.w.size(); ++j) gw[j] += err * x[i][j];
                gb += err;
            }
            for (size_t j = 0; j < p.w.size(); ++j) p.w[j] -= lr * gw[j] / n;
            p.b -= lr * gb / n;
        }
        return p;
    }

    double accuracy(const std::vector<std::vector<double>>& x, const std::vector<int>& y) const {
        size_t hits = 0;
        for (size_t i = 0; i < x.size(); ++i) {
            double z = b;
            for (size_t j = 0; j < w.size(); ++j) z += w[j] * x[i][j];
            hits += (z >= 0.0 ? 1 : 0) == y[i];
        }
        return static_cast<double>(hits) / static_cast<double>(x.size());
    }
};

inline std::vector<double> bag_of_tokens(const std::string& text) {
    std::vector<std::string> vocab = micc::synthetic_vocabulary();
    std::vector<double> out(vocab.size(), 0.0);
    for (const std::string& w : micc::split_tokens(text))
        for (size_t i = 0; i < vocab.size(); ++i)
            if (vocab[i] == w) out[i] += 1.0;
    return out;
}

// mean RGB per 4x4 grid cell: a pooled unimodal image feature
inline std::vector<double> image_cell_features(const micc::ImageU8& img) {
    const size_t grid = 4;
    std::vector<double> out;
    const size_t ch = img.height / grid, cw = img.width / grid;
    for (size_t gy = 0; gy < grid; ++gy)
        for (size_t gx = 0; gx < grid; ++gx) {
            double sum[3] = {0, 0, 0};
            for (size_t y = gy * ch; y < (gy + 1) * ch; ++y)
                for (size_t x = gx * cw; x < (gx + 1) * cw; ++x)
                    for (size_t c = 0; c < 3; ++c) sum[c] += img.pixel(y, x)[c] / 255.0;
            for (size_t c = 0; c < 3; ++c) out.push_back(sum[c] / static_cast<double>(ch * cw));
        }
    return out;
}

}  // namespace micc_test
