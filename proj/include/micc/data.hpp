#pragma once

#include <memory>
#include <string>
#include <vector>

#include "micc/image_io.hpp"
#include "micc/tensor.hpp"

namespace micc {

struct SampleRecord {
    std::string id;
    std::string text;
    std::string image_path;            // relative to the dataset file; empty when inline
    std::shared_ptr<ImageU8> image;    // inline or pre-rendered
    int label = -1;                    // 0 non-rumor, 1 rumor, -1 absent (pretraining pair)

    bool has_label() const { return label >= 0; }
};

// Palettes are fixed: 4 colors x 3 shapes, vocabulary stays under 40 tokens.
struct SyntheticSpec {
    uint64_t seed = 7;
    size_t image_size = 192;
    size_t max_objects = 4;      // 1..4 per image, on a 2x2 grid
    double rumor_rate = 0.5;
};

const std::vector<std::string>& palette_colors();
const std::vector<std::string>& palette_shapes();
std::vector<std::string> synthetic_vocabulary();

// Truthful caption/image pairs for contrastive pretraining. Deterministic in
// (spec, n); captions list "<color> <shape>" phrases in render order.
std::vector<SampleRecord> generate_pretraining_pairs(const SyntheticSpec& spec, size_t n);

// Labeled rumor task: y=0 captions match the image, y=1 captions claim at
// least one (color, shape) pair the image does not contain. Scenes are drawn
// identically for both classes so neither modality alone predicts the label.
std::vector<SampleRecord> generate_rumor_samples(const SyntheticSpec& spec, size_t n);

struct DatasetSplit {
    std::vector<SampleRecord> train, validation, test;
};

// Deterministic 8:1:1 split, stratified by label when labels exist.
DatasetSplit split_8_1_1(const std::vector<SampleRecord>& records, uint64_t seed);

// JSONL with fields id, text, image (path or data: URI), optional label.
// Accepts a .jsonl file or a directory containing records.jsonl.
std::vector<SampleRecord> load_dataset(const std::string& path);
void write_dataset(const std::string& dir, const std::vector<SampleRecord>& records, bool inline_images = false);

ImageU8 load_record_image(const SampleRecord& record);
Tensor record_image_tensor(const SampleRecord& record, size_t image_size);  // resized, [0,1]

}  // namespace micc
