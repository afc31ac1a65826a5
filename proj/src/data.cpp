#include "micc/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "micc/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace micc {

namespace {

constexpr uint8_t kColorRgb[4][3] = {{220, 30, 30}, {30, 180, 30}, {30, 30, 220}, {230, 220, 30}};

constexpr size_t kGrid = 3;  // 3x3 cell layout; cells match a side/3 patch scale

struct SceneObject {
    size_t color = 0;
    size_t shape = 0;
    size_t cell = 0;  // row-major position on the grid
    bool same_pair(const SceneObject& o) const { return color == o.color && shape == o.shape; }
};

std::vector<SceneObject> draw_scene(Rng& rng, size_t max_objects) {
    const size_t n_colors = palette_colors().size();
    const size_t n_shapes = palette_shapes().size();
    const size_t n_pairs = n_colors * n_shapes;
    const size_t count = 1 + rng.index(std::min({max_objects, n_pairs, kGrid * kGrid}));
    std::vector<size_t> pool(n_pairs);
    std::iota(pool.begin(), pool.end(), 0);
    rng.shuffle(pool);
    std::vector<size_t> cells(kGrid * kGrid);
    std::iota(cells.begin(), cells.end(), 0);
    rng.shuffle(cells);
    std::vector<SceneObject> scene;
    for (size_t i = 0; i < count; ++i) scene.push_back({pool[i] / n_shapes, pool[i] % n_shapes, cells[i]});
    return scene;
}

bool pair_in_scene(const std::vector<SceneObject>& scene, const SceneObject& p) {
    for (const SceneObject& o : scene)
        if (o.same_pair(p)) return true;
    return false;
}

void render_object(ImageU8& img, const SceneObject& obj) {
    const double cell = static_cast<double>(img.width) / static_cast<double>(kGrid);
    const double cx = (static_cast<double>(obj.cell % kGrid) + 0.5) * cell;
    const double cy = (static_cast<double>(obj.cell / kGrid) + 0.5) * cell;
    const double r = 0.35 * cell;
    const uint8_t* rgb = kColorRgb[obj.color];
    const std::string& shape = palette_shapes()[obj.shape];
    for (size_t y = 0; y < img.height; ++y)
        for (size_t x = 0; x < img.width; ++x) {
            const double dx = static_cast<double>(x) + 0.5 - cx;
            const double dy = static_cast<double>(y) + 0.5 - cy;
            bool inside = false;
            if (shape == "circle") {
                inside = dx * dx + dy * dy <= r * r;
            } else if (shape == "square") {
                inside = std::fabs(dx) <= r && std::fabs(dy) <= r;
            } else {  // triangle: apex up, base down
                inside = dy >= -r && dy <= r && std::fabs(dx) <= (dy + r) * 0.5;
            }
            if (inside) {
                uint8_t* px = img.pixel(y, x);
                px[0] = rgb[0];
                px[1] = rgb[1];
                px[2] = rgb[2];
            }
        }
}

ImageU8 render_scene(const std::vector<SceneObject>& scene, size_t image_size) {
    ImageU8 img;
    img.width = img.height = image_size;
    img.rgb.assign(3 * image_size * image_size, 255);
    for (const SceneObject& obj : scene) render_object(img, obj);
    return img;
}

std::string caption_for(const std::vector<SceneObject>& scene) {
    std::string out;
    for (const SceneObject& o : scene) {
        if (!out.empty()) out += " ";
        out += palette_colors()[o.color] + " " + palette_shapes()[o.shape];
    }
    return out;
}

// Swap one attribute of one object so the claimed pair is absent from the
// scene; candidates are tried in rng order, so generation stays a pure
// function of the seed.
std::vector<SceneObject> perturb_scene(const std::vector<SceneObject>& scene, Rng& rng) {
    const size_t n_colors = palette_colors().size();
    const size_t n_shapes = palette_shapes().size();
    const size_t j = rng.index(scene.size());
    std::vector<SceneObject> candidates;
    for (size_t c = 0; c < n_colors; ++c)
        if (c != scene[j].color) candidates.push_back({c, scene[j].shape, scene[j].cell});
    for (size_t s = 0; s < n_shapes; ++s)
        if (s != scene[j].shape) candidates.push_back({scene[j].color, s, scene[j].cell});
    rng.shuffle(candidates);
    for (const SceneObject& cand : candidates) {
        if (!pair_in_scene(scene, cand)) {
            std::vector<SceneObject> modified = scene;
            modified[j] = cand;
            return modified;
        }
    }
    throw NumericError("synthetic: no absent pair reachable (palette too small for scene)");
}

std::string record_id(const char* stem, size_t i) {
    std::ostringstream os;
    os << stem << "-" << i;
    return os.str();
}

}  // namespace

const std::vector<std::string>& palette_colors() {
    static const std::vector<std::string> c = {"red", "green", "blue", "yellow"};
    return c;
}

const std::vector<std::string>& palette_shapes() {
    static const std::vector<std::string> s = {"circle", "square", "triangle"};
    return s;
}

std::vector<std::string> synthetic_vocabulary() {
    std::vector<std::string> v = palette_colors();
    v.insert(v.end(), palette_shapes().begin(), palette_shapes().end());
    return v;
}

std::vector<SampleRecord> generate_pretraining_pairs(const SyntheticSpec& spec, size_t n) {
    if (n < 1) throw ConfigError("generate: n must be positive");
    Rng rng(spec.seed);
    std::vector<SampleRecord> out;
    for (size_t i = 0; i < n; ++i) {
        std::vector<SceneObject> scene = draw_scene(rng, spec.max_objects);
        SampleRecord rec;
        rec.id = record_id("pair", i);
        rec.text = caption_for(scene);
        rec.image = std::make_shared<ImageU8>(render_scene(scene, spec.image_size));
        out.push_back(std::move(rec));
    }
    return out;
}

std::vector<SampleRecord> generate_rumor_samples(const SyntheticSpec& spec, size_t n) {
    if (n < 1) throw ConfigError("generate: n must be positive");
    if (spec.rumor_rate <= 0.0 || spec.rumor_rate >= 1.0) throw ConfigError("generate: rumor rate must lie in (0,1)");
    Rng rng(spec.seed);
    std::vector<SampleRecord> out;
    for (size_t i = 0; i < n; ++i) {
        std::vector<SceneObject> scene = draw_scene(rng, spec.max_objects);
        const bool rumor = rng.bernoulli(spec.rumor_rate);
        SampleRecord rec;
        rec.id = record_id("sample", i);
        rec.label = rumor ? 1 : 0;
        rec.text = caption_for(rumor ? perturb_scene(scene, rng) : scene);
        rec.image = std::make_shared<ImageU8>(render_scene(scene, spec.image_size));
        out.push_back(std::move(rec));
    }
    return out;
}

DatasetSplit split_8_1_1(const std::vector<SampleRecord>& records, uint64_t seed) {
    if (records.empty()) throw DataError("split: empty record list");
    Rng rng(seed);
    std::vector<int> groups = {-1, 0, 1};
    DatasetSplit split;
    for (int g : groups) {
        std::vector<size_t> idx;
        for (size_t i = 0; i < records.size(); ++i)
            if (records[i].label == g) idx.push_back(i);
        if (idx.empty()) continue;
        rng.shuffle(idx);
        const size_t n = idx.size();
        const size_t n_val = static_cast<size_t>(std::llround(0.1 * static_cast<double>(n)));
        const size_t n_test = static_cast<size_t>(std::llround(0.1 * static_cast<double>(n)));
        const size_t n_train = n - n_val - n_test;
        for (size_t i = 0; i < n; ++i) {
            const SampleRecord& r = records[idx[i]];
            if (i < n_train)
                split.train.push_back(r);
            else if (i < n_train + n_val)
                split.validation.push_back(r);
            else
                split.test.push_back(r);
        }
    }
    return split;
}

std::vector<SampleRecord> load_dataset(const std::string& path) {
    fs::path p(path);
    if (fs::is_directory(p)) p /= "records.jsonl";
    std::ifstream in(p);
    if (!in) throw DataError("dataset: cannot open " + p.string());
    const fs::path base = p.parent_path();
    std::vector<SampleRecord> out;
    std::string line;
    size_t lineno = 0;
    std::set<std::string> seen_ids;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError("dataset: malformed JSON at line " + std::to_string(lineno) + " of " + p.string() + ": " + e.what());
        }
        if (!j.contains("id") || !j.contains("text") || !j.contains("image"))
            throw DataError("dataset: line " + std::to_string(lineno) + " needs id, text and image fields");
        SampleRecord rec;
        rec.id = j["id"].get<std::string>();
        rec.text = j["text"].get<std::string>();
        if (!seen_ids.insert(rec.id).second) throw DataError("dataset: duplicate record id " + rec.id);
        const std::string image = j["image"].get<std::string>();
        if (is_data_uri(image)) {
            rec.image = std::make_shared<ImageU8>(decode_image_data_uri(image));
        } else {
            fs::path img = fs::path(image).is_absolute() ? fs::path(image) : base / image;
            if (!fs::exists(img)) throw DataError("dataset: missing image file for record " + rec.id + ": " + img.string());
            rec.image_path = img.string();
        }
        if (j.contains("label")) {
            const int label = j["label"].get<int>();
            if (label != 0 && label != 1) throw DataError("dataset: record " + rec.id + " has label outside {0,1}");
            rec.label = label;
        }
        out.push_back(std::move(rec));
    }
    if (out.empty()) throw DataError("dataset: no records in " + p.string());
    return out;
}

void write_dataset(const std::string& dir, const std::vector<SampleRecord>& records, bool inline_images) {
    fs::create_directories(dir);
    if (!inline_images) fs::create_directories(fs::path(dir) / "images");
    std::ofstream out(fs::path(dir) / "records.jsonl");
    if (!out) throw DataError("dataset: cannot write records.jsonl under " + dir);
    std::vector<std::string> texts;
    for (const SampleRecord& rec : records) {
        texts.push_back(rec.text);
        json j;
        j["id"] = rec.id;
        j["text"] = rec.text;
        if (inline_images) {
            j["image"] = encode_ppm_data_uri(*rec.image);
        } else {
            const std::string rel = "images/" + rec.id + ".ppm";
            write_ppm((fs::path(dir) / rel).string(), rec.image ? *rec.image : load_record_image(rec));
            j["image"] = rel;
        }
        if (rec.has_label()) j["label"] = rec.label;
        out << j.dump() << "\n";
    }
    // sidecar vocabulary: one token per line, line number = id
    std::ofstream vocab(fs::path(dir) / "vocab.txt");
    std::set<std::string> words;
    for (const std::string& t : texts) {
        std::istringstream is(t);
        std::string w;
        while (is >> w) {
            std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
            words.insert(w);
        }
    }
    vocab << "<pad>\n<eos>\n<unk>\n";
    for (const std::string& w : words) vocab << w << "\n";
}

ImageU8 load_record_image(const SampleRecord& record) {
    if (record.image) return *record.image;
    if (record.image_path.empty()) throw DataError("record " + record.id + " has no image");
    return read_image(record.image_path);
}

Tensor record_image_tensor(const SampleRecord& record, size_t image_size) {
    return to_float_image(resize_nearest(load_record_image(record), image_size, image_size));
}

}  // namespace micc
