#include "micc/checkpoint.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

#include "micc/errors.hpp"

using nlohmann::json;

namespace micc {

namespace {
constexpr char kMagic[8] = {'M', 'I', 'C', 'C', 'C', 'K', 'P', 'T'};

template <class T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw DataError("checkpoint: truncated file");
    return v;
}
}  // namespace

Checkpoint Checkpoint::from_params(const RunConfig& cfg, const std::vector<std::string>& vocab, const ParamStore& params,
                                   json extra) {
    Checkpoint ckpt;
    ckpt.config = cfg;
    ckpt.vocab_tokens = vocab;
    ckpt.extra = std::move(extra);
    uint64_t offset = 0;
    for (const auto& p : params) {
        Entry e;
        e.name = p->name;
        e.shape = p->tensor.shape();
        e.offset = offset;
        offset += p->tensor.size();
        ckpt.manifest.push_back(std::move(e));
    }
    ckpt.payload.reserve(offset);
    for (const auto& p : params)
        for (size_t i = 0; i < p->tensor.size(); ++i) ckpt.payload.push_back(static_cast<float>(p->tensor[i]));
    return ckpt;
}

void Checkpoint::restore_into(ParamStore& params) const {
    std::string problems;
    size_t restored = 0;
    for (const Entry& e : manifest) {
        Parameter* p = params.find(e.name);
        if (!p) {
            problems += "  missing in model: " + e.name + "\n";
            continue;
        }
        if (p->tensor.shape() != e.shape) {
            problems += "  shape mismatch for " + e.name + ": checkpoint " + shape_str(e.shape) + " vs model " +
                        shape_str(p->tensor.shape()) + "\n";
            continue;
        }
        for (size_t i = 0; i < p->tensor.size(); ++i) p->tensor[i] = static_cast<double>(payload[e.offset + i]);
        ++restored;
    }
    for (const auto& p : params)
        if (std::none_of(manifest.begin(), manifest.end(), [&](const Entry& e) { return e.name == p->name; }))
            problems += "  not in checkpoint: " + p->name + "\n";
    if (!problems.empty()) throw ConfigError("checkpoint: incompatible parameters\n" + problems);
    (void)restored;
}

void Checkpoint::save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write " + path);
    out.write(kMagic, sizeof(kMagic));
    write_pod<uint32_t>(out, kVersion);

    json meta;
    meta["config"] = config.to_json();
    meta["vocab"] = vocab_tokens;
    meta["extra"] = extra;
    const std::string meta_str = meta.dump();
    write_pod<uint64_t>(out, meta_str.size());
    out.write(meta_str.data(), static_cast<std::streamsize>(meta_str.size()));

    write_pod<uint32_t>(out, static_cast<uint32_t>(manifest.size()));
    for (const Entry& e : manifest) {
        write_pod<uint16_t>(out, static_cast<uint16_t>(e.name.size()));
        out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
        write_pod<uint8_t>(out, static_cast<uint8_t>(e.shape.size()));
        for (size_t d : e.shape) write_pod<uint64_t>(out, d);
        write_pod<uint64_t>(out, e.offset);
    }
    write_pod<uint64_t>(out, payload.size());
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size() * sizeof(float)));
    write_pod<uint64_t>(out, fnv1a64(payload.data(), payload.size() * sizeof(float)));
    if (!out) throw DataError("checkpoint: write failed for " + path);
}

Checkpoint Checkpoint::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError("checkpoint: bad magic in " + path);
    const auto version = read_pod<uint32_t>(in);
    if (version != kVersion) throw DataError("checkpoint: unsupported version " + std::to_string(version));

    Checkpoint ckpt;
    const auto meta_len = read_pod<uint64_t>(in);
    std::string meta_str(meta_len, '\0');
    in.read(meta_str.data(), static_cast<std::streamsize>(meta_len));
    if (!in) throw DataError("checkpoint: truncated metadata");
    json meta;
    try {
        meta = json::parse(meta_str);
    } catch (const json::exception& e) {
        throw DataError(std::string("checkpoint: corrupt metadata: ") + e.what());
    }
    ckpt.config = RunConfig::from_json(meta.at("config"));
    ckpt.vocab_tokens = meta.at("vocab").get<std::vector<std::string>>();
    ckpt.extra = meta.value("extra", json::object());

    const auto n_entries = read_pod<uint32_t>(in);
    for (uint32_t i = 0; i < n_entries; ++i) {
        Entry e;
        const auto name_len = read_pod<uint16_t>(in);
        e.name.resize(name_len);
        in.read(e.name.data(), name_len);
        const auto ndims = read_pod<uint8_t>(in);
        for (uint8_t d = 0; d < ndims; ++d) e.shape.push_back(read_pod<uint64_t>(in));
        e.offset = read_pod<uint64_t>(in);
        ckpt.manifest.push_back(std::move(e));
    }
    const auto payload_len = read_pod<uint64_t>(in);
    ckpt.payload.resize(payload_len);
    in.read(reinterpret_cast<char*>(ckpt.payload.data()), static_cast<std::streamsize>(payload_len * sizeof(float)));
    if (!in) throw DataError("checkpoint: truncated payload");
    const auto checksum = read_pod<uint64_t>(in);
    if (checksum != fnv1a64(ckpt.payload.data(), ckpt.payload.size() * sizeof(float)))
        throw DataError("checkpoint: payload checksum mismatch in " + path);
    for (const Entry& e : ckpt.manifest) {
        size_t n = 1;
        for (size_t d : e.shape) n *= d;
        if (e.offset + n > ckpt.payload.size()) throw DataError("checkpoint: manifest entry out of payload bounds: " + e.name);
    }
    return ckpt;
}

}  // namespace micc
