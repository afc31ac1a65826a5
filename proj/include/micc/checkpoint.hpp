#pragma once

#include <json.hpp>

#include <string>
#include <vector>

#include "micc/config.hpp"
#include "micc/optim.hpp"

namespace micc {

// Binary checkpoint: versioned header, JSON metadata (config snapshot,
// vocabulary, stage bookkeeping), a manifest of (name, shape, offset), one
// contiguous little-endian float32 payload and its checksum. Values are
// computed in float64 and stored quantized to float32.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    RunConfig config;
    std::vector<std::string> vocab_tokens;
    nlohmann::json extra;  // stage, best epoch, ...

    struct Entry {
        std::string name;
        std::vector<size_t> shape;
        uint64_t offset = 0;  // in floats
    };
    std::vector<Entry> manifest;
    std::vector<float> payload;

    static Checkpoint from_params(const RunConfig& cfg, const std::vector<std::string>& vocab, const ParamStore& params,
                                  nlohmann::json extra = {});
    // Overwrites matching parameters; mismatched shapes or missing names
    // are collected and reported together.
    void restore_into(ParamStore& params) const;

    void save(const std::string& path) const;
    static Checkpoint load(const std::string& path);
};

}  // namespace micc
