#pragma once

#include <map>
#include <string>
#include <vector>

#include "micc/graph.hpp"
#include "micc/optim.hpp"
#include "micc/transformer.hpp"

namespace micc {

// Closed vocabulary; id 0 is PAD, 1 EOS, 2 UNK, corpus tokens follow.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kEos = 1;
    static constexpr int kUnk = 2;

    static Vocabulary from_tokens(const std::vector<std::string>& tokens);  // full list including specials
    static Vocabulary from_corpus(const std::vector<std::string>& texts);   // specials + sorted unique corpus tokens
    static Vocabulary load(const std::string& path);                        // one token per line, line number = id
    void save(const std::string& path) const;

    int id(const std::string& token) const;  // kUnk for misses
    size_t size() const { return tokens_.size(); }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::string& token(size_t id) const { return tokens_[id]; }

private:
    std::vector<std::string> tokens_;
    std::map<std::string, int> index_;
};

struct TokenSequence {
    std::vector<int> ids;  // fixed length max_len, PAD-tailed, EOS-terminated
    size_t length = 0;     // non-PAD count (includes EOS)
};

// Lowercased whitespace tokens, truncated to max_len-1, EOS appended, padded.
TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, size_t max_len);

std::vector<std::string> split_tokens(const std::string& text);  // lowercase whitespace split

// Sinusoidal position vector (1 x d_model); d_model must be even.
Tensor positional_encoding(size_t pos, size_t d_model);

class TextEncoder {
public:
    struct Config {
        size_t d_model = 128;
        size_t heads = 4;
        size_t layers = 2;
        size_t max_len = 64;
    };

    static TextEncoder create(ParamStore& store, const std::string& prefix, size_t vocab_size, const Config& cfg, Rng& rng);

    // Token embedding + positional encoding (the pre-Transformer assembly).
    Var embed_inputs(Tape& tape, const std::vector<TokenSequence>& seqs, std::vector<Range>* ranges_out) const;
    // Full encode: stacked per-token states H restricted to valid positions.
    Var encode(Tape& tape, const std::vector<TokenSequence>& seqs, std::vector<Range>* ranges_out) const;

    const Config& config() const { return cfg_; }

private:
    Config cfg_;
    Parameter* embedding_ = nullptr;
    TransformerStack blocks_;
    Tensor pe_table_;  // (max_len x d_model), fixed
};

}  // namespace micc
