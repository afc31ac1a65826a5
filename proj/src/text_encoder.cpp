#include "micc/text_encoder.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>

#include "micc/errors.hpp"

namespace micc {

Vocabulary Vocabulary::from_tokens(const std::vector<std::string>& tokens) {
    if (tokens.size() < 3) throw DataError("vocabulary: needs at least the three special tokens");
    Vocabulary v;
    v.tokens_ = tokens;
    for (size_t i = 0; i < tokens.size(); ++i) {
        if (!v.index_.emplace(tokens[i], static_cast<int>(i)).second) throw DataError("vocabulary: duplicate token " + tokens[i]);
    }
    return v;
}

Vocabulary Vocabulary::from_corpus(const std::vector<std::string>& texts) {
    std::set<std::string> words;
    for (const std::string& t : texts)
        for (std::string& w : split_tokens(t)) words.insert(std::move(w));
    std::vector<std::string> tokens = {"<pad>", "<eos>", "<unk>"};
    for (const std::string& w : words) tokens.push_back(w);
    return from_tokens(tokens);
}

Vocabulary Vocabulary::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("vocabulary: cannot open " + path);
    std::vector<std::string> tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    return from_tokens(tokens);
}

void Vocabulary::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("vocabulary: cannot write " + path);
    for (const std::string& t : tokens_) out << t << "\n";
}

int Vocabulary::id(const std::string& token) const {
    auto it = index_.find(token);
    return it == index_.end() ? kUnk : it->second;
}

std::vector<std::string> split_tokens(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : text) {
        if (std::isspace(static_cast<unsigned char>(ch))) {
            if (!cur.empty()) out.push_back(std::move(cur)), cur.clear();
        } else {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

TokenSequence tokenize(const std::string& text, const Vocabulary& vocab, size_t max_len) {
    if (vocab.size() == 0) throw DataError("tokenize: empty vocabulary");
    if (max_len < 1) throw ConfigError("tokenize: max_len must be at least 1");
    TokenSequence seq;
    seq.ids.assign(max_len, Vocabulary::kPad);
    std::vector<std::string> words = split_tokens(text);
    size_t n = std::min(words.size(), max_len - 1);
    for (size_t i = 0; i < n; ++i) seq.ids[i] = vocab.id(words[i]);
    seq.ids[n] = Vocabulary::kEos;
    seq.length = n + 1;
    return seq;
}

Tensor positional_encoding(size_t pos, size_t d_model) {
    if (d_model % 2 != 0) throw ConfigError("positional_encoding: d_model must be even, got " + std::to_string(d_model));
    Tensor pe({1, d_model});
    for (size_t i = 0; 2 * i < d_model; ++i) {
        const double div = std::pow(10000.0, 2.0 * static_cast<double>(i) / static_cast<double>(d_model));
        pe[2 * i] = std::sin(static_cast<double>(pos) / div);
        pe[2 * i + 1] = std::cos(static_cast<double>(pos) / div);
    }
    return pe;
}

TextEncoder TextEncoder::create(ParamStore& store, const std::string& prefix, size_t vocab_size, const Config& cfg, Rng& rng) {
    if (cfg.d_model % 2 != 0) throw ConfigError("text encoder: d_model must be even for sin/cos pairing");
    TextEncoder enc;
    enc.cfg_ = cfg;
    const double b = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
    enc.embedding_ = &store.create_uniform(prefix + ".embedding", {vocab_size, cfg.d_model}, rng, -b, b);
    enc.blocks_ = TransformerStack::create(store, prefix, cfg.d_model, cfg.heads, cfg.layers, 4 * cfg.d_model, rng);
    enc.pe_table_ = Tensor({cfg.max_len, cfg.d_model});
    for (size_t pos = 0; pos < cfg.max_len; ++pos) {
        Tensor row = positional_encoding(pos, cfg.d_model);
        std::copy(row.data(), row.data() + cfg.d_model, enc.pe_table_.data() + pos * cfg.d_model);
    }
    return enc;
}

Var TextEncoder::embed_inputs(Tape& tape, const std::vector<TokenSequence>& seqs, std::vector<Range>* ranges_out) const {
    if (seqs.empty()) throw DataError("text encoder: empty batch");
    std::vector<int> ids;
    std::vector<Range> ranges;
    for (const TokenSequence& s : seqs) {
        if (s.length == 0) throw DataError("text encoder: sequence with no valid tokens");
        if (s.length > cfg_.max_len) throw DataError("text encoder: sequence longer than max_len");
        ranges.push_back({ids.size(), s.length});
        for (size_t i = 0; i < s.length; ++i) {
            if (s.ids[i] == Vocabulary::kPad) throw DataError("text encoder: PAD inside the valid prefix");
            ids.push_back(s.ids[i]);
        }
    }
    Tensor pe({ids.size(), cfg_.d_model});
    {
        size_t row = 0;
        for (const Range& r : ranges)
            for (size_t i = 0; i < r.len; ++i, ++row)
                std::copy(pe_table_.data() + i * cfg_.d_model, pe_table_.data() + (i + 1) * cfg_.d_model, pe.data() + row * cfg_.d_model);
    }
    Var x = add(embedding(tape.param(*embedding_), std::move(ids)), tape.constant(std::move(pe)));
    if (ranges_out) *ranges_out = ranges;
    return x;
}

Var TextEncoder::encode(Tape& tape, const std::vector<TokenSequence>& seqs, std::vector<Range>* ranges_out) const {
    std::vector<Range> ranges;
    Var x = embed_inputs(tape, seqs, &ranges);
    Var h = blocks_.apply(tape, x, ranges);
    if (ranges_out) *ranges_out = std::move(ranges);
    return h;
}

}  // namespace micc
