#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dimba/diffusion.hpp"
#include "dimba/tensor.hpp"

namespace dimba {

constexpr int kVocabSize = 1 << 14;  // hash buckets; id 0 = null condition
constexpr int kNullTokenId = 0;

struct TokenSequence {
    std::vector<int> ids;     // length == max_len
    std::vector<char> mask;   // 1 = real token
};

// Lowercase, split on whitespace/punctuation, hash-bucket into the fixed
// vocabulary, truncate/pad to max_len. Empty text maps to the null token.
TokenSequence tokenize(const std::string& text, int max_len);

// Deterministic frozen encoder standing in for the T5 text tower:
// embedding lookup + positional term + one tanh mixing layer.
struct TextEncoder {
    int d_text = 0, max_len = 0;
    Tensor embed;       // [vocab, d_text]
    Tensor w_mix, b_mix;  // [d_text, d_text], [d_text]

    static TextEncoder init(int d_text, int max_len, std::uint64_t seed);
    Tensor encode(const TokenSequence& toks) const;  // [max_len, d_text], masked rows zero
    TextCondition condition(const std::string& text) const;
    std::uint64_t param_hash() const;  // frozen-weights check
};

}  // namespace dimba
