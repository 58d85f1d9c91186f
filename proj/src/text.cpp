#include "dimba/text.hpp"

#include <cctype>
#include <cmath>

namespace dimba {

static std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

TokenSequence tokenize(const std::string& text, int max_len) {
    if (max_len < 1) throw std::invalid_argument("tokenize: max_len must be >= 1");
    std::vector<std::string> words;
    std::string cur;
    for (char ch : text) {
        if (std::isalnum(static_cast<unsigned char>(ch))) {
            cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
        } else if (!cur.empty()) {
            words.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) words.push_back(cur);

    TokenSequence t;
    t.ids.assign(max_len, kNullTokenId);
    t.mask.assign(max_len, 0);
    if (words.empty()) {  // null condition: a single unmasked null slot
        t.mask[0] = 1;
        return t;
    }
    int n = std::min<int>(max_len, static_cast<int>(words.size()));
    for (int i = 0; i < n; ++i) {
        // bucket 0 is reserved for the null token
        t.ids[i] = 1 + static_cast<int>(fnv1a(words[i]) % (kVocabSize - 1));
        t.mask[i] = 1;
    }
    return t;
}

TextEncoder TextEncoder::init(int d_text, int max_len, std::uint64_t seed) {
    TextEncoder e;
    e.d_text = d_text;
    e.max_len = max_len;
    Rng rng(seed);
    e.embed = Tensor({kVocabSize, d_text});
    rng.fill_normal(e.embed, 1.0);
    e.w_mix = Tensor({d_text, d_text});
    rng.fill_normal(e.w_mix, 1.0 / std::sqrt(static_cast<double>(d_text)));
    e.b_mix = Tensor({d_text});
    return e;
}

Tensor TextEncoder::encode(const TokenSequence& toks) const {
    if (static_cast<int>(toks.ids.size()) != max_len)
        throw std::invalid_argument("encode: token length mismatch");
    Tensor out({max_len, d_text});
    for (int i = 0; i < max_len; ++i) {
        if (!toks.mask[i]) continue;  // masked rows stay zero
        int id = toks.ids[i];
        if (id < 0 || id >= kVocabSize) throw std::invalid_argument("encode: token id out of vocab");
        for (int j = 0; j < d_text; ++j) {
            double acc = b_mix[j];
            // sinusoidal positional term mixed into the embedding
            for (int k = 0; k < d_text; ++k)
                acc += (embed.at(id, k) + std::sin(0.1 * i + 1.7 * k)) * w_mix.at(k, j);
            out.at(i, j) = std::tanh(acc);
        }
    }
    return out;
}

TextCondition TextEncoder::condition(const std::string& text) const {
    TokenSequence t = tokenize(text, max_len);
    return {encode(t), t.mask};
}

std::uint64_t TextEncoder::param_hash() const {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix = [&h](const Tensor& t) {
        for (std::size_t i = 0; i < t.numel(); ++i) {
            std::uint64_t bits;
            double v = t[i];
            static_assert(sizeof(bits) == sizeof(v));
            __builtin_memcpy(&bits, &v, sizeof(bits));
            h ^= bits;
            h *= 1099511628211ULL;
        }
    };
    mix(embed);
    mix(w_mix);
    mix(b_mix);
    return h;
}

}  // namespace dimba
