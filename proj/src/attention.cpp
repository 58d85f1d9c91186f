#include "dimba/attention.hpp"

#include <cmath>

namespace dimba {

AttnParams AttnParams::init(int hidden, int n_heads, int kv_width, Rng& rng,
                            const std::string& prefix) {
    if (n_heads < 1 || hidden % n_heads != 0)
        throw std::invalid_argument("AttnParams: hidden must be divisible by n_heads");
    AttnParams p;
    p.hidden = hidden;
    p.n_heads = n_heads;
    p.kv_width = kv_width;
    auto randn = [&](std::vector<int> shape, int fan_in) {
        Tensor t(std::move(shape));
        rng.fill_normal(t, 1.0 / std::sqrt(static_cast<double>(fan_in)));
        return t;
    };
    p.wq = make_param(randn({hidden, hidden}, hidden), prefix + ".wq");
    p.bq = make_param(Tensor({hidden}), prefix + ".bq");
    p.wk = make_param(randn({kv_width, hidden}, kv_width), prefix + ".wk");
    p.bk = make_param(Tensor({hidden}), prefix + ".bk");
    p.wv = make_param(randn({kv_width, hidden}, kv_width), prefix + ".wv");
    p.bv = make_param(Tensor({hidden}), prefix + ".bv");
    p.wo = make_param(randn({hidden, hidden}, hidden), prefix + ".wo");
    p.bo = make_param(Tensor({hidden}), prefix + ".bo");
    return p;
}

std::vector<Var> AttnParams::params() const { return {wq, bq, wk, bk, wv, bv, wo, bo}; }

Var attention_core(const Var& x, const Var& kv_source, const std::vector<char>& kv_mask,
                   const AttnParams& p) {
    int dh = p.hidden / p.n_heads;
    if (!kv_mask.empty()) {
        bool any = false;
        for (char c : kv_mask) any = any || c;
        if (!any) throw std::invalid_argument("empty condition: all text tokens masked");
    }
    Var q = linear(x, p.wq, p.bq);
    Var k = linear(kv_source, p.wk, p.bk);
    Var v = linear(kv_source, p.wv, p.bv);
    std::vector<Var> heads;
    heads.reserve(p.n_heads);
    for (int h = 0; h < p.n_heads; ++h) {
        Var qh = slice_cols(q, h * dh, (h + 1) * dh);
        Var kh = slice_cols(k, h * dh, (h + 1) * dh);
        Var vh = slice_cols(v, h * dh, (h + 1) * dh);
        Var logits = scale(matmul_nt(qh, kh), 1.0 / std::sqrt(static_cast<double>(dh)));
        Var probs = kv_mask.empty() ? softmax_rows(logits) : masked_softmax_rows(logits, kv_mask);
        heads.push_back(matmul(probs, vh));
    }
    return linear(concat_cols(heads), p.wo, p.bo);
}

Var self_attention(const Var& x, const AttnParams& p) { return attention_core(x, x, {}, p); }

Var cross_attention(const Var& x, const Var& text, const std::vector<char>& mask,
                    const AttnParams& p) {
    return attention_core(x, text, mask, p);
}

Var self_attention_layer(const Var& x, const AttnParams& p, const AdaLnSignals& sig) {
    Var out = self_attention(modulate(x, sig), p);
    return add(x, mul_rowvec(out, sig.gate));
}

Var cross_attention_layer(const Var& x, const Var& text, const std::vector<char>& mask,
                          const AttnParams& p, const AdaLnSignals& sig) {
    Var out = cross_attention(modulate(x, sig), text, mask, p);
    return add(x, mul_rowvec(out, sig.gate));
}

}  // namespace dimba
