#pragma once

#include <string>
#include <vector>

#include "dimba/autograd.hpp"
#include "dimba/rng.hpp"
#include "dimba/ssm.hpp"

namespace dimba {

// Multi-head attention parameters. For self-attention k/v project from
// hidden; for cross-attention they project from the text-feature width.
struct AttnParams {
    int hidden = 0, n_heads = 0, kv_width = 0;
    Var wq, bq;  // [hidden, hidden]
    Var wk, bk;  // [kv_width, hidden]
    Var wv, bv;  // [kv_width, hidden]
    Var wo, bo;  // [hidden, hidden]

    static AttnParams init(int hidden, int n_heads, int kv_width, Rng& rng,
                           const std::string& prefix);
    std::vector<Var> params() const;
};

// Scaled dot-product attention core; kv_mask empty means no masking.
Var attention_core(const Var& x, const Var& kv_source, const std::vector<char>& kv_mask,
                   const AttnParams& p);

Var self_attention(const Var& x, const AttnParams& p);
// Throws "empty condition" when every text position is masked.
Var cross_attention(const Var& x, const Var& text, const std::vector<char>& mask,
                    const AttnParams& p);

// AdaLN-modulated residual sublayers.
Var self_attention_layer(const Var& x, const AttnParams& p, const AdaLnSignals& sig);
Var cross_attention_layer(const Var& x, const Var& text, const std::vector<char>& mask,
                          const AttnParams& p, const AdaLnSignals& sig);

}  // namespace dimba
