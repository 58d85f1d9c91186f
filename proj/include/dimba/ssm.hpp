#pragma once

#include <string>
#include <vector>

#include "dimba/autograd.hpp"
#include "dimba/rng.hpp"

namespace dimba {

// Per-sublayer AdaLN modulation: x -> x + gate (.) f(norm(x) * (1 + scale) + shift).
struct AdaLnSignals {
    Var scale;  // [hidden]
    Var shift;  // [hidden]
    Var gate;   // [hidden]
};

Var linear(const Var& x, const Var& w, const Var& b);
Var modulate(const Var& x, const AdaLnSignals& sig);  // norm + scale/shift

// Bidirectional selective-SSM sublayer. SSM projections are shared between
// directions; each direction has its own depthwise conv.
struct SsmParams {
    int hidden = 0, h_inner = 0, n_state = 0, conv_width = 0;
    Var w_in, b_in;          // [hidden, 2*h_inner], [2*h_inner] -> (x, z gate)
    Var conv_fwd, conv_bwd;  // [h_inner, conv_width]
    Var w_x;                 // [h_inner, h_inner + 2*n_state] -> (delta_raw, b, c)
    Var dt_bias;             // [h_inner]
    Var a_log;               // [h_inner, n_state]; A = -exp(a_log)
    Var d_skip;              // [h_inner]
    Var w_out, b_out;        // [h_inner, hidden], [hidden]

    static SsmParams init(int hidden, int n_state, int expansion, int conv_width, Rng& rng,
                          const std::string& prefix);
    std::vector<Var> params() const;
};

// One direction: conv -> silu -> (delta, b, c) projection -> scan -> + d_skip.
Var ssm_direction(const Var& x_part, const SsmParams& p, bool reverse);

// Full sublayer with AdaLN modulation and gated residual.
Var mamba_layer_forward(const Var& x, const SsmParams& p, const AdaLnSignals& sig);

}  // namespace dimba
