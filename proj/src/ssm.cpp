#include "dimba/ssm.hpp"

#include <cmath>

namespace dimba {

Var linear(const Var& x, const Var& w, const Var& b) { return add_rowvec(matmul(x, w), b); }

Var modulate(const Var& x, const AdaLnSignals& sig) {
    Var xn = layernorm_rows(x);
    return add_rowvec(add(xn, mul_rowvec(xn, sig.scale)), sig.shift);
}

static Tensor randn_scaled(std::vector<int> shape, int fan_in, Rng& rng) {
    Tensor t(std::move(shape));
    rng.fill_normal(t, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    return t;
}

SsmParams SsmParams::init(int hidden, int n_state, int expansion, int conv_width, Rng& rng,
                          const std::string& prefix) {
    SsmParams p;
    p.hidden = hidden;
    p.n_state = n_state;
    p.h_inner = expansion * hidden;
    p.conv_width = conv_width;
    int H = p.h_inner, N = n_state;

    p.w_in = make_param(randn_scaled({hidden, 2 * H}, hidden, rng), prefix + ".w_in");
    p.b_in = make_param(Tensor({2 * H}), prefix + ".b_in");
    p.conv_fwd = make_param(randn_scaled({H, conv_width}, conv_width, rng), prefix + ".conv_fwd");
    p.conv_bwd = make_param(randn_scaled({H, conv_width}, conv_width, rng), prefix + ".conv_bwd");
    p.w_x = make_param(randn_scaled({H, H + 2 * N}, H, rng), prefix + ".w_x");

    // softplus(dt_bias) log-uniform in [1e-3, 1e-1] keeps exp(delta*A) away
    // from 0 and 1 at init.
    Tensor dtb({H});
    for (int h = 0; h < H; ++h) {
        double dt = std::exp(rng.uniform(std::log(1e-3), std::log(1e-1)));
        dtb[h] = std::log(std::expm1(dt));
    }
    p.dt_bias = make_param(std::move(dtb), prefix + ".dt_bias");

    // S4D-real style: A_n = -(n+1)
    Tensor alog({H, N});
    for (int h = 0; h < H; ++h)
        for (int n = 0; n < N; ++n) alog.at(h, n) = std::log(static_cast<double>(n + 1));
    p.a_log = make_param(std::move(alog), prefix + ".a_log");

    Tensor d({H});
    d.fill(1.0);
    p.d_skip = make_param(std::move(d), prefix + ".d_skip");

    p.w_out = make_param(randn_scaled({H, hidden}, H, rng), prefix + ".w_out");
    p.b_out = make_param(Tensor({hidden}), prefix + ".b_out");
    return p;
}

std::vector<Var> SsmParams::params() const {
    return {w_in, b_in,  conv_fwd, conv_bwd, w_x,  dt_bias,
            a_log, d_skip, w_out,    b_out};
}

Var ssm_direction(const Var& x_part, const SsmParams& p, bool rev) {
    int H = p.h_inner, N = p.n_state;
    Var xs = rev ? reverse_rows(x_part) : x_part;
    Var xc = silu(causal_dwconv(xs, rev ? p.conv_bwd : p.conv_fwd));
    Var proj = matmul(xc, p.w_x);
    // softplus underflows to exactly 0 for very negative inputs (possible on
    // out-of-distribution activations); keep delta strictly positive
    Var sp = softplus(add_rowvec(slice_cols(proj, 0, H), p.dt_bias));
    Tensor dfloor(sp->value.shape());
    for (std::size_t i = 0; i < dfloor.numel(); ++i) dfloor[i] = 1e-12;
    Var delta = add(sp, constant(dfloor));
    Var b = slice_cols(proj, H, H + N);
    Var c = slice_cols(proj, H + N, H + 2 * N);
    Var a = neg(exp_v(p.a_log));
    Var y = add(selective_scan(xc, delta, b, c, a), mul_rowvec(xc, p.d_skip));
    return rev ? reverse_rows(y) : y;
}

Var mamba_layer_forward(const Var& x, const SsmParams& p, const AdaLnSignals& sig) {
    int H = p.h_inner;
    if (x->value.cols() != p.hidden)
        throw std::invalid_argument("mamba_layer_forward: hidden width mismatch");
    Var xm = modulate(x, sig);
    Var xz = linear(xm, p.w_in, p.b_in);
    Var x_part = slice_cols(xz, 0, H);
    Var z = slice_cols(xz, H, 2 * H);
    Var y = add(ssm_direction(x_part, p, false), ssm_direction(x_part, p, true));
    Var out = linear(mul(y, silu(z)), p.w_out, p.b_out);
    return add(x, mul_rowvec(out, sig.gate));
}

}  // namespace dimba
