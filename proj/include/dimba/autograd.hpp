#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dimba/tensor.hpp"

namespace dimba {

// Tape-based reverse-mode autodiff over Tensor values. Graphs are built
// per forward pass; parameter nodes are long-lived and reused.
struct Node {
    Tensor value;
    Tensor grad;  // same shape as value once backward() runs
    bool requires_grad = false;
    std::string name;  // set for parameters
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents
};

using Var = std::shared_ptr<Node>;

Var constant(Tensor v);
Var make_param(Tensor v, std::string name);

// Zeroes grads over the reachable graph, seeds root with 1 and runs the tape.
// root must be scalar (numel == 1).
void backward(const Var& root);

// Elementwise / broadcast
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var neg(const Var& a);
Var add_rowvec(const Var& x, const Var& v);  // x: [L,H], v: [H] or [1,H]
Var mul_rowvec(const Var& x, const Var& v);

// Nonlinearities
Var exp_v(const Var& a);
Var softplus(const Var& a);
Var silu(const Var& a);
Var gelu(const Var& a);

// Linear algebra
Var matmul(const Var& a, const Var& b);     // [m,k]x[k,n]
Var matmul_nt(const Var& a, const Var& b);  // [m,k]x[n,k]^T -> [m,n]
Var transpose(const Var& a);

// Structure
Var slice_cols(const Var& a, int c0, int c1);
Var concat_cols(const std::vector<Var>& parts);
Var reverse_rows(const Var& a);
// out[i] = in[idx[i]]; backward scatter-adds. idx.size() == numel(out_shape).
Var permute_elems(const Var& a, std::vector<std::size_t> idx, std::vector<int> out_shape);

// Rows = tokens
Var layernorm_rows(const Var& a, double eps = 1e-6);
Var softmax_rows(const Var& a);
// mask[j] == 0 -> column j receives -inf logits (zero probability).
Var masked_softmax_rows(const Var& a, const std::vector<char>& mask);

// Reductions
Var sum_all(const Var& a);   // -> scalar
Var mean_all(const Var& a);  // -> scalar
Var mse(const Var& a, const Var& b);

Var mean_of(const std::vector<Var>& vs);

// Selective-scan recurrence with hand-written backward:
//   h_t = exp(delta_t * a) (.) h_{t-1} + (delta_t * b_t) (x) u_t
//   y_t[h] = sum_n c_t[n] h_t[h,n]
// u,delta: [L,H]; b,c: [L,N]; a: [H,N] (negative entries expected).
Var selective_scan(const Var& u, const Var& delta, const Var& b, const Var& c, const Var& a);

// Depthwise causal conv along rows: y[t,h] = sum_j w[h,j] x[t-j,h], x zero-padded.
Var causal_dwconv(const Var& x, const Var& w);

}  // namespace dimba
