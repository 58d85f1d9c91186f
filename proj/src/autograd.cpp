#include "dimba/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace dimba {

Var constant(Tensor v) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = false;
    return n;
}

Var make_param(Tensor v, std::string name) {
    auto n = std::make_shared<Node>();
    n->value = std::move(v);
    n->requires_grad = true;
    n->name = std::move(name);
    return n;
}

static Var make_op(Tensor value, std::vector<Var> parents, std::function<void(Node&)> bwd) {
    auto n = std::make_shared<Node>();
    n->value = std::move(value);
    for (auto& p : parents)
        if (p->requires_grad) n->requires_grad = true;
    if (n->requires_grad) {
        n->parents = std::move(parents);
        n->backward_fn = std::move(bwd);
    }
    return n;
}

static void ensure_grad(Node& n) {
    if (!n.grad.same_shape(n.value)) n.grad = Tensor(n.value.shape());
}

void backward(const Var& root) {
    if (root->value.numel() != 1) throw std::invalid_argument("backward: root must be scalar");
    // Topological order (iterative DFS).
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    std::vector<std::pair<Node*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [n, i] = stack.back();
        if (i < n->parents.size()) {
            Node* p = n->parents[i++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(n);
            stack.pop_back();
        }
    }
    for (Node* n : order) {
        ensure_grad(*n);
        n->grad.fill(0.0);
    }
    root->grad[0] = 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn) {
            for (auto& p : n->parents)
                if (p->requires_grad) ensure_grad(*p);
            n->backward_fn(*n);
        }
    }
}

// ---------- elementwise ----------

Var add(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] + b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) b->grad[i] += n.grad[i];
    });
}

Var sub(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] - b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) b->grad[i] -= n.grad[i];
    });
}

Var mul(const Var& a, const Var& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * b->value[i];
    return make_op(std::move(out), {a, b}, [a, b](Node& n) {
        if (a->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] * b->value[i];
        if (b->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) b->grad[i] += n.grad[i] * a->value[i];
    });
}

Var scale(const Var& a, double s) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * s;
    return make_op(std::move(out), {a}, [a, s](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] * s;
    });
}

Var neg(const Var& a) { return scale(a, -1.0); }

static void check_rowvec(const Var& x, const Var& v, const char* op) {
    std::size_t h = v->value.numel();
    if (x->value.ndim() != 2 || static_cast<std::size_t>(x->value.cols()) != h)
        throw std::invalid_argument(std::string(op) + ": vector width does not match columns");
}

Var add_rowvec(const Var& x, const Var& v) {
    check_rowvec(x, v, "add_rowvec");
    int L = x->value.rows(), H = x->value.cols();
    Tensor out(x->value.shape());
    for (int t = 0; t < L; ++t)
        for (int h = 0; h < H; ++h) out.at(t, h) = x->value.at(t, h) + v->value[h];
    return make_op(std::move(out), {x, v}, [x, v, L, H](Node& n) {
        if (x->requires_grad)
            for (std::size_t i = 0; i < n.grad.numel(); ++i) x->grad[i] += n.grad[i];
        if (v->requires_grad)
            for (int t = 0; t < L; ++t)
                for (int h = 0; h < H; ++h) v->grad[h] += n.grad.at(t, h);
    });
}

Var mul_rowvec(const Var& x, const Var& v) {
    check_rowvec(x, v, "mul_rowvec");
    int L = x->value.rows(), H = x->value.cols();
    Tensor out(x->value.shape());
    for (int t = 0; t < L; ++t)
        for (int h = 0; h < H; ++h) out.at(t, h) = x->value.at(t, h) * v->value[h];
    return make_op(std::move(out), {x, v}, [x, v, L, H](Node& n) {
        if (x->requires_grad)
            for (int t = 0; t < L; ++t)
                for (int h = 0; h < H; ++h) x->grad.at(t, h) += n.grad.at(t, h) * v->value[h];
        if (v->requires_grad)
            for (int t = 0; t < L; ++t)
                for (int h = 0; h < H; ++h) v->grad[h] += n.grad.at(t, h) * x->value.at(t, h);
    });
}

// ---------- nonlinearities ----------

Var exp_v(const Var& a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = std::exp(a->value[i]);
    return make_op(std::move(out), {a}, [a](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i) a->grad[i] += n.grad[i] * n.value[i];
    });
}

static double softplus_s(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
static double sigmoid_s(double x) { return 1.0 / (1.0 + std::exp(-x)); }

Var softplus(const Var& a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = softplus_s(a->value[i]);
    return make_op(std::move(out), {a}, [a](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i)
            a->grad[i] += n.grad[i] * sigmoid_s(a->value[i]);
    });
}

Var silu(const Var& a) {
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a->value[i] * sigmoid_s(a->value[i]);
    return make_op(std::move(out), {a}, [a](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            double s = sigmoid_s(a->value[i]);
            a->grad[i] += n.grad[i] * (s + a->value[i] * s * (1.0 - s));
        }
    });
}

Var gelu(const Var& a) {
    // tanh approximation
    constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    Tensor out(a->value.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) {
        double x = a->value[i];
        out[i] = 0.5 * x * (1.0 + std::tanh(k * (x + 0.044715 * x * x * x)));
    }
    return make_op(std::move(out), {a}, [a, k](Node& n) {
        for (std::size_t i = 0; i < n.grad.numel(); ++i) {
            double x = a->value[i];
            double u = k * (x + 0.044715 * x * x * x);
            double th = std::tanh(u);
            double du = k * (1.0 + 3.0 * 0.044715 * x * x);
            a->grad[i] += n.grad[i] * (0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du);
        }
    });
}

// ---------- linear algebra ----------

Var matmul(const Var& a, const Var& b) {
    int m = a->value.rows(), k = a->value.cols();
    if (b->value.rows() != k)
        throw std::invalid_argument("matmul: inner dims " + a->value.shape_str() + " vs " +
                                    b->value.shape_str());
    int n = b->value.cols();
    Tensor out({m, n});
    const double* A = a->value.data();
    const double* B = b->value.data();
    double* C = out.data();
#pragma omp parallel for schedule(static) if (static_cast<long>(m) * n * k > 65536)
    for (int i = 0; i < m; ++i) {
        for (int p = 0; p < k; ++p) {
            double av = A[static_cast<std::size_t>(i) * k + p];
            const double* Br = B + static_cast<std::size_t>(p) * n;
            double* Cr = C + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) Cr[j] += av * Br[j];
        }
    }
    return make_op(std::move(out), {a, b}, [a, b, m, k, n](Node& nd) {
        const double* G = nd.grad.data();
        if (a->requires_grad) {  // dA = G B^T
            const double* B = b->value.data();
            double* dA = a->grad.data();
#pragma omp parallel for schedule(static) if (static_cast<long>(m) * n * k > 65536)
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double s = 0;
                    const double* Gr = G + static_cast<std::size_t>(i) * n;
                    const double* Br = B + static_cast<std::size_t>(p) * n;
                    for (int j = 0; j < n; ++j) s += Gr[j] * Br[j];
                    dA[static_cast<std::size_t>(i) * k + p] += s;
                }
        }
        if (b->requires_grad) {  // dB = A^T G
            const double* A = a->value.data();
            double* dB = b->grad.data();
#pragma omp parallel for schedule(static) if (static_cast<long>(m) * n * k > 65536)
            for (int p = 0; p < k; ++p)
                for (int i = 0; i < m; ++i) {
                    double av = A[static_cast<std::size_t>(i) * k + p];
                    const double* Gr = G + static_cast<std::size_t>(i) * n;
                    double* dBr = dB + static_cast<std::size_t>(p) * n;
                    for (int j = 0; j < n; ++j) dBr[j] += av * Gr[j];
                }
        }
    });
}

Var matmul_nt(const Var& a, const Var& b) {
    int m = a->value.rows(), k = a->value.cols();
    if (b->value.cols() != k)
        throw std::invalid_argument("matmul_nt: inner dims " + a->value.shape_str() + " vs " +
                                    b->value.shape_str());
    int n = b->value.rows();
    Tensor out({m, n});
#pragma omp parallel for schedule(static) if (static_cast<long>(m) * n * k > 65536)
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            double s = 0;
            for (int p = 0; p < k; ++p) s += a->value.at(i, p) * b->value.at(j, p);
            out.at(i, j) = s;
        }
    return make_op(std::move(out), {a, b}, [a, b, m, k, n](Node& nd) {
        if (a->requires_grad)
            for (int i = 0; i < m; ++i)
                for (int p = 0; p < k; ++p) {
                    double s = 0;
                    for (int j = 0; j < n; ++j) s += nd.grad.at(i, j) * b->value.at(j, p);
                    a->grad.at(i, p) += s;
                }
        if (b->requires_grad)
            for (int j = 0; j < n; ++j)
                for (int p = 0; p < k; ++p) {
                    double s = 0;
                    for (int i = 0; i < m; ++i) s += nd.grad.at(i, j) * a->value.at(i, p);
                    b->grad.at(j, p) += s;
                }
    });
}

Var transpose(const Var& a) {
    int m = a->value.rows(), n = a->value.cols();
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = a->value.at(i, j);
    return make_op(std::move(out), {a}, [a, m, n](Node& nd) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) a->grad.at(i, j) += nd.grad.at(j, i);
    });
}

// ---------- structure ----------

Var slice_cols(const Var& a, int c0, int c1) {
    int m = a->value.rows(), n = a->value.cols();
    if (c0 < 0 || c1 > n || c0 >= c1) throw std::invalid_argument("slice_cols: bad range");
    Tensor out({m, c1 - c0});
    for (int i = 0; i < m; ++i)
        for (int j = c0; j < c1; ++j) out.at(i, j - c0) = a->value.at(i, j);
    return make_op(std::move(out), {a}, [a, m, c0, c1](Node& nd) {
        for (int i = 0; i < m; ++i)
            for (int j = c0; j < c1; ++j) a->grad.at(i, j) += nd.grad.at(i, j - c0);
    });
}

Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty");
    int m = parts[0]->value.rows();
    int n = 0;
    for (auto& p : parts) {
        if (p->value.rows() != m) throw std::invalid_argument("concat_cols: row mismatch");
        n += p->value.cols();
    }
    Tensor out({m, n});
    int off = 0;
    for (auto& p : parts) {
        int w = p->value.cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) out.at(i, off + j) = p->value.at(i, j);
        off += w;
    }
    std::vector<Var> ps = parts;
    return make_op(std::move(out), ps, [ps, m](Node& nd) {
        int off = 0;
        for (auto& p : ps) {
            int w = p->value.cols();
            if (p->requires_grad)
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < w; ++j) p->grad.at(i, j) += nd.grad.at(i, off + j);
            off += w;
        }
    });
}

Var reverse_rows(const Var& a) {
    int m = a->value.rows(), n = a->value.cols();
    Tensor out({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = a->value.at(m - 1 - i, j);
    return make_op(std::move(out), {a}, [a, m, n](Node& nd) {
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) a->grad.at(m - 1 - i, j) += nd.grad.at(i, j);
    });
}

Var permute_elems(const Var& a, std::vector<std::size_t> idx, std::vector<int> out_shape) {
    Tensor out(out_shape);
    if (idx.size() != out.numel()) throw std::invalid_argument("permute_elems: index size");
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = a->value[idx[i]];
    auto idx_p = std::make_shared<std::vector<std::size_t>>(std::move(idx));
    return make_op(std::move(out), {a}, [a, idx_p](Node& nd) {
        for (std::size_t i = 0; i < idx_p->size(); ++i) a->grad[(*idx_p)[i]] += nd.grad[i];
    });
}

// ---------- rows ----------

Var layernorm_rows(const Var& a, double eps) {
    int L = a->value.rows(), H = a->value.cols();
    Tensor out({L, H});
    Tensor mu({L}), rstd({L});
    for (int t = 0; t < L; ++t) {
        double m = 0;
        for (int h = 0; h < H; ++h) m += a->value.at(t, h);
        m /= H;
        double v = 0;
        for (int h = 0; h < H; ++h) {
            double d = a->value.at(t, h) - m;
            v += d * d;
        }
        v /= H;
        double r = 1.0 / std::sqrt(v + eps);
        mu[t] = m;
        rstd[t] = r;
        for (int h = 0; h < H; ++h) out.at(t, h) = (a->value.at(t, h) - m) * r;
    }
    auto saved = std::make_shared<std::pair<Tensor, Tensor>>(std::move(mu), std::move(rstd));
    return make_op(std::move(out), {a}, [a, saved, L, H](Node& nd) {
        for (int t = 0; t < L; ++t) {
            double r = saved->second[t];
            double m = saved->first[t];
            double gsum = 0, gxsum = 0;
            for (int h = 0; h < H; ++h) {
                double xh = (a->value.at(t, h) - m) * r;
                gsum += nd.grad.at(t, h);
                gxsum += nd.grad.at(t, h) * xh;
            }
            for (int h = 0; h < H; ++h) {
                double xh = (a->value.at(t, h) - m) * r;
                a->grad.at(t, h) += r * (nd.grad.at(t, h) - gsum / H - xh * gxsum / H);
            }
        }
    });
}

static Var softmax_rows_impl(const Var& a, const std::vector<char>* mask) {
    int L = a->value.rows(), H = a->value.cols();
    if (mask) {
        if (static_cast<int>(mask->size()) != H)
            throw std::invalid_argument("masked_softmax_rows: mask width");
        bool any = false;
        for (char c : *mask) any = any || c;
        if (!any) throw std::invalid_argument("empty condition: all positions masked");
    }
    Tensor out({L, H});
    for (int t = 0; t < L; ++t) {
        double mx = -1e300;
        for (int h = 0; h < H; ++h)
            if (!mask || (*mask)[h]) mx = std::max(mx, a->value.at(t, h));
        double z = 0;
        for (int h = 0; h < H; ++h) {
            double e = (!mask || (*mask)[h]) ? std::exp(a->value.at(t, h) - mx) : 0.0;
            out.at(t, h) = e;
            z += e;
        }
        for (int h = 0; h < H; ++h) out.at(t, h) /= z;
    }
    return make_op(std::move(out), {a}, [a, L, H](Node& nd) {
        for (int t = 0; t < L; ++t) {
            double dot = 0;
            for (int h = 0; h < H; ++h) dot += nd.grad.at(t, h) * nd.value.at(t, h);
            for (int h = 0; h < H; ++h)
                a->grad.at(t, h) += nd.value.at(t, h) * (nd.grad.at(t, h) - dot);
        }
    });
}

Var softmax_rows(const Var& a) { return softmax_rows_impl(a, nullptr); }

Var masked_softmax_rows(const Var& a, const std::vector<char>& mask) {
    return softmax_rows_impl(a, &mask);
}

// ---------- reductions ----------

Var sum_all(const Var& a) {
    double s = 0;
    for (std::size_t i = 0; i < a->value.numel(); ++i) s += a->value[i];
    Tensor out({1});
    out[0] = s;
    return make_op(std::move(out), {a}, [a](Node& nd) {
        for (std::size_t i = 0; i < a->grad.numel(); ++i) a->grad[i] += nd.grad[0];
    });
}

Var mean_all(const Var& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a->value.numel()));
}

Var mse(const Var& a, const Var& b) {
    auto d = sub(a, b);
    return mean_all(mul(d, d));
}

Var mean_of(const std::vector<Var>& vs) {
    if (vs.empty()) throw std::invalid_argument("mean_of: empty");
    Var acc = vs[0];
    for (std::size_t i = 1; i < vs.size(); ++i) acc = add(acc, vs[i]);
    return scale(acc, 1.0 / static_cast<double>(vs.size()));
}

// ---------- selective scan ----------

Var selective_scan(const Var& u, const Var& delta, const Var& b, const Var& c, const Var& a) {
    int L = u->value.rows(), H = u->value.cols();
    int N = b->value.cols();
    if (delta->value.rows() != L || delta->value.cols() != H || b->value.rows() != L ||
        c->value.rows() != L || c->value.cols() != N || a->value.rows() != H ||
        a->value.cols() != N)
        throw std::invalid_argument("selective_scan: inconsistent shapes");
    for (std::size_t i = 0; i < delta->value.numel(); ++i)
        if (!(delta->value[i] > 0.0))
            throw std::invalid_argument("selective_scan: delta must be positive");

    // Full state history kept for the backward pass: [L, H, N].
    auto hist = std::make_shared<Tensor>(std::vector<int>{L, H, N});
    Tensor y({L, H});
    for (int t = 0; t < L; ++t) {
        for (int h = 0; h < H; ++h) {
            double dt = delta->value.at(t, h);
            double uh = u->value.at(t, h);
            double acc = 0;
            for (int n = 0; n < N; ++n) {
                double abar = std::exp(dt * a->value.at(h, n));
                double hprev =
                    t > 0 ? (*hist)[(static_cast<std::size_t>(t - 1) * H + h) * N + n] : 0.0;
                double hcur = abar * hprev + dt * b->value.at(t, n) * uh;
                (*hist)[(static_cast<std::size_t>(t) * H + h) * N + n] = hcur;
                acc += c->value.at(t, n) * hcur;
            }
            y.at(t, h) = acc;
        }
    }
    return make_op(std::move(y), {u, delta, b, c, a}, [=](Node& nd) {
        Tensor dh({H, N});  // running dL/dh_t
        for (int t = L - 1; t >= 0; --t) {
            for (int h = 0; h < H; ++h) {
                double dt = delta->value.at(t, h);
                double uh = u->value.at(t, h);
                double gy = nd.grad.at(t, h);
                double ddt = 0, du = 0;
                for (int n = 0; n < N; ++n) {
                    double hcur = (*hist)[(static_cast<std::size_t>(t) * H + h) * N + n];
                    double hprev =
                        t > 0 ? (*hist)[(static_cast<std::size_t>(t - 1) * H + h) * N + n] : 0.0;
                    double an = a->value.at(h, n);
                    double abar = std::exp(dt * an);
                    double g = dh.at(h, n) + gy * c->value.at(t, n);
                    if (c->requires_grad) c->grad.at(t, n) += gy * hcur;
                    double dabar = g * hprev;
                    if (a->requires_grad) a->grad.at(h, n) += dabar * abar * dt;
                    ddt += dabar * abar * an + g * b->value.at(t, n) * uh;
                    if (b->requires_grad) b->grad.at(t, n) += g * dt * uh;
                    du += g * dt * b->value.at(t, n);
                    dh.at(h, n) = g * abar;
                }
                if (delta->requires_grad) delta->grad.at(t, h) += ddt;
                if (u->requires_grad) u->grad.at(t, h) += du;
            }
        }
    });
}

// ---------- depthwise conv ----------

Var causal_dwconv(const Var& x, const Var& w) {
    int L = x->value.rows(), H = x->value.cols();
    if (w->value.rows() != H) throw std::invalid_argument("causal_dwconv: channel mismatch");
    int K = w->value.cols();
    Tensor out({L, H});
    for (int t = 0; t < L; ++t)
        for (int h = 0; h < H; ++h) {
            double s = 0;
            for (int j = 0; j < K && j <= t; ++j) s += w->value.at(h, j) * x->value.at(t - j, h);
            out.at(t, h) = s;
        }
    return make_op(std::move(out), {x, w}, [x, w, L, H, K](Node& nd) {
        if (x->requires_grad)
            for (int t = 0; t < L; ++t)
                for (int h = 0; h < H; ++h)
                    for (int j = 0; j < K && j <= t; ++j)
                        x->grad.at(t - j, h) += nd.grad.at(t, h) * w->value.at(h, j);
        if (w->requires_grad)
            for (int h = 0; h < H; ++h)
                for (int j = 0; j < K; ++j) {
                    double s = 0;
                    for (int t = j; t < L; ++t) s += nd.grad.at(t, h) * x->value.at(t - j, h);
                    w->grad.at(h, j) += s;
                }
    });
}

}  // namespace dimba
