#include "dimba/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dimba {

NoiseSchedule make_schedule(int T) {
    if (T < 2) throw std::invalid_argument("make_schedule: T must be >= 2");
    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        s.beta[t] = 1e-4 + (2e-2 - 1e-4) * t / (T - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s) {
    if (t < 0 || t >= s.T) throw std::invalid_argument("q_sample: t out of range");
    check_same_shape(x0, eps, "q_sample");
    double sa = std::sqrt(s.alpha_bar[t]);
    double sb = std::sqrt(1.0 - s.alpha_bar[t]);
    Tensor out(x0.shape());
    for (std::size_t i = 0; i < out.numel(); ++i) out[i] = sa * x0[i] + sb * eps[i];
    return out;
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w) {
    check_same_shape(eps_cond, eps_uncond, "cfg_combine");
    Tensor out(eps_cond.shape());
    for (std::size_t i = 0; i < out.numel(); ++i)
        out[i] = eps_uncond[i] + w * (eps_cond[i] - eps_uncond[i]);
    return out;
}

Var training_loss(const Model& m, const std::vector<Tensor>& x0_batch,
                  const std::vector<TextCondition>& text_batch, const NoiseSchedule& sched,
                  double p_uncond, Rng& rng, double p_high_t) {
    if (x0_batch.empty()) throw std::invalid_argument("training_loss: empty batch");
    if (x0_batch.size() != text_batch.size())
        throw std::invalid_argument("training_loss: batch size mismatch");
    std::vector<Var> losses;
    losses.reserve(x0_batch.size());
    for (std::size_t i = 0; i < x0_batch.size(); ++i) {
        // Optionally oversample the high-noise half of the schedule. The
        // epsilon-MSE is tiny at large t, so under a uniform draw the
        // conditioning pathway (which only pays off when x_t is ambiguous)
        // sees almost no gradient.
        int t;
        if (p_high_t > 0 && rng.uniform() < p_high_t)
            t = sched.T / 2 + rng.uniform_int(sched.T - sched.T / 2);
        else
            t = rng.uniform_int(sched.T);
        Tensor eps(x0_batch[i].shape());
        rng.fill_normal(eps);
        bool drop = rng.uniform() < p_uncond;
        Tensor xt = q_sample(x0_batch[i], t, eps, sched);
        Var pred;
        if (drop) {
            pred = model_forward(m, xt, t, sched.T, m.null_cond, {1});
        } else {
            pred = model_forward(m, xt, t, sched.T, constant(text_batch[i].features),
                                 text_batch[i].mask);
        }
        losses.push_back(mse(pred, constant(eps)));
    }
    return mean_of(losses);
}

Tensor dpm_solver_sample(const EpsFn& eps_fn, const std::vector<int>& shape, int steps,
                         const NoiseSchedule& sched, Rng& rng, bool threshold_x0) {
    if (steps < 1) throw std::invalid_argument("dpm_solver_sample: steps must be >= 1");
    auto alpha_of = [&](int t) { return std::sqrt(sched.alpha_bar[t]); };
    auto sigma_of = [&](int t) { return std::sqrt(1.0 - sched.alpha_bar[t]); };
    auto lambda_of = [&](int t) { return std::log(alpha_of(t) / sigma_of(t)); };

    // timestep grid, uniform in log-SNR (lambda) from T-1 down to 0; lambda is
    // strictly decreasing in t, so walk the discrete grid to each target level
    std::vector<int> ts(steps + 1);
    double l0 = lambda_of(sched.T - 1), l1 = lambda_of(0);
    int cur = sched.T - 1;
    for (int i = 0; i <= steps; ++i) {
        double target = l0 + (l1 - l0) * i / steps;
        while (cur > 0 && lambda_of(cur) < target) --cur;
        ts[i] = cur;
    }
    ts[steps] = 0;

    Tensor x(shape);
    rng.fill_normal(x);

    Tensor eps_prev;
    double h_prev = 0.0;
    for (int i = 1; i <= steps; ++i) {
        int ta = ts[i - 1], tb = ts[i];
        if (tb == ta) continue;  // collapsed grid point (steps ~ T); no-op
        double la = lambda_of(ta), lb = lambda_of(tb);
        double h = lb - la;
        Tensor eps = eps_fn(x, ta);
        Tensor eps_d = eps;
        if (i > 1) {  // second-order multistep correction
            double r = h_prev / h;
            for (std::size_t j = 0; j < eps_d.numel(); ++j)
                eps_d[j] = eps[j] + (0.5 / r) * (eps[j] - eps_prev[j]);
        }
        if (threshold_x0) {
            // clamp the implied x0 = (x - sigma eps) / alpha to the data range
            // and fold the correction back into eps; keeps high-guidance
            // trajectories from diverging
            double aa = alpha_of(ta), sa = sigma_of(ta);
            for (std::size_t j = 0; j < eps_d.numel(); ++j) {
                double x0 = (x[j] - sa * eps_d[j]) / aa;
                x0 = std::clamp(x0, -1.0, 1.0);
                eps_d[j] = (x[j] - aa * x0) / sa;
            }
        }
        double ratio = alpha_of(tb) / alpha_of(ta);
        double coef = sigma_of(tb) * std::expm1(h);
        for (std::size_t j = 0; j < x.numel(); ++j) x[j] = ratio * x[j] - coef * eps_d[j];
        eps_prev = eps;
        h_prev = h;
    }
    return x;
}

Tensor sample_image(const Model& m, const TextCondition& cond, const NoiseSchedule& sched,
                    int steps, double guidance, Rng& rng) {
    EpsFn fn = [&](const Tensor& x, int t) {
        Tensor ec = model_forward(m, x, t, sched.T, constant(cond.features), cond.mask)->value;
        if (guidance == 1.0) return ec;
        Tensor eu = model_forward(m, x, t, sched.T, m.null_cond, {1})->value;
        return cfg_combine(ec, eu, guidance);
    };
    int r = m.cfg.base_resolution;
    return dpm_solver_sample(fn, {m.cfg.in_channels, r, r}, steps, sched, rng,
                             /*threshold_x0=*/true);
}

}  // namespace dimba
