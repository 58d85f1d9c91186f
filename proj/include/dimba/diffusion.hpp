#pragma once

#include <functional>
#include <vector>

#include "dimba/backbone.hpp"
#include "dimba/rng.hpp"

namespace dimba {

struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta, alpha, alpha_bar;
};

// Linear betas from 1e-4 to 2e-2 over T steps.
NoiseSchedule make_schedule(int T);

// x_t = sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
Tensor q_sample(const Tensor& x0, int t, const Tensor& eps, const NoiseSchedule& s);

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double w);

// A text condition as consumed by cross-attention.
struct TextCondition {
    Tensor features;  // [T, d_text]
    std::vector<char> mask;
};

// Epsilon-MSE training objective with unconditional dropout (CFG training).
// p_high_t redirects that fraction of the per-example timestep draws to the
// upper half of the schedule (0 = plain uniform draws).
Var training_loss(const Model& m, const std::vector<Tensor>& x0_batch,
                  const std::vector<TextCondition>& text_batch, const NoiseSchedule& sched,
                  double p_uncond, Rng& rng, double p_high_t = 0.0);

// Already-guided epsilon prediction at (x, t).
using EpsFn = std::function<Tensor(const Tensor& x, int t)>;

// Second-order multistep DPM-Solver in log-SNR time, from pure noise.
// threshold_x0 clamps the implied x0 prediction to [-1, 1] each step (static
// thresholding); essential at high guidance scales, off by default so the
// solver stays exact for analytic score functions.
Tensor dpm_solver_sample(const EpsFn& eps_fn, const std::vector<int>& shape, int steps,
                         const NoiseSchedule& sched, Rng& rng, bool threshold_x0 = false);

// Convenience: CFG-guided sampling from a model and a text condition.
Tensor sample_image(const Model& m, const TextCondition& cond, const NoiseSchedule& sched,
                    int steps, double guidance, Rng& rng);

}  // namespace dimba
