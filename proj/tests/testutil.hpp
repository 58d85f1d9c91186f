#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dimba/autograd.hpp"
#include "dimba/rng.hpp"

namespace testutil {

inline dimba::Tensor random_tensor(std::vector<int> shape, dimba::Rng& rng, double stddev = 1.0) {
    dimba::Tensor t(std::move(shape));
    rng.fill_normal(t, stddev);
    return t;
}

// Central-difference gradient check. Builds the loss twice per probed
// coordinate; parameter nodes are shared so re-calling f re-runs the forward
// pass on perturbed values. Probes at most max_coords_per_input coordinates
// per input (strided), which keeps end-to-end model checks tractable.
inline double max_grad_rel_err(const std::function<dimba::Var()>& f,
                               const std::vector<dimba::Var>& inputs, double eps = 1e-5,
                               int max_coords_per_input = 8) {
    dimba::Var loss = f();
    dimba::backward(loss);
    std::vector<dimba::Tensor> analytic;
    for (const auto& in : inputs) analytic.push_back(in->grad);

    double worst = 0;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        std::size_t n = inputs[i]->value.numel();
        std::size_t stride = std::max<std::size_t>(1, n / static_cast<std::size_t>(max_coords_per_input));
        for (std::size_t j = 0; j < n; j += stride) {
            double orig = inputs[i]->value[j];
            inputs[i]->value[j] = orig + eps;
            double up = f()->value[0];
            inputs[i]->value[j] = orig - eps;
            double dn = f()->value[0];
            inputs[i]->value[j] = orig;
            double fd = (up - dn) / (2 * eps);
            double an = analytic[i][j];
            double err = std::abs(fd - an) / std::max(std::abs(fd) + std::abs(an), 1e-4);
            worst = std::max(worst, err);
        }
    }
    return worst;
}

}  // namespace testutil
