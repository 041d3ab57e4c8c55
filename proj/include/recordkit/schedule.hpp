#pragma once

#include <cstddef>
#include <vector>

#include "recordkit/tensor.hpp"

namespace recordkit {

// DDPM variance schedule; alpha_bar[t] = prod_{i<=t} (1 - beta[i]).
struct Schedule {
    size_t timesteps = 0;
    std::vector<double> beta;
    std::vector<double> alpha_bar;
};

// Linear beta interpolation over `timesteps` steps.
Schedule make_schedule(size_t timesteps, double beta_min, double beta_max);

// z_t = sqrt(alpha_bar[t]) * z0 + sqrt(1 - alpha_bar[t]) * eps.
Tensor q_sample(const Tensor& z0, size_t t, const Tensor& eps, const Schedule& schedule);

}  // namespace recordkit
