#include "recordkit/schedule.hpp"

#include <cmath>

#include "recordkit/errors.hpp"

namespace recordkit {

Schedule make_schedule(size_t timesteps, double beta_min, double beta_max) {
    if (timesteps == 0) throw ConfigError("schedule: timesteps must be positive");
    if (!(beta_min > 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
        throw ConfigError("schedule: require 0 < beta_min <= beta_max < 1");
    }
    Schedule s;
    s.timesteps = timesteps;
    s.beta.resize(timesteps);
    s.alpha_bar.resize(timesteps);
    double product = 1.0;
    for (size_t t = 0; t < timesteps; ++t) {
        double frac = timesteps == 1 ? 0.0
                                     : static_cast<double>(t) / static_cast<double>(timesteps - 1);
        s.beta[t] = beta_min + (beta_max - beta_min) * frac;
        product *= 1.0 - s.beta[t];
        s.alpha_bar[t] = product;
    }
    return s;
}

Tensor q_sample(const Tensor& z0, size_t t, const Tensor& eps, const Schedule& schedule) {
    if (t >= schedule.timesteps) {
        throw ConfigError("q_sample: timestep " + std::to_string(t) + " out of range [0, " +
                          std::to_string(schedule.timesteps) + ")");
    }
    if (!z0.same_shape(eps)) {
        throw ShapeError("q_sample: eps shape " + eps.shape_str() + " differs from z0 " +
                         z0.shape_str());
    }
    double a = std::sqrt(schedule.alpha_bar[t]);
    double b = std::sqrt(1.0 - schedule.alpha_bar[t]);
    std::vector<double> out(z0.numel());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a * z0[i] + b * eps[i];
    return Tensor(z0.shape(), std::move(out));
}

}  // namespace recordkit
