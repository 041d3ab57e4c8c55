#pragma once

#include <vector>

#include "recordkit/tensor.hpp"

namespace recordkit {

// Adam with bias correction; one slot pair per parameter tensor.
class Adam {
public:
    Adam(std::vector<Tensor*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
         double eps = 1e-8);

    void step(const std::vector<Tensor>& grads);
    size_t steps_taken() const { return t_; }

private:
    std::vector<Tensor*> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_;
    size_t t_ = 0;
};

// Nesterov-accelerated Adam (Dozat 2016) with the standard momentum
// schedule mu_t = beta1 * (1 - 0.5 * 0.96^(t * psi)).
class NAdam {
public:
    NAdam(std::vector<Tensor*> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
          double eps = 1e-8, double momentum_decay = 0.004);

    void step(const std::vector<Tensor>& grads);
    size_t steps_taken() const { return t_; }

private:
    std::vector<Tensor*> params_;
    std::vector<Tensor> m_, v_;
    double lr_, beta1_, beta2_, eps_, psi_;
    double mu_product_ = 1.0;
    size_t t_ = 0;
};

}  // namespace recordkit
