#include "recordkit/optimizers.hpp"

#include <cmath>

#include "recordkit/errors.hpp"

namespace recordkit {

Adam::Adam(std::vector<Tensor*> params, double lr, double beta1, double beta2, double eps)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (Tensor* p : params_) {
        m_.emplace_back(p->shape(), 0.0);
        v_.emplace_back(p->shape(), 0.0);
    }
}

void Adam::step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size()) throw ShapeError("Adam: gradient count mismatch");
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t p = 0; p < params_.size(); ++p) {
        Tensor& x = *params_[p];
        const Tensor& g = grads[p];
        if (!x.same_shape(g)) throw ShapeError("Adam: gradient shape mismatch");
        for (size_t i = 0; i < x.numel(); ++i) {
            m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g[i];
            v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g[i] * g[i];
            double mh = m_[p][i] / bc1;
            double vh = v_[p][i] / bc2;
            x[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
        }
        x.check_finite("Adam update");
    }
}

NAdam::NAdam(std::vector<Tensor*> params, double lr, double beta1, double beta2, double eps,
             double momentum_decay)
    : params_(std::move(params)),
      lr_(lr),
      beta1_(beta1),
      beta2_(beta2),
      eps_(eps),
      psi_(momentum_decay) {
    for (Tensor* p : params_) {
        m_.emplace_back(p->shape(), 0.0);
        v_.emplace_back(p->shape(), 0.0);
    }
}

void NAdam::step(const std::vector<Tensor>& grads) {
    if (grads.size() != params_.size()) throw ShapeError("NAdam: gradient count mismatch");
    ++t_;
    double t = static_cast<double>(t_);
    double mu_t = beta1_ * (1.0 - 0.5 * std::pow(0.96, t * psi_));
    double mu_next = beta1_ * (1.0 - 0.5 * std::pow(0.96, (t + 1.0) * psi_));
    double mu_product_next = mu_product_ * mu_t;
    double bc2 = 1.0 - std::pow(beta2_, t);
    for (size_t p = 0; p < params_.size(); ++p) {
        Tensor& x = *params_[p];
        const Tensor& g = grads[p];
        if (!x.same_shape(g)) throw ShapeError("NAdam: gradient shape mismatch");
        for (size_t i = 0; i < x.numel(); ++i) {
            m_[p][i] = beta1_ * m_[p][i] + (1.0 - beta1_) * g[i];
            v_[p][i] = beta2_ * v_[p][i] + (1.0 - beta2_) * g[i] * g[i];
            double m_hat = mu_next * m_[p][i] / (1.0 - mu_product_next * mu_next) +
                           (1.0 - mu_t) * g[i] / (1.0 - mu_product_next);
            double v_hat = v_[p][i] / bc2;
            x[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
        }
        x.check_finite("NAdam update");
    }
    mu_product_ = mu_product_next;
}

}  // namespace recordkit
