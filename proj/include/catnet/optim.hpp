#pragma once

#include <cmath>
#include <vector>

#include "catnet/tensor.hpp"

namespace catnet {

/// Adam with bias correction; beta = (0.9, 0.999), eps = 1e-8.
class Adam {
 public:
  explicit Adam(std::vector<ad::Tensor> params, double lr, double beta1 = 0.9,
                double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].size(), 0.0);
      v_[i].assign(params_[i].size(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      std::vector<double>& x = params_[i].data();
      const std::vector<double>& g = params_[i].grad();
      std::vector<double>& m = m_[i];
      std::vector<double>& v = v_[i];
      for (std::size_t j = 0; j < x.size(); ++j) {
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        x[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  void zero_grad() {
    for (ad::Tensor& p : params_) p.zero_grad();
  }

 private:
  std::vector<ad::Tensor> params_;
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace catnet
