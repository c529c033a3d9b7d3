#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdc/tensor.hpp"

namespace xdc {

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string& param)
      : std::runtime_error("adam: non-finite gradient for parameter '" + param +
                           "'"),
        parameter(param) {}
  std::string parameter;
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class Adam {
 public:
  Adam(std::vector<Tensor> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg), lr_scale_(params_.size(), 1.0) {
    for (const auto& p : params_) {
      m_.emplace_back(p.size(), 0.0);
      v_.emplace_back(p.size(), 0.0);
    }
  }

  // Per-parameter learning-rate multiplier (parameter groups).
  void scale_learning_rate(const std::string& name, double scale) {
    if (!(scale >= 0.0) || !std::isfinite(scale))
      throw std::invalid_argument("adam: learning-rate scale must be finite and >= 0");
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name() == name) {
        lr_scale_[i] = scale;
        return;
      }
    throw std::invalid_argument("adam: no parameter named '" + name + "'");
  }

  // Checks every gradient before touching any parameter, so a rejected step
  // leaves params and moments as they were.
  void step(const GradientMap& grads) {
    if (grads.size() != params_.size())
      throw ShapeError("adam: " + std::to_string(grads.size()) +
                       " gradients for " + std::to_string(params_.size()) +
                       " parameters");
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (grads[i].grad.size() != params_[i].size())
        throw ShapeError("adam: gradient for '" + params_[i].name() +
                         "' has " + std::to_string(grads[i].grad.size()) +
                         " values, parameter has " +
                         std::to_string(params_[i].size()));
      for (double g : grads[i].grad)
        if (!std::isfinite(g)) throw NonFiniteGradient(params_[i].name());
    }
    ++step_;
    const double t = static_cast<double>(step_);
    const double c1 = 1.0 - std::pow(cfg_.beta1, t);
    const double c2 = 1.0 - std::pow(cfg_.beta2, t);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto p = params_[i].mutable_data();
      const auto& g = grads[i].grad;
      auto& m = m_[i];
      auto& v = v_[i];
      const double lr = cfg_.learning_rate * lr_scale_[i];
      for (std::size_t k = 0; k < p.size(); ++k) {
        m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g[k];
        v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
        const double mhat = m[k] / c1;
        const double vhat = v[k] / c2;
        p[k] -= lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  std::size_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }
  const std::vector<std::vector<double>>& first_moment() const { return m_; }
  const std::vector<std::vector<double>>& second_moment() const { return v_; }

 private:
  std::vector<Tensor> params_;
  AdamConfig cfg_;
  std::vector<double> lr_scale_;
  std::size_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

}  // namespace xdc
