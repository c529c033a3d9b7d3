#pragma once

// Central finite-difference gradient oracle for test code. It only ever
// evaluates the forward pass, so it is independent of every vjp it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "xdc/ops.hpp"
#include "xdc/tensor.hpp"

namespace xdc::testing {

using LossFn = std::function<Tensor()>;

inline std::vector<double> numeric_gradient(Tensor& param, const LossFn& loss,
                                            double step = 1e-5) {
  auto data = param.mutable_data();
  std::vector<double> g(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    const double saved = data[i];
    data[i] = saved + step;
    const double up = loss().item();
    data[i] = saved - step;
    const double down = loss().item();
    data[i] = saved;
    g[i] = (up - down) / (2.0 * step);
  }
  return g;
}

inline std::vector<double> analytic_gradient(Tensor& param, const LossFn& loss) {
  Tape tape;
  TapeScope scope(tape);
  Tensor l = loss();
  std::vector<Tensor> ps{param};
  return backward(tape, l, ps).front().grad;
}

// ‖a − b‖₂ / max(‖a‖₂, ‖b‖₂, floor)
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b,
                             double floor = 1e-12) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

inline double gradient_check(Tensor& param, const LossFn& loss, double step = 1e-5) {
  const auto numeric = numeric_gradient(param, loss, step);
  const auto analytic = analytic_gradient(param, loss);
  return relative_error(analytic, numeric);
}

}  // namespace xdc::testing
