#pragma once

// Small building blocks shared by the encoders: named parameter lists and
// 1-D convolution layers.

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdc/checkpoint.hpp"
#include "xdc/ops.hpp"
#include "xdc/random.hpp"

namespace xdc::nn {

// Parameters in registration order; that order fixes checkpoint layout and
// gradient accumulation order.
class ParameterList {
 public:
  Tensor& add(std::string name, Shape shape, std::vector<double> data) {
    for (const auto& p : params_)
      if (p.name() == name) throw std::logic_error("duplicate parameter '" + name + "'");
    params_.push_back(Tensor::parameter(std::move(name), std::move(shape), std::move(data)));
    return params_.back();
  }

  const std::vector<Tensor>& all() const { return params_; }
  std::vector<Tensor>& all() { return params_; }

  const Tensor& get(const std::string& name) const {
    for (const auto& p : params_)
      if (p.name() == name) return p;
    throw std::out_of_range("no parameter named '" + name + "'");
  }

  std::size_t count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

 private:
  std::vector<Tensor> params_;
};

struct Conv {
  Tensor w, b;
  std::size_t pad_left = 0, pad_right = 0;

  Tensor operator()(const Tensor& x) const {
    return conv1d(x, w, b, {pad_left, pad_right, 1, false});
  }
};

// Weights U(±1/√fan_in), zero bias; "same" padding for odd kernels.
inline Conv make_conv(ParameterList& params, const std::string& name, std::size_t cin,
                      std::size_t cout, std::size_t kernel, Rng& rng) {
  if (cin == 0 || cout == 0 || kernel == 0 || kernel % 2 == 0)
    throw std::invalid_argument("conv '" + name + "': need positive sizes and an odd kernel");
  const double bound = 1.0 / std::sqrt(static_cast<double>(cin * kernel));
  std::vector<double> w(cout * cin * kernel);
  for (auto& v : w) v = rng.uniform(-bound, bound);
  Conv c;
  c.w = params.add(name + ".w", {cout, cin, kernel}, std::move(w));
  c.b = params.add(name + ".b", {cout}, std::vector<double>(cout, 0.0));
  c.pad_left = c.pad_right = kernel / 2;
  return c;
}

// [F·D, N] channel map (channel c = f·D + d) → K × D rows with k = n·F + f.
inline Tensor channels_to_rows(const Tensor& y, std::size_t F, std::size_t D) {
  const std::size_t N = y.dim(y.rank() - 1);
  return reshape(permute(reshape(y, {F, D, N}), {2, 0, 1}), {N * F, D});
}

// Divides each row by its L2 norm (plus a tiny guard against all-zero rows).
inline Tensor normalize_rows(const Tensor& V, double guard = 1e-12) {
  const Tensor norms = add_scalar(sqrt(sum_axis(square(V), 1, true)), guard);
  return div(V, broadcast_to(norms, V.shape()));
}

inline void load_into(ParameterList& params, const Checkpoint& ck) {
  restore_parameters(ck, params.all());
}

}  // namespace xdc::nn
