#pragma once

// Differentiable tensor operations. Each op computes its forward value
// eagerly and, when an operand requires a gradient and a tape is active,
// records a closure that scatters the output gradient back to the operands.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <tuple>
#include <vector>

#include "xdc/tensor.hpp"

namespace xdc {

namespace detail {

inline Tape* recording_tape(std::initializer_list<const Tensor*> operands) {
  Tape* tape = Tape::active();
  if (!tape) return nullptr;
  for (const Tensor* t : operands)
    if (t->defined() && t->requires_grad()) return tape;
  return nullptr;
}

inline void require_same_shape(const char* op, const Tensor& a,
                               const Tensor& b) {
  if (a.shape() != b.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " +
                     to_string(a.shape()) + " vs " + to_string(b.shape()));
}

inline std::vector<std::size_t> strides_of(const Shape& s) {
  std::vector<std::size_t> st(s.size(), 1);
  for (std::size_t i = s.size(); i-- > 1;) st[i - 1] = st[i] * s[i];
  return st;
}

// Shared shape for every unary elementwise op: y = f(x), dy/dx = df(x, y).
template <class F, class DF>
Tensor unary(const Tensor& x, F f, DF df) {
  std::vector<double> out(x.size());
  const auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(in[i]);
  Tensor y(x.shape(), std::move(out));
  if (Tape* tape = recording_tape({&x})) {
    auto xi = x.impl();
    auto yi = y.impl();
    tape->record(y, [xi, yi, df] {
      if (!xi->requires_grad) return;
      auto& gx = xi->grad_buffer();
      for (std::size_t i = 0; i < gx.size(); ++i)
        gx[i] += yi->grad[i] * df(xi->data[i], yi->data[i]);
    });
  }
  return y;
}

}  // namespace detail

// ---- elementwise binary ----------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("add", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  Tensor y(a.shape(), std::move(out));
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    auto ai = a.impl(), bi = b.impl(), yi = y.impl();
    tape->record(y, [ai, bi, yi] {
      for (auto* t : {ai.get(), bi.get()}) {
        if (!t->requires_grad) continue;
        auto& g = t->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
      }
    });
  }
  return y;
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("sub", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] - b.data()[i];
  Tensor y(a.shape(), std::move(out));
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    auto ai = a.impl(), bi = b.impl(), yi = y.impl();
    tape->record(y, [ai, bi, yi] {
      if (ai->requires_grad) {
        auto& g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
      }
      if (bi->requires_grad) {
        auto& g = bi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] -= yi->grad[i];
      }
    });
  }
  return y;
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("mul", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  Tensor y(a.shape(), std::move(out));
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    auto ai = a.impl(), bi = b.impl(), yi = y.impl();
    tape->record(y, [ai, bi, yi] {
      if (ai->requires_grad) {
        auto& g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * bi->data[i];
      }
      if (bi->requires_grad) {
        auto& g = bi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] * ai->data[i];
      }
    });
  }
  return y;
}

inline Tensor div(const Tensor& a, const Tensor& b) {
  detail::require_same_shape("div", a, b);
  std::vector<double> out(a.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] / b.data()[i];
  Tensor y(a.shape(), std::move(out));
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    auto ai = a.impl(), bi = b.impl(), yi = y.impl();
    tape->record(y, [ai, bi, yi] {
      if (ai->requires_grad) {
        auto& g = ai->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i] / bi->data[i];
      }
      if (bi->requires_grad) {
        auto& g = bi->grad_buffer();
        for (std::size_t i = 0; i < g.size(); ++i)
          g[i] -= yi->grad[i] * yi->data[i] / bi->data[i];
      }
    });
  }
  return y;
}

// ---- scalar ----------------------------------------------------------------

inline Tensor add_scalar(const Tensor& x, double s) {
  return detail::unary(
      x, [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

inline Tensor mul_scalar(const Tensor& x, double s) {
  return detail::unary(
      x, [s](double v) { return v * s; }, [s](double, double) { return s; });
}

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator+(const Tensor& a, double s) { return add_scalar(a, s); }
inline Tensor operator-(const Tensor& a, double s) { return add_scalar(a, -s); }
inline Tensor operator*(const Tensor& a, double s) { return mul_scalar(a, s); }
inline Tensor operator*(double s, const Tensor& a) { return mul_scalar(a, s); }
inline Tensor operator-(const Tensor& a) { return mul_scalar(a, -1.0); }

// ---- elementwise unary -----------------------------------------------------

inline Tensor square(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v * v; },
      [](double v, double) { return 2.0 * v; });
}

// d sqrt(x)/dx is taken as 0 at x == 0 so an all-zero input stays finite.
inline Tensor sqrt(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::sqrt(v); },
      [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

// Derivative at exactly 0 is 0.
inline Tensor relu(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline double sigmoid_value(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

inline double softplus_value(double v) {
  return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v)));
}

inline Tensor softplus(const Tensor& x) {
  return detail::unary(
      x, softplus_value, [](double v, double) { return sigmoid_value(v); });
}

inline Tensor sigmoid(const Tensor& x) {
  return detail::unary(
      x, sigmoid_value, [](double, double y) { return y * (1.0 - y); });
}

inline Tensor abs(const Tensor& x) {
  return detail::unary(
      x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// ---- reductions ------------------------------------------------------------

inline Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  Tensor y = Tensor::scalar(s);
  if (Tape* tape = detail::recording_tape({&x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record(y, [xi, yi] {
      auto& g = xi->grad_buffer();
      const double gy = yi->grad[0];
      for (auto& v : g) v += gy;
    });
  }
  return y;
}

inline Tensor mean(const Tensor& x) {
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.size()));
}

// Squared Frobenius norm, sum of x².
inline Tensor frobenius_sq(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v * v;
  Tensor y = Tensor::scalar(s);
  if (Tape* tape = detail::recording_tape({&x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record(y, [xi, yi] {
      auto& g = xi->grad_buffer();
      const double gy = 2.0 * yi->grad[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy * xi->data[i];
    });
  }
  return y;
}

// Same value as frobenius_sq but summed in ascending order of x², so any
// permutation of the entries gives a bit-identical result.
inline Tensor frobenius_sq_canonical(const Tensor& x) {
  std::vector<double> sq(x.size());
  for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = x.data()[i] * x.data()[i];
  std::sort(sq.begin(), sq.end());
  double s = 0.0;
  for (double v : sq) s += v;
  Tensor y = Tensor::scalar(s);
  if (Tape* tape = detail::recording_tape({&x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record(y, [xi, yi] {
      auto& g = xi->grad_buffer();
      const double gy = 2.0 * yi->grad[0];
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += gy * xi->data[i];
    });
  }
  return y;
}

// Sum over one axis; keepdim leaves a size-1 axis in place.
inline Tensor sum_axis(const Tensor& x, std::size_t axis, bool keepdim = false) {
  if (axis >= x.rank())
    throw ShapeError("sum_axis: axis " + std::to_string(axis) +
                     " out of range for shape " + to_string(x.shape()));
  const auto& s = x.shape();
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  std::vector<double> out(outer * inner, 0.0);
  const auto in = x.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t a = 0; a < len; ++a) {
      const double* src = in.data() + (o * len + a) * inner;
      double* dst = out.data() + o * inner;
      for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
    }
  Shape os = s;
  if (keepdim)
    os[axis] = 1;
  else
    os.erase(os.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor y(os, std::move(out));
  if (Tape* tape = detail::recording_tape({&x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record(y, [xi, yi, outer, inner, len] {
      auto& g = xi->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t a = 0; a < len; ++a) {
          double* dst = g.data() + (o * len + a) * inner;
          const double* src = yi->grad.data() + o * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += src[i];
        }
    });
  }
  return y;
}

// ---- shape manipulation ----------------------------------------------------

inline Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.size())
    throw ShapeError("reshape: cannot view " + to_string(x.shape()) + " as " +
                     to_string(shape));
  Tensor y(std::move(shape), x.values());
  if (Tape* tape = detail::recording_tape({&x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record(y, [xi, yi] {
      auto& g = xi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += yi->grad[i];
    });
  }
  return y;
}

// Numpy-style broadcast: trailing axes aligned, size-1 axes repeated.
inline Tensor broadcast_to(const Tensor& x, const Shape& shape) {
  const auto& xs = x.shape();
  if (xs.size() > shape.size())
    throw ShapeError("broadcast_to: cannot broadcast " + to_string(xs) +
                     " to " + to_string(shape));
  const std::size_t lead = shape.size() - xs.size();
  Shape padded(lead, 1);
  padded.insert(padded.end(), xs.begin(), xs.end());
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (padded[i] != shape[i] && padded[i] != 1)
      throw ShapeError("broadcast_to: cannot broadcast " + to_string(xs) +
                       " to " + to_string(shape));
  const auto src_strides = detail::strides_of(padded);
  const std::size_t n = numel(shape);
  std::vector<std::size_t> src_index(n);
  {
    std::vector<std::size_t> idx(shape.size(), 0);
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t off = 0;
      for (std::size_t d = 0; d < shape.size(); ++d)
        if (padded[d] != 1) off += idx[d] * src_strides[d];
      src_index[k] = off;
      for (std::size_t d = shape.size(); d-- > 0;) {
        if (++idx[d] < shape[d]) break;
        idx[d] = 0;
      }
    }
  }
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = x.data()[src_index[k]];
  Tensor y(shape, std::move(out));
  if (Tape* tape = detail::recording_tape({&x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record(y, [xi, yi, src_index = std::move(src_index)] {
      auto& g = xi->grad_buffer();
      for (std::size_t k = 0; k < src_index.size(); ++k)
        g[src_index[k]] += yi->grad[k];
    });
  }
  return y;
}

// Reorders axes: result axis i is input axis perm[i].
inline Tensor permute(const Tensor& x, const std::vector<std::size_t>& perm) {
  const auto& xs = x.shape();
  if (perm.size() != xs.size())
    throw ShapeError("permute: " + std::to_string(perm.size()) +
                     " axes given for shape " + to_string(xs));
  std::vector<bool> seen(perm.size(), false);
  for (auto p : perm) {
    if (p >= perm.size() || seen[p])
      throw ShapeError("permute: invalid axis order for shape " + to_string(xs));
    seen[p] = true;
  }
  Shape ys(perm.size());
  for (std::size_t i = 0; i < perm.size(); ++i) ys[i] = xs[perm[i]];
  const auto xst = detail::strides_of(xs);
  const std::size_t n = x.size();
  std::vector<std::size_t> src_index(n);
  std::vector<std::size_t> idx(ys.size(), 0);
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t off = 0;
    for (std::size_t d = 0; d < ys.size(); ++d) off += idx[d] * xst[perm[d]];
    src_index[k] = off;
    for (std::size_t d = ys.size(); d-- > 0;) {
      if (++idx[d] < ys[d]) break;
      idx[d] = 0;
    }
  }
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = x.data()[src_index[k]];
  Tensor y(ys, std::move(out));
  if (Tape* tape = detail::recording_tape({&x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record(y, [xi, yi, src_index = std::move(src_index)] {
      auto& g = xi->grad_buffer();
      for (std::size_t k = 0; k < src_index.size(); ++k)
        g[src_index[k]] += yi->grad[k];
    });
  }
  return y;
}

inline Tensor transpose(const Tensor& x) {
  if (x.rank() != 2)
    throw ShapeError("transpose: expected a matrix, got " + to_string(x.shape()));
  return permute(x, {1, 0});
}

// Contiguous range [start, start+len) along `axis`.
inline Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
                    std::size_t len) {
  const auto& s = x.shape();
  if (axis >= s.size() || start + len > s[axis])
    throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                     std::to_string(start + len) + ") on axis " +
                     std::to_string(axis) + " out of bounds for " + to_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t full = s[axis];
  std::vector<double> out(outer * len * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(x.data().data() + (o * full + start) * inner, len * inner,
                out.data() + o * len * inner);
  Shape ys = s;
  ys[axis] = len;
  Tensor y(ys, std::move(out));
  if (Tape* tape = detail::recording_tape({&x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record(y, [xi, yi, outer, inner, full, start, len] {
      auto& g = xi->grad_buffer();
      for (std::size_t o = 0; o < outer; ++o) {
        double* dst = g.data() + (o * full + start) * inner;
        const double* src = yi->grad.data() + o * len * inner;
        for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
      }
    });
  }
  return y;
}

inline std::vector<Tensor> split(const Tensor& x, std::size_t axis,
                                 const std::vector<std::size_t>& sizes) {
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (axis >= x.rank() || total != x.dim(axis))
    throw ShapeError("split: sizes sum to " + std::to_string(total) +
                     " but axis has shape " + to_string(x.shape()));
  std::vector<Tensor> parts;
  std::size_t start = 0;
  for (auto s : sizes) {
    parts.push_back(slice(x, axis, start, s));
    start += s;
  }
  return parts;
}

inline Tensor concat(const std::vector<Tensor>& xs, std::size_t axis) {
  if (xs.empty()) throw ShapeError("concat: no operands");
  const Shape& s0 = xs.front().shape();
  if (axis >= s0.size())
    throw ShapeError("concat: axis out of range for " + to_string(s0));
  std::size_t total = 0;
  for (const auto& t : xs) {
    Shape a = t.shape(), b = s0;
    if (a.size() != b.size())
      throw ShapeError("concat: shape mismatch " + to_string(s0) + " vs " +
                       to_string(t.shape()));
    a[axis] = b[axis] = 0;
    if (a != b)
      throw ShapeError("concat: shape mismatch " + to_string(s0) + " vs " +
                       to_string(t.shape()));
    total += t.dim(axis);
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape ys = s0;
  ys[axis] = total;
  std::vector<double> out(numel(ys));
  std::size_t offset = 0;
  for (const auto& t : xs) {
    const std::size_t len = t.dim(axis);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(t.data().data() + o * len * inner, len * inner,
                  out.data() + (o * total + offset) * inner);
    offset += len;
  }
  Tensor y(ys, std::move(out));
  Tape* tape = Tape::active();
  bool any = false;
  for (const auto& t : xs) any = any || t.requires_grad();
  if (tape && any) {
    std::vector<std::shared_ptr<TensorImpl>> ins;
    for (const auto& t : xs) ins.push_back(t.impl());
    auto yi = y.impl();
    tape->record(y, [ins, yi, outer, inner, total, axis] {
      std::size_t off = 0;
      for (const auto& ti : ins) {
        const std::size_t len = ti->shape[axis];
        if (ti->requires_grad) {
          auto& g = ti->grad_buffer();
          for (std::size_t o = 0; o < outer; ++o) {
            const double* src = yi->grad.data() + (o * total + off) * inner;
            double* dst = g.data() + o * len * inner;
            for (std::size_t i = 0; i < len * inner; ++i) dst[i] += src[i];
          }
        }
        off += len;
      }
    });
  }
  return y;
}

// Selects rows of a matrix (axis 0) by index.
inline Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& rows) {
  if (x.rank() != 2)
    throw ShapeError("gather_rows: expected a matrix, got " + to_string(x.shape()));
  const std::size_t cols = x.dim(1);
  std::vector<double> out(rows.size() * cols);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= x.dim(0))
      throw ShapeError("gather_rows: row " + std::to_string(rows[r]) +
                       " out of range for " + to_string(x.shape()));
    std::copy_n(x.data().data() + rows[r] * cols, cols, out.data() + r * cols);
  }
  Tensor y({rows.size(), cols}, std::move(out));
  if (Tape* tape = detail::recording_tape({&x})) {
    auto xi = x.impl(), yi = y.impl();
    tape->record(y, [xi, yi, rows, cols] {
      auto& g = xi->grad_buffer();
      for (std::size_t r = 0; r < rows.size(); ++r)
        for (std::size_t c = 0; c < cols; ++c)
          g[rows[r] * cols + c] += yi->grad[r * cols + c];
    });
  }
  return y;
}

// ---- linear algebra --------------------------------------------------------

namespace detail {
// c[m×n] += a[m×k] · b[k×n], all row-major.
inline void gemm_acc(const double* a, const double* b, double* c, std::size_t m,
                     std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t p = 0; p < k; ++p) {
      const double av = a[i * k + p];
      if (av == 0.0) continue;
      const double* brow = b + p * n;
      double* crow = c + i * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
}
}  // namespace detail

inline Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul: shape mismatch " + to_string(a.shape()) + " vs " +
                     to_string(b.shape()));
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n, 0.0);
  detail::gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  Tensor y({m, n}, std::move(out));
  if (Tape* tape = detail::recording_tape({&a, &b})) {
    auto ai = a.impl(), bi = b.impl(), yi = y.impl();
    tape->record(y, [ai, bi, yi, m, k, n] {
      const auto& gy = yi->grad;
      if (ai->requires_grad) {
        // dA = dY · Bᵀ
        auto& ga = ai->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            double s = 0.0;
            const double* brow = bi->data.data() + p * n;
            const double* grow = gy.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) s += grow[j] * brow[j];
            ga[i * k + p] += s;
          }
      }
      if (bi->requires_grad) {
        // dB = Aᵀ · dY
        auto& gb = bi->grad_buffer();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t p = 0; p < k; ++p) {
            const double av = ai->data[i * k + p];
            if (av == 0.0) continue;
            const double* grow = gy.data() + i * n;
            double* dst = gb.data() + p * n;
            for (std::size_t j = 0; j < n; ++j) dst[j] += av * grow[j];
          }
      }
    });
  }
  return y;
}

// ---- 1-D convolution over time ---------------------------------------------

struct Conv1dOptions {
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;
  std::size_t groups = 1;
  // true: kernel is applied reversed (true convolution rather than
  // cross-correlation).
  bool flip = false;
};

// x: [B, C_in, N], w: [C_out, C_in/groups, K], bias: [C_out] or undefined.
// out[b,o,t] = bias[o] + Σ_c Σ_k w[o,c,k'] · x[b, g·C_in/groups + c, t+k−pad_left]
// with k' = K−1−k when flipped, else k; samples outside [0, N) read as zero.
inline Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& bias,
                     const Conv1dOptions& opt = {}) {
  if (x.rank() != 3 || w.rank() != 3)
    throw ShapeError("conv1d: expected x [B,C,N] and w [O,C/g,K], got " +
                     to_string(x.shape()) + " vs " + to_string(w.shape()));
  const std::size_t B = x.dim(0), Cin = x.dim(1), N = x.dim(2);
  const std::size_t Cout = w.dim(0), Cg = w.dim(1), K = w.dim(2);
  const std::size_t G = opt.groups;
  if (G == 0 || Cin % G != 0 || Cout % G != 0 || Cin / G != Cg)
    throw ShapeError("conv1d: channel mismatch " + to_string(x.shape()) +
                     " vs " + to_string(w.shape()) + " with groups=" +
                     std::to_string(G));
  if (bias.defined() && bias.shape() != Shape{Cout})
    throw ShapeError("conv1d: bias shape " + to_string(bias.shape()) +
                     " vs " + to_string(w.shape()));
  if (N + opt.pad_left + opt.pad_right < K)
    throw ShapeError("conv1d: input " + to_string(x.shape()) +
                     " shorter than kernel " + to_string(w.shape()));
  const std::size_t Nout = N + opt.pad_left + opt.pad_right - K + 1;
  const std::size_t Og = Cout / G;
  const long pl = static_cast<long>(opt.pad_left);
  const bool flip = opt.flip;

  // For tap k: valid output range t ∈ [t0, t1) with 0 ≤ t+k−pl < N.
  auto range = [=](std::size_t k) {
    const long shift = static_cast<long>(k) - pl;
    const long t0 = std::max<long>(0, -shift);
    const long t1 = std::min<long>(static_cast<long>(Nout),
                                   static_cast<long>(N) - shift);
    return std::tuple<long, long, long>{t0, std::max(t0, t1), shift};
  };

  std::vector<double> out(B * Cout * Nout, 0.0);
  const double* xd = x.data().data();
  const double* wd = w.data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < Cout; ++o) {
      double* orow = out.data() + (b * Cout + o) * Nout;
      if (bias.defined()) std::fill_n(orow, Nout, bias.data()[o]);
      const std::size_t g = o / Og;
      for (std::size_t c = 0; c < Cg; ++c) {
        const double* xrow = xd + (b * Cin + g * Cg + c) * N;
        const double* wrow = wd + (o * Cg + c) * K;
        for (std::size_t k = 0; k < K; ++k) {
          const double wv = wrow[flip ? K - 1 - k : k];
          if (wv == 0.0) continue;
          auto [t0, t1, shift] = range(k);
          for (long t = t0; t < t1; ++t) orow[t] += wv * xrow[t + shift];
        }
      }
    }
  Tensor y({B, Cout, Nout}, std::move(out));
  if (Tape* tape = detail::recording_tape({&x, &w, &bias})) {
    auto xi = x.impl(), wi = w.impl(), yi = y.impl();
    auto bi = bias.defined() ? bias.impl() : nullptr;
    tape->record(y, [=] {
      const auto& gy = yi->grad;
      double* gx = xi->requires_grad ? xi->grad_buffer().data() : nullptr;
      double* gw = wi->requires_grad ? wi->grad_buffer().data() : nullptr;
      if (bi && bi->requires_grad) {
        auto& gb = bi->grad_buffer();
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t o = 0; o < Cout; ++o) {
            const double* grow = gy.data() + (b * Cout + o) * Nout;
            double s = 0.0;
            for (std::size_t t = 0; t < Nout; ++t) s += grow[t];
            gb[o] += s;
          }
      }
      for (std::size_t b = 0; b < B; ++b)
        for (std::size_t o = 0; o < Cout; ++o) {
          const double* grow = gy.data() + (b * Cout + o) * Nout;
          const std::size_t g = o / Og;
          for (std::size_t c = 0; c < Cg; ++c) {
            const std::size_t xoff = (b * Cin + g * Cg + c) * N;
            const double* xrow = xi->data.data() + xoff;
            const std::size_t woff = (o * Cg + c) * K;
            for (std::size_t k = 0; k < K; ++k) {
              const std::size_t kk = flip ? K - 1 - k : k;
              auto [t0, t1, shift] = range(k);
              if (gw) {
                double s = 0.0;
                for (long t = t0; t < t1; ++t) s += grow[t] * xrow[t + shift];
                gw[woff + kk] += s;
              }
              if (gx) {
                const double wv = wi->data[woff + kk];
                double* gxrow = gx + xoff;
                for (long t = t0; t < t1; ++t) gxrow[t + shift] += wv * grow[t];
              }
            }
          }
        }
    });
  }
  return y;
}

inline Tensor conv1d(const Tensor& x, const Tensor& w,
                     const Conv1dOptions& opt = {}) {
  return conv1d(x, w, Tensor{}, opt);
}

}  // namespace xdc
