#pragma once

// NMF and NMFD (convolutive NMF) under the squared Frobenius objective,
// fitted with multiplicative updates, plus Wiener masking from parts.

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdc/random.hpp"
#include "xdc/signal/stft.hpp"

namespace xdc::nmf {

inline constexpr double kDivisionGuard = 1e-12;

// Row-major F × N non-negative data.
struct Matrix {
  std::size_t rows = 0, cols = 0;
  std::vector<double> values;

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols + c]; }
};

inline Matrix from_spectrogram(const signal::RealSpectrogram& s) {
  return {s.bins, s.frames, s.values};
}

struct NmfModel {
  std::size_t F = 0, J = 0, N = 0;
  std::vector<double> W;  // F × J
  std::vector<double> H;  // J × N
};

struct NmfdModel {
  std::size_t J = 0, F = 0, M = 0, N = 0;
  std::vector<double> W;  // J × F × M, W[(j*F + f)*M + m]
  std::vector<double> H;  // J × N

  double w(std::size_t j, std::size_t f, std::size_t m) const { return W[(j * F + f) * M + m]; }
};

template <class Model>
struct FitResult {
  Model model;
  std::vector<double> objective;  // objective[0] is at initialization
};

namespace detail {

inline void check_nonnegative(const Matrix& A, const char* op) {
  if (A.values.size() != A.rows * A.cols)
    throw std::invalid_argument(std::string(op) + ": matrix storage does not match shape");
  for (std::size_t i = 0; i < A.values.size(); ++i)
    if (!(A.values[i] >= 0.0))
      throw std::invalid_argument(std::string(op) + ": negative or non-finite entry at index " +
                                  std::to_string(i));
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

inline double sq_error(const Matrix& A, const std::vector<double>& approx) {
  double s = 0.0;
  for (std::size_t i = 0; i < approx.size(); ++i) {
    const double d = A.values[i] - approx[i];
    s += d * d;
  }
  return s;
}

}  // namespace detail

inline std::vector<double> reconstruct(const NmfModel& m) {
  std::vector<double> out(m.F * m.N, 0.0);
  for (std::size_t f = 0; f < m.F; ++f)
    for (std::size_t j = 0; j < m.J; ++j) {
      const double w = m.W[f * m.J + j];
      for (std::size_t n = 0; n < m.N; ++n) out[f * m.N + n] += w * m.H[j * m.N + n];
    }
  return out;
}

// Â[f,n] = Σ_j Σ_m W[j,f,m]·H[j,n−m], H zero before the first frame.
inline std::vector<double> reconstruct(const NmfdModel& m) {
  std::vector<double> out(m.F * m.N, 0.0);
  for (std::size_t j = 0; j < m.J; ++j)
    for (std::size_t f = 0; f < m.F; ++f)
      for (std::size_t k = 0; k < m.M && k < m.N; ++k) {
        const double w = m.w(j, f, k);
        const double* h = m.H.data() + j * m.N;
        double* o = out.data() + f * m.N;
        for (std::size_t n = k; n < m.N; ++n) o[n] += w * h[n - k];
      }
  return out;
}

// Uniform (0,1) factors rescaled so mean(WH) == mean(A).
inline NmfModel nmf_init(const Matrix& A, std::size_t J, std::uint64_t seed) {
  Rng rng(seed);
  NmfModel m{A.rows, J, A.cols, std::vector<double>(A.rows * J), std::vector<double>(J * A.cols)};
  for (auto& v : m.W) v = rng.uniform01();
  for (auto& v : m.H) v = rng.uniform01();
  const double approx_mean = detail::mean(reconstruct(m));
  const double s = approx_mean > 0.0 ? std::sqrt(detail::mean(A.values) / approx_mean) : 0.0;
  for (auto& v : m.W) v *= s;
  for (auto& v : m.H) v *= s;
  return m;
}

inline NmfdModel nmfd_init(const Matrix& A, std::size_t J, std::size_t M, std::uint64_t seed) {
  Rng rng(seed);
  NmfdModel m{J, A.rows, M, A.cols, std::vector<double>(J * A.rows * M),
              std::vector<double>(J * A.cols)};
  for (auto& v : m.W) v = rng.uniform01();
  for (auto& v : m.H) v = rng.uniform01();
  const double approx_mean = detail::mean(reconstruct(m));
  const double s = approx_mean > 0.0 ? std::sqrt(detail::mean(A.values) / approx_mean) : 0.0;
  for (auto& v : m.W) v *= s;
  for (auto& v : m.H) v *= s;
  return m;
}

// Lee–Seung Euclidean updates, H then W each iteration:
//   H ← H ∘ (WᵀA) / (WᵀW·H + δ),   W ← W ∘ (A·Hᵀ) / (W·H·Hᵀ + δ)
// With update_bases = false, W stays fixed (supervised separation).
inline FitResult<NmfModel> nmf_fit(const Matrix& A, NmfModel init, int iters,
                                   bool update_bases = true) {
  detail::check_nonnegative(A, "nmf_fit");
  if (init.F != A.rows || init.N != A.cols || init.J == 0)
    throw std::invalid_argument("nmf_fit: initial factors do not match the data");
  const std::size_t F = init.F, J = init.J, N = init.N;
  FitResult<NmfModel> r{std::move(init), {}};
  auto& W = r.model.W;
  auto& H = r.model.H;
  r.objective.push_back(detail::sq_error(A, reconstruct(r.model)));
  std::vector<double> WtA(J * N), WtW(J * J), AHt(F * J), HHt(J * J);
  for (int it = 0; it < iters; ++it) {
    std::fill(WtA.begin(), WtA.end(), 0.0);
    std::fill(WtW.begin(), WtW.end(), 0.0);
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t j = 0; j < J; ++j) {
        const double w = W[f * J + j];
        for (std::size_t n = 0; n < N; ++n) WtA[j * N + n] += w * A(f, n);
        for (std::size_t l = 0; l < J; ++l) WtW[j * J + l] += w * W[f * J + l];
      }
    std::vector<double> next(H.size());
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t n = 0; n < N; ++n) {
        double den = 0.0;
        for (std::size_t l = 0; l < J; ++l) den += WtW[j * J + l] * H[l * N + n];
        next[j * N + n] = H[j * N + n] * WtA[j * N + n] / (den + kDivisionGuard);
      }
    H.swap(next);
    if (!update_bases) {
      r.objective.push_back(detail::sq_error(A, reconstruct(r.model)));
      continue;
    }

    std::fill(AHt.begin(), AHt.end(), 0.0);
    std::fill(HHt.begin(), HHt.end(), 0.0);
    for (std::size_t j = 0; j < J; ++j) {
      for (std::size_t f = 0; f < F; ++f) {
        double s = 0.0;
        for (std::size_t n = 0; n < N; ++n) s += A(f, n) * H[j * N + n];
        AHt[f * J + j] = s;
      }
      for (std::size_t l = 0; l < J; ++l) {
        double s = 0.0;
        for (std::size_t n = 0; n < N; ++n) s += H[j * N + n] * H[l * N + n];
        HHt[j * J + l] = s;
      }
    }
    std::vector<double> row(J);
    for (std::size_t f = 0; f < F; ++f) {
      for (std::size_t j = 0; j < J; ++j) {
        double den = 0.0;
        for (std::size_t l = 0; l < J; ++l) den += W[f * J + l] * HHt[l * J + j];
        row[j] = W[f * J + j] * AHt[f * J + j] / (den + kDivisionGuard);
      }
      std::copy(row.begin(), row.end(), W.begin() + static_cast<std::ptrdiff_t>(f * J));
    }
    r.objective.push_back(detail::sq_error(A, reconstruct(r.model)));
  }
  return r;
}

inline FitResult<NmfModel> nmf_fit(const Matrix& A, std::size_t J, int iters,
                                   std::uint64_t seed) {
  detail::check_nonnegative(A, "nmf_fit");
  if (J == 0) throw std::invalid_argument("nmf_fit: J must be at least 1");
  return nmf_fit(A, nmf_init(A, J, seed), iters);
}

// Convolutive updates, H then W each iteration (Â is linear with non-negative
// coefficients in each factor, so both steps are Lee–Seung majorization steps):
//   H[j,n]   ← H ∘ Σ_f Σ_m W[j,f,m]·A[f,n+m] / (same with Â + δ)
//   W[j,f,m] ← W ∘ Σ_n A[f,n]·H[j,n−m]     / (same with Â + δ)
inline FitResult<NmfdModel> nmfd_fit(const Matrix& A, NmfdModel init, int iters,
                                     bool update_bases = true) {
  detail::check_nonnegative(A, "nmfd_fit");
  if (init.F != A.rows || init.N != A.cols || init.J == 0 || init.M == 0)
    throw std::invalid_argument("nmfd_fit: initial factors do not match the data");
  if (init.M > init.N)
    throw std::invalid_argument("nmfd_fit: template width M=" + std::to_string(init.M) +
                                " exceeds frame count N=" + std::to_string(init.N));
  const std::size_t J = init.J, F = init.F, M = init.M, N = init.N;
  FitResult<NmfdModel> r{std::move(init), {}};
  auto& W = r.model.W;
  auto& H = r.model.H;
  auto approx = reconstruct(r.model);
  r.objective.push_back(detail::sq_error(A, approx));
  std::vector<double> num(J * N), den(J * N);
  for (int it = 0; it < iters; ++it) {
    std::fill(num.begin(), num.end(), 0.0);
    std::fill(den.begin(), den.end(), 0.0);
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t m = 0; m < M; ++m) {
          const double w = W[(j * F + f) * M + m];
          const double* a = &A.values[f * N];
          const double* ah = &approx[f * N];
          double* nu = &num[j * N];
          double* de = &den[j * N];
          for (std::size_t n = 0; n + m < N; ++n) {
            nu[n] += w * a[n + m];
            de[n] += w * ah[n + m];
          }
        }
    for (std::size_t i = 0; i < H.size(); ++i) H[i] *= num[i] / (den[i] + kDivisionGuard);

    approx = reconstruct(r.model);
    if (!update_bases) {
      r.objective.push_back(detail::sq_error(A, approx));
      continue;
    }
    for (std::size_t j = 0; j < J; ++j)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t m = 0; m < M; ++m) {
          const double* a = &A.values[f * N];
          const double* ah = &approx[f * N];
          const double* h = &H[j * N];
          double nu = 0.0, de = 0.0;
          for (std::size_t n = m; n < N; ++n) {
            nu += a[n] * h[n - m];
            de += ah[n] * h[n - m];
          }
          W[(j * F + f) * M + m] *= nu / (de + kDivisionGuard);
        }
    approx = reconstruct(r.model);
    r.objective.push_back(detail::sq_error(A, approx));
  }
  return r;
}

inline FitResult<NmfdModel> nmfd_fit(const Matrix& A, std::size_t J, std::size_t M, int iters,
                                     std::uint64_t seed) {
  detail::check_nonnegative(A, "nmfd_fit");
  if (J == 0 || M == 0) throw std::invalid_argument("nmfd_fit: J and M must be at least 1");
  if (M > A.cols)
    throw std::invalid_argument("nmfd_fit: template width M=" + std::to_string(M) +
                                " exceeds frame count N=" + std::to_string(A.cols));
  return nmfd_fit(A, nmfd_init(A, J, M, seed), iters);
}

// Contribution of a single NMF component j: W[:,j]·H[j,:].
inline std::vector<double> component(const NmfModel& m, std::size_t j) {
  std::vector<double> out(m.F * m.N);
  for (std::size_t f = 0; f < m.F; ++f)
    for (std::size_t n = 0; n < m.N; ++n) out[f * m.N + n] = m.W[f * m.J + j] * m.H[j * m.N + n];
  return out;
}

inline std::vector<double> component(const NmfdModel& m, std::size_t j) {
  NmfdModel single{1, m.F, m.M, m.N,
                   std::vector<double>(m.W.begin() + static_cast<std::ptrdiff_t>(j * m.F * m.M),
                                       m.W.begin() + static_cast<std::ptrdiff_t>((j + 1) * m.F * m.M)),
                   std::vector<double>(m.H.begin() + static_cast<std::ptrdiff_t>(j * m.N),
                                       m.H.begin() + static_cast<std::ptrdiff_t>((j + 1) * m.N))};
  return reconstruct(single);
}

// mask_i = part_i / (Σ parts + δ); each F × N, row-major.
inline std::vector<std::vector<double>> wiener_masks(
    const std::vector<std::vector<double>>& parts) {
  if (parts.empty()) throw std::invalid_argument("wiener_masks: no parts");
  const std::size_t K = parts[0].size();
  for (const auto& p : parts)
    if (p.size() != K)
      throw std::invalid_argument("wiener_masks: parts differ in size (" +
                                  std::to_string(p.size()) + " vs " + std::to_string(K) + ")");
  std::vector<double> total(K, 0.0);
  for (const auto& p : parts)
    for (std::size_t k = 0; k < K; ++k) total[k] += p[k];
  std::vector<std::vector<double>> masks(parts.size(), std::vector<double>(K));
  for (std::size_t i = 0; i < parts.size(); ++i)
    for (std::size_t k = 0; k < K; ++k)
      masks[i][k] = parts[i][k] / (total[k] + kDivisionGuard);
  return masks;
}

// S_i = (part_i / Σ parts) ∘ mix.
template <class Spectrogram>
std::vector<Spectrogram> wiener_masks_from_parts(const std::vector<std::vector<double>>& parts,
                                                 const Spectrogram& mix) {
  for (const auto& p : parts)
    if (p.size() != mix.values.size())
      throw std::invalid_argument("wiener_masks_from_parts: part has " +
                                  std::to_string(p.size()) + " bins, mixture has " +
                                  std::to_string(mix.values.size()));
  const auto masks = wiener_masks(parts);
  std::vector<Spectrogram> out;
  for (const auto& m : masks) {
    Spectrogram s = mix;
    for (std::size_t k = 0; k < m.size(); ++k) s.values[k] *= m[k];
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace xdc::nmf
