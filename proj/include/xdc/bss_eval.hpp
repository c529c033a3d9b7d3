#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdc/signal/stft.hpp"

namespace xdc::bss {

inline constexpr double kDbCap = 120.0;

struct Decomposition {
  std::vector<double> s_target, e_interf, e_artif;
};

struct SeparationScore {
  double sdr_db = 0.0, sir_db = 0.0, sar_db = 0.0;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double energy(const std::vector<double>& a) { return dot(a, a); }

// Solves G c = b for symmetric positive-definite G by Gaussian elimination with
// partial pivoting (G is tiny: one row per reference).
inline std::vector<double> solve(std::vector<double> G, std::vector<double> b, std::size_t n) {
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(G[r * n + c]) > std::abs(G[p * n + c])) p = r;
    if (G[p * n + c] == 0.0)
      throw std::invalid_argument("bss_decompose: references are linearly dependent");
    if (p != c) {
      for (std::size_t k = 0; k < n; ++k) std::swap(G[c * n + k], G[p * n + k]);
      std::swap(b[c], b[p]);
    }
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = G[r * n + c] / G[c * n + c];
      for (std::size_t k = c; k < n; ++k) G[r * n + k] -= f * G[c * n + k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t c = n; c-- > 0;) {
    double s = b[c];
    for (std::size_t k = c + 1; k < n; ++k) s -= G[c * n + k] * x[k];
    x[c] = s / G[c * n + c];
  }
  return x;
}

inline double ratio_db(double num, double den) {
  if (den <= 0.0) return num > 0.0 ? kDbCap : -kDbCap;
  if (num <= 0.0) return -kDbCap;
  return std::clamp(10.0 * std::log10(num / den), -kDbCap, kDbCap);
}

}  // namespace detail

// Gain-only decomposition: est = s_target + e_interf + e_artif.
inline Decomposition bss_decompose(const std::vector<double>& est,
                                   const std::vector<std::vector<double>>& refs,
                                   std::size_t target) {
  if (target >= refs.size())
    throw std::invalid_argument("bss_decompose: target index " + std::to_string(target) +
                                " out of range for " + std::to_string(refs.size()) + " refs");
  for (const auto& r : refs)
    if (r.size() != est.size())
      throw std::invalid_argument("bss_decompose: length mismatch (" +
                                  std::to_string(r.size()) + " vs " +
                                  std::to_string(est.size()) + ")");
  const auto& s = refs[target];
  const double ss = detail::energy(s);
  if (ss == 0.0) throw std::invalid_argument("bss_decompose: zero-norm target reference");

  const std::size_t T = est.size(), R = refs.size();
  Decomposition d;
  d.s_target.resize(T);
  const double g = detail::dot(est, s) / ss;
  for (std::size_t t = 0; t < T; ++t) d.s_target[t] = g * s[t];

  std::vector<double> G(R * R), b(R);
  for (std::size_t i = 0; i < R; ++i) {
    b[i] = detail::dot(refs[i], est);
    for (std::size_t j = i; j < R; ++j) G[i * R + j] = G[j * R + i] = detail::dot(refs[i], refs[j]);
  }
  const auto c = detail::solve(std::move(G), std::move(b), R);
  d.e_interf.assign(T, 0.0);
  for (std::size_t i = 0; i < R; ++i)
    for (std::size_t t = 0; t < T; ++t) d.e_interf[t] += c[i] * refs[i][t];
  d.e_artif.resize(T);
  for (std::size_t t = 0; t < T; ++t) {
    d.e_interf[t] -= d.s_target[t];
    d.e_artif[t] = est[t] - d.s_target[t] - d.e_interf[t];
  }
  return d;
}

inline SeparationScore score(const Decomposition& d) {
  const std::size_t T = d.s_target.size();
  std::vector<double> noise(T), signal(T);
  for (std::size_t t = 0; t < T; ++t) {
    noise[t] = d.e_interf[t] + d.e_artif[t];
    signal[t] = d.s_target[t] + d.e_interf[t];
  }
  const double st = detail::energy(d.s_target);
  return {detail::ratio_db(st, detail::energy(noise)),
          detail::ratio_db(st, detail::energy(d.e_interf)),
          detail::ratio_db(detail::energy(signal), detail::energy(d.e_artif))};
}

// Scores est[i] against refs[i]; callers align first.
inline std::vector<SeparationScore> score(const std::vector<std::vector<double>>& est,
                                          const std::vector<std::vector<double>>& refs) {
  if (est.size() != refs.size())
    throw std::invalid_argument("score: " + std::to_string(est.size()) + " estimates for " +
                                std::to_string(refs.size()) + " references");
  std::vector<SeparationScore> out;
  for (std::size_t i = 0; i < est.size(); ++i) out.push_back(score(bss_decompose(est[i], refs, i)));
  return out;
}

inline std::vector<SeparationScore> score(const std::vector<signal::Waveform>& est,
                                          const std::vector<signal::Waveform>& refs) {
  std::vector<std::vector<double>> e, r;
  for (const auto& w : est) e.push_back(w.samples);
  for (const auto& w : refs) r.push_back(w.samples);
  return score(e, r);
}

// perm[i] = index of the estimate assigned to reference i; maximizes mean SDR.
// Ties keep the lexicographically first permutation.
inline std::vector<std::size_t> best_permutation_align(
    const std::vector<std::vector<double>>& est, const std::vector<std::vector<double>>& refs) {
  if (est.size() != refs.size())
    throw std::invalid_argument("best_permutation_align: count mismatch");
  const std::size_t I = refs.size();
  std::vector<double> sdr(I * I);  // sdr[r*I + e]
  for (std::size_t e = 0; e < I; ++e)
    for (std::size_t r = 0; r < I; ++r) sdr[r * I + e] = score(bss_decompose(est[e], refs, r)).sdr_db;
  std::vector<std::size_t> perm(I), best;
  std::iota(perm.begin(), perm.end(), 0);
  double best_total = -INFINITY;
  do {
    double total = 0.0;
    for (std::size_t r = 0; r < I; ++r) total += sdr[r * I + perm[r]];
    if (total > best_total) {
      best_total = total;
      best = perm;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

template <class T>
std::vector<T> apply_permutation(const std::vector<T>& est, const std::vector<std::size_t>& perm) {
  std::vector<T> out;
  out.reserve(perm.size());
  for (std::size_t p : perm) out.push_back(est.at(p));
  return out;
}

struct Summary {
  double mean = 0.0, stddev = 0.0, median = 0.0;
};

inline Summary summarize(std::vector<double> v) {
  Summary s;
  if (v.empty()) return s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - s.mean) * (x - s.mean);
  s.stddev = std::sqrt(var / static_cast<double>(v.size()));
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
  return s;
}

}  // namespace xdc::bss
