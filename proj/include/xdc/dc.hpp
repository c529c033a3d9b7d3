#pragma once

// Deep-clustering objective, the gated-convolution embedding encoder, and
// k-means mask extraction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdc/bss_eval.hpp"
#include "xdc/nn.hpp"
#include "xdc/ops.hpp"
#include "xdc/random.hpp"
#include "xdc/signal/labels.hpp"
#include "xdc/signal/stft.hpp"

namespace xdc::dc {

// Rows of Y for the given bins as a constant K × I tensor.
inline Tensor label_tensor(const signal::LabelMatrix& Y, const std::vector<std::size_t>& rows) {
  std::vector<double> v(rows.size() * Y.speakers);
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t i = 0; i < Y.speakers; ++i) v[r * Y.speakers + i] = Y.at(rows[r], i);
  return Tensor({rows.size(), Y.speakers}, std::move(v));
}

// ‖VVᵀ − YYᵀ‖_F² through the D×D, D×I and I×I Gram matrices. Each norm is
// summed in a canonical order, so permuting Y's columns is bit-exact.
inline Tensor dc_loss(const Tensor& V, const Tensor& Y) {
  if (V.rank() != 2 || Y.rank() != 2 || V.dim(0) != Y.dim(0))
    throw ShapeError("dc_loss: V " + to_string(V.shape()) + " and Y " + to_string(Y.shape()) +
                     " are not row-aligned");
  const Tensor Vt = transpose(V);
  const Tensor vv = frobenius_sq_canonical(matmul(Vt, V));
  const Tensor vy = frobenius_sq_canonical(matmul(Vt, Y));
  const Tensor yy = frobenius_sq_canonical(matmul(transpose(Y), Y));
  return add(sub(vv, mul_scalar(vy, 2.0)), yy);
}

struct GatedConvConfig {
  std::size_t freq_bins = 128;  // F
  std::size_t embedding_dim = 16;  // D
  std::size_t channels = 32;  // C
  std::size_t blocks = 2;
  std::size_t kernel = 3;

  void validate() const {
    if (freq_bins == 0 || embedding_dim == 0 || channels == 0 || blocks == 0 || kernel == 0)
      throw std::invalid_argument("gated conv encoder: all sizes must be positive");
    if (kernel % 2 == 0)
      throw std::invalid_argument("gated conv encoder: kernel " + std::to_string(kernel) +
                                  " must be odd");
  }
};

struct GatedLayer {
  nn::Conv a, b;
  Tensor operator()(const Tensor& x) const { return mul(a(x), sigmoid(b(x))); }
};

// Input conv F → C, residual blocks of three gated layers, output conv
// C → F·D, unit-norm rows per TF bin.
class GatedConvEncoder {
 public:
  static constexpr std::size_t kLayersPerBlock = 3;

  GatedConvEncoder(const GatedConvConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    Rng rng(derive_seed(seed, {0x6463656e63ULL}));
    const std::size_t F = cfg.freq_bins, C = cfg.channels, k = cfg.kernel;
    input_ = nn::make_conv(params_, "enc.in", F, C, k, rng);
    for (std::size_t bl = 0; bl < cfg.blocks; ++bl)
      for (std::size_t l = 0; l < kLayersPerBlock; ++l) {
        const std::string base = "enc.block" + std::to_string(bl) + ".gate" + std::to_string(l);
        layers_.push_back({nn::make_conv(params_, base + ".a", C, C, k, rng),
                           nn::make_conv(params_, base + ".b", C, C, k, rng)});
      }
    output_ = nn::make_conv(params_, "enc.out", C, F * cfg.embedding_dim, 1, rng);
  }

  const GatedConvConfig& config() const { return cfg_; }
  nn::ParameterList& parameters() { return params_; }
  const nn::ParameterList& parameters() const { return params_; }
  const std::vector<GatedLayer>& gated_layers() const { return layers_; }

  // x: [B, F, N] standardized log spectrogram → B unit-row embedding
  // matrices, K × D.
  std::vector<Tensor> embed(const Tensor& x) const {
    auto V = embed_raw(x);
    for (auto& v : V) v = nn::normalize_rows(v);
    return V;
  }

  // As embed, without the row normalization.
  std::vector<Tensor> embed_raw(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(1) != cfg_.freq_bins)
      throw ShapeError("gated conv encoder: expected [B, " + std::to_string(cfg_.freq_bins) +
                       ", N], got " + to_string(x.shape()));
    Tensor h = input_(x);
    for (std::size_t bl = 0; bl < cfg_.blocks; ++bl) {
      Tensor y = h;
      for (std::size_t l = 0; l < kLayersPerBlock; ++l) y = layers_[bl * kLayersPerBlock + l](y);
      h = add(h, y);
    }
    const Tensor out = output_(h);
    std::vector<Tensor> V;
    const std::size_t B = x.dim(0), N = x.dim(2);
    for (std::size_t b = 0; b < B; ++b) {
      const Tensor yb = reshape(slice(out, 0, b, 1), {cfg_.freq_bins * cfg_.embedding_dim, N});
      V.push_back(nn::channels_to_rows(yb, cfg_.freq_bins, cfg_.embedding_dim));
    }
    return V;
  }

 private:
  GatedConvConfig cfg_;
  nn::ParameterList params_;
  nn::Conv input_, output_;
  std::vector<GatedLayer> layers_;
};

inline constexpr double kLogDynamicRangeDb = 80.0;

// Log spectrogram clipped to 80 dB below its peak, then shifted and scaled
// to zero mean, unit variance over the utterance.
inline std::vector<double> standardize_log(const signal::RealSpectrogram& log_spec) {
  std::vector<double> v = log_spec.values;
  if (v.empty()) throw std::invalid_argument("standardize_log: empty spectrogram");
  const double peak = *std::max_element(v.begin(), v.end());
  for (auto& x : v) x = std::max(x, peak - kLogDynamicRangeDb);
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  const double sd = std::sqrt(var / static_cast<double>(v.size()));
  for (auto& x : v) x = sd > 0.0 ? (x - mean) / sd : 0.0;
  return v;
}

// ---- k-means ----------------------------------------------------------------

struct KMeansOptions {
  std::size_t max_iters = 100;
  double tolerance = 1e-6;  // relative center shift
};

struct KMeansResult {
  std::vector<std::size_t> assignment;  // one cluster per point
  std::vector<double> centers;          // I × D
  std::size_t iterations = 0;
};

// points: P × D row-major.
inline KMeansResult kmeans(const std::vector<double>& points, std::size_t D, std::size_t I,
                           std::uint64_t seed, const KMeansOptions& opt = {}) {
  if (D == 0 || points.size() % D != 0)
    throw std::invalid_argument("kmeans: point buffer is not a multiple of D");
  const std::size_t P = points.size() / D;
  if (I == 0 || P < I)
    throw std::invalid_argument("kmeans: " + std::to_string(P) + " points for " +
                                std::to_string(I) + " clusters");
  auto dist2 = [&](std::size_t p, const double* c) {
    double s = 0.0;
    for (std::size_t d = 0; d < D; ++d) {
      const double t = points[p * D + d] - c[d];
      s += t * t;
    }
    return s;
  };
  Rng rng(seed);
  KMeansResult r;
  r.centers.resize(I * D);
  auto set_center = [&](std::size_t i, std::size_t p) {
    std::copy_n(points.begin() + static_cast<std::ptrdiff_t>(p * D), D,
                r.centers.begin() + static_cast<std::ptrdiff_t>(i * D));
  };
  // k-means++ seeding.
  set_center(0, rng.index(P));
  std::vector<double> nearest(P, std::numeric_limits<double>::infinity());
  for (std::size_t i = 1; i < I; ++i) {
    double total = 0.0;
    for (std::size_t p = 0; p < P; ++p) {
      nearest[p] = std::min(nearest[p], dist2(p, &r.centers[(i - 1) * D]));
      total += nearest[p];
    }
    std::size_t pick = P - 1;
    if (total > 0.0) {
      double u = rng.uniform01() * total;
      for (std::size_t p = 0; p < P; ++p) {
        if (u < nearest[p]) {
          pick = p;
          break;
        }
        u -= nearest[p];
      }
    } else {
      pick = rng.index(P);
    }
    set_center(i, pick);
  }

  r.assignment.assign(P, 0);
  std::vector<double> d_best(P);
  for (r.iterations = 0; r.iterations < opt.max_iters;) {
    for (std::size_t p = 0; p < P; ++p) {
      std::size_t best = 0;
      double bd = dist2(p, &r.centers[0]);
      for (std::size_t i = 1; i < I; ++i) {
        const double d = dist2(p, &r.centers[i * D]);
        if (d < bd) bd = d, best = i;
      }
      r.assignment[p] = best;
      d_best[p] = bd;
    }
    ++r.iterations;
    std::vector<double> next(I * D, 0.0);
    std::vector<std::size_t> count(I, 0);
    for (std::size_t p = 0; p < P; ++p) {
      ++count[r.assignment[p]];
      for (std::size_t d = 0; d < D; ++d) next[r.assignment[p] * D + d] += points[p * D + d];
    }
    for (std::size_t i = 0; i < I; ++i) {
      if (count[i] == 0) {
        // Reseed an empty cluster at the point farthest from its center.
        const auto far = static_cast<std::size_t>(
            std::max_element(d_best.begin(), d_best.end()) - d_best.begin());
        std::copy_n(points.begin() + static_cast<std::ptrdiff_t>(far * D), D,
                    next.begin() + static_cast<std::ptrdiff_t>(i * D));
        d_best[far] = 0.0;
        continue;
      }
      for (std::size_t d = 0; d < D; ++d) next[i * D + d] /= static_cast<double>(count[i]);
    }
    double shift = 0.0, scale = 0.0;
    for (std::size_t j = 0; j < next.size(); ++j) {
      shift += (next[j] - r.centers[j]) * (next[j] - r.centers[j]);
      scale += r.centers[j] * r.centers[j];
    }
    r.centers = std::move(next);
    if (shift <= opt.tolerance * opt.tolerance * std::max(scale, 1e-300)) break;
  }
  // Final assignment against the final centers.
  for (std::size_t p = 0; p < P; ++p) {
    std::size_t best = 0;
    double bd = dist2(p, &r.centers[0]);
    for (std::size_t i = 1; i < I; ++i) {
      const double d = dist2(p, &r.centers[i * D]);
      if (d < bd) bd = d, best = i;
    }
    r.assignment[p] = best;
  }
  return r;
}

// Binary I × K masks from embedding rows; silent bins belong to no cluster.
inline std::vector<std::vector<double>> kmeans_masks(const Tensor& V,
                                                     const std::vector<std::uint8_t>& silence,
                                                     std::size_t I, std::uint64_t seed,
                                                     std::size_t iters = 100) {
  if (V.rank() != 2 || V.dim(0) != silence.size())
    throw ShapeError("kmeans_masks: V " + to_string(V.shape()) + " vs " +
                     std::to_string(silence.size()) + " silence flags");
  const std::size_t K = V.dim(0), D = V.dim(1);
  std::vector<std::size_t> rows;
  std::vector<double> pts;
  for (std::size_t k = 0; k < K; ++k)
    if (!silence[k]) {
      rows.push_back(k);
      pts.insert(pts.end(), V.data().begin() + static_cast<std::ptrdiff_t>(k * D),
                 V.data().begin() + static_cast<std::ptrdiff_t>((k + 1) * D));
    }
  const auto km = kmeans(pts, D, I, seed, {iters, 1e-6});
  std::vector<std::vector<double>> masks(I, std::vector<double>(K, 0.0));
  for (std::size_t r = 0; r < rows.size(); ++r) masks[km.assignment[r]][rows[r]] = 1.0;
  return masks;
}

using bss::best_permutation_align;

}  // namespace xdc::dc
