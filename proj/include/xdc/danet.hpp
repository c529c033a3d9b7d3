#pragma once

// Attractor-network baseline: label-weighted attractors pull sigmoid masks
// out of the gated-conv embeddings.

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdc/dc.hpp"
#include "xdc/ops.hpp"
#include "xdc/signal/labels.hpp"
#include "xdc/signal/stft.hpp"

namespace xdc::danet {

inline constexpr double kAttractorGuard = 1e-8;
inline constexpr double kWienerGuard = 1e-16;

// A_{i,d} = Σ_k v_{k,d} y_{k,i} / (Σ_k y_{k,i} + 1e-8); V: K × D, Y: K × I.
inline Tensor compute_attractors(const Tensor& V, const Tensor& Y) {
  if (V.rank() != 2 || Y.rank() != 2 || V.dim(0) != Y.dim(0))
    throw ShapeError("compute_attractors: V " + to_string(V.shape()) + " and Y " +
                     to_string(Y.shape()) + " are not row-aligned");
  const Tensor num = matmul(transpose(Y), V);                               // I × D
  const Tensor den = add_scalar(sum_axis(transpose(Y), 1, true), kAttractorGuard);  // I × 1
  return div(num, broadcast_to(den, num.shape()));
}

// m̂_{k,i} = σ(Σ_d A_{i,d} v_{k,d}); K × I.
inline Tensor danet_masks(const Tensor& V, const Tensor& A) {
  if (V.rank() != 2 || A.rank() != 2 || V.dim(1) != A.dim(1))
    throw ShapeError("danet_masks: V " + to_string(V.shape()) + " vs attractors " +
                     to_string(A.shape()));
  return sigmoid(matmul(V, transpose(A)));
}

// (1/KI)·Σ |X_k (m_{k,i} − m̂_{k,i})|; X is K × 1, masks K × I.
inline Tensor danet_loss(const Tensor& X, const Tensor& m, const Tensor& m_hat) {
  if (m.shape() != m_hat.shape() || m.rank() != 2 || X.shape() != Shape{m.dim(0), 1})
    throw ShapeError("danet_loss: X " + to_string(X.shape()) + ", m " + to_string(m.shape()) +
                     ", m_hat " + to_string(m_hat.shape()));
  return mean(abs(mul(broadcast_to(X, m.shape()), sub(m, m_hat))));
}

// f-major F × N values → K × 1 column in bin order k = n·F + f.
inline Tensor bin_column(const std::vector<double>& fn, std::size_t F, std::size_t N) {
  if (fn.size() != F * N) throw ShapeError("bin_column: size mismatch");
  std::vector<double> out(F * N);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t n = 0; n < N; ++n) out[signal::bin_index(f, n, F)] = fn[f * N + n];
  return Tensor({F * N, 1}, std::move(out));
}

// Wiener targets m_{k,i} = |X̃⁽ⁱ⁾|² / (|X̃|² + 1e-16), K × I in bin order.
inline Tensor wiener_targets(const signal::ComplexSpectrogram& mixture,
                             const std::vector<signal::ComplexSpectrogram>& sources) {
  const std::size_t F = mixture.bins, N = mixture.frames, I = sources.size();
  std::vector<double> m(F * N * I);
  for (std::size_t i = 0; i < I; ++i) {
    if (sources[i].bins != F || sources[i].frames != N)
      throw ShapeError("wiener_targets: source " + std::to_string(i) + " shape mismatch");
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t n = 0; n < N; ++n)
        m[signal::bin_index(f, n, F) * I + i] =
            std::norm(sources[i].at(f, n)) / (std::norm(mixture.at(f, n)) + kWienerGuard);
  }
  return Tensor({F * N, I}, std::move(m));
}

struct Example {
  Tensor features;  // [1, F, N] standardized log spectrogram
  Tensor magnitude; // K × 1 scaled mixture magnitude
  Tensor labels;    // K × I one-hot (silent rows zero)
  Tensor targets;   // K × I Wiener masks
};

class DanetModel {
 public:
  DanetModel(const dc::GatedConvConfig& cfg, std::uint64_t seed) : encoder_(cfg, seed) {}

  dc::GatedConvEncoder& encoder() { return encoder_; }
  const dc::GatedConvEncoder& encoder() const { return encoder_; }
  nn::ParameterList& parameters() { return encoder_.parameters(); }

  // Oracle-attractor masks, K × I. Embeddings are not unit-normalized: with
  // unit rows |A·v| ≤ 1 and the masks could never leave [σ(−1), σ(1)].
  Tensor masks(const Example& ex) const {
    const Tensor V = encoder_.embed_raw(ex.features)[0];
    return danet_masks(V, compute_attractors(V, ex.labels));
  }

  Tensor loss(const std::vector<Example>& batch) const {
    if (batch.empty()) throw std::invalid_argument("danet: empty batch");
    Tensor total;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const Tensor l = danet_loss(batch[b].magnitude, batch[b].targets, masks(batch[b]));
      total = b == 0 ? l : add(total, l);
    }
    return mul_scalar(total, 1.0 / static_cast<double>(batch.size()));
  }

 private:
  dc::GatedConvEncoder encoder_;
};

}  // namespace xdc::danet
