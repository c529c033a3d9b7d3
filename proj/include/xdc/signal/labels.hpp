#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdc/signal/stft.hpp"

namespace xdc::signal {

// One-hot dominant-speaker labels over TF bins k = n·F + f.
struct LabelMatrix {
  std::size_t bins = 0;      // K
  std::size_t speakers = 0;  // I
  std::vector<std::uint8_t> y;        // K × I, row-major
  std::vector<std::uint8_t> silence;  // K

  std::uint8_t at(std::size_t k, std::size_t i) const { return y[k * speakers + i]; }

  std::vector<std::size_t> active_bins() const {
    std::vector<std::size_t> out;
    for (std::size_t k = 0; k < bins; ++k)
      if (!silence[k]) out.push_back(k);
    return out;
  }
};

inline constexpr double kSilenceThresholdDb = -40.0;

inline std::size_t bin_index(std::size_t f, std::size_t n, std::size_t F) {
  return n * F + f;
}

// Silent iff 20·log10(|X̃|/max|X̃| + 1e-16) < −40.
inline std::vector<std::uint8_t> silence_mask(const ComplexSpectrogram& mix) {
  if (mix.values.empty()) throw std::invalid_argument("silence_mask: empty spectrogram");
  double peak = 0.0;
  for (const auto& v : mix.values) peak = std::max(peak, std::abs(v));
  const std::size_t F = mix.bins, N = mix.frames;
  std::vector<std::uint8_t> flags(F * N, 1);
  if (peak == 0.0) return flags;
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t n = 0; n < N; ++n) {
      const double ratio = std::abs(mix.at(f, n)) / peak;
      flags[bin_index(f, n, F)] = 20.0 * std::log10(ratio + 1e-16) < kSilenceThresholdDb;
    }
  return flags;
}

// Argmax over source magnitudes; ties go to the lowest source index.
inline LabelMatrix dominant_labels(const std::vector<ComplexSpectrogram>& sources,
                                   const std::vector<std::uint8_t>& silence) {
  if (sources.empty()) throw std::invalid_argument("dominant_labels: no sources");
  const std::size_t F = sources[0].bins, N = sources[0].frames;
  for (std::size_t i = 1; i < sources.size(); ++i)
    if (sources[i].bins != F || sources[i].frames != N)
      throw std::invalid_argument(
          "dominant_labels: source " + std::to_string(i) + " is " +
          std::to_string(sources[i].bins) + "x" + std::to_string(sources[i].frames) +
          ", source 0 is " + std::to_string(F) + "x" + std::to_string(N));
  if (silence.size() != F * N)
    throw std::invalid_argument("dominant_labels: silence mask has " +
                                std::to_string(silence.size()) + " flags for " +
                                std::to_string(F * N) + " bins");
  const std::size_t I = sources.size();
  LabelMatrix out{F * N, I, std::vector<std::uint8_t>(F * N * I, 0), silence};
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t n = 0; n < N; ++n) {
      const std::size_t k = bin_index(f, n, F);
      if (silence[k]) continue;
      std::size_t best = 0;
      double best_mag = std::abs(sources[0].at(f, n));
      for (std::size_t i = 1; i < I; ++i) {
        const double m = std::abs(sources[i].at(f, n));
        if (m > best_mag) {
          best = i;
          best_mag = m;
        }
      }
      out.y[k * I + best] = 1;
    }
  return out;
}

}  // namespace xdc::signal
