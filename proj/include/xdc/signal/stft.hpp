#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <cstddef>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace xdc::signal {

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = 8000;
};

struct StftParams {
  std::size_t window_size = 254;
  std::size_t hop = 127;
  std::size_t bins() const { return window_size / 2 + 1; }
};

enum class SpectrogramKind { Magnitude, Log };

// F × N complex spectrogram, stored row-major by frequency: values[f*N + n].
struct ComplexSpectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  StftParams stft;
  std::vector<std::complex<double>> values;

  std::complex<double>& at(std::size_t f, std::size_t n) { return values[f * frames + n]; }
  const std::complex<double>& at(std::size_t f, std::size_t n) const {
    return values[f * frames + n];
  }
};

// Real F × N spectrogram (magnitude or log); same layout as ComplexSpectrogram.
struct RealSpectrogram {
  std::size_t bins = 0;
  std::size_t frames = 0;
  StftParams stft;
  SpectrogramKind kind = SpectrogramKind::Magnitude;
  std::vector<double> values;

  double& at(std::size_t f, std::size_t n) { return values[f * frames + n]; }
  double at(std::size_t f, std::size_t n) const { return values[f * frames + n]; }
};

// Periodic Hann: w[t] = 0.5 − 0.5·cos(2πt/W). Sums to 1 at 50% overlap.
inline std::vector<double> hann_window(std::size_t window_size) {
  std::vector<double> w(window_size);
  for (std::size_t t = 0; t < window_size; ++t)
    w[t] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(t) /
                                static_cast<double>(window_size));
  return w;
}

inline std::size_t frame_count(std::size_t length, const StftParams& p) {
  if (length < p.window_size) return 0;
  return (length - p.window_size + p.hop - 1) / p.hop + 1;
}

namespace detail {

inline void check_params(const StftParams& p) {
  if (p.window_size == 0 || p.window_size % 2 != 0)
    throw std::invalid_argument("stft: window size must be even and positive, got " +
                                std::to_string(p.window_size));
  if (p.hop == 0 || p.hop > p.window_size)
    throw std::invalid_argument("stft: hop must be in [1, window], got " +
                                std::to_string(p.hop));
}

// exp(−2πi·r/W) for r in [0, W)
inline std::vector<std::complex<double>> twiddles(std::size_t W) {
  std::vector<std::complex<double>> tw(W);
  for (std::size_t r = 0; r < W; ++r) {
    const double a = -2.0 * std::numbers::pi * static_cast<double>(r) /
                     static_cast<double>(W);
    tw[r] = {std::cos(a), std::sin(a)};
  }
  return tw;
}

}  // namespace detail

// Frames start at n·hop with no leading pad; the final partial frame is
// zero-padded. N = ceil((len − W)/hop) + 1.
inline ComplexSpectrogram stft(const Waveform& w, const StftParams& p = {}) {
  detail::check_params(p);
  if (w.samples.size() < p.window_size)
    throw std::invalid_argument("stft: waveform of " +
                                std::to_string(w.samples.size()) +
                                " samples is shorter than one window (" +
                                std::to_string(p.window_size) + ")");
  const std::size_t W = p.window_size, F = p.bins();
  const std::size_t N = frame_count(w.samples.size(), p);
  const auto win = hann_window(W);
  const auto tw = detail::twiddles(W);
  ComplexSpectrogram s{F, N, p, std::vector<std::complex<double>>(F * N)};
  std::vector<double> frame(W);
  for (std::size_t n = 0; n < N; ++n) {
    const std::size_t start = n * p.hop;
    for (std::size_t t = 0; t < W; ++t) {
      const std::size_t i = start + t;
      frame[t] = i < w.samples.size() ? w.samples[i] * win[t] : 0.0;
    }
    for (std::size_t f = 0; f < F; ++f) {
      double re = 0.0, im = 0.0;
      std::size_t r = 0;
      for (std::size_t t = 0; t < W; ++t) {
        re += frame[t] * tw[r].real();
        im += frame[t] * tw[r].imag();
        r += f;
        if (r >= W) r -= W;
      }
      s.at(f, n) = {re, im};
    }
  }
  return s;
}

// Least-squares overlap-add inverse: y = Σ w·frame / max(Σ w², floor), where
// floor is the smallest steady-state Σ w². Fully overlapped samples invert
// exactly; edge samples covered by one tapered window are attenuated rather
// than blown up when the spectrogram is inconsistent (e.g. masked).
// `length` defaults to (N−1)·hop + W.
inline Waveform istft(const ComplexSpectrogram& s, int sample_rate_hz = 8000,
                      std::optional<std::size_t> length = std::nullopt) {
  detail::check_params(s.stft);
  const std::size_t W = s.stft.window_size, F = s.stft.bins(), N = s.frames;
  if (s.bins != F || s.values.size() != F * N)
    throw std::invalid_argument(
        "istft: spectrogram has " + std::to_string(s.bins) + " bins and " +
        std::to_string(s.values.size()) + " values, expected " +
        std::to_string(F) + " bins for window " + std::to_string(W));
  const auto win = hann_window(W);
  const auto tw = detail::twiddles(W);
  const std::size_t total = N == 0 ? 0 : (N - 1) * s.stft.hop + W;
  std::vector<double> y(total, 0.0), norm(total, 0.0);
  std::vector<double> frame(W);
  for (std::size_t n = 0; n < N; ++n) {
    for (std::size_t t = 0; t < W; ++t) {
      // Hermitian inverse of a real frame.
      double acc = s.at(0, n).real();
      acc += ((t % 2) ? -1.0 : 1.0) * s.at(F - 1, n).real();
      std::size_t r = t;
      for (std::size_t f = 1; f + 1 < F; ++f, r += t) {
        if (r >= W) r %= W;
        // e^{+2πi f t/W} = conj(tw[r])
        const auto& x = s.at(f, n);
        acc += 2.0 * (x.real() * tw[r].real() + x.imag() * tw[r].imag());
      }
      frame[t] = acc / static_cast<double>(W);
    }
    const std::size_t start = n * s.stft.hop;
    for (std::size_t t = 0; t < W; ++t) {
      y[start + t] += win[t] * frame[t];
      norm[start + t] += win[t] * win[t];
    }
  }
  double floor = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < s.stft.hop; ++t) {
    double acc = 0.0;
    for (std::size_t u = t; u < W; u += s.stft.hop) acc += win[u] * win[u];
    floor = std::min(floor, acc);
  }
  for (std::size_t i = 0; i < total; ++i) {
    const double d = std::max(norm[i], floor);
    y[i] = d > 1e-10 ? y[i] / d : 0.0;
  }
  if (length) y.resize(*length, 0.0);
  return {std::move(y), sample_rate_hz};
}

// X = |X̃| / max|X̃|.
inline RealSpectrogram scale_amplitude(const ComplexSpectrogram& mix) {
  if (mix.values.empty())
    throw std::invalid_argument("scale_amplitude: empty spectrogram");
  double peak = 0.0;
  for (const auto& v : mix.values) peak = std::max(peak, std::abs(v));
  if (peak == 0.0)
    throw std::invalid_argument("scale_amplitude: all-zero spectrogram cannot be scaled");
  RealSpectrogram out{mix.bins, mix.frames, mix.stft, SpectrogramKind::Magnitude, {}};
  out.values.reserve(mix.values.size());
  for (const auto& v : mix.values) out.values.push_back(std::abs(v) / peak);
  return out;
}

inline RealSpectrogram magnitude(const ComplexSpectrogram& s) {
  RealSpectrogram out{s.bins, s.frames, s.stft, SpectrogramKind::Magnitude, {}};
  out.values.reserve(s.values.size());
  for (const auto& v : s.values) out.values.push_back(std::abs(v));
  return out;
}

// Rescales an already real magnitude array so its maximum is 1.
inline RealSpectrogram scale_amplitude(const RealSpectrogram& mag) {
  if (mag.values.empty())
    throw std::invalid_argument("scale_amplitude: empty spectrogram");
  double peak = 0.0;
  for (double v : mag.values) peak = std::max(peak, std::abs(v));
  if (peak == 0.0)
    throw std::invalid_argument("scale_amplitude: all-zero spectrogram cannot be scaled");
  RealSpectrogram out = mag;
  for (auto& v : out.values) v = std::abs(v) / peak;
  return out;
}

inline constexpr double kLogFloor = 1e-16;

// X = 10·log10(|X̃| + 1e-16).
inline RealSpectrogram log_spectrogram(const ComplexSpectrogram& mix) {
  if (mix.values.empty())
    throw std::invalid_argument("log_spectrogram: empty spectrogram");
  RealSpectrogram out{mix.bins, mix.frames, mix.stft, SpectrogramKind::Log, {}};
  out.values.reserve(mix.values.size());
  for (const auto& v : mix.values)
    out.values.push_back(10.0 * std::log10(std::abs(v) + kLogFloor));
  return out;
}

}  // namespace xdc::signal
