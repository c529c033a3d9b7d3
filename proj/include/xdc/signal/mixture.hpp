#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdc/random.hpp"
#include "xdc/signal/stft.hpp"

namespace xdc::signal {

enum class WeightMode { Deterministic, Random };

inline std::string to_string(WeightMode m) {
  return m == WeightMode::Random ? "random" : "deterministic";
}

inline WeightMode parse_weight_mode(const std::string& s) {
  if (s == "random") return WeightMode::Random;
  if (s == "deterministic") return WeightMode::Deterministic;
  throw std::invalid_argument("unknown weight mode '" + s + "'");
}

struct Mixture {
  ComplexSpectrogram mixture;
  std::vector<ComplexSpectrogram> sources;  // already multiplied by weights
  std::vector<double> weights;
};

// Weights are 1 (deterministic) or drawn from U[0, 1) (random, seeded).
inline std::vector<double> mixing_weights(std::size_t count, WeightMode mode,
                                          std::uint64_t seed) {
  std::vector<double> w(count, 1.0);
  if (mode == WeightMode::Random) {
    Rng rng(derive_seed(seed, {0x77656967687473ULL}));
    for (auto& v : w) v = rng.uniform01();
  }
  return w;
}

inline Mixture synth_mixture(const std::vector<Waveform>& sources, WeightMode mode,
                             std::uint64_t seed, const StftParams& p = {}) {
  if (sources.empty()) throw std::invalid_argument("synth_mixture: empty source list");
  for (const auto& s : sources)
    if (s.samples.size() != sources[0].samples.size() ||
        s.sample_rate_hz != sources[0].sample_rate_hz)
      throw std::invalid_argument(
          "synth_mixture: sources differ in length or sample rate");
  Mixture m;
  m.weights = mixing_weights(sources.size(), mode, seed);
  for (std::size_t i = 0; i < sources.size(); ++i) {
    auto s = stft(sources[i], p);
    for (auto& v : s.values) v *= m.weights[i];
    if (i == 0) {
      m.mixture = s;
    } else {
      for (std::size_t k = 0; k < s.values.size(); ++k) m.mixture.values[k] += s.values[k];
    }
    m.sources.push_back(std::move(s));
  }
  return m;
}

struct EnvelopeSpec {
  bool constant = false;
  double floor = 0.15;       // minimum level of the smooth envelope
  double max_rate_hz = 3.0;  // fastest modulation component
  int components = 3;
};

inline constexpr double kSourcePeak = 0.9;

// Σ_k (1/k)·sin(2π·k·f0·t + φ_k) under a slowly varying envelope, with
// random phases, then scaled to a peak of kSourcePeak.
inline Waveform gen_harmonic_source(double f0_hz, int n_partials, double duration_s,
                                    int sample_rate_hz, const EnvelopeSpec& env,
                                    std::uint64_t seed) {
  if (sample_rate_hz <= 0 || duration_s <= 0.0 || n_partials < 1 || f0_hz <= 0.0)
    throw std::invalid_argument("gen_harmonic_source: non-positive parameter");
  if (f0_hz * n_partials >= sample_rate_hz / 2.0)
    throw std::invalid_argument(
        "gen_harmonic_source: highest partial " + std::to_string(f0_hz * n_partials) +
        " Hz aliases at sample rate " + std::to_string(sample_rate_hz));
  Rng rng(seed);
  constexpr double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> phases(static_cast<std::size_t>(n_partials));
  for (auto& p : phases) p = rng.uniform(0.0, two_pi);
  struct Mod {
    double amp, rate, phase;
  };
  std::vector<Mod> mods;
  if (!env.constant)
    for (int c = 0; c < env.components; ++c)
      mods.push_back({rng.uniform(0.5, 1.0), rng.uniform(0.25, env.max_rate_hz),
                      rng.uniform(0.0, two_pi)});
  double mod_norm = 0.0;
  for (const auto& m : mods) mod_norm += m.amp;

  const auto n = static_cast<std::size_t>(std::llround(duration_s * sample_rate_hz));
  Waveform w{std::vector<double>(n, 0.0), sample_rate_hz};
  double peak = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate_hz;
    double v = 0.0;
    for (int k = 1; k <= n_partials; ++k)
      v += std::sin(two_pi * k * f0_hz * t + phases[static_cast<std::size_t>(k - 1)]) / k;
    if (!mods.empty()) {
      double e = 0.0;
      for (const auto& m : mods) e += m.amp * std::sin(two_pi * m.rate * t + m.phase);
      v *= env.floor + (1.0 - env.floor) * (0.5 + 0.5 * e / mod_norm);
    }
    w.samples[i] = v;
    peak = std::max(peak, std::abs(v));
  }
  if (peak > 0.0)
    for (auto& v : w.samples) v *= kSourcePeak / peak;
  return w;
}

}  // namespace xdc::signal
