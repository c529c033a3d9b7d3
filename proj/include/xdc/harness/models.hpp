#pragma once

#include <complex>
#include <memory>
#include <string>
#include <vector>

#include "xdc/checkpoint.hpp"
#include "xdc/danet.hpp"
#include "xdc/dc.hpp"
#include "xdc/harness/config.hpp"
#include "xdc/harness/dataset.hpp"
#include "xdc/nmf.hpp"
#include "xdc/xdc.hpp"

namespace xdc::harness {

// The trainable state of whichever model the config names.
struct ModelState {
  ExperimentConfig config;
  std::unique_ptr<model::XdcModel> xdc;
  std::unique_ptr<dc::GatedConvEncoder> dc;
  std::unique_ptr<danet::DanetModel> danet;
  nn::ParameterList nmf_bases;  // one basis tensor per source

  std::vector<Tensor>& parameters() {
    if (xdc) return xdc->parameters().all();
    if (dc) return dc->parameters().all();
    if (danet) return danet->parameters().all();
    return nmf_bases.all();
  }
};

inline std::uint64_t model_seed(const ExperimentConfig& c) { return derive_seed(c.seed, {0x6d6f64656cULL}); }

inline ModelState build_model(const ExperimentConfig& c) {
  ModelState s;
  s.config = c;
  const auto seed = model_seed(c);
  switch (c.model) {
    case ModelKind::Xdc: s.xdc = std::make_unique<model::XdcModel>(c.xdc, seed); break;
    case ModelKind::DcGatedConv: s.dc = std::make_unique<dc::GatedConvEncoder>(c.dc, seed); break;
    case ModelKind::Danet: s.danet = std::make_unique<danet::DanetModel>(c.dc, seed); break;
    case ModelKind::Nmf:
    case ModelKind::Nmfd: {
      const std::size_t J = c.nmf.components_per_source, F = c.stft.bins(), M = c.nmf.width;
      for (std::size_t i = 0; i < c.speakers_true(); ++i) {
        const std::string name = "nmf.source" + std::to_string(i) + ".w";
        if (c.model == ModelKind::Nmf)
          s.nmf_bases.add(name, {F, J}, std::vector<double>(F * J, 0.0));
        else
          s.nmf_bases.add(name, {J, F, M}, std::vector<double>(J * F * M, 0.0));
      }
      break;
    }
  }
  return s;
}

struct CheckpointInfo {
  std::size_t epoch = 0, step = 0;
  double valid_sdr = 0.0;
  bool has_validation = false;
};

inline std::string checkpoint_metadata(const ExperimentConfig& c, const CheckpointInfo& info) {
  json j{{"model", to_string(c.model)},
         {"config", to_json(c)},
         {"config_hash", config_hash(c)},
         {"seed", c.seed},
         {"epoch", info.epoch},
         {"step", info.step}};
  if (info.has_validation) j["valid_sdr"] = info.valid_sdr;
  return j.dump();
}

inline Checkpoint snapshot(ModelState& s, const CheckpointInfo& info) {
  return make_checkpoint(s.parameters(), checkpoint_metadata(s.config, info));
}

inline ExperimentConfig checkpoint_config(const Checkpoint& ck) {
  json meta;
  try {
    meta = json::parse(ck.metadata);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("checkpoint metadata is not JSON: ") + e.what());
  }
  if (!meta.contains("config")) throw ConfigError("checkpoint metadata has no config");
  return from_json(meta.at("config"), default_config());
}

inline ModelState load_model(const Checkpoint& ck) {
  auto s = build_model(checkpoint_config(ck));
  restore_parameters(ck, s.parameters());
  return s;
}

// ---- separation -------------------------------------------------------------

namespace detail {

inline std::vector<signal::ComplexSpectrogram> apply_masks(const signal::ComplexSpectrogram& mix,
                                                           const std::vector<std::vector<double>>& masks) {
  std::vector<signal::ComplexSpectrogram> out;
  for (const auto& m : masks) {
    auto s = mix;
    for (std::size_t k = 0; k < m.size(); ++k) s.values[k] *= m[k];
    out.push_back(std::move(s));
  }
  return out;
}

// Bin-order (k = n·F + f) column → f-major array.
inline std::vector<double> bins_to_fmajor(const std::vector<double>& v, std::size_t F, std::size_t N) {
  std::vector<double> out(F * N);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t n = 0; n < N; ++n) out[f * N + n] = v[signal::bin_index(f, n, F)];
  return out;
}

inline Tape* suspend_tape() {
  Tape* t = Tape::active();
  Tape::active() = nullptr;
  return t;
}

}  // namespace detail

struct Separation {
  std::vector<signal::ComplexSpectrogram> estimates;  // one per true source, unaligned
  std::vector<std::size_t> selected;                  // X-DC channels kept
};

// Ideal power-ratio masks |S_i|² / Σ_j |S_j|² from the true sources.
inline Separation oracle_separation(const Example& ex) {
  const std::size_t K = ex.mixture.values.size();
  std::vector<std::vector<double>> parts;
  for (const auto& s : ex.sources) {
    std::vector<double> p(K);
    for (std::size_t k = 0; k < K; ++k) p[k] = std::norm(s.values[k]);
    parts.push_back(std::move(p));
  }
  return {detail::apply_masks(ex.mixture, nmf::wiener_masks(parts)), {}};
}

inline Separation mixture_separation(const Example& ex) {
  return {std::vector<signal::ComplexSpectrogram>(ex.sources.size(), ex.mixture), {}};
}

inline Separation separate(const ModelState& s, const Example& ex) {
  struct Restore {
    Tape* t;
    ~Restore() { Tape::active() = t; }
  } restore{detail::suspend_tape()};
  const std::size_t I_true = ex.sources.size();
  const std::size_t F = ex.mixture.bins, N = ex.mixture.frames;
  const auto feats = make_features(ex);
  Separation out;
  if (s.xdc) {
    const auto masks = model::infer_masks(*s.xdc, feats.magnitude, N);
    out.selected = model::select_masks(masks.Ht, masks.speakers, I_true);
    std::vector<std::vector<double>> power;
    for (std::size_t i : out.selected) {
      auto v = masks.mask(i);
      for (auto& x : v) x *= x;  // ṽ² applied to the mixture
      power.push_back(std::move(v));
    }
    out.estimates = detail::apply_masks(ex.mixture, power);
  } else if (s.dc) {
    const auto V = s.dc->embed(Tensor({1, F, N}, feats.log_features))[0];
    auto masks = dc::kmeans_masks(V, feats.labels.silence, I_true,
                                  derive_seed(s.config.seed, {0x6b6d65616e73ULL}),
                                  s.config.kmeans_iters);
    for (auto& m : masks) m = detail::bins_to_fmajor(m, F, N);
    out.estimates = detail::apply_masks(ex.mixture, masks);
  } else if (s.danet) {
    const auto m = s.danet->masks(make_danet_example(ex, feats));
    std::vector<std::vector<double>> masks(I_true, std::vector<double>(F * N));
    for (std::size_t i = 0; i < I_true; ++i)
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t n = 0; n < N; ++n)
          masks[i][f * N + n] = m.data()[signal::bin_index(f, n, F) * I_true + i];
    out.estimates = detail::apply_masks(ex.mixture, masks);
  } else {
    // Supervised NMF/NMFD: per-source bases fixed, activations fitted.
    const nmf::Matrix A{F, N, feats.magnitude};
    const auto& bases = s.nmf_bases.all();
    if (bases.size() != I_true)
      throw ConfigError("nmf: model has bases for " + std::to_string(bases.size()) +
                        " sources, mixture has " + std::to_string(I_true));
    const std::size_t J = s.config.nmf.components_per_source, Jt = J * I_true;
    const auto seed = derive_seed(s.config.seed, {0x6e6d66ULL});
    std::vector<std::vector<double>> parts(I_true, std::vector<double>(F * N, 0.0));
    if (s.config.model == ModelKind::Nmf) {
      auto init = nmf::nmf_init(A, Jt, seed);
      for (std::size_t i = 0; i < I_true; ++i)
        for (std::size_t f = 0; f < F; ++f)
          for (std::size_t j = 0; j < J; ++j) init.W[f * Jt + i * J + j] = bases[i].data()[f * J + j];
      const auto fit = nmf::nmf_fit(A, init, s.config.nmf.test_iters, false).model;
      for (std::size_t c = 0; c < Jt; ++c) {
        const auto part = nmf::component(fit, c);
        for (std::size_t k = 0; k < part.size(); ++k) parts[c / J][k] += part[k];
      }
    } else {
      const std::size_t M = s.config.nmf.width;
      if (M > N) throw ConfigError("nmfd: template width exceeds the mixture's frame count");
      auto init = nmf::nmfd_init(A, Jt, M, seed);
      for (std::size_t i = 0; i < I_true; ++i)
        std::copy(bases[i].data().begin(), bases[i].data().end(),
                  init.W.begin() + static_cast<std::ptrdiff_t>(i * J * F * M));
      const auto fit = nmf::nmfd_fit(A, init, s.config.nmf.test_iters, false).model;
      for (std::size_t c = 0; c < Jt; ++c) {
        const auto part = nmf::component(fit, c);
        for (std::size_t k = 0; k < part.size(); ++k) parts[c / J][k] += part[k];
      }
    }
    out.estimates = nmf::wiener_masks_from_parts(parts, ex.mixture);
  }
  return out;
}

}  // namespace xdc::harness
