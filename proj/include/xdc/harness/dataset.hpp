#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "xdc/danet.hpp"
#include "xdc/dc.hpp"
#include "xdc/harness/config.hpp"
#include "xdc/ops.hpp"
#include "xdc/signal/labels.hpp"
#include "xdc/signal/mixture.hpp"
#include "xdc/signal/stft.hpp"
#include "xdc/signal/wav.hpp"

namespace xdc::harness {

enum class Split { Train, Valid, Test };

inline std::string to_string(Split s) {
  return s == Split::Train ? "train" : s == Split::Valid ? "valid" : "test";
}

inline Split parse_split(const std::string& s) {
  if (s == "train") return Split::Train;
  if (s == "valid") return Split::Valid;
  if (s == "test") return Split::Test;
  throw ConfigError("manifest: unknown split '" + s + "'");
}

// One mixture: unweighted source waveforms plus the weights applied when mixing.
struct Utterance {
  std::string id;
  Split split = Split::Train;
  std::vector<signal::Waveform> sources;
  std::vector<double> weights;
};

// Spectral view of an utterance; sources are already weighted.
struct Example {
  std::string id;
  signal::ComplexSpectrogram mixture;
  std::vector<signal::ComplexSpectrogram> sources;
  std::size_t samples = 0;
  int sample_rate_hz = 8000;
};

inline std::size_t split_count(const ExperimentConfig& c, Split s) {
  return s == Split::Train ? c.data.train_count
         : s == Split::Valid ? c.data.valid_count
                             : c.data.test_count;
}

inline signal::WeightMode weight_mode(const ExperimentConfig& c, Split s) {
  return signal::parse_weight_mode(s == Split::Test ? c.data.test_weight_mode
                                                    : c.data.train_weight_mode);
}

inline std::string utterance_id(Split s, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s-%04zu", to_string(s).c_str(), index);
  return buf;
}

// Deterministic in (seed, split, index) alone, so splits never share sources.
inline Utterance synth_utterance(const ExperimentConfig& c, Split split, std::size_t index) {
  const std::uint64_t base = derive_seed(c.seed, {0x73796e7468ULL, static_cast<std::uint64_t>(split), index});
  Utterance u{utterance_id(split, index), split, {}, {}};
  signal::EnvelopeSpec env;
  env.constant = c.data.constant_envelope;
  env.floor = c.data.envelope_floor;
  for (std::size_t i = 0; i < c.data.f0_hz.size(); ++i)
    u.sources.push_back(signal::gen_harmonic_source(c.data.f0_hz[i], c.data.partials,
                                                    c.data.duration_s, c.sample_rate_hz, env,
                                                    derive_seed(base, {i})));
  u.weights = signal::mixing_weights(u.sources.size(), weight_mode(c, split), base);
  return u;
}

inline Example to_example(const Utterance& u, const signal::StftParams& p) {
  const auto m = signal::synth_mixture(u.sources, signal::WeightMode::Deterministic, 0, p);
  Example ex{u.id, m.mixture, m.sources, u.sources.front().samples.size(),
             u.sources.front().sample_rate_hz};
  // Apply the utterance's own weights (synth_mixture was asked for unit weights).
  for (auto& v : ex.mixture.values) v = 0.0;
  for (std::size_t i = 0; i < ex.sources.size(); ++i) {
    for (auto& v : ex.sources[i].values) v *= u.weights[i];
    for (std::size_t k = 0; k < ex.mixture.values.size(); ++k)
      ex.mixture.values[k] += ex.sources[i].values[k];
  }
  return ex;
}

// ---- manifest (JSON lines) --------------------------------------------------

struct ManifestRecord {
  std::string id;
  Split split = Split::Train;
  std::vector<std::string> sources;  // WAV paths, relative to the manifest or absolute
  std::vector<double> weights;
};

inline std::vector<ManifestRecord> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("manifest: cannot open '" + path.string() + "'");
  std::vector<ManifestRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json j;
    try {
      j = json::parse(line);
      ManifestRecord r;
      r.id = j.at("id").get<std::string>();
      r.split = parse_split(j.at("split").get<std::string>());
      r.sources = j.at("sources").get<std::vector<std::string>>();
      r.weights = j.value("weights", std::vector<double>(r.sources.size(), 1.0));
      if (r.sources.empty() || r.weights.size() != r.sources.size())
        throw ConfigError("manifest " + where + ": need matching non-empty sources and weights");
      out.push_back(std::move(r));
    } catch (const json::exception& e) {
      throw ConfigError("manifest " + where + ": " + e.what());
    }
  }
  if (out.empty()) throw ConfigError("manifest: '" + path.string() + "' has no records");
  return out;
}

inline std::string manifest_line(const ManifestRecord& r, const std::string& config_hash,
                                 std::uint64_t seed) {
  json j{{"id", r.id},           {"split", to_string(r.split)}, {"sources", r.sources},
         {"weights", r.weights}, {"config_hash", config_hash},  {"seed", seed}};
  return j.dump();
}

inline Utterance load_utterance(const ManifestRecord& r, const std::filesystem::path& manifest) {
  Utterance u{r.id, r.split, {}, r.weights};
  for (const auto& s : r.sources) {
    std::filesystem::path p(s);
    if (p.is_relative()) p = manifest.parent_path() / p;
    u.sources.push_back(signal::read_wav(p));
  }
  for (const auto& w : u.sources)
    if (w.samples.size() != u.sources[0].samples.size() ||
        w.sample_rate_hz != u.sources[0].sample_rate_hz)
      throw ConfigError("manifest: sources of '" + r.id + "' differ in length or sample rate");
  return u;
}

// All utterances of one split, synthesized or read from the manifest.
inline std::vector<Utterance> load_split(const ExperimentConfig& c, Split s) {
  std::vector<Utterance> out;
  if (c.data.source == "synthetic") {
    for (std::size_t i = 0; i < split_count(c, s); ++i) out.push_back(synth_utterance(c, s, i));
    return out;
  }
  const std::filesystem::path mp(c.data.manifest);
  for (const auto& r : read_manifest(mp))
    if (r.split == s) out.push_back(load_utterance(r, mp));
  return out;
}

inline std::vector<Example> load_examples(const ExperimentConfig& c, Split s) {
  std::vector<Example> out;
  for (const auto& u : load_split(c, s)) out.push_back(to_example(u, c.stft));
  return out;
}

// ---- training views ---------------------------------------------------------

inline signal::ComplexSpectrogram crop_frames(const signal::ComplexSpectrogram& s,
                                              std::size_t start, std::size_t len) {
  signal::ComplexSpectrogram out{s.bins, len, s.stft, std::vector<std::complex<double>>(s.bins * len)};
  for (std::size_t f = 0; f < s.bins; ++f)
    std::copy_n(s.values.begin() + static_cast<std::ptrdiff_t>(f * s.frames + start), len,
                out.values.begin() + static_cast<std::ptrdiff_t>(f * len));
  return out;
}

inline Example crop(const Example& ex, std::size_t start, std::size_t len) {
  Example out{ex.id, crop_frames(ex.mixture, start, len), {}, 0, ex.sample_rate_hz};
  for (const auto& s : ex.sources) out.sources.push_back(crop_frames(s, start, len));
  return out;
}

// Everything a model consumes for one (possibly cropped) mixture.
struct Features {
  std::size_t bins = 0, frames = 0;
  std::vector<double> magnitude;     // scaled |X|, f-major
  std::vector<double> log_features;  // standardized log spectrogram, f-major
  signal::LabelMatrix labels;
};

inline Features make_features(const Example& ex) {
  Features f;
  f.bins = ex.mixture.bins;
  f.frames = ex.mixture.frames;
  f.magnitude = signal::scale_amplitude(ex.mixture).values;
  f.log_features = dc::standardize_log(signal::log_spectrogram(ex.mixture));
  f.labels = signal::dominant_labels(ex.sources, signal::silence_mask(ex.mixture));
  return f;
}

inline danet::Example make_danet_example(const Example& ex, const Features& f) {
  std::vector<double> y(f.labels.y.begin(), f.labels.y.end());
  return {Tensor({1, f.bins, f.frames}, f.log_features),
          danet::bin_column(f.magnitude, f.bins, f.frames),
          Tensor({f.labels.bins, f.labels.speakers}, std::move(y)),
          danet::wiener_targets(ex.mixture, ex.sources)};
}

// Stacks per-example F × N arrays into a [B, F, N] tensor.
inline Tensor stack(const std::vector<const std::vector<double>*>& items, std::size_t F,
                    std::size_t N) {
  std::vector<double> v;
  v.reserve(items.size() * F * N);
  for (const auto* it : items) v.insert(v.end(), it->begin(), it->end());
  return Tensor({items.size(), F, N}, std::move(v));
}

// ---- gen-data ---------------------------------------------------------------

// Writes every utterance's sources as PCM16 WAVs plus manifest.jsonl under dir.
// Manifest-sourced configs are re-emitted pointing at the original files,
// which are never rewritten.
inline std::filesystem::path gen_data(const ExperimentConfig& c, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::string hash = config_hash(c);
  std::ostringstream manifest;
  if (c.data.source == "manifest") {
    const std::filesystem::path mp(c.data.manifest);
    for (auto r : read_manifest(mp)) {
      load_utterance(r, mp);  // validates readability and shapes
      for (auto& s : r.sources) {
        std::filesystem::path p(s);
        if (p.is_relative()) s = std::filesystem::absolute(mp.parent_path() / p).lexically_normal().string();
      }
      manifest << manifest_line(r, hash, c.seed) << '\n';
    }
  } else {
    std::filesystem::create_directories(dir / "wav");
    for (auto split : {Split::Train, Split::Valid, Split::Test})
      for (std::size_t i = 0; i < split_count(c, split); ++i) {
        const auto u = synth_utterance(c, split, i);
        ManifestRecord r{u.id, split, {}, u.weights};
        for (std::size_t s = 0; s < u.sources.size(); ++s) {
          const std::string rel = "wav/" + u.id + "_s" + std::to_string(s) + ".wav";
          signal::write_wav(dir / rel, u.sources[s]);
          r.sources.push_back(rel);
        }
        manifest << manifest_line(r, hash, c.seed) << '\n';
      }
  }
  const auto path = dir / "manifest.jsonl";
  xdc::detail::write_file(path, manifest.str());
  return path;
}

}  // namespace xdc::harness
