#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "xdc/dc.hpp"
#include "xdc/signal/mixture.hpp"
#include "xdc/signal/stft.hpp"
#include "xdc/xdc.hpp"

namespace xdc::harness {

using json = nlohmann::json;

// Bad or inconsistent configuration; the CLI maps it to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { Xdc, DcGatedConv, Nmf, Nmfd, Danet };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::Xdc: return "xdc";
    case ModelKind::DcGatedConv: return "dc-gatedconv";
    case ModelKind::Nmf: return "nmf";
    case ModelKind::Nmfd: return "nmfd";
    case ModelKind::Danet: return "danet";
  }
  return "?";
}

inline ModelKind parse_model_kind(const std::string& s) {
  for (auto k : {ModelKind::Xdc, ModelKind::DcGatedConv, ModelKind::Nmf, ModelKind::Nmfd,
                 ModelKind::Danet})
    if (to_string(k) == s) return k;
  throw ConfigError("unknown model kind '" + s + "' (expected xdc, dc-gatedconv, nmf, nmfd, danet)");
}

struct DataConfig {
  std::string source = "synthetic";  // synthetic | manifest
  std::string manifest;              // JSON-lines file when source == manifest
  std::size_t train_count = 200;
  std::size_t valid_count = 16;
  std::size_t test_count = 32;
  std::vector<double> f0_hz{100.0, 160.0};
  int partials = 8;
  double duration_s = 2.0;
  double envelope_floor = 0.15;
  bool constant_envelope = false;
  std::string train_weight_mode = "deterministic";
  std::string test_weight_mode = "deterministic";
};

struct TrainConfig {
  std::size_t epochs = 40;
  std::size_t batch_size = 4;
  std::size_t crop_frames = 100;
  double learning_rate = 1e-3;
  std::size_t validate_every = 5;  // epochs
};

struct NmfConfig {
  std::size_t components_per_source = 8;
  std::size_t width = 15;      // NMFD template width
  int train_iters = 200;
  int test_iters = 100;
  std::size_t train_examples = 20;  // training mixtures used to learn bases
};

struct ExperimentConfig {
  ModelKind model = ModelKind::Xdc;
  std::uint64_t seed = 0;
  signal::StftParams stft;
  int sample_rate_hz = 8000;
  DataConfig data;
  TrainConfig train;
  model::XdcConfig xdc;
  dc::GatedConvConfig dc;
  std::size_t kmeans_iters = 100;
  NmfConfig nmf;

  std::size_t speakers_true() const {
    return data.source == "synthetic" ? data.f0_hz.size() : manifest_speakers;
  }
  std::size_t manifest_speakers = 2;  // filled from the manifest when used
};

// ---- JSON mapping -----------------------------------------------------------

inline json to_json(const ExperimentConfig& c) {
  json j;
  j["model"] = to_string(c.model);
  j["seed"] = c.seed;
  j["stft"] = {{"window", c.stft.window_size}, {"hop", c.stft.hop}, {"sample_rate_hz", c.sample_rate_hz}};
  j["data"] = {{"source", c.data.source},
               {"manifest", c.data.manifest},
               {"train_count", c.data.train_count},
               {"valid_count", c.data.valid_count},
               {"test_count", c.data.test_count},
               {"f0_hz", c.data.f0_hz},
               {"partials", c.data.partials},
               {"duration_s", c.data.duration_s},
               {"envelope_floor", c.data.envelope_floor},
               {"constant_envelope", c.data.constant_envelope},
               {"train_weight_mode", c.data.train_weight_mode},
               {"test_weight_mode", c.data.test_weight_mode},
               {"speakers", c.manifest_speakers}};
  j["train"] = {{"epochs", c.train.epochs},
                {"batch_size", c.train.batch_size},
                {"crop_frames", c.train.crop_frames},
                {"learning_rate", c.train.learning_rate},
                {"validate_every", c.train.validate_every}};
  j["xdc"] = {{"speakers", c.xdc.speakers}, {"templates", c.xdc.templates},
              {"width", c.xdc.width},       {"channels", c.xdc.channels},
              {"layers", c.xdc.layers},     {"kernel", c.xdc.kernel},
              {"lambda", c.xdc.lambda},     {"eps", c.xdc.eps},
              {"template_lr_scale", c.xdc.template_lr_scale}};
  j["dc"] = {{"embedding_dim", c.dc.embedding_dim}, {"channels", c.dc.channels},
             {"blocks", c.dc.blocks},               {"kernel", c.dc.kernel},
             {"kmeans_iters", c.kmeans_iters}};
  j["nmf"] = {{"components_per_source", c.nmf.components_per_source},
              {"width", c.nmf.width},
              {"train_iters", c.nmf.train_iters},
              {"test_iters", c.nmf.test_iters},
              {"train_examples", c.nmf.train_examples}};
  return j;
}

namespace detail {

// Copies j[key] into out when present; rejects wrong types with the key path.
template <class T>
void read(const json& j, const char* key, T& out, const std::string& path) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("config: '" + path + "." + key + "' has the wrong type (" +
                      j.at(key).dump() + ")");
  }
}

inline void reject_unknown(const json& j, std::initializer_list<const char*> known,
                           const std::string& path) {
  if (!j.is_object()) throw ConfigError("config: '" + path + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : known) ok = ok || it.key() == k;
    if (!ok) throw ConfigError("config: unknown key '" + path + "." + it.key() + "'");
  }
}

}  // namespace detail

inline void validate(const ExperimentConfig& c) {
  auto need = [](bool ok, const std::string& msg) {
    if (!ok) throw ConfigError("config: " + msg);
  };
  need(c.stft.window_size >= 2 && c.stft.hop >= 1 && c.stft.hop <= c.stft.window_size,
       "stft window/hop must satisfy 1 <= hop <= window");
  need(c.sample_rate_hz > 0, "sample_rate_hz must be positive");
  need(c.data.source == "synthetic" || c.data.source == "manifest",
       "data.source must be 'synthetic' or 'manifest'");
  if (c.data.source == "manifest") {
    need(!c.data.manifest.empty(), "data.manifest is required when data.source is 'manifest'");
    need(std::filesystem::exists(c.data.manifest),
         "data.manifest '" + c.data.manifest + "' does not exist");
  } else {
    need(!c.data.f0_hz.empty(), "data.f0_hz must list at least one source");
    need(c.data.partials >= 1 && c.data.duration_s > 0.0, "data.partials and duration_s must be positive");
    for (double f0 : c.data.f0_hz)
      need(f0 > 0.0 && f0 * c.data.partials < c.sample_rate_hz / 2.0,
           "data.f0_hz entry " + std::to_string(f0) + " is non-positive or aliases");
  }
  try {
    signal::parse_weight_mode(c.data.train_weight_mode);
    signal::parse_weight_mode(c.data.test_weight_mode);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  need(c.train.batch_size >= 1, "train.batch_size must be >= 1");
  need(c.train.crop_frames >= 1, "train.crop_frames must be >= 1");
  need(c.train.learning_rate > 0.0, "train.learning_rate must be > 0");
  need(c.train.validate_every >= 1, "train.validate_every must be >= 1");
  need(c.data.train_count >= 1 && c.data.test_count >= 1, "data split sizes must be >= 1");
  try {
    c.xdc.validate();
    c.dc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  need(c.xdc.freq_bins == c.stft.bins() && c.dc.freq_bins == c.stft.bins(),
       "model frequency bins must equal window/2 + 1");
  need(c.kmeans_iters >= 1, "dc.kmeans_iters must be >= 1");
  need(c.nmf.components_per_source >= 1 && c.nmf.width >= 1 && c.nmf.train_iters >= 0 &&
           c.nmf.test_iters >= 0 && c.nmf.train_examples >= 1,
       "nmf settings must be positive");
  if (c.model == ModelKind::Xdc)
    need(c.xdc.speakers >= c.speakers_true(),
         "xdc.speakers (" + std::to_string(c.xdc.speakers) + ") is below the true source count (" +
             std::to_string(c.speakers_true()) + ")");
}

// Applies the keys present in j over `base` and re-derives dependent fields.
inline ExperimentConfig from_json(const json& j, ExperimentConfig c = {}) {
  using detail::read;
  detail::reject_unknown(j, {"model", "seed", "stft", "data", "train", "xdc", "dc", "nmf"}, "config");
  if (j.contains("model")) {
    std::string m;
    read(j, "model", m, "config");
    c.model = parse_model_kind(m);
  }
  read(j, "seed", c.seed, "config");
  if (j.contains("stft")) {
    const auto& s = j["stft"];
    detail::reject_unknown(s, {"window", "hop", "sample_rate_hz"}, "stft");
    read(s, "window", c.stft.window_size, "stft");
    read(s, "hop", c.stft.hop, "stft");
    read(s, "sample_rate_hz", c.sample_rate_hz, "stft");
  }
  if (j.contains("data")) {
    const auto& d = j["data"];
    detail::reject_unknown(d, {"source", "manifest", "train_count", "valid_count", "test_count",
                               "f0_hz", "partials", "duration_s", "envelope_floor",
                               "constant_envelope", "train_weight_mode", "test_weight_mode",
                               "speakers"},
                           "data");
    read(d, "source", c.data.source, "data");
    read(d, "manifest", c.data.manifest, "data");
    read(d, "train_count", c.data.train_count, "data");
    read(d, "valid_count", c.data.valid_count, "data");
    read(d, "test_count", c.data.test_count, "data");
    read(d, "f0_hz", c.data.f0_hz, "data");
    read(d, "partials", c.data.partials, "data");
    read(d, "duration_s", c.data.duration_s, "data");
    read(d, "envelope_floor", c.data.envelope_floor, "data");
    read(d, "constant_envelope", c.data.constant_envelope, "data");
    read(d, "train_weight_mode", c.data.train_weight_mode, "data");
    read(d, "test_weight_mode", c.data.test_weight_mode, "data");
    read(d, "speakers", c.manifest_speakers, "data");
  }
  if (j.contains("train")) {
    const auto& t = j["train"];
    detail::reject_unknown(t, {"epochs", "batch_size", "crop_frames", "learning_rate", "validate_every"},
                           "train");
    read(t, "epochs", c.train.epochs, "train");
    read(t, "batch_size", c.train.batch_size, "train");
    read(t, "crop_frames", c.train.crop_frames, "train");
    read(t, "learning_rate", c.train.learning_rate, "train");
    read(t, "validate_every", c.train.validate_every, "train");
  }
  if (j.contains("xdc")) {
    const auto& x = j["xdc"];
    detail::reject_unknown(x, {"speakers", "templates", "width", "channels", "layers", "kernel",
                               "lambda", "eps", "template_lr_scale"},
                           "xdc");
    read(x, "speakers", c.xdc.speakers, "xdc");
    read(x, "templates", c.xdc.templates, "xdc");
    read(x, "width", c.xdc.width, "xdc");
    read(x, "channels", c.xdc.channels, "xdc");
    read(x, "layers", c.xdc.layers, "xdc");
    read(x, "kernel", c.xdc.kernel, "xdc");
    read(x, "lambda", c.xdc.lambda, "xdc");
    read(x, "eps", c.xdc.eps, "xdc");
    read(x, "template_lr_scale", c.xdc.template_lr_scale, "xdc");
  }
  if (j.contains("dc")) {
    const auto& d = j["dc"];
    detail::reject_unknown(d, {"embedding_dim", "channels", "blocks", "kernel", "kmeans_iters"}, "dc");
    read(d, "embedding_dim", c.dc.embedding_dim, "dc");
    read(d, "channels", c.dc.channels, "dc");
    read(d, "blocks", c.dc.blocks, "dc");
    read(d, "kernel", c.dc.kernel, "dc");
    read(d, "kmeans_iters", c.kmeans_iters, "dc");
  }
  if (j.contains("nmf")) {
    const auto& n = j["nmf"];
    detail::reject_unknown(n, {"components_per_source", "width", "train_iters", "test_iters",
                                   "train_examples"},
                           "nmf");
    read(n, "components_per_source", c.nmf.components_per_source, "nmf");
    read(n, "width", c.nmf.width, "nmf");
    read(n, "train_iters", c.nmf.train_iters, "nmf");
    read(n, "test_iters", c.nmf.test_iters, "nmf");
    read(n, "train_examples", c.nmf.train_examples, "nmf");
  }
  c.xdc.freq_bins = c.dc.freq_bins = c.stft.bins();
  return c;
}

inline ExperimentConfig default_config() {
  ExperimentConfig c;
  c.xdc.freq_bins = c.dc.freq_bins = c.stft.bins();
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config: '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return from_json(j, default_config());
}

// FNV-1a over the canonical (key-sorted, compact) JSON text.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

}  // namespace xdc::harness
