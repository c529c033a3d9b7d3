#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "xdc/adam.hpp"
#include "xdc/checkpoint.hpp"
#include "xdc/harness/config.hpp"
#include "xdc/harness/dataset.hpp"
#include "xdc/harness/evaluate.hpp"
#include "xdc/harness/models.hpp"
#include "xdc/nmf.hpp"

namespace xdc::harness {

// Non-finite loss or gradient; the CLI maps it to exit code 3.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunReport {
  struct Validation {
    std::size_t epoch = 0, step = 0;
    double sdr = 0.0;
  };
  std::vector<double> step_loss;
  std::vector<double> epoch_loss;
  std::vector<Validation> validation;
  std::optional<std::size_t> best;  // index into validation
  std::size_t steps = 0;

  json to_json(const ExperimentConfig& c) const {
    json v = json::array();
    for (const auto& x : validation) v.push_back({{"epoch", x.epoch}, {"step", x.step}, {"sdr", x.sdr}});
    json j{{"model", harness::to_string(c.model)},
           {"config_hash", config_hash(c)},
           {"seed", c.seed},
           {"steps", steps},
           {"epoch_loss", epoch_loss},
           {"step_loss", step_loss},
           {"validation", v}};
    j["best_validation"] = best ? json(*best) : json(nullptr);
    return j;
  }
};

struct TrainResult {
  ModelState model;  // parameters of the retained checkpoint
  Checkpoint checkpoint;
  RunReport report;
};

using Logger = std::function<void(const std::string&)>;

namespace detail {

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Batch loss for the gradient-trained models on cropped examples.
inline Tensor batch_loss(const ModelState& s, const std::vector<Example>& batch) {
  const std::size_t F = batch.front().mixture.bins, N = batch.front().mixture.frames;
  std::vector<Features> feats;
  for (const auto& ex : batch) feats.push_back(make_features(ex));
  if (s.xdc) {
    std::vector<const std::vector<double>*> xs;
    std::vector<signal::LabelMatrix> labels;
    for (const auto& f : feats) xs.push_back(&f.magnitude), labels.push_back(f.labels);
    return s.xdc->loss(stack(xs, F, N), labels);
  }
  if (s.dc) {
    std::vector<const std::vector<double>*> xs;
    for (const auto& f : feats) xs.push_back(&f.log_features);
    const auto V = s.dc->embed(stack(xs, F, N));
    Tensor total;
    for (std::size_t b = 0; b < batch.size(); ++b) {
      const auto rows = feats[b].labels.active_bins();
      const Tensor l = dc::dc_loss(gather_rows(V[b], rows), dc::label_tensor(feats[b].labels, rows));
      total = b == 0 ? l : add(total, l);
    }
    return mul_scalar(total, 1.0 / static_cast<double>(batch.size()));
  }
  std::vector<danet::Example> ds;
  for (std::size_t b = 0; b < batch.size(); ++b) ds.push_back(make_danet_example(batch[b], feats[b]));
  return s.danet->loss(ds);
}

inline void permute_in_place(std::vector<std::size_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.index(i)]);
}

// Learns per-source bases from the training sources (scaled like the mixture).
inline void fit_nmf_bases(ModelState& s, const std::vector<Example>& train) {
  const auto& c = s.config;
  const std::size_t use = std::min(train.size(), c.nmf.train_examples);
  const std::size_t F = c.stft.bins(), J = c.nmf.components_per_source;
  for (std::size_t i = 0; i < s.nmf_bases.all().size(); ++i) {
    std::size_t total = 0;
    for (std::size_t e = 0; e < use; ++e) total += train[e].mixture.frames;
    nmf::Matrix A{F, total, std::vector<double>(F * total)};
    std::size_t off = 0;
    for (std::size_t e = 0; e < use; ++e) {
      const auto& ex = train[e];
      double peak = 0.0;
      for (const auto& v : ex.mixture.values) peak = std::max(peak, std::abs(v));
      const std::size_t N = ex.mixture.frames;
      for (std::size_t f = 0; f < F; ++f)
        for (std::size_t n = 0; n < N; ++n)
          A(f, off + n) = peak > 0.0 ? std::abs(ex.sources[i].at(f, n)) / peak : 0.0;
      off += N;
    }
    const auto seed = derive_seed(c.seed, {0x6e6d6662ULL, i});
    auto& W = s.nmf_bases.all()[i];
    if (c.model == ModelKind::Nmf) {
      const auto fit = nmf::nmf_fit(A, J, c.nmf.train_iters, seed).model;
      std::copy(fit.W.begin(), fit.W.end(), W.mutable_data().begin());
    } else {
      const auto fit = nmf::nmfd_fit(A, J, c.nmf.width, c.nmf.train_iters, seed).model;
      std::copy(fit.W.begin(), fit.W.end(), W.mutable_data().begin());
    }
  }
}

}  // namespace detail

// Trains the configured model. When `out` is non-empty the retained
// checkpoint (model.ckpt) and report.json are written there; the retained
// checkpoint is the best validation SDR, or the last state without a
// validation split.
inline TrainResult train(const ExperimentConfig& c, const std::filesystem::path& out = {},
                         const Logger& log = {}) {
  validate(c);
  auto say = [&](const std::string& m) {
    if (log) log(m);
  };
  const auto train_set = load_examples(c, Split::Train);
  const auto valid_set = load_examples(c, Split::Valid);
  if (train_set.empty()) throw ConfigError("train: the training split is empty");
  for (const auto& ex : train_set)
    if (ex.sources.size() != c.speakers_true())
      throw ConfigError("train: '" + ex.id + "' has " + std::to_string(ex.sources.size()) +
                        " sources, config expects " + std::to_string(c.speakers_true()));

  TrainResult r{build_model(c), {}, {}};
  ModelState& s = r.model;
  if (!out.empty()) std::filesystem::create_directories(out);
  auto persist = [&] {
    if (out.empty()) return;
    save_checkpoint(out / "model.ckpt", r.checkpoint);
    xdc::detail::write_file(out / "report.json", r.report.to_json(c).dump(2) + "\n");
  };

  if (c.model == ModelKind::Nmf || c.model == ModelKind::Nmfd) {
    detail::fit_nmf_bases(s, train_set);
    r.checkpoint = snapshot(s, {});
    persist();
    return r;
  }

  std::size_t crop_len = c.train.crop_frames;
  for (const auto& ex : train_set) crop_len = std::min(crop_len, ex.mixture.frames);
  const std::size_t B = std::min(c.train.batch_size, train_set.size());
  const std::size_t steps_per_epoch = (train_set.size() + B - 1) / B;
  Adam adam(s.parameters(), {c.train.learning_rate});
  if (s.xdc) adam.scale_learning_rate("templates.w_raw", c.xdc.template_lr_scale);
  const Separator sep = [&](const Example& ex) { return separate(s, ex); };

  CheckpointInfo best_info;
  r.checkpoint = snapshot(s, best_info);
  double best_sdr = -std::numeric_limits<double>::infinity();
  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= c.train.epochs; ++epoch) {
    Rng order_rng(derive_seed(c.seed, {0x65706f6368ULL, epoch}));
    std::vector<std::size_t> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    detail::permute_in_place(order, order_rng);
    double epoch_total = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      std::vector<Example> batch;
      for (std::size_t k = 0; k < B; ++k) {
        const auto& ex = train_set[order[(b * B + k) % order.size()]];
        const std::size_t start = order_rng.index(ex.mixture.frames - crop_len + 1);
        batch.push_back(crop(ex, start, crop_len));
      }
      Tape tape;
      GradientMap grads;
      double value = 0.0;
      {
        TapeScope scope(tape);
        const Tensor loss = detail::batch_loss(s, batch);
        value = loss.item();
        if (!std::isfinite(value)) {
          persist();
          throw DivergenceError("train: non-finite loss at step " + std::to_string(step + 1) +
                                "; last good checkpoint kept");
        }
        grads = backward(tape, loss, s.parameters());
      }
      try {
        adam.step(grads);
      } catch (const NonFiniteGradient& e) {
        persist();
        throw DivergenceError(std::string("train: ") + e.what() + " at step " +
                              std::to_string(step + 1) + "; last good checkpoint kept");
      }
      ++step;
      r.report.step_loss.push_back(value);
      epoch_total += value;
    }
    r.report.epoch_loss.push_back(epoch_total / static_cast<double>(steps_per_epoch));
    r.report.steps = step;
    std::string line = "epoch " + std::to_string(epoch) + " loss " + std::to_string(r.report.epoch_loss.back());
    const bool validate_now = !valid_set.empty() &&
                              (epoch % c.train.validate_every == 0 || epoch == c.train.epochs);
    if (validate_now) {
      const double sdr = mean_sdr(valid_set, sep);
      r.report.validation.push_back({epoch, step, sdr});
      line += " valid_sdr " + std::to_string(sdr);
      if (sdr > best_sdr) {
        best_sdr = sdr;
        r.report.best = r.report.validation.size() - 1;
        best_info = {epoch, step, sdr, true};
        r.checkpoint = snapshot(s, best_info);
      }
    } else if (valid_set.empty()) {
      best_info = {epoch, step, 0.0, false};
      r.checkpoint = snapshot(s, best_info);
    }
    say(line);
  }
  restore_parameters(r.checkpoint, s.parameters());
  persist();
  return r;
}

}  // namespace xdc::harness
