#pragma once

// X-DC: a non-negative convolutional encoder produces per-speaker template
// activations, a bank of non-negative spectrogram templates turns them into
// per-speaker magnitudes, and their square-root Wiener normalization doubles
// as the deep-clustering embedding.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "xdc/dc.hpp"
#include "xdc/io.hpp"
#include "xdc/nn.hpp"
#include "xdc/ops.hpp"
#include "xdc/random.hpp"
#include "xdc/signal/labels.hpp"

namespace xdc::model {

struct XdcConfig {
  std::size_t freq_bins = 128;  // F
  std::size_t speakers = 2;     // I
  std::size_t templates = 8;    // J
  std::size_t width = 15;       // M
  std::size_t channels = 64;    // C
  std::size_t layers = 3;       // encoder depth
  std::size_t kernel = 3;
  double lambda = 1e-3;
  double eps = 1e-5;
  // Adam learning-rate multiplier for W_raw, matched to its U(0, 1/(JM))
  // init range; at the full rate the ReLU-clipped entries die within tens of
  // steps.
  double template_lr_scale = 1e-2;

  std::size_t activation_channels() const { return speakers * templates; }

  void validate() const {
    if (freq_bins == 0 || speakers == 0 || templates == 0 || width == 0 || channels == 0 ||
        layers == 0 || kernel == 0)
      throw std::invalid_argument("xdc config: F, I, J, M, C, L and kernel must be >= 1");
    if (kernel % 2 == 0)
      throw std::invalid_argument("xdc config: kernel " + std::to_string(kernel) + " must be odd");
    if (!(lambda >= 0.0)) throw std::invalid_argument("xdc config: lambda must be >= 0");
    if (!(eps > 0.0)) throw std::invalid_argument("xdc config: eps must be > 0");
    if (!(template_lr_scale >= 0.0) || !std::isfinite(template_lr_scale))
      throw std::invalid_argument("xdc config: template_lr_scale must be finite and >= 0");
  }
};

// W[f, j, m] = max(0, W_raw[j, f, m]), laid out as a conv1d weight.
inline Tensor effective_kernel(const Tensor& W_raw) {
  if (W_raw.rank() != 3) throw ShapeError("templates: expected [J,F,M], got " + to_string(W_raw.shape()));
  return permute(relu(W_raw), {1, 0, 2});
}

// H: [B·I, J, N] activations → [B·I, F, N]; h̃_{f,n} = Σ_j Σ_m w_{j,f,m} h_{j,n−m}
// with activations before the first frame read as zero.
inline Tensor template_convolve(const Tensor& H, const Tensor& W_raw) {
  if (H.rank() != 3 || W_raw.rank() != 3 || H.dim(1) != W_raw.dim(0))
    throw ShapeError("template_convolve: activations " + to_string(H.shape()) +
                     " vs templates " + to_string(W_raw.shape()));
  const std::size_t M = W_raw.dim(2);
  return conv1d(H, effective_kernel(W_raw), {M - 1, 0, 1, true});
}

// Ht: [..., I, F, N] with the speaker axis given; ṽ = h̃ / (‖h̃‖₂ over speakers + ε).
inline Tensor normalize_masks(const Tensor& Ht, double eps, std::size_t speaker_axis = 0) {
  const Tensor norm = add_scalar(sqrt(sum_axis(square(Ht), speaker_axis, true)), eps);
  return div(Ht, broadcast_to(norm, Ht.shape()));
}

// (λ / 4K)·‖X − Σ_i H̃⁽ⁱ⁾‖_F² for X [F, N] and Ht [I, F, N].
inline Tensor recon_loss(const Tensor& X, const Tensor& Ht, double lambda) {
  if (Ht.rank() != 3 || X.rank() != 2 || Ht.dim(1) != X.dim(0) || Ht.dim(2) != X.dim(1))
    throw ShapeError("recon_loss: X " + to_string(X.shape()) + " vs H_tilde " +
                     to_string(Ht.shape()));
  const double K = static_cast<double>(X.size());
  return mul_scalar(frobenius_sq(sub(X, sum_axis(Ht, 0))), lambda / (4.0 * K));
}

// Vt [I, F, N] → K × I with row k = n·F + f.
inline Tensor masks_to_embedding(const Tensor& Vt) {
  const std::size_t I = Vt.dim(0), F = Vt.dim(1), N = Vt.dim(2);
  return reshape(permute(Vt, {2, 1, 0}), {N * F, I});
}

// DC term on non-silent bins plus the reconstruction term on all bins. Y may
// have fewer speakers than mask channels (over-provisioned I).
inline Tensor xdc_utterance_loss(const Tensor& X, const signal::LabelMatrix& Y, const Tensor& Ht,
                                 const Tensor& Vt, double lambda) {
  if (Y.bins != X.size() || Y.speakers == 0 || Y.speakers > Vt.dim(0))
    throw ShapeError("xdc_loss: labels " + std::to_string(Y.bins) + "x" +
                     std::to_string(Y.speakers) + " vs masks " + to_string(Vt.shape()));
  const auto rows = Y.active_bins();
  const Tensor V = gather_rows(masks_to_embedding(Vt), rows);
  Tensor loss = dc::dc_loss(V, dc::label_tensor(Y, rows));
  if (lambda > 0.0) loss = add(loss, recon_loss(X, Ht, lambda));
  return loss;
}

struct Forward {
  Tensor H;   // [B, I, J, N]
  Tensor Ht;  // [B, I, F, N]
  Tensor Vt;  // [B, I, F, N]
};

class XdcModel {
 public:
  XdcModel(const XdcConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg.validate();
    Rng rng(derive_seed(seed, {0x78646cULL}));
    std::size_t cin = cfg.freq_bins;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const std::size_t cout = l + 1 == cfg.layers ? cfg.activation_channels() : cfg.channels;
      encoder_.push_back(
          nn::make_conv(params_, "enc.l" + std::to_string(l), cin, cout, cfg.kernel, rng));
      cin = cout;
    }
    const std::size_t J = cfg.templates, F = cfg.freq_bins, M = cfg.width;
    std::vector<double> w(J * F * M);
    const double hi = 1.0 / static_cast<double>(J * M);
    for (auto& v : w) v = rng.uniform(0.0, hi);
    W_raw_ = params_.add("templates.w_raw", {J, F, M}, std::move(w));
  }

  const XdcConfig& config() const { return cfg_; }
  nn::ParameterList& parameters() { return params_; }
  const nn::ParameterList& parameters() const { return params_; }
  const Tensor& raw_templates() const { return W_raw_; }

  // X: [B, F, N] scaled magnitude → non-negative activations [B, I, J, N].
  Tensor activations(const Tensor& X) const {
    if (X.rank() != 3 || X.dim(1) != cfg_.freq_bins)
      throw ShapeError("xdc encoder: expected [B, " + std::to_string(cfg_.freq_bins) +
                       ", N], got " + to_string(X.shape()));
    Tensor h = X;
    for (std::size_t l = 0; l < encoder_.size(); ++l) {
      h = encoder_[l](h);
      h = l + 1 == encoder_.size() ? softplus(h) : relu(h);
    }
    return reshape(h, {X.dim(0), cfg_.speakers, cfg_.templates, X.dim(2)});
  }

  // Everything downstream of the activations; H: [B, I, J, N].
  Forward from_activations(const Tensor& H) const {
    const std::size_t B = H.dim(0), I = H.dim(1), J = H.dim(2), N = H.dim(3);
    const Tensor flat = template_convolve(reshape(H, {B * I, J, N}), W_raw_);
    const Tensor Ht = reshape(flat, {B, I, cfg_.freq_bins, N});
    return {H, Ht, normalize_masks(Ht, cfg_.eps, 1)};
  }

  Forward forward(const Tensor& X) const { return from_activations(activations(X)); }

  // Mean utterance loss over the batch. X: [B, F, N]; one label matrix per item.
  Tensor loss(const Tensor& X, const std::vector<signal::LabelMatrix>& Y) const {
    return batch_loss(X, Y, forward(X));
  }

  Tensor batch_loss(const Tensor& X, const std::vector<signal::LabelMatrix>& Y,
                    const Forward& fw) const {
    const std::size_t B = X.dim(0), F = X.dim(1), N = X.dim(2), I = cfg_.speakers;
    if (Y.size() != B)
      throw ShapeError("xdc_loss: " + std::to_string(Y.size()) + " label sets for batch of " +
                       std::to_string(B));
    Tensor total;
    for (std::size_t b = 0; b < B; ++b) {
      const Tensor Xb = reshape(slice(X, 0, b, 1), {F, N});
      const Tensor Htb = reshape(slice(fw.Ht, 0, b, 1), {I, F, N});
      const Tensor Vtb = reshape(slice(fw.Vt, 0, b, 1), {I, F, N});
      const Tensor l = xdc_utterance_loss(Xb, Y[b], Htb, Vtb, cfg_.lambda);
      total = b == 0 ? l : add(total, l);
    }
    return mul_scalar(total, 1.0 / static_cast<double>(B));
  }

 private:
  XdcConfig cfg_;
  nn::ParameterList params_;
  std::vector<nn::Conv> encoder_;
  Tensor W_raw_;
};

// Plain-array view of one utterance's masks.
struct MaskSet {
  std::size_t speakers = 0, bins = 0, frames = 0;
  std::vector<double> H;   // I × J × N
  std::vector<double> Ht;  // I × F × N
  std::vector<double> Vt;  // I × F × N

  std::vector<double> mask(std::size_t i) const {
    const std::size_t K = bins * frames;
    return {Vt.begin() + static_cast<std::ptrdiff_t>(i * K),
            Vt.begin() + static_cast<std::ptrdiff_t>((i + 1) * K)};
  }
};

// Forward pass without recording; X is one F × N scaled magnitude (f-major).
inline MaskSet infer_masks(const XdcModel& model, const std::vector<double>& X, std::size_t N) {
  const std::size_t F = model.config().freq_bins;
  if (X.size() != F * N)
    throw ShapeError("infer_masks: " + std::to_string(X.size()) + " values for " +
                     std::to_string(F) + "x" + std::to_string(N));
  Tape* saved = Tape::active();
  Tape::active() = nullptr;
  Forward fw;
  try {
    fw = model.forward(Tensor({1, F, N}, X));
  } catch (...) {
    Tape::active() = saved;
    throw;
  }
  Tape::active() = saved;
  return {model.config().speakers, F, N, fw.H.values(), fw.Ht.values(), fw.Vt.values()};
}

// Indices of the `keep` channels with the largest ‖H̃⁽ⁱ⁾‖_F, in index order;
// ties go to the lower index.
inline std::vector<std::size_t> select_masks(const std::vector<double>& Ht, std::size_t speakers,
                                             std::size_t keep) {
  if (keep > speakers)
    throw std::invalid_argument("select_masks: cannot keep " + std::to_string(keep) + " of " +
                                std::to_string(speakers) + " channels");
  if (speakers == 0 || Ht.size() % speakers != 0)
    throw std::invalid_argument("select_masks: mask buffer does not split into channels");
  const std::size_t K = Ht.size() / speakers;
  std::vector<double> norm(speakers, 0.0);
  for (std::size_t i = 0; i < speakers; ++i)
    for (std::size_t k = 0; k < K; ++k) norm[i] += Ht[i * K + k] * Ht[i * K + k];
  std::vector<std::size_t> order(speakers);
  for (std::size_t i = 0; i < speakers; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return norm[a] > norm[b]; });
  order.resize(keep);
  std::sort(order.begin(), order.end());
  return order;
}

// ---- template export --------------------------------------------------------

struct TemplateDump {
  std::size_t templates = 0, bins = 0, width = 0;
  std::vector<double> values;  // J × F × M, effective (non-negative) kernel
};

inline TemplateDump effective_templates(const XdcModel& model) {
  const auto& w = model.raw_templates();
  TemplateDump d{w.dim(0), w.dim(1), w.dim(2), w.values()};
  for (auto& v : d.values) v = std::max(0.0, v);
  return d;
}

namespace detail {

inline std::string format_exact(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
  xdc::detail::write_file(p, s);
}

inline std::string template_csv(const TemplateDump& d, double power) {
  std::ostringstream os;
  os << "template,freq_bin";
  for (std::size_t m = 0; m < d.width; ++m) os << ",m" << m;
  os << '\n';
  for (std::size_t j = 0; j < d.templates; ++j)
    for (std::size_t f = 0; f < d.bins; ++f) {
      os << j << ',' << f;
      for (std::size_t m = 0; m < d.width; ++m) {
        const double v = d.values[(j * d.bins + f) * d.width + m];
        os << ',' << format_exact(power == 1.0 ? v : std::pow(v, power));
      }
      os << '\n';
    }
  return os.str();
}

}  // namespace detail

inline constexpr double kDisplayPower = 0.2;

// Writes templates.csv (exact values), templates_pow0.2.csv (for display) and,
// when given, activations_speaker<i>.csv with rows j and columns n.
inline void export_templates(const XdcModel& model, const std::filesystem::path& dir,
                             const MaskSet* activations = nullptr) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("export_templates: cannot create '" + dir.string() + "': " + ec.message());
  const auto d = effective_templates(model);
  detail::write_text(dir / "templates.csv", detail::template_csv(d, 1.0));
  detail::write_text(dir / "templates_pow0.2.csv", detail::template_csv(d, kDisplayPower));
  if (!activations) return;
  const std::size_t J = model.config().templates, N = activations->frames;
  for (std::size_t i = 0; i < activations->speakers; ++i) {
    std::ostringstream os;
    os << "template";
    for (std::size_t n = 0; n < N; ++n) os << ",n" << n;
    os << '\n';
    for (std::size_t j = 0; j < J; ++j) {
      os << j;
      for (std::size_t n = 0; n < N; ++n)
        os << ',' << detail::format_exact(activations->H[(i * J + j) * N + n]);
      os << '\n';
    }
    detail::write_text(dir / ("activations_speaker" + std::to_string(i) + ".csv"), os.str());
  }
}

inline TemplateDump import_templates(const std::filesystem::path& csv) {
  std::ifstream in(csv);
  if (!in) throw IoError("import_templates: cannot open '" + csv.string() + "'");
  std::string line;
  if (!std::getline(in, line)) throw IoError("import_templates: '" + csv.string() + "' is empty");
  TemplateDump d;
  d.width = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ++row;
    std::istringstream ls(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (cells.size() != d.width + 2)
      throw IoError("import_templates: row " + std::to_string(row) + " has " +
                    std::to_string(cells.size()) + " fields, expected " +
                    std::to_string(d.width + 2));
    const std::size_t j = std::stoul(cells[0]), f = std::stoul(cells[1]);
    d.templates = std::max(d.templates, j + 1);
    d.bins = std::max(d.bins, f + 1);
    for (std::size_t m = 0; m < d.width; ++m) d.values.push_back(std::strtod(cells[m + 2].c_str(), nullptr));
  }
  if (d.values.size() != d.templates * d.bins * d.width)
    throw IoError("import_templates: rows do not form a complete J x F grid");
  return d;
}

}  // namespace xdc::model
