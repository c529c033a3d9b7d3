#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "support/finite_diff.hpp"
#include "xdc/xdc.hpp"

namespace {

using namespace xdc;
using namespace xdc::model;
using xdc::testing::gradient_check;

std::vector<double> uniform_values(std::size_t n, Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return v;
}

// Random labels with a few silent bins, as dominant_labels would produce.
signal::LabelMatrix random_labels(std::size_t K, std::size_t I, Rng& rng) {
  signal::LabelMatrix L{K, I, std::vector<std::uint8_t>(K * I, 0), std::vector<std::uint8_t>(K, 0)};
  for (std::size_t k = 0; k < K; ++k) {
    if (rng.uniform01() < 0.1) {
      L.silence[k] = 1;
      continue;
    }
    L.y[k * I + rng.index(I)] = 1;
  }
  return L;
}

// h̃⁽ⁱ⁾_{f,n} = Σ_j Σ_m max(0, w_{j,f,m}) h⁽ⁱ⁾_{j,n−m}, zero before frame 0.
std::vector<double> brute_force_convolve(const std::vector<double>& H, const std::vector<double>& W,
                                         std::size_t I, std::size_t J, std::size_t F,
                                         std::size_t M, std::size_t N) {
  std::vector<double> out(I * F * N, 0.0);
  for (std::size_t i = 0; i < I; ++i)
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t m = 0; m < M && m <= n; ++m)
            out[(i * F + f) * N + n] +=
                std::max(0.0, W[(j * F + f) * M + m]) * H[(i * J + j) * N + n - m];
  return out;
}

TEST(TemplateConvolve, MatchesTripleLoop) {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t J = 1 + rng.index(4), F = 1 + rng.index(8), M = 1 + rng.index(3),
                      N = 1 + rng.index(10), I = 1 + rng.index(3);
    auto H = uniform_values(I * J * N, rng);
    auto W = uniform_values(J * F * M, rng, -0.3, 1.0);
    auto got = template_convolve(Tensor({I, J, N}, H), Tensor({J, F, M}, W));
    auto ref = brute_force_convolve(H, W, I, J, F, M, N);
    ASSERT_EQ(got.shape(), (Shape{I, F, N}));
    for (std::size_t k = 0; k < ref.size(); ++k) ASSERT_NEAR(got.data()[k], ref[k], 1e-12);
  }
}

TEST(TemplateConvolve, WidthOneIsOuterProduct) {
  Tensor H({1, 1, 3}, {1.0, 2.0, 3.0});
  Tensor W({1, 2, 1}, {0.5, 4.0});
  EXPECT_EQ(template_convolve(H, W).values(), (std::vector<double>{0.5, 1.0, 1.5, 4.0, 8.0, 12.0}));
}

TEST(TemplateConvolve, ImpulseReproducesTemplatePatch) {
  Rng rng(2);
  const std::size_t J = 2, F = 3, M = 4, N = 10, n0 = 3;
  auto W = uniform_values(J * F * M, rng, 0.1, 1.0);
  std::vector<double> H(J * N, 0.0);
  H[1 * N + n0] = 1.0;
  auto out = template_convolve(Tensor({1, J, N}, H), Tensor({J, F, M}, W));
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t n = 0; n < N; ++n) {
      const double expect = n >= n0 && n < n0 + M ? W[(1 * F + f) * M + n - n0] : 0.0;
      EXPECT_EQ(out.data()[f * N + n], expect);
    }
}

TEST(TemplateConvolve, NegativeRawWeightsAreClipped) {
  Tensor H({1, 1, 2}, {1.0, 1.0});
  Tensor W({1, 1, 1}, {-2.0});
  auto out = template_convolve(H, W);
  for (double v : out.values()) EXPECT_EQ(v, 0.0);
}

TEST(NormalizeMasks, WorkedExample) {
  Tensor Ht({2, 1, 1}, {3.0, 4.0});
  auto v = normalize_masks(Ht, 1e-5).values();
  EXPECT_NEAR(v[0], 3.0 / 5.00001, 1e-15);
  EXPECT_NEAR(v[1], 4.0 / 5.00001, 1e-15);
  EXPECT_NEAR(v[0], 0.5999988, 1e-7);
  EXPECT_NEAR(v[1], 0.7999984, 1e-7);
  auto exact = normalize_masks(Ht, 1e-300).values();
  EXPECT_DOUBLE_EQ(exact[0], 0.6);
  EXPECT_DOUBLE_EQ(exact[1], 0.8);
}

TEST(NormalizeMasks, ZeroStaysZero) {
  auto v = normalize_masks(Tensor::zeros({2, 3, 4}), 1e-5).values();
  for (double x : v) EXPECT_EQ(x, 0.0);
}

TEST(NormalizeMasks, EqualChannelsShareEvenly) {
  auto v = normalize_masks(Tensor({2, 1, 1}, {0.7, 0.7}), 1e-5).values();
  EXPECT_NEAR(v[0], 1.0 / std::sqrt(2.0), 1e-5);
  EXPECT_EQ(v[0], v[1]);
}

TEST(NormalizeMasks, EnergyWithinUnitInterval) {
  Rng rng(3);
  const double eps = 1e-5;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t I = 1 + rng.index(4), F = 1 + rng.index(5), N = 1 + rng.index(5);
    const double scale = std::pow(10.0, rng.uniform(-8.0, 3.0));
    auto h = uniform_values(I * F * N, rng, 0.0, scale);
    if (trial % 10 == 0) std::fill(h.begin(), h.end(), 0.0);
    auto v = normalize_masks(Tensor({I, F, N}, h), eps).values();
    for (std::size_t k = 0; k < F * N; ++k) {
      double e = 0.0, hn = 0.0;
      for (std::size_t i = 0; i < I; ++i) {
        ASSERT_TRUE(std::isfinite(v[i * F * N + k]));
        ASSERT_GE(v[i * F * N + k], 0.0);
        ASSERT_LE(v[i * F * N + k], 1.0);
        e += v[i * F * N + k] * v[i * F * N + k];
        hn += h[i * F * N + k] * h[i * F * N + k];
      }
      ASSERT_GE(e, 0.0);
      ASSERT_LE(e, 1.0);
      hn = std::sqrt(hn);
      if (hn > 0.0) {
        ASSERT_GE(e, 1.0 - 10.0 * eps / (eps + hn));
      }
    }
  }
}

TEST(ReconLoss, Examples) {
  EXPECT_EQ(recon_loss(Tensor::full({2, 2}, 1.0), Tensor::zeros({3, 2, 2}), 1.0).item(), 0.25);
  Tensor Ht({2, 1, 2}, {0.25, 0.5, 0.75, 0.5});
  EXPECT_EQ(recon_loss(Tensor::full({1, 2}, 1.0), Ht, 3.0).item(), 0.0);
  Tensor swapped({2, 1, 2}, {0.75, 0.5, 0.25, 0.5});
  Tensor X({1, 2}, {0.3, 2.0});
  EXPECT_EQ(recon_loss(X, Ht, 0.7).item(), recon_loss(X, swapped, 0.7).item());
}

XdcConfig tiny_config() {
  XdcConfig c;
  c.freq_bins = 16;
  c.speakers = 2;
  c.templates = 3;
  c.width = 4;
  c.channels = 8;
  c.layers = 2;
  c.lambda = 0.5;
  return c;
}

Tensor random_batch(std::size_t B, std::size_t F, std::size_t N, Rng& rng) {
  return Tensor({B, F, N}, uniform_values(B * F * N, rng));
}

TEST(XdcModel, ActivationShapeAndRange) {
  Rng rng(4);
  XdcModel m(tiny_config(), 1);
  auto H = m.activations(random_batch(2, 16, 20, rng));
  EXPECT_EQ(H.shape(), (Shape{2, 2, 3, 20}));
  for (double v : H.values()) EXPECT_GT(v, 0.0);
}

TEST(XdcModel, ZeroInputZeroBiasGivesLn2) {
  XdcModel m(tiny_config(), 2);
  auto H = m.activations(Tensor::zeros({1, 16, 7}));
  for (double v : H.values()) EXPECT_EQ(v, std::log(2.0));
}

TEST(XdcModel, ShiftCovariantInInterior) {
  Rng rng(5);
  XdcModel m(tiny_config(), 3);
  const std::size_t F = 16, N = 24;
  auto x = uniform_values(F * (N + 1), rng);
  std::vector<double> a(F * N), b(F * N);
  for (std::size_t f = 0; f < F; ++f)
    for (std::size_t n = 0; n < N; ++n) {
      a[f * N + n] = x[f * (N + 1) + n];
      b[f * N + n] = x[f * (N + 1) + n + 1];
    }
  auto Ha = m.activations(Tensor({1, F, N}, a)).values();
  auto Hb = m.activations(Tensor({1, F, N}, b)).values();
  // Two k=3 layers see 2 frames on each side.
  for (std::size_t q = 0; q < 6; ++q)
    for (std::size_t n = 3; n + 3 < N; ++n) EXPECT_NEAR(Ha[q * N + n + 1], Hb[q * N + n], 1e-14);
}

TEST(XdcModel, RejectsBadShapesAndConfig) {
  XdcModel m(tiny_config(), 1);
  EXPECT_THROW(m.activations(Tensor::zeros({1, 15, 5})), ShapeError);
  auto bad = tiny_config();
  bad.eps = 0.0;
  EXPECT_THROW(XdcModel(bad, 1), std::invalid_argument);
  bad = tiny_config();
  bad.templates = 0;
  EXPECT_THROW(XdcModel(bad, 1), std::invalid_argument);
}

TEST(XdcModel, InitialTemplatesInRange) {
  XdcModel m(tiny_config(), 6);
  for (double v : m.raw_templates().values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LT(v, 1.0 / 12.0);
  }
}

TEST(XdcLoss, ZeroLambdaIsPureDcLoss) {
  Rng rng(7);
  auto cfg = tiny_config();
  cfg.lambda = 0.0;
  XdcModel m(cfg, 8);
  auto X = random_batch(1, 16, 20, rng);
  auto Y = random_labels(320, 2, rng);
  auto fw = m.forward(X);
  auto V = gather_rows(masks_to_embedding(reshape(fw.Vt, {2, 16, 20})), Y.active_bins());
  EXPECT_EQ(m.loss(X, {Y}).item(), dc::dc_loss(V, dc::label_tensor(Y, Y.active_bins())).item());
}

TEST(XdcLoss, SpeakerPermutationInvariant) {
  Rng rng(9);
  XdcModel m(tiny_config(), 10);
  for (int trial = 0; trial < 20; ++trial) {
    auto X = random_batch(1, 16, 20, rng);
    auto Y = random_labels(320, 2, rng);
    auto H = m.activations(X);
    const double a = m.batch_loss(X, {Y}, m.from_activations(H)).item();
    auto swapped = concat({slice(H, 1, 1, 1), slice(H, 1, 0, 1)}, 1);
    const double b = m.batch_loss(X, {Y}, m.from_activations(swapped)).item();
    EXPECT_LE(std::abs(a - b), 1e-10 * std::abs(a));
  }
}

TEST(XdcLoss, EveryParameterGradientMatchesFiniteDifferences) {
  Rng rng(11);
  XdcModel m(tiny_config(), 12);
  auto X = random_batch(1, 16, 20, rng);
  auto Y = random_labels(320, 2, rng);
  for (auto& p : m.parameters().all()) {
    const double err = gradient_check(p, [&] { return m.loss(X, {Y}); });
    EXPECT_LT(err, 1e-4) << p.name();
  }
}

TEST(XdcLoss, OverProvisionedChannelsAcceptFewerSpeakers) {
  Rng rng(13);
  auto cfg = tiny_config();
  cfg.speakers = 3;
  cfg.lambda = 0.0;
  XdcModel m(cfg, 14);
  auto X = random_batch(1, 16, 20, rng);
  auto Y = random_labels(320, 2, rng);
  auto V = gather_rows(masks_to_embedding(reshape(m.forward(X).Vt, {3, 16, 20})), Y.active_bins());
  EXPECT_EQ(m.loss(X, {Y}).item(), dc::dc_loss(V, dc::label_tensor(Y, Y.active_bins())).item());
  for (auto& p : m.parameters().all()) EXPECT_LT(gradient_check(p, [&] { return m.loss(X, {Y}); }), 1e-4);
  EXPECT_THROW(m.loss(X, {random_labels(320, 4, rng)}), ShapeError);
}

TEST(SelectMasks, Examples) {
  // channel norms 5, 0.1, 3
  std::vector<double> Ht{3, 4, 0.1, 0, 0, 3};
  EXPECT_EQ(select_masks(Ht, 3, 2), (std::vector<std::size_t>{0, 2}));
  EXPECT_EQ(select_masks(Ht, 3, 3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(select_masks({1, 1, 1, 1}, 2, 1), (std::vector<std::size_t>{0}));
  EXPECT_THROW(select_masks(Ht, 3, 4), std::invalid_argument);
}

TEST(InferMasks, DeterministicAndValid) {
  Rng rng(13);
  XdcModel m(tiny_config(), 14);
  auto X = uniform_values(16 * 12, rng);
  auto a = infer_masks(m, X, 12), b = infer_masks(m, X, 12);
  EXPECT_EQ(a.Vt, b.Vt);
  for (std::size_t k = 0; k < 16 * 12; ++k) {
    const double e = a.Vt[k] * a.Vt[k] + a.Vt[192 + k] * a.Vt[192 + k];
    EXPECT_LE(e, 1.0);
  }
  for (double v : a.Ht) EXPECT_GE(v, 0.0);
}

TEST(InferMasks, DoesNotRecordOnActiveTape) {
  Rng rng(15);
  XdcModel m(tiny_config(), 16);
  Tape tape;
  TapeScope scope(tape);
  infer_masks(m, uniform_values(16 * 5, rng), 5);
  EXPECT_EQ(tape.size(), 0u);
}

TEST(ExportTemplates, RoundTripIsExact) {
  Rng rng(17);
  auto cfg = tiny_config();
  XdcModel m(cfg, 18);
  for (auto& v : m.parameters().all().back().mutable_data()) v = rng.uniform(-0.5, 1.0);
  const auto dir = std::filesystem::temp_directory_path() / "xdc_export_test";
  std::filesystem::remove_all(dir);
  auto masks = infer_masks(m, uniform_values(16 * 6, rng), 6);
  export_templates(m, dir, &masks);
  auto d = import_templates(dir / "templates.csv");
  EXPECT_EQ(d.templates, 3u);
  EXPECT_EQ(d.bins, 16u);
  EXPECT_EQ(d.width, 4u);
  EXPECT_EQ(d.values, effective_templates(m).values);
  for (double v : d.values) EXPECT_GE(v, 0.0);
  auto p = import_templates(dir / "templates_pow0.2.csv");
  for (std::size_t k = 0; k < p.values.size(); ++k)
    EXPECT_NEAR(p.values[k], std::pow(d.values[k], 0.2), 1e-15);
  EXPECT_TRUE(std::filesystem::exists(dir / "activations_speaker1.csv"));
  std::filesystem::remove_all(dir);
}

}  // namespace
