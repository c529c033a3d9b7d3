#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "support/finite_diff.hpp"
#include "xdc/dc.hpp"

namespace {

using namespace xdc;
using namespace xdc::dc;
using xdc::testing::gradient_check;

Tensor random_unit_rows(std::size_t K, std::size_t D, Rng& rng) {
  std::vector<double> v(K * D);
  for (std::size_t k = 0; k < K; ++k) {
    double n = 0.0;
    for (std::size_t d = 0; d < D; ++d) n += (v[k * D + d] = rng.uniform(-1.0, 1.0)) * v[k * D + d];
    for (std::size_t d = 0; d < D; ++d) v[k * D + d] /= std::sqrt(n);
  }
  return Tensor({K, D}, v);
}

Tensor random_one_hot(std::size_t K, std::size_t I, Rng& rng) {
  std::vector<double> y(K * I, 0.0);
  for (std::size_t k = 0; k < K; ++k) y[k * I + rng.index(I)] = 1.0;
  return Tensor({K, I}, y);
}

// ‖VVᵀ − YYᵀ‖_F² with the K × K affinities built explicitly.
double direct_dc(const Tensor& V, const Tensor& Y) {
  const std::size_t K = V.dim(0), D = V.dim(1), I = Y.dim(1);
  double s = 0.0;
  for (std::size_t a = 0; a < K; ++a)
    for (std::size_t b = 0; b < K; ++b) {
      double vv = 0.0, yy = 0.0;
      for (std::size_t d = 0; d < D; ++d) vv += V.data()[a * D + d] * V.data()[b * D + d];
      for (std::size_t i = 0; i < I; ++i) yy += Y.data()[a * I + i] * Y.data()[b * I + i];
      s += (vv - yy) * (vv - yy);
    }
  return s;
}

Tensor permute_columns(const Tensor& Y, const std::vector<std::size_t>& p) {
  const std::size_t K = Y.dim(0), I = Y.dim(1);
  std::vector<double> out(K * I);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < I; ++i) out[k * I + i] = Y.data()[k * I + p[i]];
  return Tensor(Y.shape(), out);
}

TEST(DcLoss, IdenticalOneHotIsZero) {
  Rng rng(1);
  auto Y = random_one_hot(30, 3, rng);
  EXPECT_EQ(dc_loss(Y, Y).item(), 0.0);
}

TEST(DcLoss, ThreeBinExampleIsFour) {
  Tensor V({3, 2}, {1, 0, 0, 1, 1, 0});
  Tensor Y({3, 2}, {1, 0, 0, 1, 0, 1});
  EXPECT_EQ(direct_dc(V, Y), 4.0);
  EXPECT_EQ(dc_loss(V, Y).item(), 4.0);
}

TEST(DcLoss, GramFormMatchesDirect) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t K = 1 + rng.index(200), D = 1 + rng.index(8), I = 1 + rng.index(4);
    auto V = random_unit_rows(K, D, rng);
    auto Y = random_one_hot(K, I, rng);
    const double direct = direct_dc(V, Y);
    EXPECT_LE(std::abs(dc_loss(V, Y).item() - direct), 1e-8 * std::max(direct, 1e-300));
  }
}

TEST(DcLoss, ColumnPermutationIsBitExact) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t K = 5 + rng.index(100), I = 2 + rng.index(3);
    auto V = random_unit_rows(K, 4, rng);
    auto Y = random_one_hot(K, I, rng);
    std::vector<std::size_t> p(I);
    for (std::size_t i = 0; i < I; ++i) p[i] = i;
    std::shuffle(p.begin(), p.end(), rng.engine());
    EXPECT_EQ(dc_loss(V, Y).item(), dc_loss(V, permute_columns(Y, p)).item());
  }
}

TEST(DcLoss, RejectsMisalignedRows) {
  EXPECT_THROW(dc_loss(Tensor::zeros({3, 2}), Tensor::zeros({4, 2})), ShapeError);
}

TEST(DcLoss, GradientMatchesFiniteDifferences) {
  Rng rng(4);
  auto Y = random_one_hot(25, 3, rng);
  auto V = Tensor::parameter("V", {25, 4}, random_unit_rows(25, 4, rng).values());
  EXPECT_LT(gradient_check(V, [&] { return dc_loss(V, Y); }), 1e-4);
}

TEST(DcLoss, LabelTensorKeepsRequestedRows) {
  signal::LabelMatrix L{3, 2, {1, 0, 0, 0, 0, 1}, {0, 1, 0}};
  auto Y = label_tensor(L, L.active_bins());
  EXPECT_EQ(Y.shape(), (Shape{2, 2}));
  EXPECT_EQ(Y.values(), (std::vector<double>{1, 0, 0, 1}));
}

GatedConvConfig small_cfg() { return {6, 3, 4, 1, 3}; }

Tensor random_input(std::size_t F, std::size_t N, Rng& rng) {
  std::vector<double> x(F * N);
  for (auto& v : x) v = rng.uniform(-1.0, 1.0);
  return Tensor({1, F, N}, x);
}

TEST(GatedConv, ShapeAndUnitRows) {
  Rng rng(5);
  GatedConvEncoder enc(small_cfg(), 9);
  auto V = enc.embed(random_input(6, 11, rng));
  ASSERT_EQ(V.size(), 1u);
  EXPECT_EQ(V[0].shape(), (Shape{66, 3}));
  for (std::size_t k = 0; k < 66; ++k) {
    double n = 0.0;
    for (std::size_t d = 0; d < 3; ++d) n += V[0].data()[k * 3 + d] * V[0].data()[k * 3 + d];
    EXPECT_NEAR(std::sqrt(n), 1.0, 1e-6);
  }
}

TEST(GatedConv, BatchItemsAreIndependent) {
  Rng rng(6);
  GatedConvEncoder enc(small_cfg(), 9);
  auto a = random_input(6, 8, rng), b = random_input(6, 8, rng);
  std::vector<double> both(a.values());
  both.insert(both.end(), b.values().begin(), b.values().end());
  auto V = enc.embed(Tensor({2, 6, 8}, both));
  EXPECT_EQ(V[0].values(), enc.embed(a)[0].values());
  EXPECT_EQ(V[1].values(), enc.embed(b)[0].values());
}

TEST(GatedConv, SaturatedGateReducesToLinearBranch) {
  Rng rng(7);
  GatedConvEncoder enc(small_cfg(), 3);
  const auto& layer = enc.gated_layers().front();
  auto gate_bias = layer.b.b;
  for (auto& v : gate_bias.mutable_data()) v = 1e3;
  Tensor x({1, 4, 9}, std::vector<double>(36));
  for (auto& v : x.mutable_data()) v = rng.uniform(-1.0, 1.0);
  EXPECT_EQ(layer(x).values(), layer.a(x).values());
}

TEST(GatedConv, RejectsBadConfigAndInput) {
  EXPECT_THROW(GatedConvEncoder({6, 3, 4, 1, 2}, 1), std::invalid_argument);
  EXPECT_THROW(GatedConvEncoder({0, 3, 4, 1, 3}, 1), std::invalid_argument);
  GatedConvEncoder enc(small_cfg(), 1);
  EXPECT_THROW(enc.embed(Tensor::zeros({1, 5, 8})), ShapeError);
}

TEST(GatedConv, EveryParameterGradientMatchesFiniteDifferences) {
  Rng rng(8);
  GatedConvEncoder enc({4, 2, 3, 1, 3}, 5);
  auto x = random_input(4, 6, rng);
  auto Y = random_one_hot(24, 2, rng);
  for (auto& p : enc.parameters().all())
    for (auto& v : p.mutable_data()) v += rng.uniform(-0.2, 0.2);  // off zero biases
  for (auto& p : enc.parameters().all())
    EXPECT_LT(gradient_check(p, [&] { return dc_loss(enc.embed(x)[0], Y); }), 1e-4) << p.name();
}

TEST(GatedConv, SameSeedSameWeights) {
  GatedConvEncoder a(small_cfg(), 42), b(small_cfg(), 42), c(small_cfg(), 43);
  for (std::size_t i = 0; i < a.parameters().all().size(); ++i)
    EXPECT_EQ(a.parameters().all()[i].values(), b.parameters().all()[i].values());
  EXPECT_NE(a.parameters().all()[0].values(), c.parameters().all()[0].values());
}

TEST(Standardize, ZeroMeanUnitVarianceWithFloor) {
  signal::RealSpectrogram s{2, 2, {}, signal::SpectrogramKind::Log, {0.0, -10.0, -200.0, -20.0}};
  auto v = standardize_log(s);
  double m = 0.0, q = 0.0;
  for (double x : v) m += x / 4.0;
  for (double x : v) q += (x - m) * (x - m) / 4.0;
  EXPECT_NEAR(m, 0.0, 1e-12);
  EXPECT_NEAR(q, 1.0, 1e-12);
  EXPECT_LT(v[2], v[3]);  // floored at −80 dB, still the minimum
}

TEST(KMeans, SeparatedCloudsRecovered) {
  Rng rng(9);
  std::vector<double> pts;
  std::vector<int> truth;
  for (int i = 0; i < 60; ++i) {
    const int c = static_cast<int>(rng.index(2));
    truth.push_back(c);
    pts.push_back((c ? 5.0 : -5.0) + rng.uniform(-0.5, 0.5));
    pts.push_back(rng.uniform(-0.5, 0.5));
  }
  auto r = kmeans(pts, 2, 2, 1);
  const std::size_t flip = r.assignment[0] != static_cast<std::size_t>(truth[0]);
  for (int i = 0; i < 60; ++i) EXPECT_EQ(r.assignment[i] ^ flip, static_cast<std::size_t>(truth[i]));
}

TEST(KMeans, SingleClusterTakesAllActiveBins) {
  Rng rng(10);
  auto V = random_unit_rows(10, 3, rng);
  std::vector<std::uint8_t> silence{0, 1, 0, 0, 1, 0, 0, 0, 0, 0};
  auto m = kmeans_masks(V, silence, 1, 3);
  for (std::size_t k = 0; k < 10; ++k) EXPECT_EQ(m[0][k], silence[k] ? 0.0 : 1.0);
}

TEST(KMeans, EachActiveBinInExactlyOneMask) {
  Rng rng(11);
  auto V = random_unit_rows(50, 4, rng);
  std::vector<std::uint8_t> silence(50, 0);
  for (std::size_t k = 0; k < 50; k += 7) silence[k] = 1;
  auto m = kmeans_masks(V, silence, 3, 5);
  for (std::size_t k = 0; k < 50; ++k)
    EXPECT_EQ(m[0][k] + m[1][k] + m[2][k], silence[k] ? 0.0 : 1.0);
  EXPECT_EQ(kmeans_masks(V, silence, 3, 5), m);
}

TEST(KMeans, EmptyClusterIsReseeded) {
  // Duplicate points force k-means++ to fall back; every cluster still ends
  // non-empty because reseeding takes the farthest point.
  std::vector<double> pts{0, 0, 0, 0, 0, 0, 10, 10};
  auto r = kmeans(pts, 2, 2, 4);
  std::set<std::size_t> used(r.assignment.begin(), r.assignment.end());
  EXPECT_EQ(used.size(), 2u);
}

TEST(KMeans, TooFewPointsRejected) {
  std::vector<std::uint8_t> silence{1, 1, 0};
  EXPECT_THROW(kmeans_masks(Tensor::zeros({3, 2}), silence, 2, 1), std::invalid_argument);
}

}  // namespace
