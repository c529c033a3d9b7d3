#include <gtest/gtest.h>

#include <cmath>

#include "support/finite_diff.hpp"
#include "xdc/danet.hpp"

namespace {

using namespace xdc;
using namespace xdc::danet;
using xdc::testing::gradient_check;

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(r * c);
  for (auto& x : v) x = rng.uniform(lo, hi);
  return Tensor({r, c}, v);
}

Tensor random_labels(std::size_t K, std::size_t I, Rng& rng) {
  std::vector<double> y(K * I, 0.0);
  for (std::size_t k = 0; k < K; ++k)
    if (rng.uniform01() > 0.15) y[k * I + rng.index(I)] = 1.0;
  return Tensor({K, I}, y);
}

std::vector<double> loop_attractors(const Tensor& V, const Tensor& Y) {
  const std::size_t K = V.dim(0), D = V.dim(1), I = Y.dim(1);
  std::vector<double> A(I * D);
  for (std::size_t i = 0; i < I; ++i) {
    double count = 0.0;
    for (std::size_t k = 0; k < K; ++k) count += Y.data()[k * I + i];
    for (std::size_t d = 0; d < D; ++d) {
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += V.data()[k * D + d] * Y.data()[k * I + i];
      A[i * D + d] = s / (count + 1e-8);
    }
  }
  return A;
}

std::vector<double> loop_masks(const Tensor& V, const std::vector<double>& A, std::size_t I) {
  const std::size_t K = V.dim(0), D = V.dim(1);
  std::vector<double> m(K * I);
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < I; ++i) {
      double z = 0.0;
      for (std::size_t d = 0; d < D; ++d) z += A[i * D + d] * V.data()[k * D + d];
      m[k * I + i] = 1.0 / (1.0 + std::exp(-z));
    }
  return m;
}

double loop_loss(const Tensor& X, const Tensor& m, const Tensor& mh) {
  const std::size_t K = m.dim(0), I = m.dim(1);
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t i = 0; i < I; ++i)
      s += std::abs(X.data()[k] * (m.data()[k * I + i] - mh.data()[k * I + i]));
  return s / static_cast<double>(K * I);
}

TEST(Danet, AgreesWithLoopOracles) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t K = 6 + rng.index(40), D = 2 + rng.index(4), I = 2 + rng.index(2);
    auto V = random_matrix(K, D, rng);
    auto Y = random_labels(K, I, rng);
    auto A = compute_attractors(V, Y);
    auto ref = loop_attractors(V, Y);
    for (std::size_t j = 0; j < ref.size(); ++j) ASSERT_NEAR(A.data()[j], ref[j], 1e-10);
    auto mh = danet_masks(V, A);
    auto mref = loop_masks(V, ref, I);
    for (std::size_t j = 0; j < mref.size(); ++j) ASSERT_NEAR(mh.data()[j], mref[j], 1e-10);
    auto X = random_matrix(K, 1, rng, 0.0, 1.0);
    auto m = random_matrix(K, I, rng, 0.0, 1.0);
    ASSERT_NEAR(danet_loss(X, m, mh).item(), loop_loss(X, m, mh), 1e-10);
  }
}

TEST(Danet, EmptySpeakerHasNearZeroAttractor) {
  Rng rng(2);
  auto V = random_matrix(6, 2, rng);
  std::vector<double> y(12, 0.0);
  for (std::size_t k = 0; k < 6; ++k) y[k * 2] = 1.0;
  auto A = compute_attractors(V, Tensor({6, 2}, y));
  EXPECT_EQ(A.data()[2], 0.0);
  EXPECT_EQ(A.data()[3], 0.0);
  for (std::size_t d = 0; d < 2; ++d) {
    double mean = 0.0;
    for (std::size_t k = 0; k < 6; ++k) mean += V.data()[k * 2 + d] / 6.0;
    EXPECT_NEAR(A.data()[d], mean, 1e-8);
  }
}

TEST(Danet, ZeroAttractorGivesHalfMasks) {
  Rng rng(3);
  auto m = danet_masks(random_matrix(5, 3, rng), Tensor::zeros({2, 3}));
  for (double v : m.values()) EXPECT_EQ(v, 0.5);
}

TEST(Danet, LargeAttractorSaturatesBySign) {
  Tensor V({2, 1}, {0.5, -0.25});
  Tensor A({1, 1}, {1e4});
  auto m = danet_masks(V, A);
  EXPECT_EQ(m.data()[0], 1.0);
  EXPECT_EQ(m.data()[1], 0.0);
}

TEST(Danet, LossExamples) {
  EXPECT_EQ(danet_loss(Tensor({1, 1}, {2.0}), Tensor({1, 1}, {1.0}), Tensor({1, 1}, {0.5})).item(), 1.0);
  Rng rng(4);
  auto m = random_matrix(8, 2, rng, 0, 1), mh = random_matrix(8, 2, rng, 0, 1);
  EXPECT_EQ(danet_loss(Tensor::zeros({8, 1}), m, mh).item(), 0.0);
  EXPECT_EQ(danet_loss(random_matrix(8, 1, rng, 0, 1), m, m).item(), 0.0);
  EXPECT_THROW(danet_loss(Tensor::zeros({7, 1}), m, mh), ShapeError);
}

TEST(Danet, JointSpeakerPermutationInvariant) {
  Rng rng(5);
  const std::size_t K = 30, D = 4;
  auto V = random_matrix(K, D, rng);
  auto Y = random_labels(K, 2, rng);
  auto X = random_matrix(K, 1, rng, 0, 1);
  auto m = random_matrix(K, 2, rng, 0, 1);
  auto swap = [](const Tensor& t) { return concat({slice(t, 1, 1, 1), slice(t, 1, 0, 1)}, 1); };
  const double a = danet_loss(X, m, danet_masks(V, compute_attractors(V, Y))).item();
  const double b = danet_loss(X, swap(m), danet_masks(V, compute_attractors(V, swap(Y)))).item();
  EXPECT_NEAR(a, b, 1e-14);
}

TEST(Danet, GradientThroughAttractorsAndSigmoid) {
  Rng rng(6);
  const std::size_t K = 20, D = 3;
  auto V = Tensor::parameter("V", {K, D}, random_matrix(K, D, rng).values());
  auto Y = random_labels(K, 2, rng);
  auto X = random_matrix(K, 1, rng, 0.1, 1);
  auto m = random_matrix(K, 2, rng, 0, 1);
  EXPECT_LT(gradient_check(V, [&] { return danet_loss(X, m, danet_masks(V, compute_attractors(V, Y))); }),
            1e-4);
}

TEST(Danet, WienerTargetsAndBinOrder) {
  signal::ComplexSpectrogram a{2, 1, {}, {{3.0, 0.0}, {0.0, 0.0}}};
  signal::ComplexSpectrogram b{2, 1, {}, {{0.0, 4.0}, {0.0, 0.0}}};
  signal::ComplexSpectrogram mix{2, 1, {}, {{3.0, 4.0}, {0.0, 0.0}}};
  auto m = wiener_targets(mix, {a, b});
  EXPECT_NEAR(m.data()[0], 9.0 / 25.0, 1e-15);
  EXPECT_NEAR(m.data()[1], 16.0 / 25.0, 1e-15);
  EXPECT_EQ(m.data()[2], 0.0);
  auto col = bin_column({1, 2, 3, 4, 5, 6}, 2, 3);  // F=2, N=3
  EXPECT_EQ(col.values(), (std::vector<double>{1, 4, 2, 5, 3, 6}));
}

TEST(DanetModel, EmbeddingsAreNotUnitNormalized) {
  dc::GatedConvConfig cfg;
  cfg.freq_bins = 6;
  cfg.channels = 4;
  cfg.blocks = 1;
  cfg.embedding_dim = 3;
  DanetModel m(cfg, 3);
  for (auto& p : m.parameters().all())
    for (auto& v : p.mutable_data()) v *= 10.0;
  Rng rng(4);
  std::vector<double> x(6 * 8);
  for (auto& v : x) v = rng.uniform(-2.0, 2.0);
  const Tensor features({1, 6, 8}, x);
  const Tensor V = m.encoder().embed_raw(features)[0];
  const Tensor U = m.encoder().embed(features)[0];
  double max_norm = 0.0;
  for (std::size_t k = 0; k < V.dim(0); ++k) {
    double n = 0.0, nu = 0.0;
    for (std::size_t d = 0; d < 3; ++d) n += V.data()[k * 3 + d] * V.data()[k * 3 + d];
    for (std::size_t d = 0; d < 3; ++d) nu += U.data()[k * 3 + d] * U.data()[k * 3 + d];
    max_norm = std::max(max_norm, std::sqrt(n));
    EXPECT_NEAR(nu, 1.0, 1e-12);
  }
  EXPECT_GT(max_norm, 2.0);

  const Tensor Y = random_labels(48, 2, rng);
  const Example ex{features, Tensor::full({48, 1}, 1.0), Y, Tensor::full({48, 2}, 0.5)};
  const auto mh = m.masks(ex);
  const auto ref = loop_masks(V, loop_attractors(V, Y), 2);
  double lo = 1.0, hi = 0.0;
  for (std::size_t k = 0; k < ref.size(); ++k) {
    EXPECT_NEAR(mh.data()[k], ref[k], 1e-12);
    lo = std::min(lo, ref[k]), hi = std::max(hi, ref[k]);
  }
  // Unit rows would confine masks to [σ(−1), σ(1)] ≈ [0.27, 0.73].
  EXPECT_TRUE(lo < 0.25 || hi > 0.75);
}

}  // namespace
