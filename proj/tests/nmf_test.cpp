#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "xdc/nmf.hpp"
#include "xdc/random.hpp"

namespace {

using namespace xdc;
using namespace xdc::nmf;

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m{r, c, std::vector<double>(r * c)};
  for (auto& v : m.values) v = rng.uniform01();
  return m;
}

double frob_sq(const Matrix& A) {
  double s = 0.0;
  for (double v : A.values) s += v * v;
  return s;
}

void expect_monotone(const std::vector<double>& obj) {
  for (std::size_t i = 1; i < obj.size(); ++i) EXPECT_LE(obj[i], obj[i - 1] + 1e-12) << i;
}

TEST(Nmf, RankOneIsRecovered) {
  Rng rng(1);
  std::vector<double> w(12), h(20);
  for (auto& v : w) v = rng.uniform(0.1, 1.0);
  for (auto& v : h) v = rng.uniform(0.1, 1.0);
  Matrix A{12, 20, std::vector<double>(240)};
  for (std::size_t f = 0; f < 12; ++f)
    for (std::size_t n = 0; n < 20; ++n) A(f, n) = w[f] * h[n];
  auto r = nmf_fit(A, 1, 500, 3);
  EXPECT_LT(r.objective.back(), 1e-8 * frob_sq(A));
  expect_monotone(r.objective);
}

// Multiplicative updates stall at different points per start; the median
// over data/init seeds clears a 99% reduction.
TEST(Nmf, FullRankFitsDeeply) {
  std::vector<double> ratios;
  for (std::uint64_t data = 0; data < 4; ++data)
    for (std::uint64_t init = 0; init < 4; ++init) {
      auto r = nmf_fit(random_matrix(16, 24, data), 16, 5000, init);
      expect_monotone(r.objective);
      ratios.push_back(r.objective.back() / r.objective.front());
    }
  std::sort(ratios.begin(), ratios.end());
  EXPECT_LE(ratios[ratios.size() / 2], 0.01);
}

TEST(Nmf, AllZeroInputStaysZero) {
  Matrix A{4, 5, std::vector<double>(20, 0.0)};
  auto r = nmf_fit(A, 2, 10, 1);
  for (double v : r.objective) EXPECT_EQ(v, 0.0);
  for (double v : reconstruct(r.model)) EXPECT_EQ(v, 0.0);
}

TEST(Nmf, RejectsNegativeInput) {
  auto A = random_matrix(3, 3, 1);
  A(1, 1) = -0.5;
  EXPECT_THROW(nmf_fit(A, 2, 10, 1), std::invalid_argument);
  EXPECT_THROW(nmfd_fit(A, 2, 2, 10, 1), std::invalid_argument);
}

TEST(Nmf, InitMatchesDataMean) {
  auto A = random_matrix(10, 12, 5);
  auto m = nmf_init(A, 3, 7);
  double a = 0.0, b = 0.0;
  auto approx = reconstruct(m);
  for (std::size_t i = 0; i < approx.size(); ++i) {
    a += A.values[i];
    b += approx[i];
  }
  EXPECT_NEAR(a, b, 1e-10);
}

TEST(Nmf, FactorsStayNonNegativeEveryIteration) {
  auto A = random_matrix(8, 10, 6);
  auto model = nmfd_init(A, 3, 3, 2);
  for (int it = 0; it < 30; ++it) {
    model = nmfd_fit(A, model, 1).model;
    for (double v : model.W) ASSERT_GE(v, 0.0);
    for (double v : model.H) ASSERT_GE(v, 0.0);
  }
  auto nm = nmf_init(A, 3, 2);
  for (int it = 0; it < 30; ++it) {
    nm = nmf_fit(A, nm, 1).model;
    for (double v : nm.W) ASSERT_GE(v, 0.0);
    for (double v : nm.H) ASSERT_GE(v, 0.0);
  }
}

TEST(Nmfd, ReconstructionMatchesTripleLoop) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t J = 1 + rng.index(3), F = 1 + rng.index(6), M = 1 + rng.index(4),
                      N = M + rng.index(8);
    NmfdModel m{J, F, M, N, std::vector<double>(J * F * M), std::vector<double>(J * N)};
    for (auto& v : m.W) v = rng.uniform01();
    for (auto& v : m.H) v = rng.uniform01();
    auto got = reconstruct(m);
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t n = 0; n < N; ++n) {
        double ref = 0.0;
        for (std::size_t j = 0; j < J; ++j)
          for (std::size_t mm = 0; mm < M; ++mm)
            if (n >= mm) ref += m.W[(j * F + f) * M + mm] * m.H[j * N + n - mm];
        EXPECT_NEAR(got[f * N + n], ref, 1e-13);
      }
  }
}

TEST(Nmfd, WidthOneTracksNmfTrajectory) {
  auto A = random_matrix(12, 18, 9);
  auto nm = nmf_init(A, 4, 3);
  NmfdModel dm{4, 12, 1, 18, std::vector<double>(4 * 12), nm.H};
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t f = 0; f < 12; ++f) dm.W[j * 12 + f] = nm.W[f * 4 + j];
  for (int it = 0; it < 50; ++it) {
    nm = nmf_fit(A, nm, 1).model;
    dm = nmfd_fit(A, dm, 1).model;
    for (std::size_t j = 0; j < 4; ++j)
      for (std::size_t f = 0; f < 12; ++f) {
        const double a = nm.W[f * 4 + j], b = dm.W[j * 12 + f];
        ASSERT_LE(std::abs(a - b), 1e-10 * std::max(std::abs(a), 1e-300)) << it;
      }
  }
}

TEST(Nmfd, RecoversConvolvedTemplate) {
  // One F × M template convolved with a sparse activation.
  const std::size_t F = 10, M = 4, N = 40;
  Rng rng(10);
  NmfdModel truth{1, F, M, N, std::vector<double>(F * M), std::vector<double>(N, 0.0)};
  for (auto& v : truth.W) v = rng.uniform(0.2, 1.0);
  for (std::size_t n : {2u, 11u, 19u, 30u}) truth.H[n] = rng.uniform(0.5, 1.5);
  Matrix A{F, N, reconstruct(truth)};
  auto r = nmfd_fit(A, 1, M, 5000, 11);
  EXPECT_LT(r.objective.back(), 1e-6 * frob_sq(A));
  expect_monotone(r.objective);
}

TEST(Nmfd, ZeroActivationRowIsFixedPoint) {
  auto A = random_matrix(6, 10, 12);
  auto m = nmfd_init(A, 3, 2, 1);
  for (std::size_t n = 0; n < 10; ++n) m.H[1 * 10 + n] = 0.0;
  auto r = nmfd_fit(A, m, 20);
  for (std::size_t n = 0; n < 10; ++n) EXPECT_EQ(r.model.H[10 + n], 0.0);
}

TEST(Nmfd, RejectsWideTemplates) {
  auto A = random_matrix(4, 3, 1);
  EXPECT_THROW(nmfd_fit(A, 1, 4, 5, 1), std::invalid_argument);
}

TEST(Nmf, MonotoneOverManySeeds) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto A = random_matrix(12, 16, 100 + seed);
    expect_monotone(nmf_fit(A, 3, 60, seed).objective);
    expect_monotone(nmfd_fit(A, 3, 3, 60, seed).objective);
  }
}

TEST(Nmf, FixedBasesStayFixedAndObjectiveFalls) {
  auto A = random_matrix(10, 14, 20);
  auto nm = nmf_init(A, 3, 1);
  auto r = nmf_fit(A, nm, 40, false);
  EXPECT_EQ(r.model.W, nm.W);
  expect_monotone(r.objective);
  auto dm = nmfd_init(A, 3, 2, 1);
  auto rd = nmfd_fit(A, dm, 40, false);
  EXPECT_EQ(rd.model.W, dm.W);
  expect_monotone(rd.objective);
  EXPECT_LT(rd.objective.back(), rd.objective.front());
}

TEST(Wiener, EqualPartsSplitInHalf) {
  signal::RealSpectrogram mix{1, 3, {}, signal::SpectrogramKind::Magnitude, {2.0, 4.0, 6.0}};
  auto est = wiener_masks_from_parts({{1.0, 1.0, 1.0}, {1.0, 1.0, 1.0}}, mix);
  for (std::size_t k = 0; k < 3; ++k) {
    EXPECT_NEAR(est[0].values[k], mix.values[k] / 2.0, 1e-11);
    EXPECT_NEAR(est[1].values[k], mix.values[k] / 2.0, 1e-11);
  }
}

TEST(Wiener, ZeroPartGetsNothing) {
  signal::RealSpectrogram mix{1, 2, {}, signal::SpectrogramKind::Magnitude, {2.0, 4.0}};
  auto est = wiener_masks_from_parts({{0.0, 0.0}, {3.0, 0.5}}, mix);
  EXPECT_EQ(est[0].values, (std::vector<double>{0.0, 0.0}));
  EXPECT_NEAR(est[1].values[0], 2.0, 1e-11);
  EXPECT_NEAR(est[1].values[1], 4.0, 1e-10);
}

TEST(Wiener, MasksPartitionUnity) {
  Rng rng(13);
  std::vector<std::vector<double>> parts(3, std::vector<double>(50));
  for (auto& p : parts)
    for (auto& v : p) v = rng.uniform01();
  auto masks = wiener_masks(parts);
  for (std::size_t k = 0; k < 50; ++k)
    EXPECT_NEAR(masks[0][k] + masks[1][k] + masks[2][k], 1.0, 1e-10);
}

TEST(Wiener, ShapeMismatchRejected) {
  signal::RealSpectrogram mix{1, 2, {}, signal::SpectrogramKind::Magnitude, {2.0, 4.0}};
  EXPECT_THROW(wiener_masks_from_parts({{1.0}, {1.0}}, mix), std::invalid_argument);
}

}  // namespace
