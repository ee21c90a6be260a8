#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "cdm/rng.hpp"
#include "cdm/schedule.hpp"

using namespace cdm;

TEST(SineSchedule, FrozenValues) {
  const SineSchedule s;
  EXPECT_NEAR(sigma_of_t(s, 0.5), 0.7115006375947301, 1e-15);
  EXPECT_NEAR(sigma_of_t(s, 0.0), 0.012466314595415034, 1e-15);
  EXPECT_DOUBLE_EQ(sigma_of_t(s, 1.0), 1.0);
}

TEST(SineSchedule, ScalesWithSigmaMax) {
  const SineSchedule a{1.0, 0.008}, b{0.4, 0.008};
  for (double t : {0.0, 0.3, 0.77, 1.0}) EXPECT_NEAR(sigma_of_t(b, t), 0.4 * sigma_of_t(a, t), 1e-15);
}

TEST(SineSchedule, RejectsTimesOutsideUnitInterval) {
  EXPECT_THROW(sigma_of_t({}, -0.01), DomainError);
  EXPECT_THROW(sigma_of_t({}, 1.01), DomainError);
  EXPECT_THROW(sigma_of_t({}, std::nan("")), DomainError);
}

TEST(SineSchedule, MonotoneIncreasing) {
  const SineSchedule s;
  double prev = -1.0;
  for (int i = 0; i <= 1000; ++i) {
    const double v = sigma_of_t(s, i / 1000.0);
    EXPECT_GT(v, prev);
    prev = v;
  }
}

TEST(Discretize, LadderShapeAndEnds) {
  const SigmaLadder l = discretize({}, 130);
  ASSERT_EQ(l.sigmas.size(), 131u);
  EXPECT_EQ(l.levels(), 130u);
  EXPECT_DOUBLE_EQ(l.sigmas.front(), 1.0);
  EXPECT_NEAR(l.sigmas.back(), 0.012466314595415034, 1e-15);
  EXPECT_TRUE(strictly_decreasing(l));
  EXPECT_THROW(discretize({}, 0), ConfigError);
}

TEST(EulerEta, Arithmetic) {
  EXPECT_DOUBLE_EQ(euler_eta(1.0, 0.5), 0.5);
  EXPECT_DOUBLE_EQ(euler_eta(0.8, 0.2), 0.75);
  EXPECT_THROW(euler_eta(0.5, 0.5), DomainError);
  EXPECT_THROW(euler_eta(0.4, 0.5), DomainError);
  EXPECT_THROW(euler_eta(0.0, 0.0), DomainError);
}

// The product of (1 - eta_i) telescopes to sigma_end / sigma_start.
TEST(EulerEta, TelescopingOnRandomLadders) {
  Rng rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<int> len(2, 200);
  for (int trial = 0; trial < 1000; ++trial) {
    SigmaLadder l;
    double s = 0.1 + 10.0 * u(rng);
    const int n = len(rng);
    for (int i = 0; i < n; ++i) {
      l.sigmas.push_back(s);
      s *= 0.2 + 0.79 * u(rng);
    }
    double prod = 1.0;
    for (std::size_t i = 0; i + 1 < l.sigmas.size(); ++i) prod *= 1.0 - euler_eta(l.sigmas[i], l.sigmas[i + 1]);
    EXPECT_NEAR(prod, l.sigmas.back() / l.sigmas.front(), 1e-12 * l.sigmas.back() / l.sigmas.front() + 1e-300);
  }
}

TEST(GeometricSigma, ConstantStepDecay) {
  EXPECT_NEAR(geometric_sigma(1.0, 0.1, 22), 0.09847709021836118, 1e-15);
  EXPECT_THROW(geometric_sigma(1.0, 1.0, 3), DomainError);
}

TEST(Rng, SubstreamsAreDeterministicAndDistinct) {
  EXPECT_EQ(derive_seed(7, {1, 2}), derive_seed(7, {1, 2}));
  EXPECT_NE(derive_seed(7, {1, 2}), derive_seed(7, {2, 1}));
  EXPECT_NE(derive_seed(7, {1}), derive_seed(8, {1}));
  Rng a = substream(5, {stream::sampler, 3}), b = substream(5, {stream::sampler, 3});
  EXPECT_EQ(a(), b());
}
