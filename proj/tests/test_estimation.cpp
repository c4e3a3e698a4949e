#include "thermoflux/estimation.hpp"
#include "thermoflux/random.hpp"

#include <boost/random/uniform_real_distribution.hpp>
#include <gtest/gtest.h>

using namespace thermoflux;

namespace {
ThermalContext qubit() { return ThermalContext({Rational(0), Rational(1)}, 1.0); }
}  // namespace

TEST(Hoeffding, SampleSize) {
  EXPECT_EQ(hoeffding_sample_size(2, 0.1, 0.05), 220);
  double raw = (2 * std::log(2.0) + std::log(20.0)) / 0.02;
  EXPECT_NEAR(raw, 219.1, 0.05);
  EXPECT_EQ(hoeffding_sample_size(2, 1.0, 0.05), static_cast<long>(std::ceil((2 * std::log(2.0) + std::log(20.0)) / 2)));
  EXPECT_LT(hoeffding_sample_size(2, 0.1, 0.05), hoeffding_sample_size(3, 0.1, 0.05));
  EXPECT_LT(hoeffding_sample_size(3, 0.1, 0.05), hoeffding_sample_size(8, 0.1, 0.05));
  EXPECT_THROW(hoeffding_sample_size(2, 0.0, 0.05), ValidationError);
  EXPECT_THROW(hoeffding_sample_size(2, 0.1, 1.0), ValidationError);
}

TEST(Hoeffding, RadiusInvertsSampleSize) {
  long m = hoeffding_sample_size(4, 0.05, 0.01);
  EXPECT_LE(hoeffding_radius(4, m, 0.01), 0.05 + 1e-12);
  EXPECT_GT(hoeffding_radius(4, m - 1, 0.01), 0.05);
}

TEST(Sampling, ExactAndDeterministic) {
  SamplingOracle ex{{0.3, 0.7}, 1, SamplingMode::exact};
  auto e = sample_types(ex, 10, 5);
  EXPECT_EQ(e.p_hat, (std::vector<double>{0.3, 0.7}));
  SamplingOracle det{{1.0, 0.0}, 9, SamplingMode::sampled};
  auto d = sample_types(det, 37, 3);
  EXPECT_EQ(d.counts, (std::vector<long>{37, 0}));
}

TEST(Sampling, SeededReproducible) {
  SamplingOracle o{{0.2, 0.5, 0.3}, 4, SamplingMode::sampled};
  auto a = sample_types(o, 500, 17), b = sample_types(o, 500, 17), c = sample_types(o, 500, 18);
  EXPECT_EQ(a.counts, b.counts);
  EXPECT_NE(a.counts, c.counts);
  EXPECT_EQ(a.counts[0] + a.counts[1] + a.counts[2], 500);
}

TEST(Estimator, ThermalGivesZero) {
  auto ctx = qubit();
  auto t = ctx.gibbs_weights();
  auto rep = estimate_relative_entropy(t, t, ctx, 1, 0.1, 0.05);
  EXPECT_NEAR(rep.estimate, 0.0, 1e-15);
  EXPECT_NEAR(rep.confidence, 0.95, 1e-15);
}

TEST(Estimator, QubitConstant) {
  double c = 1.0 + (1.0 + std::log1p(std::exp(-1.0))) / std::sqrt(2.0);
  EXPECT_NEAR(qubit().continuity_constant(), c, 1e-14);
  EXPECT_NEAR(qubit().continuity_constant(), 1.92869, 1e-4);
  auto rep = estimate_relative_entropy({0.5, 0.5}, qubit().gibbs_weights(), qubit(), 1, 0.1);
  EXPECT_NEAR(rep.error_bar, c * 0.1, 1e-14);
}

TEST(Estimator, GapWithinErrorBarWhenCovered) {
  auto ctx = qubit();
  auto t = ctx.gibbs_weights();
  long m = hoeffding_sample_size(2, 0.1, 0.05);
  double r = hoeffding_radius(2, m, 0.05);
  int covered = 0;
  for (int s = 0; s < 200; ++s) {
    Rng rng = stream(77, s);
    boost::random::uniform_real_distribution<double> u(0.02, 0.98);
    double a = u(rng);
    std::vector<double> p{a, 1.0 - a};
    auto e = sample_types(SamplingOracle{p, 0, SamplingMode::sampled}, m, s);
    if (l1_distance(p, e.p_hat) > r) continue;
    ++covered;
    auto rep = estimate_relative_entropy(e.p_hat, t, ctx, 1, r);
    EXPECT_LE(std::abs(rep.estimate - kl_divergence(p, t)), rep.error_bar + 1e-12);
  }
  EXPECT_GT(covered, 150);
}

TEST(Estimator, KCopyBookkeeping) {
  auto ctx = qubit();
  auto t = ctx.gibbs_weights();
  std::vector<double> t2{t[0] * t[0], t[0] * t[1], t[1] * t[0], t[1] * t[1]};
  std::vector<double> p{0.4, 0.6};
  std::vector<double> p2{0.16, 0.24, 0.24, 0.36};
  auto rep = estimate_relative_entropy(p2, t2, ctx, 2, 0.1);
  EXPECT_NEAR(rep.estimate, kl_divergence(p, t), 1e-12);
  EXPECT_NEAR(rep.constant, ctx.continuity_constant(2), 1e-15);
  EXPECT_NEAR(rep.error_bar, ctx.continuity_constant(2) * 0.05, 1e-14);
}

TEST(Estimator, SupportGuard) {
  EXPECT_THROW(estimate_relative_entropy({0.5, 0.5}, {1.0, 0.0}, qubit(), 1, 0.1), SupportError);
}

TEST(Continuity, RandomPairsSatisfyBound) {
  auto ctx = qubit();
  Mat t = thermal_state(ctx);
  for (int s = 0; s < 100; ++s) {
    Rng rng = stream(500, s);
    Mat a = random_density_matrix(rng, 2), b = random_density_matrix(rng, 2);
    double lhs = std::abs(relative_entropy(a, t) - relative_entropy(b, t));
    EXPECT_LE(lhs, ctx.continuity_constant() * trace_norm_hermitian(a - b) + 1e-8);
  }
}
