#include "thermoflux/infdim.hpp"

#include <gtest/gtest.h>

using namespace thermoflux;

namespace {

double pi4_over_90() { return std::pow(M_PI, 4) / 90.0; }

// Closed form of D(rho||tau) for two geometric ladders, rho_i ∝ a^{i-1} and
// tau_i ∝ b^{i-1}.
double geometric_divergence(double a, double b) {
  return std::log((1.0 - a) / (1.0 - b)) + a / (1.0 - a) * std::log(a / b);
}

}  // namespace

TEST(Ladder, PartitionFunction) {
  InfiniteContext ctx(Rational(1), 1, 1.0);
  EXPECT_NEAR(ctx.partition(), 1.0 / (1.0 - std::exp(-1.0)), 1e-12);
  EXPECT_EQ(ctx.level_exact(3), Rational(2));
  InfiniteContext quad(Rational(1, 2), 2, 1.0);
  EXPECT_EQ(quad.level_exact(4), Rational(9, 2));
  EXPECT_THROW(InfiniteContext(Rational(0), 1, 1.0), ValidationError);
  EXPECT_THROW(InfiniteContext(Rational(1), 0, 1.0), ValidationError);
}

TEST(Truncate, FiniteSupport) {
  auto rho = TailState::finite({0.5, 0.3, 0.2});
  auto r = truncate(rho, 3);
  EXPECT_NEAR(r.success_mass, 1.0, 1e-15);
  auto g = truncate(rho, 1);
  EXPECT_NEAR(g.success_mass, 0.5, 1e-15);
  EXPECT_THROW(truncate(rho, 0), ValidationError);
}

TEST(Truncate, PowerLawAgainstZetaSum) {
  auto rho = TailState::power_law(4.0);
  double partial = 0.0;
  for (int i = 1; i <= 10; ++i) partial += std::pow(i, -4.0);
  double oracle = partial / pi4_over_90();
  auto m = rho.mass(10);
  EXPECT_NEAR(m.value, oracle, 1e-12);
  EXPECT_LE(m.lower, oracle + 1e-15);
  EXPECT_GE(m.upper, oracle - 1e-15);
  // Integral bound on the tail: the certified value is 0.99969, 0.9697 after 100 copies.
  EXPECT_NEAR(m.lower, 0.99969, 1e-5);
  EXPECT_NEAR(std::pow(m.lower, 100), 0.9697, 1e-4);
  EXPECT_NEAR(std::pow(oracle, 100), std::pow(m.value, 100), 1e-10);
}

TEST(Truncate, GeometricClosedForm) {
  auto rho = TailState::geometric(0.2);
  for (long d : {1L, 3L, 10L}) EXPECT_NEAR(rho.mass(d).value, 1.0 - std::pow(0.2, static_cast<double>(d)), 1e-14);
}

TEST(SuccessCurve, FiniteSupportIsConstant) {
  auto rho = TailState::finite({0.7, 0.3});
  CutoffSchedule s;
  auto c = schedule_success_curve(rho, s, {10, 100, 1000});
  for (const auto& row : c.rows) EXPECT_NEAR(row.success, 1.0, 1e-15);
}

TEST(SuccessCurve, PowerScheduleApproachesOne) {
  auto rho = TailState::power_law(4.0);
  CutoffSchedule s;
  s.eps = 2.0;
  auto c = schedule_success_curve(rho, s, {10, 100, 1000, 10000, 100000, 1000000});
  ASSERT_EQ(c.rows.size(), 6u);
  EXPECT_GE(c.rows.back().success_lower, 0.999);
  for (std::size_t i = 1; i < c.rows.size(); ++i) EXPECT_GE(c.rows[i].d, c.rows[i - 1].d);
}

TEST(SuccessCurve, ConstantScheduleDecays) {
  auto rho = TailState::geometric(0.3);
  CutoffSchedule s;
  s.kind = CutoffSchedule::Kind::constant;
  s.d0 = 2;
  auto c = schedule_success_curve(rho, s, {10, 100, 1000});
  for (const auto& row : c.rows) EXPECT_NEAR(row.success, std::pow(1.0 - 0.09, static_cast<double>(row.n)), 1e-12);
  EXPECT_LT(c.rows.back().success, 1e-30);
}

TEST(FreeEnergy, ThermalIsZero) {
  InfiniteContext ctx(Rational(1), 1, 1.0);
  auto rho = TailState::geometric(std::exp(-1.0));
  for (long d : {1L, 5L, 40L}) EXPECT_NEAR(renormalized_free_energy(rho, ctx, d).direct, 0.0, 1e-12);
}

TEST(FreeEnergy, GeometricConvergesToClosedForm) {
  InfiniteContext ctx(Rational(1), 1, 1.0);
  const double a = 0.2;
  auto rho = TailState::geometric(a);
  double exact = geometric_divergence(a, std::exp(-1.0));
  auto lim = free_energy_limit(rho, ctx);
  ASSERT_TRUE(lim.has_value());
  EXPECT_NEAR(*lim, exact, 1e-12);
  auto r = renormalized_free_energy(rho, ctx, 200);
  EXPECT_NEAR(r.direct, exact, 1e-3);
  EXPECT_NEAR(r.via_lindblad, r.direct, 1e-12);
  EXPECT_LE(std::abs(r.direct - exact), r.remainder + 1e-12);
  double far = std::abs(renormalized_free_energy(rho, ctx, 2).direct - exact);
  EXPECT_GT(far, std::abs(r.direct - exact));
}

TEST(Distinguishing, GroundVersusThermal) {
  InfiniteContext ctx(Rational(1), 1, 1.0);
  std::vector<Candidate> s{{"ground", TailState::finite({1.0})}, {"thermal", TailState::geometric(std::exp(-1.0))}};
  auto rep = distinguishing_dimension(s, ctx, 3, 0.05);
  EXPECT_EQ(rep.d_tilde, 1);
  EXPECT_GT(rep.xi_tilde, 0.05);
}

TEST(Distinguishing, CoherentPairIsEquivalent) {
  InfiniteContext ctx(Rational(1), 1, 1.0);
  Vec p(3), m(3);
  p << 0.0, 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  m << 0.0, 1.0 / std::sqrt(2.0), -1.0 / std::sqrt(2.0);
  std::vector<Candidate> s{{"plus", TailState::finite_matrix(pure_state(p))},
                           {"minus", TailState::finite_matrix(pure_state(m))}};
  auto rep = distinguishing_dimension(s, ctx, 3, 0.05);
  ASSERT_EQ(rep.pairs.size(), 1u);
  EXPECT_TRUE(rep.pairs[0].equivalent);
}

TEST(Distinguishing, ThreeDiagonalStates) {
  InfiniteContext ctx(Rational(1), 1, 1.0);
  std::vector<Candidate> s{{"a", TailState::geometric(0.1)}, {"b", TailState::geometric(0.4)},
                           {"c", TailState::geometric(0.7)}};
  auto rep = distinguishing_dimension(s, ctx, 3, 0.05);
  EXPECT_EQ(rep.d_tilde, 1);
  // At d = 1 only rho_11 survives: 0.9, 0.6, 0.3, so every pair sits 0.3 or 0.6 apart.
  EXPECT_NEAR(rep.xi_tilde, 0.3, 1e-12);
}

TEST(Semiuniversal, SingleCandidateSkipsIdentification) {
  InfiniteContext ctx(Rational(1), 1, 1.0);
  std::vector<Candidate> s{{"geo", TailState::geometric(0.2)}};
  auto o = semiuniversal_protocol(s, 0, ctx, 400, 1);
  EXPECT_EQ(o.copies.measured, 0);
  EXPECT_TRUE(o.converse_ok);
  EXPECT_GE(o.rate_nats, 0.0);
}

TEST(Semiuniversal, GroundVersusThermal) {
  InfiniteContext ctx(Rational(1), 1, 1.0);
  std::vector<Candidate> s{{"ground", TailState::finite({1.0})}, {"thermal", TailState::geometric(std::exp(-1.0))}};
  auto g = semiuniversal_protocol(s, 0, ctx, 1000, 3);
  EXPECT_GT(g.rate_nats, 0.0);
  EXPECT_LE(g.rate_nats, g.target_nats + kConverseTol);
  EXPECT_LE(g.extra["misid_bound"].get<double>(), 1e-3);
  EXPECT_FALSE(g.extra["misidentified"].get<bool>());
  auto t = semiuniversal_protocol(s, 1, ctx, 1000, 3);
  EXPECT_EQ(t.rate_nats, 0.0);
  EXPECT_GT(t.fidelity, 0.99);
}

TEST(Semiuniversal, RejectsCoherentCandidates) {
  InfiniteContext ctx(Rational(1), 1, 1.0);
  Vec p(2);
  p << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  std::vector<Candidate> s{{"plus", TailState::finite_matrix(pure_state(p))}};
  EXPECT_THROW(semiuniversal_protocol(s, 0, ctx, 100, 1), ValidationError);
}
