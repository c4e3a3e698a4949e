#include "thermoflux/typeclass.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace thermoflux;

namespace {

// Counts strings of length n over d symbols with type f by enumeration.
long brute_count(const FreqVector& f) {
  long n = freq_total(f);
  long d = static_cast<long>(f.size());
  long total = 1;
  for (long i = 0; i < n; ++i) total *= d;
  long hits = 0;
  for (long x = 0; x < total; ++x) {
    FreqVector c(d, 0);
    long y = x;
    for (long i = 0; i < n; ++i) {
      ++c[y % d];
      y /= d;
    }
    if (c == f) ++hits;
  }
  return hits;
}

}  // namespace

TEST(FreqCount, SmallValues) {
  EXPECT_NEAR(log_freq_count({5, 0, 0}), 0.0, 1e-14);
  EXPECT_NEAR(log_freq_count({2, 2}), std::log(6.0), 1e-13);
  EXPECT_NEAR(log_freq_count({1, 1, 1}), std::log(6.0), 1e-13);
  EXPECT_EQ(brute_count({2, 2}), 6);
  EXPECT_EQ(brute_count({1, 1, 1}), 6);
}

TEST(FreqCount, AgreesWithBruteForceAndBigIntegers) {
  for (long n = 0; n <= 7; ++n)
    for (const auto& f : enumerate_freqs(n, 3)) {
      EXPECT_EQ(freq_count_exact(f), BigInt(brute_count(f)));
      EXPECT_NEAR(log_freq_count(f), std::log(static_cast<double>(brute_count(f))), 1e-12);
    }
  for (long n = 8; n <= 20; ++n)
    for (const auto& f : enumerate_freqs(n, 3)) {
      double exact = freq_count_exact(f).convert_to<double>();
      EXPECT_EQ(std::llround(std::exp(log_freq_count(f))), std::llround(exact));
    }
}

TEST(Enumeration, CountsAndOrder) {
  EXPECT_EQ(enumerate_freqs(2, 2), (std::vector<FreqVector>{{2, 0}, {1, 1}, {0, 2}}));
  EXPECT_EQ(enumerate_freqs(3, 2).size(), 4u);
  EXPECT_EQ(enumerate_freqs(4, 3).size(), 15u);
  auto all = enumerate_freqs(6, 4);
  std::set<FreqVector> s(all.begin(), all.end());
  EXPECT_EQ(s.size(), all.size());
  EXPECT_EQ(BigInt(all.size()), binomial_exact(9, 3));
  for (const auto& f : all) EXPECT_EQ(freq_total(f), 6);
}

TEST(Enumeration, CapEnforced) { EXPECT_THROW(enumerate_freqs(200, 5, 1000), CapExceeded); }

TEST(Injection, ListedExamples) {
  EXPECT_TRUE(injection_feasible({0, 1}, {1, 0}, {-1, 1}));
  EXPECT_FALSE(injection_feasible({1, 1}, {1, 0}, {-1, 1}));
  EXPECT_FALSE(injection_feasible({1, 0}, {1, 0}, {-1, 1}));  // f+g-h negative
}

TEST(Injection, ZeroShiftAlwaysFeasible) {
  for (const auto& f : enumerate_freqs(6, 3))
    for (const auto& g : enumerate_freqs(4, 3)) EXPECT_TRUE(injection_feasible(f, g, {0, 0, 0}));
}

TEST(Injection, FastPathAgreesWithExactAndWithBruteCounts) {
  for (const auto& f : enumerate_freqs(4, 2))
    for (const auto& g : enumerate_freqs(5, 2))
      for (long h0 = -3; h0 <= 3; ++h0) {
        ShiftFunction h{h0, -h0};
        FreqVector t{f[0] + g[0] - h0, f[1] + g[1] + h0};
        bool brute = t[0] >= 0 && t[1] >= 0 && brute_count(f) * brute_count(g) <= brute_count(t);
        EXPECT_EQ(injection_feasible(f, g, h), brute);
        EXPECT_EQ(injection_feasible_exact(f, g, h), brute);
      }
}

TEST(Injection, SlackAndMultiplicity) {
  // |Freq(2,(1,1))| = 2 fits one (0,1),(1,0) block twice but not three times.
  InjectionRule two;
  two.slack = 2;
  InjectionRule three;
  three.slack = 3;
  EXPECT_TRUE(injection_feasible({0, 1}, {1, 0}, {0, 0}, two));
  EXPECT_FALSE(injection_feasible({0, 1}, {1, 0}, {0, 0}, three));
  InjectionRule mu;
  mu.mu = {1, 2};
  // Weighted left side 2 exceeds |Freq(2,(2,0))| = 1.
  EXPECT_FALSE(injection_feasible({0, 1}, {1, 0}, {-1, 1}, mu));
}

TEST(Injection, BoundaryCaseUsesExactArithmetic) {
  // 6 * 1 * 1 against |Freq(4,(2,2))| = 6: exact equality.
  InjectionRule r;
  r.slack = 6;
  EXPECT_TRUE(injection_feasible({2, 0}, {0, 2}, {0, 0}, r));
  r.slack = 7;
  EXPECT_FALSE(injection_feasible({2, 0}, {0, 2}, {0, 0}, r));
}

TEST(TypeProbability, Examples) {
  EXPECT_NEAR(type_log_probability({7, 0}, {1.0, 0.0}), 0.0, 1e-14);
  EXPECT_NEAR(type_log_probability({1, 1}, {0.5, 0.5}), std::log(0.5), 1e-14);
  EXPECT_EQ(type_log_probability({0, 1}, {1.0, 0.0}), kNegInf);
}

TEST(TypeProbability, NormalizedAtFiftyQutrits) {
  std::vector<double> p{0.5, 0.3, 0.2};
  std::vector<double> terms;
  for (const auto& f : enumerate_freqs(50, 3)) terms.push_back(type_log_probability(f, p));
  EXPECT_NEAR(std::exp(log_sum_exp(terms)), 1.0, 1e-9);
}

TEST(TypicalMass, Examples) {
  EXPECT_NEAR(typical_mass({0.3, 0.7}, 40, 1.0), 1.0, 1e-12);
  EXPECT_NEAR(typical_mass({1.0, 0.0}, 40, 0.01), 1.0, 1e-12);
  double m100 = typical_mass({0.9, 0.1}, 100, 0.05);
  double m400 = typical_mass({0.9, 0.1}, 400, 0.05);
  EXPECT_GT(m100, 0.9);
  EXPECT_LT(m100, 1.0);
  EXPECT_GT(m400, m100);
  // Binomial tail, summed directly: k in [5, 15].
  double direct = 0.0;
  for (int k = 5; k <= 15; ++k)
    direct += std::exp(std::lgamma(101.0) - std::lgamma(k + 1.0) - std::lgamma(101.0 - k) + k * std::log(0.1) +
                       (100 - k) * std::log(0.9));
  EXPECT_NEAR(m100, direct, 1e-12);
}
