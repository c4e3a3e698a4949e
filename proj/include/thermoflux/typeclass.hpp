#pragma once

// Method-of-types counting in the log domain, with exact big-integer
// fallbacks wherever a decision sits close to its threshold.

#include "thermoflux/common.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace thermoflux {

using FreqVector = std::vector<long>;
using ShiftFunction = std::vector<long>;
using BigInt = boost::multiprecision::cpp_int;

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();
inline constexpr std::size_t kFreqIterationCap = 10'000'000;

inline long freq_total(const FreqVector& f) { return std::accumulate(f.begin(), f.end(), 0L); }

inline double log_factorial(long x) { return std::lgamma(static_cast<double>(x) + 1.0); }

// ln( n! / prod f_i! ).
inline double log_freq_count(const FreqVector& f) {
  double s = log_factorial(freq_total(f));
  for (long v : f) {
    if (v < 0) throw ValidationError("negative frequency");
    s -= log_factorial(v);
  }
  return s;
}

inline BigInt factorial_exact(long n) {
  BigInt r = 1;
  for (long i = 2; i <= n; ++i) r *= i;
  return r;
}

inline BigInt freq_count_exact(const FreqVector& f) {
  BigInt r = factorial_exact(freq_total(f));
  for (long v : f) r /= factorial_exact(v);
  return r;
}

inline BigInt binomial_exact(long n, long k) {
  if (k < 0 || k > n) return 0;
  k = std::min(k, n - k);
  BigInt r = 1;
  for (long i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

// C(n+d-1, d-1): number of frequency vectors of length d summing to n.
inline double freq_set_size(long n, long d) {
  return std::exp(log_factorial(n + d - 1) - log_factorial(n) - log_factorial(d - 1));
}

// Visits every frequency vector in colexicographic order (last coordinate
// slowest).
inline void for_each_freq(long n, long d, const std::function<void(const FreqVector&)>& fn,
                          std::size_t cap = kFreqIterationCap) {
  if (n < 0 || d < 1) throw ValidationError("for_each_freq: need n>=0, d>=1");
  if (freq_set_size(n, d) > static_cast<double>(cap)) throw CapExceeded("frequency enumeration exceeds cap");
  FreqVector f(d, 0);
  auto rec = [&](auto&& self, long pos, long remaining) -> void {
    if (pos == 0) {
      f[0] = remaining;
      fn(f);
      return;
    }
    for (long v = 0; v <= remaining; ++v) {
      f[pos] = v;
      self(self, pos - 1, remaining - v);
    }
    f[pos] = 0;
  };
  rec(rec, d - 1, n);
}

inline std::vector<FreqVector> enumerate_freqs(long n, long d, std::size_t cap = kFreqIterationCap) {
  std::vector<FreqVector> out;
  for_each_freq(n, d, [&](const FreqVector& f) { out.push_back(f); }, cap);
  return out;
}

// Counting inequality for an energy-conserving injection of the block
// (f, g) into the type class f+g-h, generalised to alphabet classes of
// multiplicity mu (all symbols of a class share energy and probability) and
// to `slack` competing blocks sharing one target class:
//
//   slack * M(n;f) M(l;g) prod mu^h  <=  M(n+l; f+g-h).
//
// With mu = 1 and slack = 1 this is the plain block condition.
struct InjectionRule {
  std::vector<long> mu;  // empty means all ones
  BigInt slack = 1;

  double log_mu(std::size_t c) const { return mu.empty() ? 0.0 : std::log(static_cast<double>(mu[c])); }
  double log_slack() const { return std::log(slack.convert_to<double>()); }
};

// Log of RHS/LHS; -inf when f+g-h has a negative entry.
inline double injection_log_margin(const FreqVector& f, const FreqVector& g, const ShiftFunction& h,
                                   const InjectionRule& rule = {}) {
  if (f.size() != g.size() || f.size() != h.size()) throw ValidationError("injection: size mismatch");
  long n = freq_total(f), l = freq_total(g);
  double m = log_factorial(n + l) - log_factorial(n) - log_factorial(l) - rule.log_slack();
  for (std::size_t c = 0; c < f.size(); ++c) {
    long t = f[c] + g[c] - h[c];
    if (t < 0) return kNegInf;
    m += log_factorial(f[c]) + log_factorial(g[c]) - log_factorial(t) - static_cast<double>(h[c]) * rule.log_mu(c);
  }
  return m;
}

inline bool injection_feasible_exact(const FreqVector& f, const FreqVector& g, const ShiftFunction& h,
                                     const InjectionRule& rule = {}) {
  FreqVector t(f.size());
  for (std::size_t c = 0; c < f.size(); ++c) {
    t[c] = f[c] + g[c] - h[c];
    if (t[c] < 0) return false;
  }
  BigInt lhs = rule.slack * freq_count_exact(f) * freq_count_exact(g);
  BigInt rhs = freq_count_exact(t);
  for (std::size_t c = 0; c < f.size() && !rule.mu.empty(); ++c) {
    BigInt p = boost::multiprecision::pow(BigInt(rule.mu[c]), static_cast<unsigned>(std::abs(h[c])));
    (h[c] > 0 ? lhs : rhs) *= p;
  }
  return lhs <= rhs;
}

// Absolute tolerance of the log-domain margin; inside it the exact integer
// comparison decides.
inline double injection_guard(long n, long l) {
  double s = static_cast<double>(n + l) + 1.0;
  return 1e-9 + 1e-14 * s * std::log(s);
}

inline bool injection_feasible(const FreqVector& f, const FreqVector& g, const ShiftFunction& h,
                               const InjectionRule& rule = {}) {
  double m = injection_log_margin(f, g, h, rule);
  if (m == kNegInf) return false;
  double guard = injection_guard(freq_total(f), freq_total(g));
  if (m > guard) return true;
  if (m < -guard) return false;
  return injection_feasible_exact(f, g, h, rule);
}

// ln[ |Freq(n,f)| prod p_i^f_i ].
inline double type_log_probability(const FreqVector& f, const std::vector<double>& p) {
  if (f.size() != p.size()) throw ValidationError("type_log_probability: size mismatch");
  double s = log_freq_count(f);
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (f[i] == 0) continue;
    if (p[i] <= 0.0) return kNegInf;
    s += static_cast<double>(f[i]) * std::log(p[i]);
  }
  return s;
}

struct TypicalSet {
  std::vector<double> p;
  long n;
  double delta;

  bool contains(const FreqVector& f) const {
    for (std::size_t i = 0; i < p.size(); ++i) {
      if (p[i] > 0.0) {
        if (std::abs(static_cast<double>(f[i]) / static_cast<double>(n) - p[i]) > delta + 1e-15) return false;
      } else if (f[i] != 0) {
        return false;
      }
    }
    return true;
  }
};

inline double log_sum_exp(const std::vector<double>& xs) {
  double mx = kNegInf;
  for (double x : xs) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - mx);
  return mx + std::log(s);
}

inline double typical_mass(const std::vector<double>& p, long n, double delta) {
  TypicalSet ts{p, n, delta};
  std::vector<double> terms;
  for_each_freq(n, static_cast<long>(p.size()), [&](const FreqVector& f) {
    if (ts.contains(f)) terms.push_back(type_log_probability(f, p));
  });
  return std::min(1.0, std::exp(log_sum_exp(terms)));
}

}  // namespace thermoflux
