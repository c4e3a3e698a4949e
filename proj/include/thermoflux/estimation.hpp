#pragma once

#include "thermoflux/qmat.hpp"
#include "thermoflux/random.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

namespace thermoflux {

// Smallest m with m >= (d ln 2 + ln(1/delta)) / (2 eta^2).
inline long hoeffding_sample_size(double d_alphabet, double eta, double delta) {
  if (!(eta > 0.0 && eta <= 1.0)) throw ValidationError("hoeffding: eta must lie in (0,1]");
  if (!(delta > 0.0 && delta < 1.0)) throw ValidationError("hoeffding: delta must lie in (0,1)");
  if (!(d_alphabet >= 1.0)) throw ValidationError("hoeffding: alphabet size must be >= 1");
  double v = (d_alphabet * std::log(2.0) + std::log(1.0 / delta)) / (2.0 * eta * eta);
  // Guard against v landing a hair above an integer through rounding.
  double c = std::ceil(v - 1e-9 * std::max(1.0, v));
  return static_cast<long>(c);
}

// l1 radius certified with confidence 1-delta after m samples.
inline double hoeffding_radius(double d_alphabet, long m, double delta) {
  if (m < 1) throw ValidationError("hoeffding_radius: m must be >= 1");
  return std::sqrt((d_alphabet * std::log(2.0) + std::log(1.0 / delta)) / (2.0 * static_cast<double>(m)));
}

enum class SamplingMode { sampled, exact };

struct SamplingOracle {
  std::vector<double> distribution;
  std::uint64_t seed = 0;
  SamplingMode mode = SamplingMode::sampled;
};

struct EmpiricalDistribution {
  std::vector<long> counts;
  long m = 0;
  std::vector<double> p_hat;
};

inline double l1_distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

// Draws m symbols from the oracle. Exact mode returns p itself with counts
// rounded for bookkeeping.
inline EmpiricalDistribution sample_types(const SamplingOracle& oracle, long m, std::uint64_t seed) {
  if (m < 1) throw ValidationError("sample_types: m must be >= 1");
  const auto& p = oracle.distribution;
  EmpiricalDistribution e;
  e.m = m;
  e.counts.assign(p.size(), 0);
  if (oracle.mode == SamplingMode::exact) {
    e.p_hat = p;
    for (std::size_t i = 0; i < p.size(); ++i) e.counts[i] = std::lround(p[i] * static_cast<double>(m));
    return e;
  }
  Rng rng = stream(oracle.seed ^ seed, 0);
  boost::random::discrete_distribution<std::size_t, double> dd(p.begin(), p.end());
  for (long i = 0; i < m; ++i) ++e.counts[dd(rng)];
  e.p_hat.resize(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) e.p_hat[i] = static_cast<double>(e.counts[i]) / static_cast<double>(m);
  return e;
}

struct EstimatorReport {
  double estimate;    // D(p_hat || t^k) / k, nats per copy
  double radius;      // l1 confidence radius r
  double constant;    // 1 + k (beta E_max + ln Z) / sqrt 2
  double error_bar;   // constant * r / k
  double confidence;  // 1 - delta
};

inline EstimatorReport estimate_relative_entropy(const std::vector<double>& p_hat, const std::vector<double>& t_k,
                                                 const ThermalContext& ctx, std::size_t k, double r,
                                                 double delta = 0.0) {
  if (p_hat.size() != t_k.size()) throw ValidationError("estimate: alphabet mismatch");
  double d = kl_divergence(p_hat, t_k);
  if (!std::isfinite(d)) throw SupportError("estimate: p_hat outside the support of t");
  double c = ctx.continuity_constant(k);
  double kk = static_cast<double>(k);
  return {d / kk, r, c, c * r / kk, 1.0 - delta};
}

}  // namespace thermoflux
