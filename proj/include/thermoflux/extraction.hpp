#pragma once

// Work-extraction protocols on classical alphabets.
//
// Alphabets are lists of cells. A cell groups mu symbols sharing one energy
// and one probability, so strings can be counted at the cell level exactly:
// a cell-level type F stands for M(n;F) prod mu^F strings, all equally
// likely. Plain letters are cells with mu = 1.

#include "thermoflux/estimation.hpp"
#include "thermoflux/pinching.hpp"
#include "thermoflux/typeclass.hpp"

#include <boost/math/distributions/binomial.hpp>
#include <boost/math/tools/minima.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace thermoflux {

struct Cell {
  Rational energy;
  long mu = 1;
  double p = 0.0;  // total probability of the cell
  double t = 0.0;  // total thermal probability of the cell
  std::string label;
};

struct Alphabet {
  std::vector<Cell> cells;
  double beta = 1.0;

  std::size_t size() const { return cells.size(); }
  std::vector<double> p() const {
    std::vector<double> v;
    for (const auto& c : cells) v.push_back(c.p);
    return v;
  }
  std::vector<double> t() const {
    std::vector<double> v;
    for (const auto& c : cells) v.push_back(c.t);
    return v;
  }
  std::vector<long> mu() const {
    std::vector<long> v;
    for (const auto& c : cells) v.push_back(c.mu);
    return v;
  }
  double relative_entropy() const { return kl_divergence(p(), t()); }
  Alphabet with_p(const std::vector<double>& p_new) const {
    if (p_new.size() != cells.size()) throw ValidationError("alphabet: distribution size mismatch");
    Alphabet a = *this;
    for (std::size_t c = 0; c < cells.size(); ++c) a.cells[c].p = p_new[c];
    return a;
  }
};

inline void validate_distribution(const std::vector<double>& p) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= -1e-12)) throw ValidationError("distribution has a negative entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ValidationError("distribution does not sum to 1");
}

inline double thermal_weight(const ThermalContext& ctx, const Rational& energy, std::size_t copies) {
  return std::exp(-ctx.beta() * to_double(energy) - static_cast<double>(copies) * ctx.log_partition());
}

// One cell per energy level of a single system.
inline Alphabet letter_alphabet(const ThermalContext& ctx, const std::vector<double>& p) {
  if (p.size() != ctx.dim()) throw ValidationError("distribution length differs from the number of levels");
  validate_distribution(p);
  Alphabet a;
  a.beta = ctx.beta();
  for (std::size_t i = 0; i < ctx.dim(); ++i)
    a.cells.push_back({ctx.levels()[i], 1, std::max(0.0, p[i]), thermal_weight(ctx, ctx.levels()[i], 1),
                       "L" + std::to_string(i)});
  return a;
}

// Merges letters of equal energy whose probabilities agree within tol
// (relative to the larger one).
inline Alphabet lump_letters(const std::vector<Rational>& energies, const std::vector<double>& probs,
                             const ThermalContext& ctx, std::size_t copies, double tol = 1e-12) {
  std::vector<std::size_t> order(energies.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (energies[a] != energies[b]) return energies[a] < energies[b];
    return probs[a] > probs[b];
  });
  Alphabet a;
  a.beta = ctx.beta();
  for (std::size_t idx = 0; idx < order.size(); ++idx) {
    std::size_t i = order[idx];
    double pi = std::max(0.0, probs[i]);
    if (!a.cells.empty()) {
      Cell& last = a.cells.back();
      double per = last.p / static_cast<double>(last.mu);
      if (last.energy == energies[i] && std::abs(per - pi) <= tol * std::max({per, pi, 1e-300})) {
        last.mu += 1;
        last.p += pi;
        last.t += thermal_weight(ctx, energies[i], copies);
        continue;
      }
    }
    a.cells.push_back({energies[i], 1, pi, thermal_weight(ctx, energies[i], copies), ""});
  }
  double s = 0.0;
  for (auto& c : a.cells) s += c.p;
  for (std::size_t c = 0; c < a.cells.size(); ++c) {
    a.cells[c].p /= s;
    a.cells[c].label = "E=" + rational_label(a.cells[c].energy) + "#" + std::to_string(c);
  }
  return a;
}

// Eigen-letters of a pinched k-copy state: every eigenvalue of V_j^dag rho V_j
// is a letter with the energy of projector j.
inline Alphabet pinched_alphabet(const ThermalContext& ctx, std::size_t k, const PinchingChannel& ch,
                                 const Mat& rho_k, double tol = 1e-12) {
  auto spec = pinched_spectrum(ch, rho_k);
  std::vector<Rational> e;
  for (auto j : spec.projector) e.push_back(ch.family.energies.at(j));
  return lump_letters(e, spec.values, ctx, k, tol);
}

// Cells = projectors of a pinching family, with multiplicity equal to the rank.
// The probabilities are the weights Tr[Pi_j rho_k], or zero when no state is given.
inline Alphabet projector_alphabet(const ThermalContext& ctx, std::size_t k, const PinchingChannel& ch,
                                   const Mat* rho_k = nullptr) {
  Alphabet a;
  a.beta = ctx.beta();
  for (std::size_t j = 0; j < ch.family.size(); ++j) {
    const Rational& e = ch.family.energies.at(j);
    long mu = static_cast<long>(ch.family.rank(j));
    double p = 0.0;
    if (rho_k) {
      const Mat& v = ch.family.isometries[j];
      p = std::max(0.0, (v.adjoint() * (*rho_k) * v).trace().real());
    }
    a.cells.push_back({e, mu, p, static_cast<double>(mu) * thermal_weight(ctx, e, k), ch.family.labels[j]});
  }
  return a;
}

inline Rational shift_work(const Alphabet& a, const ShiftFunction& h) {
  Rational w(0);
  for (std::size_t c = 0; c < h.size(); ++c) w += a.cells[c].energy * static_cast<std::int64_t>(h[c]);
  return w;
}

inline bool is_zero(const ShiftFunction& h) {
  return std::all_of(h.begin(), h.end(), [](long v) { return v == 0; });
}

inline std::vector<bool> support_of(const std::vector<double>& p) {
  std::vector<bool> s;
  for (double v : p) s.push_back(v > 0.0);
  return s;
}

// Number of cell-level types of n symbols supported on `support`; this many
// blocks can compete for one target type class.
inline BigInt competing_blocks(long n, const std::vector<bool>& support) {
  long s = std::count(support.begin(), support.end(), true);
  if (s <= 1) return 1;
  return binomial_exact(n + s - 1, s - 1);
}

struct Box {
  std::vector<long> f_lo, f_hi, g_lo, g_hi;
};

// ln Gamma part of the counting margin contributed by one cell.
inline double cell_psi(long f, long g, long h) {
  return log_factorial(f) + log_factorial(g) - log_factorial(f + g - h);
}

namespace detail {

// min over integer F in [a, b] of psi(F, g, h) - lambda F. For g >= h the
// function is convex in F (forward differences ln((F+1)/(F+1+g-h)) - lambda
// increase), so the minimiser has a closed form; otherwise it is concave and
// the minimum sits at an endpoint.
inline double min_over_f(long a, long b, long g, long h, double lambda) {
  auto val = [&](long f) {
    if (f + g - h < 0) return std::numeric_limits<double>::infinity();
    return cell_psi(f, g, h) - lambda * static_cast<double>(f);
  };
  double best = std::min(val(a), val(b));
  if (g >= h && lambda < 0.0) {
    double el = std::exp(lambda);
    double k = static_cast<double>(g - h);
    double fstar = el * k / (1.0 - el) - 1.0;
    if (fstar > static_cast<double>(a) && fstar < static_cast<double>(b)) {
      long c = static_cast<long>(std::ceil(fstar));
      for (long f = c - 1; f <= c + 1; ++f)
        if (f >= a && f <= b) best = std::min(best, val(f));
    }
  }
  return best;
}

}  // namespace detail

// Lower bound of sum_c psi_c over the typical blocks: F in the box with
// sum F = n, G in the box. G enters through its corners (psi is monotone in
// G for fixed F); the constraint on F is dualised, and any multiplier gives
// a valid bound, so a golden-section search over lambda only tightens it.
inline double box_psi_lower_bound(const Box& b, const ShiftFunction& h, long n) {
  const std::size_t d = h.size();
  // Uncoupled corners first.
  double corner = 0.0;
  for (std::size_t c = 0; c < d; ++c) {
    if (b.f_hi[c] == 0 && h[c] == 0) continue;
    if (b.f_lo[c] + b.g_lo[c] - h[c] < 0) return kNegInf;
    corner += std::min({cell_psi(b.f_lo[c], b.g_lo[c], h[c]), cell_psi(b.f_lo[c], b.g_hi[c], h[c]),
                        cell_psi(b.f_hi[c], b.g_lo[c], h[c]), cell_psi(b.f_hi[c], b.g_hi[c], h[c])});
  }
  auto dual = [&](double lambda) {
    double s = lambda * static_cast<double>(n);
    for (std::size_t c = 0; c < d; ++c) {
      if (b.f_hi[c] == 0 && h[c] == 0) continue;
      s += std::min(detail::min_over_f(b.f_lo[c], b.f_hi[c], b.g_lo[c], h[c], lambda),
                    detail::min_over_f(b.f_lo[c], b.f_hi[c], b.g_hi[c], h[c], lambda));
    }
    return s;
  };
  // The dual is concave in lambda.
  double lo = -60.0, hi = 20.0;
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double f1 = dual(x1), f2 = dual(x2);
  double best = std::max({corner, f1, f2});
  for (int it = 0; it < 60; ++it) {
    if (f1 < f2) {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = dual(x2);
    } else {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = dual(x1);
    }
    best = std::max({best, f1, f2});
  }
  return best;
}

// Lower bound of the counting margin over the typical blocks of the box;
// -inf when some block leaves f+g-h negative.
inline double box_min_margin(const Box& b, const ShiftFunction& h, const InjectionRule& rule, long n, long l) {
  double m = log_factorial(n + l) - log_factorial(n) - log_factorial(l) - rule.log_slack();
  for (std::size_t c = 0; c < h.size(); ++c) m -= static_cast<double>(h[c]) * rule.log_mu(c);
  double psi = box_psi_lower_bound(b, h, n);
  return psi == kNegInf ? kNegInf : m + psi;
}

inline bool box_feasible(const Box& b, const ShiftFunction& h, const InjectionRule& rule, long n, long l) {
  return box_min_margin(b, h, rule, n, l) > injection_guard(n, l);
}

struct ShiftOptions {
  double eps_typ = 0.0;     // total tail mass left outside the typical box; 0 selects 1/n_eff
  double delta_f_min = 0.0;  // extra l-infinity width for the system coordinates (estimation radius)
  int max_rounds = 0;        // 0 selects 4 * |alphabet|
  double refine_nodes = 2e5; // node budget of the enumeration phase; 0 disables it
};

// Typical box from exact binomial quantiles: each coordinate of F ~ Mult(n, p)
// and G ~ Mult(l, t) keeps all but eps / (2 #coordinates) of its mass on
// either side. System coordinates are widened to at least n (p +- delta_f_min).
inline Box quantile_box(const std::vector<double>& p, long n, const std::vector<double>& t, long l, double eps,
                        double delta_f_min = 0.0) {
  const std::size_t d = p.size();
  std::size_t coords = 0;
  for (std::size_t c = 0; c < d; ++c) coords += (p[c] > 0.0) + (t[c] > 0.0);
  double a = eps / (2.0 * static_cast<double>(std::max<std::size_t>(coords, 1)));
  Box b;
  b.f_lo.assign(d, 0);
  b.f_hi.assign(d, 0);
  b.g_lo.assign(d, 0);
  b.g_hi.assign(d, 0);
  auto range = [&](long total, double q, long& lo, long& hi) {
    if (q <= 0.0) {
      lo = hi = 0;
      return;
    }
    if (q >= 1.0) {
      lo = hi = total;
      return;
    }
    boost::math::binomial_distribution<double> bd(static_cast<double>(total), q);
    lo = static_cast<long>(std::floor(boost::math::quantile(bd, a) + 1e-9));
    hi = static_cast<long>(std::ceil(boost::math::quantile(boost::math::complement(bd, a)) - 1e-9));
    lo = std::clamp(lo, 0L, total);
    hi = std::clamp(hi, lo, total);
  };
  for (std::size_t c = 0; c < d; ++c) {
    range(n, p[c], b.f_lo[c], b.f_hi[c]);
    if (p[c] > 0.0 && delta_f_min > 0.0) {
      double nn = static_cast<double>(n);
      b.f_lo[c] = std::min(b.f_lo[c], std::max(0L, static_cast<long>(std::ceil(nn * (p[c] - delta_f_min) - 1e-9))));
      b.f_hi[c] = std::max(b.f_hi[c], std::min(n, static_cast<long>(std::floor(nn * (p[c] + delta_f_min) + 1e-9))));
    }
    range(l, t[c], b.g_lo[c], b.g_hi[c]);
  }
  return b;
}

inline InjectionRule plan_rule(const Alphabet& a, long n, const std::vector<bool>& support, bool zero_shift) {
  InjectionRule r;
  r.mu = a.mu();
  r.slack = zero_shift ? BigInt(1) : competing_blocks(n, support);
  return r;
}

struct ExtractionPlan {
  Alphabet alphabet;  // design distribution in the cells
  long n = 0;
  long l = 0;
  ShiftFunction h;
  InjectionRule rule;
  std::vector<bool> support;
  Rational work_exact;
  double work = 0.0;
  double xi = 0.0;             // certified upper bound on the atypical mass
  double xi_unresolved = 0.0;  // mass dropped by pruning, already inside xi
  std::string xi_method;
};

// Acceptance of the block (F, G): F must live on the design support and the
// counting inequality (with multiplicities and competing-block slack) must
// hold. A zero shift accepts everything.
inline bool plan_accepts(const ExtractionPlan& plan, const FreqVector& f, const FreqVector& g) {
  if (is_zero(plan.h)) return true;
  for (std::size_t c = 0; c < f.size(); ++c)
    if (f[c] > 0 && !plan.support[c]) return false;
  return injection_feasible(f, g, plan.h, plan.rule);
}

struct XiOptions {
  double node_budget = 4e6;
  double z = 9.0;  // pruning width in standard deviations
};

struct XiResult {
  double xi;
  double unresolved;
  std::string method;
};

namespace detail {

inline double binom_log_pmf(long n, long k, double q) {
  if (q <= 0.0) return k == 0 ? 0.0 : kNegInf;
  if (q >= 1.0) return k == n ? 0.0 : kNegInf;
  return log_factorial(n) - log_factorial(k) - log_factorial(n - k) + static_cast<double>(k) * std::log(q) +
         static_cast<double>(n - k) * std::log1p(-q);
}

inline void binom_range(long n, double q, double z, long& lo, long& hi) {
  if (q <= 0.0) {
    lo = hi = 0;
    return;
  }
  if (q >= 1.0) {
    lo = hi = n;
    return;
  }
  if (n <= 64) {
    lo = 0;
    hi = n;
    return;
  }
  double mean = static_cast<double>(n) * q, sd = std::sqrt(static_cast<double>(n) * q * (1.0 - q));
  lo = std::max(0L, static_cast<long>(std::floor(mean - z * sd)) - 2);
  hi = std::min(n, static_cast<long>(std::ceil(mean + z * sd)) + 2);
}

// P(X < a) and P(X > b) for X ~ Bin(n, q), computed as tails so that tiny
// masses keep their relative accuracy.
inline double binom_below(long n, double q, long a) {
  if (a <= 0) return 0.0;
  if (a > n) return 1.0;
  if (q <= 0.0) return 1.0;
  if (q >= 1.0) return 0.0;
  boost::math::binomial_distribution<double> bd(static_cast<double>(n), q);
  return boost::math::cdf(bd, static_cast<double>(a - 1));
}

inline double binom_above(long n, double q, long b) {
  if (b >= n) return 0.0;
  if (b < 0) return 1.0;
  if (q <= 0.0) return 0.0;
  if (q >= 1.0) return 1.0;
  boost::math::binomial_distribution<double> bd(static_cast<double>(n), q);
  return boost::math::cdf(boost::math::complement(bd, static_cast<double>(b)));
}

inline double binom_outside(long n, double q, long lo, long hi) {
  if (lo > hi) return 1.0;
  return std::min(1.0, binom_below(n, q, lo) + binom_above(n, q, hi));
}

class XiEvaluator {
 public:
  XiEvaluator(const ExtractionPlan& plan, const std::vector<double>& p_true, const XiOptions& opt)
      : plan_(plan), p_(p_true), t_(plan.alphabet.t()), opt_(opt) {
    const std::size_t d = p_.size();
    for (std::size_t c = 0; c < d; ++c) {
      if (p_[c] > 0.0) fcells_.push_back(c);
      if (p_[c] > 0.0 || plan.h[c] != 0) rcells_.push_back(c);
    }
    std::vector<bool> in_r(d, false);
    for (auto c : rcells_) in_r[c] = true;
    for (std::size_t c = 0; c < d; ++c)
      if (!in_r[c]) rest_t_ += t_[c];
    c0_ = log_factorial(plan.n + plan.l) - log_factorial(plan.n) - log_factorial(plan.l) - plan.rule.log_slack();
    for (std::size_t c = 0; c < d; ++c) c0_ -= static_cast<double>(plan.h[c]) * plan.rule.log_mu(c);
    guard_ = injection_guard(plan.n, plan.l);
    f_.assign(d, 0);
    g_.assign(d, 0);
  }

  double estimated_nodes() const {
    double nodes = 1.0;
    double rem_p = 1.0;
    for (std::size_t i = 0; i + 1 < fcells_.size(); ++i) {
      double q = p_[fcells_[i]] / rem_p;
      rem_p -= p_[fcells_[i]];
      long lo, hi;
      binom_range(plan_.n, std::clamp(q, 0.0, 1.0), opt_.z, lo, hi);
      nodes *= static_cast<double>(hi - lo + 1);
    }
    double rem_t = 1.0;
    std::size_t enumerated = rest_t_ > 0.0 ? rcells_.size() - (rcells_.empty() ? 0 : 1)
                                           : (rcells_.empty() ? 0 : rcells_.size() - 1);
    for (std::size_t i = 0; i < enumerated; ++i) {
      double q = t_[rcells_[i]] / rem_t;
      rem_t -= t_[rcells_[i]];
      long lo, hi;
      binom_range(plan_.l, std::clamp(q, 0.0, 1.0), opt_.z, lo, hi);
      nodes *= static_cast<double>(hi - lo + 1);
    }
    return nodes;
  }

  XiResult exact() {
    fail_ = 0.0;
    lost_ = 0.0;
    enum_f(0, plan_.n, 1.0, 1.0);
    return {std::clamp(fail_, 0.0, 1.0), lost_, "enumeration"};
  }

  // Certified bound from a single product box: success >= P(box) when the
  // worst corner of the box is feasible.
  XiResult box_bound() const {
    double best = 1.0;
    for (double z : {9.0, 7.0, 6.0, 5.0, 4.0, 3.5, 3.0, 2.5, 2.0, 1.5}) {
      Box b;
      const std::size_t d = p_.size();
      b.f_lo.assign(d, 0);
      b.f_hi.assign(d, 0);
      b.g_lo.assign(d, 0);
      b.g_hi.assign(d, 0);
      double outside = 0.0;
      auto marg = [&](long total, double q, long& lo, long& hi) {
        if (q <= 0.0) {
          lo = hi = 0;
          return;
        }
        double mean = static_cast<double>(total) * q, sd = std::sqrt(static_cast<double>(total) * q * (1.0 - q));
        lo = std::max(0L, static_cast<long>(std::floor(mean - z * sd)));
        hi = std::min(total, static_cast<long>(std::ceil(mean + z * sd)));
      };
      for (std::size_t c = 0; c < d; ++c) {
        if (p_[c] > 0.0) {
          if (!plan_.support[c]) {
            outside += -std::expm1(static_cast<double>(plan_.n) * std::log1p(-std::min(p_[c], 1.0 - 1e-300)));
          } else {
            marg(plan_.n, p_[c], b.f_lo[c], b.f_hi[c]);
            outside += binom_outside(plan_.n, p_[c], b.f_lo[c], b.f_hi[c]);
          }
        }
        if (p_[c] > 0.0 || plan_.h[c] != 0) {
          marg(plan_.l, t_[c], b.g_lo[c], b.g_hi[c]);
          outside += binom_outside(plan_.l, t_[c], b.g_lo[c], b.g_hi[c]);
        } else {
          b.g_lo[c] = 0;
          b.g_hi[c] = plan_.l;
        }
      }
      if (outside >= best) continue;
      if (box_min_margin(b, plan_.h, plan_.rule, plan_.n, plan_.l) > guard_) best = outside;
    }
    return {std::clamp(best, 0.0, 1.0), 0.0, "box-bound"};
  }

 private:
  bool accept(double margin) {
    if (margin > guard_) return true;
    if (margin < -guard_) return false;
    // Exact decision on the cells that do not cancel.
    FreqVector fr, gr;
    ShiftFunction hr;
    std::vector<long> mr;
    for (auto c : rcells_) {
      fr.push_back(f_[c]);
      gr.push_back(g_[c]);
      hr.push_back(plan_.h[c]);
      mr.push_back(plan_.rule.mu.empty() ? 1 : plan_.rule.mu[c]);
    }
    long fn = freq_total(fr), gn = freq_total(gr);
    // Cells outside R have f = h = 0 and cancel; one pooled cell stands in.
    fr.push_back(plan_.n - fn);
    gr.push_back(plan_.l - gn);
    hr.push_back(0);
    mr.push_back(1);
    BigInt lhs = plan_.rule.slack * freq_count_exact(fr) * freq_count_exact(gr);
    FreqVector tr(fr.size());
    for (std::size_t i = 0; i < fr.size(); ++i) tr[i] = fr[i] + gr[i] - hr[i];
    BigInt rhs = freq_count_exact(tr);
    for (std::size_t i = 0; i < mr.size(); ++i) {
      BigInt pw = boost::multiprecision::pow(BigInt(mr[i]), static_cast<unsigned>(std::abs(hr[i])));
      (hr[i] > 0 ? lhs : rhs) *= pw;
    }
    return lhs <= rhs;
  }

  // Branches lighter than this are not explored; their mass counts as failure.
  static constexpr double kNodeFloor = 1e-15;

  // Pruned tails count as failures.
  void prune(double w, double tail) {
    fail_ += w * tail;
    lost_ += w * tail;
  }

  void enum_f(std::size_t i, long rem, double rem_p, double w) {
    if (fcells_.empty()) {
      enum_g(0, plan_.l, 1.0, c0_, w);
      return;
    }
    std::size_t c = fcells_[i];
    if (i + 1 == fcells_.size()) {
      f_[c] = rem;
      if (rem > 0 && !plan_.support[c]) {
        f_[c] = 0;
        fail_ += w;
        return;
      }
      enum_g(0, plan_.l, 1.0, c0_, w);
      f_[c] = 0;
      return;
    }
    double q = std::clamp(p_[c] / rem_p, 0.0, 1.0);
    long lo, hi;
    binom_range(rem, q, opt_.z, lo, hi);
    for (long v = lo; v <= hi; ++v) {
      double pm = std::exp(binom_log_pmf(rem, v, q));
      if (pm == 0.0) continue;
      if (w * pm < kNodeFloor) {
        prune(w, pm);
        continue;
      }
      if (v > 0 && !plan_.support[c]) {
        fail_ += w * pm;
        continue;
      }
      f_[c] = v;
      enum_f(i + 1, rem - v, rem_p - p_[c], w * pm);
    }
    f_[c] = 0;
    prune(w, binom_outside(rem, q, lo, hi));
  }

  void enum_g(std::size_t j, long rem, double rem_t, double partial, double w) {
    if (rcells_.empty()) return;
    std::size_t c = rcells_[j];
    const long h = plan_.h[c], f = f_[c];
    const bool last = (j + 1 == rcells_.size());
    if (last && rest_t_ <= 0.0) {
      g_[c] = rem;
      if (!(f + rem - h >= 0 && accept(partial + cell_psi(f, rem, h)))) fail_ += w;
      g_[c] = 0;
      return;
    }
    double q = std::clamp(t_[c] / rem_t, 0.0, 1.0);
    if (last) {
      long g0 = std::max(0L, h - f);
      if (g0 > rem) {
        fail_ += w;
        return;
      }
      auto ok = [&](long g) {
        g_[c] = g;
        bool r = accept(partial + cell_psi(f, g, h));
        g_[c] = 0;
        return r;
      };
      long a = g0, b = rem;
      if (h > f) {  // margin increasing in g
        if (!ok(b)) {
          fail_ += w;
          return;
        }
        while (a < b) {
          long mid = a + (b - a) / 2;
          if (ok(mid))
            b = mid;
          else
            a = mid + 1;
        }
        fail_ += w * binom_below(rem, q, a);
      } else if (h < f) {  // decreasing
        if (!ok(a)) {
          fail_ += w;
          return;
        }
        while (a < b) {
          long mid = a + (b - a + 1) / 2;
          if (ok(mid))
            a = mid;
          else
            b = mid - 1;
        }
        fail_ += w * binom_outside(rem, q, g0, a);
      } else {
        fail_ += w * (ok(g0) ? binom_below(rem, q, g0) : 1.0);
      }
      return;
    }
    long lo, hi;
    binom_range(rem, q, opt_.z, lo, hi);
    for (long v = lo; v <= hi; ++v) {
      double pm = std::exp(binom_log_pmf(rem, v, q));
      if (pm == 0.0) continue;
      if (w * pm < kNodeFloor) {
        prune(w, pm);
        continue;
      }
      if (f + v - h < 0) {
        fail_ += w * pm;
        continue;
      }
      g_[c] = v;
      enum_g(j + 1, rem - v, rem_t - t_[c], partial + cell_psi(f, v, h), w * pm);
    }
    g_[c] = 0;
    prune(w, binom_outside(rem, q, lo, hi));
  }

  const ExtractionPlan& plan_;
  std::vector<double> p_, t_;
  XiOptions opt_;
  std::vector<std::size_t> fcells_, rcells_;
  double rest_t_ = 0.0;
  double c0_ = 0.0;
  double guard_ = 0.0;
  FreqVector f_, g_;
  double fail_ = 0.0;
  double lost_ = 0.0;
};

}  // namespace detail

// Atypical mass of the plan when the system letters follow p_true.
inline XiResult evaluate_xi(const ExtractionPlan& plan, const std::vector<double>& p_true, const XiOptions& opt = {}) {
  if (p_true.size() != plan.alphabet.size()) throw ValidationError("evaluate_xi: alphabet mismatch");
  if (is_zero(plan.h)) return {0.0, 0.0, "identity"};
  detail::XiEvaluator ev(plan, p_true, opt);
  if (ev.estimated_nodes() <= opt.node_budget) return ev.exact();
  return ev.box_bound();
}

inline ExtractionPlan make_plan(const Alphabet& design, long n, long l, const ShiftFunction& h) {
  if (n < 1 || l < 1) throw ValidationError("plan: need n >= 1 and l >= 1");
  if (h.size() != design.size()) throw ValidationError("plan: shift size mismatch");
  if (std::accumulate(h.begin(), h.end(), 0L) != 0) throw ValidationError("plan: shift must sum to zero");
  ExtractionPlan plan;
  plan.alphabet = design;
  plan.n = n;
  plan.l = l;
  plan.h = h;
  plan.support = support_of(design.p());
  plan.rule = plan_rule(design, n, plan.support, is_zero(h));
  plan.work_exact = shift_work(design, h);
  plan.work = to_double(plan.work_exact);
  return plan;
}

inline ExtractionPlan build_classical_plan(const Alphabet& a, long n, long l, const ShiftFunction& h,
                                           const XiOptions& opt = {}) {
  ExtractionPlan plan = make_plan(a, n, l, h);
  auto r = evaluate_xi(plan, a.p(), opt);
  plan.xi = r.xi;
  plan.xi_unresolved = r.unresolved;
  plan.xi_method = r.method;
  return plan;
}

// Greedy pair transfers h += w (e_a - e_b), E_a > E_b, within the budget
// beta W / n_eff <= D(p_est||t) - margin. Phase one keeps every block of the
// quantile box feasible (a certified bound, cheap at any size). Phase two,
// run when exact enumeration is affordable, keeps raising transfers while
// the atypical mass under p_est stays below eps. Each step takes the largest
// work gain; ties go to the lexicographically smallest h.
inline ShiftFunction choose_shift(const Alphabet& est, long n_eff, long l, double margin_nats,
                                  const ShiftOptions& opt = {}) {
  if (margin_nats < 0.0) throw ValidationError("choose_shift: margin must be >= 0");
  if (n_eff < 1 || l < 1) throw ValidationError("choose_shift: need n_eff >= 1 and l >= 1");
  const std::size_t d = est.size();
  ShiftFunction h(d, 0);
  if (est.beta <= 0.0) return h;
  double dpt = est.relative_entropy();
  if (!std::isfinite(dpt)) return h;
  double budget = static_cast<double>(n_eff) * (dpt - margin_nats) / est.beta;
  if (budget <= 0.0) return h;
  double nn = static_cast<double>(n_eff);
  double eps = opt.eps_typ > 0 ? opt.eps_typ : 1.0 / (nn * nn);
  auto p = est.p();
  Box box = quantile_box(p, n_eff, est.t(), l, eps, opt.delta_f_min);
  InjectionRule rule = plan_rule(est, n_eff, support_of(p), false);
  int rounds = opt.max_rounds > 0 ? opt.max_rounds : static_cast<int>(4 * d);

  auto greedy = [&](const std::function<bool(const ShiftFunction&)>& feasible) {
    for (int round = 0; round < rounds; ++round) {
      double w_now = to_double(shift_work(est, h));
      double best_gain = 0.0;
      ShiftFunction best;
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) {
          if (!(est.cells[a].energy > est.cells[b].energy)) continue;
          double de = to_double(est.cells[a].energy - est.cells[b].energy);
          double cap = std::floor((budget - w_now) / de + 1e-9);
          long wmax = static_cast<long>(std::min(cap, static_cast<double>(n_eff + l)));
          if (wmax < 1) continue;
          auto trial = [&](long w) {
            ShiftFunction h2 = h;
            h2[a] += w;
            h2[b] -= w;
            return h2;
          };
          if (!feasible(trial(1))) continue;
          long lo = 1, hi = wmax;
          while (lo < hi) {
            long mid = lo + (hi - lo + 1) / 2;
            if (feasible(trial(mid)))
              lo = mid;
            else
              hi = mid - 1;
          }
          double gain = static_cast<double>(lo) * de;
          ShiftFunction cand = trial(lo);
          if (gain > best_gain + 1e-12 || (std::abs(gain - best_gain) <= 1e-12 && !best.empty() && cand < best)) {
            best_gain = gain;
            best = cand;
          }
        }
      if (best.empty()) break;
      h = best;
    }
  };

  greedy([&](const ShiftFunction& h2) { return box_feasible(box, h2, rule, n_eff, l); });
  if (opt.refine_nodes > 0) {
    XiOptions xo;
    xo.node_budget = opt.refine_nodes;
    auto within = [&](const ShiftFunction& h2) {
      ExtractionPlan probe = make_plan(est, n_eff, l, h2);
      detail::XiEvaluator ev(probe, p, xo);
      if (ev.estimated_nodes() > xo.node_budget) return false;
      return ev.exact().xi <= eps;
    };
    // Only worth it when the current plan is itself enumerable.
    ExtractionPlan probe = make_plan(est, n_eff, l, h);
    detail::XiEvaluator ev(probe, p, xo);
    if (ev.estimated_nodes() <= xo.node_budget) greedy(within);
  }
  return h;
}

struct CopiesConsumed {
  long pinched = 0;
  long measured = 0;
  long discarded = 0;
};

struct ProtocolOutcome {
  std::string mode;
  long n = 0;
  long k = 1;
  long m = 0;
  long l = 0;
  ShiftFunction h;
  double work = 0.0;
  std::string work_exact = "0";
  double rate_nats = 0.0;
  double target_nats = 0.0;          // D(rho||tau)
  double pinched_target_nats = 0.0;  // per-copy target after the k-copy pinching
  double xi = 0.0;
  double fidelity = 1.0;
  double success_prob = 1.0;
  std::uint64_t seed = 0;
  std::string xi_method;
  std::string protocol_hash;
  CopiesConsumed copies;
  bool converse_ok = true;
  nlohmann::json extra = nlohmann::json::object();
};

inline constexpr double kConverseTol = 1e-8;

inline void finish_outcome(ProtocolOutcome& o, const ExtractionPlan& plan, double beta) {
  o.h = plan.h;
  o.work = plan.work;
  o.work_exact = rational_label(plan.work_exact);
  o.l = plan.l;
  o.rate_nats = beta * plan.work / static_cast<double>(o.n);
  o.converse_ok = o.rate_nats <= o.target_nats + kConverseTol;
}

inline nlohmann::json outcome_to_json(const ProtocolOutcome& o) {
  return {{"mode", o.mode},
          {"n", o.n},
          {"k", o.k},
          {"m", o.m},
          {"l", o.l},
          {"h", o.h},
          {"work", o.work},
          {"work_exact", o.work_exact},
          {"rate_nats", o.rate_nats},
          {"target_nats", o.target_nats},
          {"pinched_target_nats", o.pinched_target_nats},
          {"xi", o.xi},
          {"xi_method", o.xi_method},
          {"fidelity", o.fidelity},
          {"success_prob", o.success_prob},
          {"seed", o.seed},
          {"protocol_hash", o.protocol_hash},
          {"copies", {{"pinched", o.copies.pinched}, {"measured", o.copies.measured}, {"discarded", o.copies.discarded}}},
          {"converse_ok", o.converse_ok},
          {"extra", o.extra}};
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os << std::setprecision(12) << v;
  return os.str();
}

inline std::string outcome_csv_header() { return "n,k,m,l,W,rate_nats,target_nats,xi,fidelity,seed,mode"; }

inline std::string outcome_csv_row(const ProtocolOutcome& o) {
  std::ostringstream os;
  os << o.n << ',' << o.k << ',' << o.m << ',' << o.l << ',' << format_double(o.work) << ','
     << format_double(o.rate_nats) << ',' << format_double(o.target_nats) << ',' << format_double(o.xi) << ','
     << format_double(o.fidelity) << ',' << o.seed << ',' << o.mode;
  return os.str();
}

inline ProtocolOutcome run_classical_plan(const ExtractionPlan& plan, double target_nats, const std::string& mode = "classical") {
  ProtocolOutcome o;
  o.mode = mode;
  o.n = plan.n;
  o.target_nats = target_nats;
  o.pinched_target_nats = target_nats;
  o.xi = plan.xi;
  o.xi_method = plan.xi_method;
  o.fidelity = 1.0 - plan.xi;
  o.copies.pinched = plan.n;
  finish_outcome(o, plan, plan.alphabet.beta);
  return o;
}

inline long default_bath(long n_eff, double c) {
  return std::max(1L, static_cast<long>(std::ceil(c * std::pow(static_cast<double>(n_eff), 1.5) - 1e-9)));
}

struct ClassicalOptions {
  double c = 1.0;        // bath l = ceil(c n^{3/2})
  long l = 0;            // explicit bath size, overrides c
  double margin = 0.0;   // nats per symbol
  ShiftOptions shift;
  XiOptions xi;
};

// Known classical source p over the levels of ctx.
inline ProtocolOutcome classical_protocol(const std::vector<double>& p, const ThermalContext& ctx, long n,
                                          const ClassicalOptions& opt = {}) {
  Alphabet a = letter_alphabet(ctx, p);
  long l = opt.l > 0 ? opt.l : default_bath(n, opt.c);
  ShiftFunction h = choose_shift(a, n, l, opt.margin, opt.shift);
  ExtractionPlan plan = build_classical_plan(a, n, l, h, opt.xi);
  return run_classical_plan(plan, a.relative_entropy(), "classical");
}

// Known quantum state: energy-pinch blocks of k copies, diagonalize each
// block (the state is known), run the classical protocol on q = floor(n/k)
// super-letters.
inline ProtocolOutcome state_aware_protocol(const Mat& rho, const ThermalContext& ctx, long n, long k,
                                            const ClassicalOptions& opt = {}) {
  validate_state(rho);
  if (k < 1 || n < k) throw ValidationError("state_aware: need 1 <= k <= n");
  Mat rho_k = tensor_power(rho, static_cast<std::size_t>(k));
  auto ch = energy_pinching(ctx, static_cast<std::size_t>(k));
  Alphabet a = pinched_alphabet(ctx, static_cast<std::size_t>(k), ch, rho_k);
  long q = n / k;
  long l = opt.l > 0 ? opt.l : default_bath(q, opt.c);
  ShiftFunction h = choose_shift(a, q, l, opt.margin, opt.shift);
  ExtractionPlan plan = build_classical_plan(a, q, l, h, opt.xi);
  ProtocolOutcome o = run_classical_plan(plan, relative_entropy(rho, thermal_state(ctx)), "aware");
  o.n = n;
  o.k = k;
  o.pinched_target_nats = a.relative_entropy() / static_cast<double>(k);
  o.copies = {k * q, 0, n - k * q};
  finish_outcome(o, plan, ctx.beta());
  return o;
}

// ---------------------------------------------------------------------------
// Universal protocol

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

struct UniversalParams {
  long n = 0;
  long k = 1;
  long m = 1;
  long m_hoeffding = 1;
  bool m_capped = false;
  double eps = 0.0;
  double delta_prime = 0.0;
  double r = 0.0;
  double c = 1.0;
  double margin_factor = 2.0;  // margin = margin_factor * alpha_k * r per super-letter
  double margin_split = 3.0;   // r = delta' / (margin_split * alpha_k)
  double m_cap_fraction = 0.5;

  long q() const { return n / k; }
  long discarded() const { return n - k * q(); }
  long n_eff() const { return q() - m; }
  long bath() const { return default_bath(std::max(1L, n_eff()), c); }
};

struct ScheduleOverrides {
  long k = 0;
  long m = 0;
  double c = 1.0;
  double margin_factor = 2.0;
  double margin_split = 3.0;
  double m_cap_fraction = 0.5;
};

// k_n = floor(ln n / (3 ln d)) (min 1), eps_n = exp(-n^{1/3}),
// delta'_n = n^{-1/6}, r_n = delta'_n / (3 alpha_k), m_n from the Hoeffding
// bound on the d^k-letter alphabet at confidence eps_n / 2. When m_n does
// not fit into m_cap_fraction of the q_n blocks, m is set to that fraction
// and r is recomputed from the Hoeffding bound at the same confidence.
inline UniversalParams universal_schedule(long n, const ThermalContext& ctx, const ScheduleOverrides& ov = {}) {
  if (n < 2) throw ValidationError("universal: need n >= 2");
  const double d = static_cast<double>(ctx.dim());
  UniversalParams p;
  p.n = n;
  p.c = ov.c;
  p.margin_factor = ov.margin_factor;
  p.margin_split = ov.margin_split;
  p.m_cap_fraction = ov.m_cap_fraction;
  if (ov.k > 0) {
    p.k = ov.k;
  } else {
    p.k = d > 1 ? static_cast<long>(std::floor(std::log(static_cast<double>(n)) / (3.0 * std::log(d)))) : 1;
    p.k = std::max(1L, p.k);
  }
  if (p.k > n) throw ValidationError("universal: k exceeds n");
  check_dim(ipow(ctx.dim(), p.k), "universal schedule");
  p.eps = std::exp(-std::cbrt(static_cast<double>(n)));
  p.delta_prime = std::pow(static_cast<double>(n), -1.0 / 6.0);
  double alpha = ctx.continuity_constant(static_cast<std::size_t>(p.k));
  double letters = std::pow(d, static_cast<double>(p.k));
  double conf = p.eps / 2.0;
  if (ov.m > 0) {
    p.m = p.m_hoeffding = ov.m;
    p.r = hoeffding_radius(letters, p.m, conf);
  } else {
    p.r = p.delta_prime / (p.margin_split * alpha);
    double v = (letters * std::log(2.0) + std::log(1.0 / conf)) / (2.0 * p.r * p.r);
    p.m_hoeffding = static_cast<long>(std::min(std::ceil(v), 9e15));
    p.m = p.m_hoeffding;
    long cap = static_cast<long>(std::floor(p.m_cap_fraction * static_cast<double>(p.q())));
    if (p.m > cap) {
      p.m = std::max(1L, cap);
      p.m_capped = true;
      p.r = hoeffding_radius(letters, p.m, conf);
    }
  }
  if (p.m >= p.q()) throw ValidationError("universal: no blocks left after learning");
  return p;
}

inline nlohmann::json universal_description(const UniversalParams& p, const ThermalContext& ctx,
                                            const std::vector<std::string>& measurement_labels, std::uint64_t seed,
                                            SamplingMode mode) {
  std::vector<std::string> levels;
  for (const auto& e : ctx.levels()) levels.push_back(rational_label(e));
  return {{"protocol", "universal"},
          {"n", p.n},
          {"k", p.k},
          {"m", p.m},
          {"q", p.q()},
          {"s", p.discarded()},
          {"l", p.bath()},
          {"eps", format_double(p.eps)},
          {"r", format_double(p.r)},
          {"margin", format_double(p.margin_factor * ctx.continuity_constant(p.k) * p.r)},
          {"levels", levels},
          {"beta", format_double(ctx.beta())},
          {"measurement", measurement_labels},
          {"branch_rule", "greedy-pair-transfer/typical-box/collision-slack"},
          {"mode", mode == SamplingMode::exact ? "exact" : "sampled"},
          {"seed", seed}};
}

// Schur-pinch blocks of k copies, type-measure m of them, design the shift
// from the empirical class distribution, execute on the remaining q - m.
// Everything that defines the channel is fixed (and hashed) before the state
// is touched.
inline ProtocolOutcome universal_protocol(const Mat& rho, const ThermalContext& ctx, const UniversalParams& params,
                                          std::uint64_t seed, SamplingMode mode = SamplingMode::sampled,
                                          const XiOptions& xopt = {}) {
  const std::size_t k = static_cast<std::size_t>(params.k);
  auto ch = schur_pinching(ctx, k);
  ProtocolOutcome o;
  o.mode = "universal";
  o.n = params.n;
  o.k = params.k;
  o.m = params.m;
  o.seed = seed;
  o.protocol_hash = hex64(fnv1a64(universal_description(params, ctx, ch.family.labels, seed, mode).dump()));

  validate_state(rho);
  if (static_cast<std::size_t>(rho.rows()) != ctx.dim()) throw ValidationError("universal: state dimension mismatch");
  Mat rho_k = tensor_power(rho, k);
  Alphabet truth = projector_alphabet(ctx, k, ch, &rho_k);
  auto p_true = truth.p();
  double s = std::accumulate(p_true.begin(), p_true.end(), 0.0);
  for (auto& v : p_true) v /= s;

  SamplingOracle oracle{p_true, seed, mode};
  auto emp = sample_types(oracle, params.m, 0x5eed);
  Alphabet est = truth.with_p(emp.p_hat);
  double alpha = ctx.continuity_constant(k);
  double margin = params.margin_factor * alpha * params.r;
  long n_eff = params.n_eff();
  long l = params.bath();
  ShiftOptions sopt;
  sopt.delta_f_min = params.r;
  ShiftFunction h = choose_shift(est, n_eff, l, margin, sopt);
  ExtractionPlan plan = make_plan(est, n_eff, l, h);
  auto xr = evaluate_xi(plan, p_true, xopt);
  plan.xi = xr.xi;
  plan.xi_unresolved = xr.unresolved;
  plan.xi_method = xr.method;

  double eps_meas = mode == SamplingMode::exact ? 0.0 : params.eps / 2.0;
  o.target_nats = relative_entropy(rho, thermal_state(ctx));
  o.pinched_target_nats = kl_divergence(p_true, truth.t()) / static_cast<double>(k);
  o.xi = plan.xi;
  o.xi_method = plan.xi_method;
  o.fidelity = (1.0 - eps_meas) * (1.0 - plan.xi);
  o.copies = {params.k * n_eff, params.k * params.m, params.discarded()};
  finish_outcome(o, plan, ctx.beta());
  double est_err = l1_distance(emp.p_hat, p_true);
  o.extra = {{"estimate_nats_per_copy", kl_divergence(emp.p_hat, truth.t()) / static_cast<double>(k)},
             {"error_bar_per_copy", alpha * params.r / static_cast<double>(k)},
             {"radius", params.r},
             {"l1_error", est_err},
             {"estimation_ok", est_err <= params.r},
             {"eps", params.eps},
             {"eps_meas", eps_meas},
             {"m_hoeffding", params.m_hoeffding},
             {"m_capped", params.m_capped},
             {"margin_per_block", margin},
             {"classes", truth.size()}};
  return o;
}

// ---------------------------------------------------------------------------
// Measure-and-prepare

struct MnPBlock {
  FreqVector grid;     // l with sum M
  double log_tau_mass;  // ln Tr[P_B tau^{⊗n}]
  double log_p_mass;    // ln Tr[P_B rho^{⊗n}]
  double battery_level;  // W_l = (1/beta) ln(1/Tr[P_B tau^{⊗n}])
};

struct MnPResult {
  long n = 0;
  long M = 0;
  std::vector<MnPBlock> blocks;
  double gibbs_defect = 0.0;       // max |E(tau^n) - tau_X| over battery levels
  double stochastic_defect = 0.0;  // max |column sum - 1|
  bool boundary = false;
  double rate_expected = NAN;      // beta E[W_l] / n
  double rate_dominant = NAN;      // beta W_{l*} / n
  double sanov_exponent = NAN;     // min over the dominant block of D(p'||t), D = 2 only
  FreqVector dominant;
  ProtocolOutcome outcome;
};

// Index of the block owning the distribution x: nearest l/M in l1, ties to
// the lexicographically smallest l. Also reports whether a tie occurred.
inline std::size_t nearest_grid(const std::vector<double>& x, const std::vector<FreqVector>& grid, long M, bool* tie) {
  double best = INFINITY;
  std::size_t arg = 0;
  bool tied = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double dist = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) dist += std::abs(x[c] - static_cast<double>(grid[i][c]) / static_cast<double>(M));
    if (dist < best - 1e-12) {
      best = dist;
      arg = i;
      tied = false;
    } else if (dist <= best + 1e-12) {
      tied = true;
      if (grid[i] < grid[arg]) arg = i;
    }
  }
  if (tie) *tie = tied;
  return arg;
}

inline long mnp_default_resolution(long n) {
  return std::max(1L, static_cast<long>(std::ceil(std::sqrt(static_cast<double>(n)) - 1e-12)));
}

inline MnPResult measure_and_prepare_protocol(long M, const ThermalContext& ctx, long n, const std::vector<double>& p) {
  if (M < 1 || n < 1) throw ValidationError("mnp: need M >= 1 and n >= 1");
  validate_distribution(p);
  if (p.size() != ctx.dim()) throw ValidationError("mnp: distribution length mismatch");
  const long D = static_cast<long>(ctx.dim());
  auto t = ctx.gibbs_weights();
  auto grid = enumerate_freqs(M, D);
  MnPResult res;
  res.n = n;
  res.M = M;
  std::vector<std::vector<double>> lt(grid.size()), lp(grid.size());
  std::vector<std::size_t> owner;
  std::vector<double> type_lt;
  for_each_freq(n, D, [&](const FreqVector& f) {
    std::vector<double> x(D);
    for (long c = 0; c < D; ++c) x[c] = static_cast<double>(f[c]) / static_cast<double>(n);
    std::size_t b = nearest_grid(x, grid, M, nullptr);
    owner.push_back(b);
    double a = type_log_probability(f, t);
    type_lt.push_back(a);
    lt[b].push_back(a);
    lp[b].push_back(type_log_probability(f, p));
  });
  std::map<std::size_t, std::size_t> block_pos;
  for (std::size_t b = 0; b < grid.size(); ++b) {
    double ltm = log_sum_exp(lt[b]);
    if (ltm == kNegInf) continue;  // no type falls into this block
    block_pos[b] = res.blocks.size();
    res.blocks.push_back({grid[b], ltm, log_sum_exp(lp[b]), -ltm / ctx.beta()});
  }
  // Induced classical map: every type goes to exactly one battery level, so
  // the stochastic matrix has one 1 per column. Gibbs check compares the
  // image of tau^{⊗n} with the battery thermal state exp(-beta W_l)/Z_X.
  std::vector<double> image(res.blocks.size(), 0.0);
  for (std::size_t i = 0; i < owner.size(); ++i) image[block_pos.at(owner[i])] += std::exp(type_lt[i]);
  double zx = 0.0;
  for (const auto& b : res.blocks) zx += std::exp(-ctx.beta() * b.battery_level);
  for (std::size_t i = 0; i < res.blocks.size(); ++i)
    res.gibbs_defect = std::max(res.gibbs_defect, std::abs(image[i] - std::exp(-ctx.beta() * res.blocks[i].battery_level) / zx));
  res.stochastic_defect = 0.0;  // one-hot columns by construction

  bool tie = false;
  nearest_grid(p, grid, M, &tie);
  res.boundary = tie;
  ProtocolOutcome& o = res.outcome;
  o.mode = "mnp";
  o.n = n;
  o.target_nats = kl_divergence(p, t);
  o.extra = {{"M", M}, {"boundary", tie}, {"blocks", res.blocks.size()}, {"gibbs_defect", res.gibbs_defect}};
  if (tie) {
    // On a block boundary the block mass does not concentrate; refuse.
    o.rate_nats = NAN;
    o.fidelity = NAN;
    o.converse_ok = true;
    return res;
  }
  double ew = 0.0;
  std::size_t dom = 0;
  for (std::size_t i = 0; i < res.blocks.size(); ++i) {
    double pm = std::exp(res.blocks[i].log_p_mass);
    ew += pm * res.blocks[i].battery_level;
    if (res.blocks[i].log_p_mass > res.blocks[dom].log_p_mass) dom = i;
  }
  res.dominant = res.blocks[dom].grid;
  res.rate_expected = ctx.beta() * ew / static_cast<double>(n);
  res.rate_dominant = ctx.beta() * res.blocks[dom].battery_level / static_cast<double>(n);
  if (D == 2) {
    // Block of grid point j covers x0 in ((j - 1/2)/M, (j + 1/2)/M].
    double j = static_cast<double>(res.dominant[0]);
    double lo = std::max(0.0, (j - 0.5) / static_cast<double>(M));
    double hi = std::min(1.0, (j + 0.5) / static_cast<double>(M));
    auto dfun = [&](double x) { return kl_divergence({x, 1.0 - x}, t); };
    auto r = boost::math::tools::brent_find_minima(dfun, lo, hi, 50);
    res.sanov_exponent = std::min({r.second, dfun(lo), dfun(hi)});
  }
  o.work = res.blocks[dom].battery_level;
  o.work_exact = format_double(o.work);
  o.rate_nats = res.rate_dominant;
  o.fidelity = std::exp(res.blocks[dom].log_p_mass);
  o.xi = 1.0 - o.fidelity;
  o.copies.pinched = n;
  o.converse_ok = o.rate_nats <= o.target_nats + kConverseTol;
  o.extra["rate_expected"] = res.rate_expected;
  o.extra["sanov_exponent"] = res.sanov_exponent;
  o.extra["dominant_block"] = res.dominant;
  return res;
}

// ---------------------------------------------------------------------------
// Tomography-based variant

struct TomoParams {
  long n = 0;
  long k = 1;
  double eta = 0.0;  // trace-norm size of the simulated estimation error
  double c = 1.0;
};

inline ProtocolOutcome tomographic_universal_protocol(const Mat& rho, const ThermalContext& ctx, const TomoParams& tp,
                                                      std::uint64_t seed, const XiOptions& xopt = {}) {
  validate_state(rho);
  if (tp.k < 1 || tp.n < tp.k) throw ValidationError("tomo: need 1 <= k <= n");
  const std::size_t k = static_cast<std::size_t>(tp.k);
  Mat rho_k = tensor_power(rho, k);
  auto ech = energy_pinching(ctx, k);
  Mat pinched = apply(ech, rho_k);

  // Estimate: pinched state plus a seeded Hermitian error inside the energy
  // blocks, scaled to trace norm eta, then clipped back to a state.
  Mat est = pinched;
  if (tp.eta > 0.0) {
    Rng rng = stream(seed, 1);
    Mat noise = Mat::Zero(pinched.rows(), pinched.cols());
    for (const auto& v : ech.family.isometries) {
      Mat g(v.cols(), v.cols());
      for (Eigen::Index c = 0; c < g.cols(); ++c) g.col(c) = gaussian_vector(rng, v.cols());
      Mat hblk = 0.5 * (g + g.adjoint());
      noise += v * hblk * v.adjoint();
    }
    noise -= (noise.trace().real() / static_cast<double>(noise.rows())) * Mat::Identity(noise.rows(), noise.cols());
    double tn = trace_norm_hermitian(noise);
    if (tn > 0) est += (tp.eta / tn) * noise;
    est = hermitian_apply(est, [](double x) { return std::max(0.0, x); });
    est /= est.trace().real();
    est = apply(ech, est);
  }
  double tomo_err = trace_norm_hermitian(est - pinched);

  // Dephasing in the eigenbasis of the estimate, refined inside each energy
  // block; a pinching with rank-one projectors that commute with H.
  PinchingChannel deph;
  deph.kind = PinchKind::custom;
  deph.family.dim = pinched.rows();
  std::vector<Rational> letter_e;
  std::vector<double> design, truth;
  for (std::size_t j = 0; j < ech.family.size(); ++j) {
    const Mat& v = ech.family.isometries[j];
    auto [w, u] = eigh(v.adjoint() * est * v);
    Mat basis = v * u;
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      deph.family.isometries.push_back(basis.col(i));
      deph.family.labels.push_back(ech.family.labels[j] + "#" + std::to_string(i));
      deph.family.energies.push_back(ech.family.energies[j]);
      letter_e.push_back(ech.family.energies[j]);
      design.push_back(std::max(0.0, w(i)));
      truth.push_back(std::max(0.0, (basis.col(i).adjoint() * pinched * basis.col(i))(0, 0).real()));
    }
  }
  // Cells are formed from the design; the truth is pooled over the same
  // letters.
  Alphabet a = lump_letters(letter_e, design, ctx, k);
  std::vector<double> p_true(a.size(), 0.0);
  {
    // Re-derive the letter to cell map used by lump_letters.
    std::vector<std::size_t> order(letter_e.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      if (letter_e[x] != letter_e[y]) return letter_e[x] < letter_e[y];
      return design[x] > design[y];
    });
    std::size_t cell = 0;
    long used = 0;
    for (std::size_t idx = 0; idx < order.size(); ++idx) {
      if (used == a.cells[cell].mu) {
        ++cell;
        used = 0;
      }
      p_true[cell] += truth[order[idx]];
      ++used;
    }
    double s = std::accumulate(p_true.begin(), p_true.end(), 0.0);
    for (auto& v : p_true) v /= s;
  }
  long q = tp.n / tp.k;
  long l = default_bath(q, tp.c);
  ShiftFunction h = choose_shift(a, q, l, 0.0);
  ExtractionPlan plan = make_plan(a, q, l, h);
  auto xr = evaluate_xi(plan, p_true, xopt);
  plan.xi = xr.xi;
  plan.xi_unresolved = xr.unresolved;
  plan.xi_method = xr.method;

  ProtocolOutcome o;
  o.mode = "tomo";
  o.n = tp.n;
  o.k = tp.k;
  o.seed = seed;
  o.target_nats = relative_entropy(rho, thermal_state(ctx));
  Mat tau_k = tensor_power(thermal_state(ctx), k);
  double kk = static_cast<double>(k);
  o.pinched_target_nats = relative_entropy(pinched, tau_k) / kk;
  Mat dephased = apply(deph, pinched);
  double dephased_target = relative_entropy(dephased, tau_k) / kk;
  o.xi = plan.xi;
  o.xi_method = plan.xi_method;
  o.fidelity = 1.0 - plan.xi;
  o.copies = {tp.k * q, 0, tp.n - tp.k * q};
  finish_outcome(o, plan, ctx.beta());
  Mat hk = hamiltonian(ctx, k);
  double comm = 0.0;
  for (std::size_t j = 0; j < deph.family.size(); ++j) {
    Mat pj = deph.family.projector(j);
    comm = std::max(comm, max_abs(pj * hk - hk * pj));
  }
  o.extra = nlohmann::json{{"eta", tp.eta},
             {"tomography_error", tomo_err},
             {"dephased_target_nats", dephased_target},
             {"deficit_bound", 2.0 / kk * ctx.continuity_constant(k) * tomo_err},
             {"dephasing_commutator", comm},
             {"dephasing_gibbs_defect", max_abs(apply(deph, tau_k) - tau_k)}};
  return o;
}

// ---------------------------------------------------------------------------
// Density-matrix oracle: builds the energy-conserving permutation of a plan
// on system ⊗ bath ⊗ storage explicitly and applies it to the full state.

struct DensityMatrixCheck {
  double work = 0.0;
  double xi = 0.0;
  double fidelity = 0.0;
  double energy_defect = 0.0;  // max |E_in - E_out| over moved basis states
  double gibbs_defect = 0.0;   // max |U (tau ⊗ tau_X) U^dag - tau ⊗ tau_X|
  double unitarity_defect = 0.0;
  long overflow = 0;           // sources without a free target
  std::size_t dim = 0;
};

// Storage levels are {0, W}; index 1 is the charged level. The plan must use
// the letter alphabet of ctx (one cell per level, mu = 1).
inline std::vector<std::size_t> plan_permutation(const ExtractionPlan& plan, const ThermalContext& ctx, long* overflow) {
  const int d = static_cast<int>(ctx.dim());
  for (const auto& c : plan.alphabet.cells)
    if (c.mu != 1) throw ValidationError("density-matrix oracle needs a letter alphabet");
  if (plan.alphabet.size() != ctx.dim()) throw ValidationError("density-matrix oracle: alphabet size");
  const int n = static_cast<int>(plan.n), l = static_cast<int>(plan.l);
  const std::size_t joint = ipow(d, n + l);
  const std::size_t dim = joint * 2;
  check_dim(dim, "density-matrix oracle");
  std::vector<std::size_t> perm(dim);
  std::iota(perm.begin(), perm.end(), 0);
  if (overflow) *overflow = 0;
  if (is_zero(plan.h)) return perm;
  auto type_of = [&](std::size_t idx, int from, int len) {
    auto s = index_digits(idx, n + l, d);
    FreqVector f(d, 0);
    for (int i = from; i < from + len; ++i) ++f[s[i]];
    return f;
  };
  std::map<FreqVector, std::vector<std::size_t>> by_type;  // joint strings per joint type
  std::map<FreqVector, std::vector<std::size_t>> sources;
  for (std::size_t x = 0; x < joint; ++x) {
    FreqVector f = type_of(x, 0, n), g = type_of(x, n, l), jt(d);
    for (int c = 0; c < d; ++c) jt[c] = f[c] + g[c];
    by_type[jt].push_back(x);
    if (plan_accepts(plan, f, g)) sources[jt].push_back(x);
  }
  for (const auto& [jt, src] : sources) {
    FreqVector target(d);
    for (int c = 0; c < d; ++c) target[c] = jt[c] - plan.h[c];
    auto it = by_type.find(target);
    std::size_t avail = it == by_type.end() ? 0 : it->second.size();
    for (std::size_t i = 0; i < src.size(); ++i) {
      if (i >= avail) {
        if (overflow) ++*overflow;
        continue;
      }
      std::size_t a = src[i] * 2, b = it->second[i] * 2 + 1;
      perm[a] = b;
      perm[b] = a;
    }
  }
  return perm;
}

inline DensityMatrixCheck simulate_plan_density_matrix(const ExtractionPlan& plan, const ThermalContext& ctx,
                                                       const Mat& rho) {
  validate_state(rho);
  DensityMatrixCheck out;
  long overflow = 0;
  auto perm = plan_permutation(plan, ctx, &overflow);
  out.overflow = overflow;
  out.dim = perm.size();
  const std::size_t n = static_cast<std::size_t>(plan.n), l = static_cast<std::size_t>(plan.l);
  Mat storage0 = Mat::Zero(2, 2);
  storage0(0, 0) = 1.0;
  Mat full = kron(kron(tensor_power(rho, n), tensor_power(thermal_state(ctx), l)), storage0);
  Mat moved(full.rows(), full.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < perm.size(); ++j) moved(perm[i], perm[j]) = full(i, j);
  // A zero shift extracts W = 0 and its target is the untouched storage.
  const std::size_t target = is_zero(plan.h) ? 0 : 1;
  double charged = 0.0;
  for (std::size_t i = target; i < perm.size(); i += 2) charged += moved(i, i).real();
  out.work = plan.work;
  out.fidelity = charged;
  out.xi = 1.0 - charged;

  // Energy bookkeeping with storage levels {0, W}.
  auto e_joint = total_energies(ctx, n + l);
  std::vector<Rational> e_total(perm.size());
  for (std::size_t x = 0; x < e_joint.size(); ++x) {
    e_total[2 * x] = e_joint[x];
    e_total[2 * x + 1] = e_joint[x] + plan.work_exact;
  }
  for (std::size_t i = 0; i < perm.size(); ++i)
    out.energy_defect = std::max(out.energy_defect, std::abs(to_double(e_total[i] - e_total[perm[i]])));
  std::vector<bool> hit(perm.size(), false);
  for (auto v : perm) hit[v] = true;
  out.unitarity_defect = std::all_of(hit.begin(), hit.end(), [](bool b) { return b; }) ? 0.0 : 1.0;
  // Gibbs state of system+bath+storage is diagonal; compare the permuted
  // diagonal with itself.
  double logz = static_cast<double>(n + l) * ctx.log_partition() +
                std::log1p(std::exp(-ctx.beta() * plan.work));
  for (std::size_t i = 0; i < perm.size(); ++i) {
    double gi = std::exp(-ctx.beta() * to_double(e_total[i]) - logz);
    double gj = std::exp(-ctx.beta() * to_double(e_total[perm[i]]) - logz);
    out.gibbs_defect = std::max(out.gibbs_defect, std::abs(gi - gj));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Incoherently conditioned protocols: measure A with projectors M_a that
// commute with H_A, then apply channel E_a : B -> C.

struct KrausChannel {
  std::vector<Mat> kraus;
  Mat operator()(const Mat& x) const {
    Mat out = Mat::Zero(kraus.front().rows(), kraus.front().rows());
    for (const auto& k : kraus) out += k * x * k.adjoint();
    return out;
  }
};

struct ConditionedProtocol {
  ProjectorFamily measurement;  // on A
  std::vector<KrausChannel> branches;
};

struct ConditionedReport {
  bool pass = true;
  double incoherence = 0.0;
  double branch_gibbs = 0.0;
  double composite_gibbs = 0.0;
  std::vector<std::string> violations;
};

inline Mat conditioned_apply(const ConditionedProtocol& cp, const Mat& rho_ab, std::size_t dim_a, std::size_t dim_b) {
  Mat out;
  for (std::size_t a = 0; a < cp.measurement.size(); ++a) {
    Mat ma = kron(cp.measurement.projector(a), Mat::Identity(dim_b, dim_b));
    Mat post = ma * rho_ab * ma;
    Mat reduced = partial_trace(post, {dim_a, dim_b}, {1});
    Mat img = cp.branches.at(a)(reduced);
    out = out.size() == 0 ? img : Mat(out + img);
  }
  return out;
}

inline ConditionedReport verify_conditioned_protocol(const ConditionedProtocol& cp, const PinchingChannel& energy_pinch_a,
                                                     const Mat& tau_a, const Mat& tau_b, const Mat& tau_c) {
  ConditionedReport r;
  if (cp.branches.size() != cp.measurement.size()) {
    r.pass = false;
    r.violations.push_back("branch count differs from outcome count");
    return r;
  }
  for (std::size_t a = 0; a < cp.measurement.size(); ++a) {
    Mat m = cp.measurement.projector(a);
    double inc = max_abs(apply(energy_pinch_a, m) - m);
    r.incoherence = std::max(r.incoherence, inc);
    if (inc > 1e-10) r.violations.push_back("measurement element " + std::to_string(a) + " is coherent in energy");
    double g = max_abs(cp.branches[a](tau_b) - tau_c);
    r.branch_gibbs = std::max(r.branch_gibbs, g);
    if (g > 1e-9) r.violations.push_back("branch " + std::to_string(a) + " is not Gibbs preserving");
  }
  Mat comp = conditioned_apply(cp, kron(tau_a, tau_b), tau_a.rows(), tau_b.rows());
  r.composite_gibbs = max_abs(comp - tau_c);
  if (r.composite_gibbs > 1e-9) r.violations.push_back("composite channel is not Gibbs preserving");
  r.pass = r.violations.empty();
  return r;
}

}  // namespace thermoflux
