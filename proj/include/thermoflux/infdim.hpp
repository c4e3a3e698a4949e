#pragma once

// Truncated infinite-dimensional systems: ladder Hamiltonians, tail-decaying
// diagonal states, cutoff schedules and the finite-candidate protocol.
// Levels are 1-based in this file to match the i^{-s} rules.

#include "thermoflux/extraction.hpp"

#include <boost/math/special_functions/zeta.hpp>

#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace thermoflux {

// E_i = dE (i-1)^gamma, i = 1, 2, ...; gamma a positive integer so every
// level is an exact rational.
class InfiniteContext {
 public:
  InfiniteContext(Rational delta_e = Rational(1), int gamma = 1, double beta = 1.0)
      : de_(delta_e), gamma_(gamma), beta_(beta) {
    if (delta_e <= 0) throw ValidationError("infinite ladder: spacing must be positive");
    if (gamma < 1) throw ValidationError("infinite ladder: gamma must be >= 1");
    if (!(beta > 0.0)) throw ValidationError("infinite ladder: beta must be positive");
    // Partial sums until the geometric majorant of the remainder is negligible;
    // E_i >= dE (i-1) for gamma >= 1.
    double q = std::exp(-beta_ * to_double(de_));
    double z = 0.0;
    long i = 1;
    for (;; ++i) {
      z += std::exp(-beta_ * level(i));
      double rem = std::pow(q, static_cast<double>(i)) / (1.0 - q);
      if (rem < 1e-17 * z || i > 10'000'000) {
        z_remainder_ = rem;
        break;
      }
    }
    z_ = z;
  }

  Rational level_exact(long i) const {
    Rational x(i - 1);
    Rational p(1);
    for (int g = 0; g < gamma_; ++g) p *= x;
    return de_ * p;
  }
  double level(long i) const { return to_double(level_exact(i)); }
  double beta() const { return beta_; }
  double partition() const { return z_; }
  double partition_remainder() const { return z_remainder_; }
  double log_partition() const { return std::log(z_); }
  double tau(long i) const { return std::exp(-beta_ * level(i)) / z_; }
  // Tr[tau_d]: mass of the first d levels.
  double tau_mass(long d) const {
    double s = 0.0;
    for (long i = 1; i <= d; ++i) s += tau(i);
    return s;
  }
  ThermalContext truncated(long d) const {
    std::vector<Rational> lv;
    for (long i = 1; i <= d; ++i) lv.push_back(level_exact(i));
    return ThermalContext(lv, beta_);
  }
  Rational spacing() const { return de_; }
  int gamma() const { return gamma_; }

 private:
  Rational de_;
  int gamma_;
  double beta_;
  double z_ = 0.0;
  double z_remainder_ = 0.0;
};

struct MassBounds {
  double value;  // best estimate
  double lower;  // certified
  double upper;  // certified
};

// Diagonal state with a closed-form or finite rule, plus an optional
// coherent block on the first levels.
class TailState {
 public:
  enum class Kind { power, geometric, finite };

  // rho_ii = i^{-s} / zeta(s), s = 2 + eps.
  static TailState power_law(double s) {
    if (!(s > 2.0)) throw ValidationError("tail state: exponent must exceed 2");
    TailState t;
    t.kind_ = Kind::power;
    t.s_ = s;
    t.zeta_ = boost::math::zeta(s);
    return t;
  }
  // rho_ii = (1-a) a^{i-1}.
  static TailState geometric(double a) {
    if (!(a > 0.0 && a < 1.0)) throw ValidationError("tail state: ratio must lie in (0,1)");
    TailState t;
    t.kind_ = Kind::geometric;
    t.a_ = a;
    return t;
  }
  static TailState finite(std::vector<double> diag) {
    if (diag.empty()) throw ValidationError("tail state: empty list");
    validate_distribution(diag);
    TailState t;
    t.kind_ = Kind::finite;
    t.list_ = std::move(diag);
    return t;
  }
  // Finite state with an explicit density matrix on its support.
  static TailState finite_matrix(const Mat& rho) {
    validate_state(rho);
    TailState t = finite(diagonal_of(rho));
    if (max_abs(rho - diagonal_state(diagonal_of(rho))) > 1e-15) t.block_ = rho;
    return t;
  }

  Kind kind() const { return kind_; }
  double exponent() const { return s_; }
  bool coherent() const { return block_.has_value(); }
  const std::optional<Mat>& block() const { return block_; }

  double diag(long i) const {
    switch (kind_) {
      case Kind::power: return std::pow(static_cast<double>(i), -s_) / zeta_;
      case Kind::geometric: return (1.0 - a_) * std::pow(a_, static_cast<double>(i - 1));
      case Kind::finite: return i <= static_cast<long>(list_.size()) ? list_[i - 1] : 0.0;
    }
    return 0.0;
  }

  // Certified bounds on the mass beyond level d.
  MassBounds tail_mass(long d) const {
    switch (kind_) {
      case Kind::power: {
        double lo = std::pow(static_cast<double>(d + 1), 1.0 - s_) / ((s_ - 1.0) * zeta_);
        double hi = std::pow(static_cast<double>(d), 1.0 - s_) / ((s_ - 1.0) * zeta_);
        // Direct value: zeta minus the partial sum, by Hurwitz zeta.
        double direct = hurwitz_tail(d);
        return {direct, lo, hi};
      }
      case Kind::geometric: {
        double v = std::pow(a_, static_cast<double>(d));
        return {v, v, v};
      }
      case Kind::finite: {
        double v = 0.0;
        for (std::size_t i = static_cast<std::size_t>(std::max(0L, d)); i < list_.size(); ++i) v += list_[i];
        return {v, v, v};
      }
    }
    return {0, 0, 0};
  }

  // Tr[rho_d].
  MassBounds mass(long d) const {
    auto t = tail_mass(d);
    return {1.0 - t.value, 1.0 - t.upper, 1.0 - t.lower};
  }

  // Truncated (sub-normalized) state on the first d levels.
  Mat truncated(long d) const {
    Mat m = Mat::Zero(d, d);
    for (long i = 1; i <= d; ++i) m(i - 1, i - 1) = diag(i);
    if (block_) {
      long b = std::min<long>(d, block_->rows());
      m.topLeftCorner(b, b) = block_->topLeftCorner(b, b);
    }
    return m;
  }

  std::vector<double> truncated_diag(long d) const {
    std::vector<double> v;
    for (long i = 1; i <= d; ++i) v.push_back(diag(i));
    return v;
  }

  // Certified upper bound of sum_{i>d} rho_ii |ln(rho_ii / tau_i)|.
  double tail_abs_log_ratio(long d, const InfiniteContext& ctx) const {
    const double lz = ctx.log_partition(), beta = ctx.beta();
    switch (kind_) {
      case Kind::finite: {
        double s = 0.0;
        for (long i = d + 1; i <= static_cast<long>(list_.size()); ++i) {
          double p = diag(i);
          if (p > 0) s += p * std::abs(std::log(p / ctx.tau(i)));
        }
        return s;
      }
      case Kind::geometric: {
        // ln(rho_i / tau_i) = c0 + (i-1) ln a + beta E_i; for gamma = 1 the
        // sum has a closed form, otherwise bound E_i by its power tail.
        double c0 = std::abs(std::log(1.0 - a_) + lz);
        double ad = std::pow(a_, static_cast<double>(d));
        double first = ad * static_cast<double>(d) + ad * a_ / (1.0 - a_);  // (1-a) sum_{j>=d} j a^j
        double de = to_double(ctx.spacing());
        if (ctx.gamma() == 1) return c0 * ad + (std::abs(std::log(a_)) + beta * de) * first;
        // sum_{j>=d} (1-a) a^j j^gamma: bounded numerically with a ratio test.
        double s = 0.0;
        for (long j = d;; ++j) {
          double term = (1.0 - a_) * std::pow(a_, static_cast<double>(j)) *
                        (beta * de * std::pow(static_cast<double>(j), ctx.gamma()) + std::abs(std::log(a_)) * j);
          s += term;
          double ratio = a_ * std::pow(static_cast<double>(j + 1) / static_cast<double>(j), ctx.gamma());
          if (ratio < 1.0 && term * ratio / (1.0 - ratio) < 1e-18) {
            s += term * ratio / (1.0 - ratio);
            break;
          }
        }
        return c0 * ad + s;
      }
      case Kind::power: {
        // |ln(rho_i/tau_i)| <= s ln i + |ln zeta| + |ln Z| + beta dE i^gamma,
        // each summed against i^{-s}/zeta with integral-test bounds
        // (valid once x^{-s} ln x decreases, x >= e^{1/s}).
        double x = static_cast<double>(std::max(d, 2L));
        double inv = 1.0 / zeta_;
        double lnsum = std::pow(x, 1.0 - s_) * (std::log(x) / (s_ - 1.0) + 1.0 / ((s_ - 1.0) * (s_ - 1.0)));
        double plain = std::pow(x, 1.0 - s_) / (s_ - 1.0);
        double g = ctx.gamma();
        if (!(s_ > g + 1.0)) return INFINITY;  // infinite mean energy
        double esum = std::pow(x, 1.0 + g - s_) / (s_ - 1.0 - g);
        return inv * (s_ * lnsum + (std::abs(std::log(zeta_)) + std::abs(lz)) * plain +
                      beta * to_double(ctx.spacing()) * esum);
      }
    }
    return INFINITY;
  }

 private:
  double hurwitz_tail(long d) const {
    // sum_{i>d} i^{-s}: 2^16 explicit terms, then Euler-Maclaurin.
    double s = 0.0;
    long upto = d + (1L << 16);
    for (long i = upto; i > d; --i) s += std::pow(static_cast<double>(i), -s_);
    double u = static_cast<double>(upto);
    s += std::pow(u, 1.0 - s_) / (s_ - 1.0) - 0.5 * std::pow(u, -s_);
    return s / zeta_;
  }

  Kind kind_ = Kind::finite;
  double s_ = 0.0;
  double zeta_ = 1.0;
  double a_ = 0.0;
  std::vector<double> list_;
  std::optional<Mat> block_;
};

struct TruncationResult {
  Mat state;  // sub-normalized
  double success_mass;
  double success_lower;
};

inline TruncationResult truncate(const TailState& rho, long d) {
  if (d < 1) throw ValidationError("truncate: d must be >= 1");
  auto m = rho.mass(d);
  return {rho.truncated(d), m.value, m.lower};
}

// ln(Tr[rho_d]^n) from the certified lower bound, and from the direct value.
inline double log_success(double mass, long n) { return static_cast<double>(n) * std::log(mass); }

struct CutoffSchedule {
  enum class Kind { power, sqrt, constant };
  Kind kind = Kind::power;
  double eps = 2.0;  // d_n = ceil(n^{1/(1+eps/2)})
  long d0 = 1;

  long operator()(long n) const {
    switch (kind) {
      case Kind::power:
        return std::max(1L, static_cast<long>(std::ceil(std::pow(static_cast<double>(n), 1.0 / (1.0 + eps / 2.0)) - 1e-9)));
      case Kind::sqrt:
        return std::max(1L, static_cast<long>(std::ceil(std::sqrt(static_cast<double>(n)) - 1e-12)));
      case Kind::constant: return d0;
    }
    return 1;
  }
  std::string name() const {
    switch (kind) {
      case Kind::power: return "power(eps=" + format_double(eps) + ")";
      case Kind::sqrt: return "sqrt";
      case Kind::constant: return "constant(" + std::to_string(d0) + ")";
    }
    return "?";
  }
};

struct SuccessRow {
  long n;
  long d;
  double success;        // Tr[rho_d]^n, direct series value
  double success_lower;  // certified
};

struct SuccessCurve {
  std::vector<SuccessRow> rows;
  long n0 = -1;  // first grid index from which the certified curve is non-decreasing; -1 if never
};

inline SuccessCurve schedule_success_curve(const TailState& rho, const CutoffSchedule& sched, const std::vector<long>& n_grid) {
  SuccessCurve c;
  for (long n : n_grid) {
    long d = sched(n);
    auto m = rho.mass(d);
    c.rows.push_back({n, d, std::exp(log_success(m.value, n)), std::exp(log_success(std::max(m.lower, 0.0), n))});
  }
  for (long i = static_cast<long>(c.rows.size()) - 1; i >= 0; --i) {
    bool ok = true;
    for (std::size_t j = static_cast<std::size_t>(i); j + 1 < c.rows.size(); ++j)
      if (c.rows[j + 1].success_lower < c.rows[j].success_lower - 1e-15) ok = false;
    if (ok)
      c.n0 = i;
    else
      break;
  }
  return c;
}

struct FreeEnergyReport {
  long d;
  double direct;     // D(rho_d/Tr rho_d || tau_d/Tr tau_d)
  double via_lindblad;  // (1/Tr rho_d) D_L(rho_d||tau_d) + ln(Tr tau_d / Tr rho_d) + 1 - Tr tau_d/Tr rho_d
  double limit;      // D(rho||tau) when known in closed form, else NaN
  double remainder;  // certified bound on |direct - D(rho||tau)|
};

// Exact D(rho||tau) for diagonal rules with a closed form.
inline std::optional<double> free_energy_limit(const TailState& rho, const InfiniteContext& ctx) {
  if (rho.kind() == TailState::Kind::geometric && ctx.gamma() == 1) {
    // rho_i = (1-a) a^{i-1}, tau_i = (1-b) b^{i-1} with b = exp(-beta dE).
    double b = std::exp(-ctx.beta() * to_double(ctx.spacing()));
    double a = rho.diag(2) / rho.diag(1);
    return std::log((1.0 - a) / (1.0 - b)) + (a / (1.0 - a)) * std::log(a / b);
  }
  if (rho.kind() == TailState::Kind::finite && !rho.coherent()) {
    double s = 0.0;
    for (long i = 1; rho.tail_mass(i - 1).value > 0.0; ++i) {
      double p = rho.diag(i);
      if (p > 0.0) s += p * std::log(p / ctx.tau(i));
    }
    return s;
  }
  return std::nullopt;
}

inline FreeEnergyReport renormalized_free_energy(const TailState& rho, const InfiniteContext& ctx, long d) {
  if (d < 1) throw ValidationError("free energy: d must be >= 1");
  FreeEnergyReport r;
  r.d = d;
  Mat rd = rho.truncated(d);
  std::vector<double> td;
  for (long i = 1; i <= d; ++i) td.push_back(ctx.tau(i));
  Mat taud = diagonal_state(td);
  double a = rd.trace().real(), b = taud.trace().real();
  r.direct = relative_entropy(rd / a, taud / b);
  r.via_lindblad = lindblad_relative_entropy(rd, taud) / a - b / a + 1.0 + std::log(b / a);
  auto lim = free_energy_limit(rho, ctx);
  r.limit = lim ? *lim : NAN;
  // |D_d - D| <= |S_d| (1-R)/R + tail + |ln R| + |ln T|, S_d the truncated
  // core sum, R = Tr rho_d, T = Tr tau_d.
  double sd = entropic_core(rd, taud);
  double rmass = std::min(1.0, rho.mass(d).lower), tmass = std::min(1.0, b);
  r.remainder = std::abs(sd) * (1.0 - rmass) / rmass + rho.tail_abs_log_ratio(d, ctx) - std::log(rmass) -
                std::log(tmass) + ctx.partition_remainder() / ctx.partition();
  return r;
}

// ---------------------------------------------------------------------------
// Candidate sets

struct Candidate {
  std::string name;
  TailState state;
};

struct PairRecord {
  std::size_t a, b;
  long separated_at = -1;    // smallest d reaching the threshold; -1 if none
  double distance = 0.0;     // l1 distance at that d (or the maximum seen)
  bool equivalent = false;   // pinched statistics agree at every tested d
  bool inconclusive = false; // differ but never reach the threshold
  bool coherence_only = false;  // differ only inside energy blocks
};

struct DistinguishingReport {
  long d_tilde = -1;  // -1: inconclusive
  double xi_tilde = 0.0;
  std::vector<PairRecord> pairs;
  bool binding = false;  // d_cap reached
  bool ok() const { return d_tilde >= 1; }
};

// Energy pinching of rho_d^{⊗d}, with rho_d the first-d-level block, as a
// d^d matrix.
inline Mat pinched_moment(const TailState& rho, const InfiniteContext& ctx, long d) {
  Mat rd = rho.truncated(d);
  Mat rk = tensor_power(rd, static_cast<std::size_t>(d));
  auto ch = energy_pinching(ctx.truncated(d), static_cast<std::size_t>(d));
  return apply(ch, rk);
}

// Diagonal of the same object: the incoherent statistics of d-copy strings
// restricted to the first d levels.
inline std::vector<double> string_statistics(const TailState& rho, long d) {
  auto dg = rho.truncated_diag(d);
  std::size_t dim = ipow(static_cast<std::size_t>(d), d);
  check_dim(dim, "string statistics");
  std::vector<double> p(dim);
  for (std::size_t x = 0; x < dim; ++x) {
    auto digits = index_digits(x, static_cast<int>(d), static_cast<int>(d));
    double v = 1.0;
    for (int s : digits) v *= dg[s];
    p[x] = v;
  }
  return p;
}

inline DistinguishingReport distinguishing_dimension(const std::vector<Candidate>& cands, const InfiniteContext& ctx,
                                                     long d_cap = 4, double xi_min = 0.05) {
  DistinguishingReport rep;
  const std::size_t s = cands.size();
  for (std::size_t i = 0; i < s; ++i)
    for (std::size_t j = i + 1; j < s; ++j) rep.pairs.push_back({i, j});
  if (s <= 1) {
    rep.d_tilde = 1;
    return rep;
  }
  long needed = 1;
  for (auto& pr : rep.pairs) {
    double maxdist = 0.0, maxdiag = 0.0;
    for (long d = 1; d <= d_cap; ++d) {
      Mat a = pinched_moment(cands[pr.a].state, ctx, d), b = pinched_moment(cands[pr.b].state, ctx, d);
      double dist = trace_norm_hermitian(a - b);
      maxdist = std::max(maxdist, dist);
      maxdiag = std::max(maxdiag, l1_distance(diagonal_of(a), diagonal_of(b)));
      if (dist >= xi_min && pr.separated_at < 0) {
        pr.separated_at = d;
        pr.distance = dist;
      }
    }
    if (pr.separated_at < 0) {
      pr.distance = maxdist;
      if (maxdist <= 1e-12)
        pr.equivalent = true;
      else
        pr.inconclusive = true;
    } else {
      needed = std::max(needed, pr.separated_at);
      pr.coherence_only = maxdiag < xi_min;
    }
  }
  bool any_inconclusive = false;
  double xi = INFINITY;
  for (const auto& pr : rep.pairs) {
    any_inconclusive |= pr.inconclusive;
    if (pr.separated_at > 0) {
      double dist = trace_norm_hermitian(pinched_moment(cands[pr.a].state, ctx, needed) -
                                         pinched_moment(cands[pr.b].state, ctx, needed));
      xi = std::min(xi, dist);
    }
  }
  rep.binding = any_inconclusive;
  rep.d_tilde = any_inconclusive ? -1 : needed;
  rep.xi_tilde = std::isfinite(xi) ? xi : 0.0;
  return rep;
}

struct SemiuniversalOptions {
  double xi_min = 0.05;
  long d_cap = 4;
  double misid_target = 1e-3;
  double c = 1.0;
  CutoffSchedule schedule{};
  long max_letters = 16;  // cap on the truncated alphabet of the execution stage
};

// Identify the candidate by sampling d-copy energy-basis strings (plus an
// overflow symbol), then run the known-state protocol for the identified
// candidate on the remaining copies, evaluated against the true state.
inline ProtocolOutcome semiuniversal_protocol(const std::vector<Candidate>& cands, std::size_t true_index,
                                              const InfiniteContext& ctx, long n, std::uint64_t seed,
                                              const SemiuniversalOptions& opt = {}) {
  if (cands.empty() || true_index >= cands.size()) throw ValidationError("semiuniversal: bad candidate index");
  for (const auto& c : cands)
    if (c.state.coherent()) throw ValidationError("semiuniversal: coherent candidates are not supported");
  ProtocolOutcome o;
  o.mode = "semiuniversal";
  o.n = n;
  o.seed = seed;
  std::size_t chosen = 0;
  long budget = 0;
  // Equivalent candidates share one class; the first member represents it.
  std::vector<std::size_t> cls(cands.size());
  std::iota(cls.begin(), cls.end(), 0);
  double misid_bound = 0.0;
  nlohmann::json ident = nlohmann::json::object();
  if (cands.size() > 1) {
    auto dr = distinguishing_dimension(cands, ctx, opt.d_cap, opt.xi_min);
    if (!dr.ok()) throw ValidationError("semiuniversal: candidates not distinguishable within d_cap");
    long dt = dr.d_tilde;
    for (const auto& pr : dr.pairs)
      if (pr.equivalent) cls[pr.b] = cls[pr.a];
    std::vector<std::vector<double>> stats;
    for (const auto& c : cands) {
      auto p = string_statistics(c.state, dt);
      double s = std::accumulate(p.begin(), p.end(), 0.0);
      p.push_back(std::max(0.0, 1.0 - s));
      stats.push_back(p);
    }
    double sep = INFINITY;
    for (const auto& pr : dr.pairs)
      if (!pr.equivalent) sep = std::min(sep, l1_distance(stats[pr.a], stats[pr.b]));
    if (!(sep > 0.0)) throw ValidationError("semiuniversal: candidates differ only in coherence");
    double k_alpha = static_cast<double>(stats[0].size());
    long samples = hoeffding_sample_size(k_alpha, std::min(1.0, sep / 2.0), opt.misid_target);
    budget = samples * dt;
    if (budget > n / 10) throw ValidationError("semiuniversal: identification budget exceeds n/10");
    SamplingOracle oracle{stats[true_index], seed, SamplingMode::sampled};
    auto emp = sample_types(oracle, samples, 0x1d);
    double best = INFINITY;
    for (std::size_t i = 0; i < cands.size(); ++i) {
      double dist = l1_distance(emp.p_hat, stats[i]);
      if (dist < best - 1e-15) {
        best = dist;
        chosen = cls[i];
      }
    }
    misid_bound = std::min(1.0, opt.misid_target);
    ident = {{"d_tilde", dt}, {"xi_tilde", dr.xi_tilde}, {"samples", samples}, {"separation", sep}};
  }
  long n_rest = n - budget;
  long d = std::min(opt.schedule(n_rest), opt.max_letters);
  d = std::max(d, 2L);
  auto tctx = ctx.truncated(d);
  auto renorm = [&](const TailState& st) {
    auto v = st.truncated_diag(d);
    double s = std::accumulate(v.begin(), v.end(), 0.0);
    for (auto& x : v) x /= s;
    return v;
  };
  auto design = renorm(cands[chosen].state);
  auto truth = renorm(cands[true_index].state);
  Alphabet a = letter_alphabet(tctx, design);
  long l = default_bath(n_rest, opt.c);
  ShiftFunction h = choose_shift(a, n_rest, l, 0.0);
  ExtractionPlan plan = make_plan(a, n_rest, l, h);
  auto xr = evaluate_xi(plan, truth);
  plan.xi = xr.xi;
  plan.xi_method = xr.method;
  double mass = cands[true_index].state.mass(d).lower;
  o.success_prob = std::exp(log_success(std::max(mass, 0.0), n_rest));
  o.xi = plan.xi;
  o.xi_method = plan.xi_method;
  o.fidelity = o.success_prob * (1.0 - plan.xi) * (1.0 - misid_bound);
  std::vector<double> tau_d;
  for (long i = 1; i <= d; ++i) tau_d.push_back(ctx.tau(i));
  // Target: D(rho||tau) of the true state, approximated on the first d
  // levels with the certified remainder reported alongside.
  auto fe = renormalized_free_energy(cands[true_index].state, ctx, d);
  o.target_nats = std::isfinite(fe.limit) ? fe.limit : fe.direct + fe.remainder;
  o.pinched_target_nats = kl_divergence(truth, letter_alphabet(tctx, truth).t());
  o.copies = {n_rest, budget, 0};
  finish_outcome(o, plan, ctx.beta());
  o.extra = {{"identified", cands[chosen].name},
             {"misidentified", chosen != cls[true_index]},
             {"misid_bound", misid_bound},
             {"d", d},
             {"identification", ident}};
  return o;
}

}  // namespace thermoflux
