#pragma once

// The twelve acceptance criteria. Each one reads its knobs from a JSON
// object (defaults below, overridable per key from criteria.json) and
// returns a verdict with the measured quantities.

#include "thermoflux/experiment.hpp"
#include "thermoflux/infdim.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

namespace thermoflux {

struct CriterionResult {
  int id = 0;
  std::string key;
  std::string group;
  std::string title;
  bool pass = false;
  double runtime_s = 0.0;
  double budget_s = 0.0;
  nlohmann::json details = nlohmann::json::object();
  std::vector<std::string> failures;
};

struct Criterion {
  int id;
  std::string key;
  std::string group;
  std::string title;
  std::function<void(const nlohmann::json&, CriterionResult&)> run;
};

namespace acc {

inline void expect(CriterionResult& r, bool ok, const std::string& what) {
  if (!ok) r.failures.push_back(what);
}

inline std::string fmt(double v) { return format_double(v); }

inline ThermalContext qubit() { return ThermalContext({Rational(0), Rational(1)}, 1.0); }
inline ThermalContext qutrit() { return ThermalContext({Rational(0), Rational(1), Rational(2)}, 1.0); }

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// ---------------------------------------------------------------------------

inline void schur_golden(const nlohmann::json& c, CriterionResult& r) {
  const double tol = c.at("tol");
  auto ctx = qubit();
  auto ket = [](std::initializer_list<std::pair<int, double>> amps, double norm) {
    Vec v = Vec::Zero(8);
    for (auto [idx, a] : amps) v(idx) = a / norm;
    return v;
  };
  // |abc> has index 4a + 2b + c.
  const double s3 = std::sqrt(3.0), s2 = std::sqrt(2.0), s6 = std::sqrt(6.0);
  Vec v1 = ket({{0, 1}}, 1), v2 = ket({{1, 1}, {2, 1}, {4, 1}}, s3), v3 = ket({{3, 1}, {5, 1}, {6, 1}}, s3),
      v4 = ket({{7, 1}}, 1);
  Vec u1 = ket({{4, 1}, {2, -1}}, s2), u2 = ket({{5, 1}, {3, -1}}, s2), u3 = ket({{1, 2}, {2, -1}, {4, -1}}, s6),
      u4 = ket({{6, 2}, {5, -1}, {3, -1}}, s6);
  std::map<std::string, Mat> expected{{"(3),E=0", pure_state(v1)},
                                      {"(3),E=1", pure_state(v2)},
                                      {"(3),E=2", pure_state(v3)},
                                      {"(3),E=3", pure_state(v4)},
                                      {"(2,1),E=1", pure_state(u1) + pure_state(u3)},
                                      {"(2,1),E=2", pure_state(u2) + pure_state(u4)}};
  auto ch = schur_pinching(ctx, 3);
  expect(r, ch.family.size() == expected.size(), "projector count " + std::to_string(ch.family.size()) + " != 6");
  double worst = 0.0;
  for (std::size_t j = 0; j < ch.family.size(); ++j) {
    auto it = expected.find(ch.family.labels[j]);
    if (it == expected.end()) {
      expect(r, false, "unexpected projector label " + ch.family.labels[j]);
      continue;
    }
    worst = std::max(worst, max_abs(ch.family.projector(j) - it->second));
  }
  expect(r, worst <= tol, "max projector deviation " + fmt(worst));
  auto d3 = irrep_dimensions({3}, 2), d21 = irrep_dimensions({2, 1}, 2);
  std::vector<std::uint64_t> dims{d3.n_lambda, d3.m_lambda, d21.n_lambda, d21.m_lambda};
  expect(r, dims == std::vector<std::uint64_t>{4, 1, 2, 2}, "dimension table mismatch");
  r.details = {{"max_deviation", worst}, {"dims", dims}};
}

inline void mixture(const nlohmann::json& c, CriterionResult& r) {
  const double tol = c.at("tol");
  const int states = c.at("states");
  auto ctx = qubit();
  auto ch = schur_pinching(ctx, 3);
  auto us = mixture_realization(ch);
  Mat h = hamiltonian(ctx, 3);
  double comm = 0.0, dev = 0.0;
  for (const auto& u : us) comm = std::max(comm, max_abs(u * h - h * u));
  for (int i = 0; i < states; ++i) {
    Rng rng = stream(c.at("seed").get<std::uint64_t>(), static_cast<std::uint64_t>(i));
    Mat rho = random_density_matrix(rng, 8);
    dev = std::max(dev, max_abs(apply_mixture(us, rho) - apply(ch, rho)));
  }
  expect(r, us.size() == 6, "J = " + std::to_string(us.size()));
  expect(r, dev <= tol, "mixture deviation " + fmt(dev));
  expect(r, comm <= tol, "commutator " + fmt(comm));
  r.details = {{"J", us.size()}, {"max_deviation", dev}, {"max_commutator", comm}};
}

inline void pinching_inequality(const nlohmann::json& c, CriterionResult& r) {
  const double eig_tol = c.at("eig_tol"), loss_tol = c.at("loss_tol");
  const auto seed = c.at("seed").get<std::uint64_t>();
  double worst_eig = INFINITY, worst_slack = INFINITY;
  std::uint64_t trial = 0;
  auto check = [&](const ThermalContext& ctx, std::size_t k, int count) {
    const std::size_t d = ctx.dim();
    auto ch = schur_pinching(ctx, k);
    double mult = schur_multiplier(k, d);
    double bound = 2.0 * (static_cast<double>(d) - 1.0) / static_cast<double>(k) * std::log(static_cast<double>(k) + 1.0);
    for (int i = 0; i < count; ++i) {
      Rng rng = stream(seed, trial++);
      Mat rho_k = tensor_power(random_density_matrix(rng, d), k);
      Mat pinched = apply(ch, rho_k);
      double me = min_eigenvalue(pinched - rho_k / mult);
      double loss = relative_entropy(rho_k, pinched) / static_cast<double>(k);
      worst_eig = std::min(worst_eig, me);
      worst_slack = std::min(worst_slack, bound + loss_tol - loss);
      if (me < -eig_tol) expect(r, false, "eigmin " + fmt(me) + " at d=" + std::to_string(d) + " k=" + std::to_string(k));
      if (loss > bound + loss_tol)
        expect(r, false, "loss " + fmt(loss) + " > " + fmt(bound) + " at d=" + std::to_string(d) + " k=" + std::to_string(k));
    }
  };
  for (std::size_t k : {2, 3, 4}) check(qubit(), k, c.at("qubit_states"));
  check(qutrit(), 2, c.at("qutrit_states"));
  r.details = {{"trials", trial}, {"min_eigenvalue", worst_eig}, {"min_loss_slack", worst_slack}};
}

inline void schur_recovery(const nlohmann::json& c, CriterionResult& r) {
  const int k_max = c.at("k_max");
  auto ctx = qubit();
  Mat rho = preset_state("plus", ctx), tau = thermal_state(ctx);
  double target = relative_entropy(rho, tau);
  nlohmann::json rows = nlohmann::json::array();
  double prev = -INFINITY;
  for (int k = 1; k <= k_max; ++k) {
    auto kk = static_cast<std::size_t>(k);
    Mat pinched = apply(schur_pinching(ctx, kk), tensor_power(rho, kk));
    double v = relative_entropy(pinched, tensor_power(tau, kk)) / k;
    double deficit = target - v, bound = 2.0 / k * std::log(k + 1.0);
    expect(r, v >= prev - 1e-12, "not monotone at k=" + std::to_string(k));
    expect(r, deficit <= bound + 1e-12, "deficit " + fmt(deficit) + " > " + fmt(bound) + " at k=" + std::to_string(k));
    rows.push_back({{"k", k}, {"value", v}, {"deficit", deficit}, {"bound", bound}});
    prev = v;
  }
  r.details = {{"target", target}, {"rows", rows}};
}

inline void classical_convergence(const nlohmann::json& c, CriterionResult& r) {
  auto ctx = qubit();
  std::vector<double> p{1.0, 0.0};
  const double target = std::log1p(std::exp(-1.0));
  const double converse_tol = c.at("converse_tol");
  nlohmann::json rows = nlohmann::json::array();
  double prev = -INFINITY;
  ProtocolOutcome last;
  for (long n : c.at("n_grid").get<std::vector<long>>()) {
    ClassicalOptions opt;
    opt.l = static_cast<long>(std::ceil(std::pow(static_cast<double>(n), 1.5) - 1e-9));
    auto o = classical_protocol(p, ctx, n, opt);
    expect(r, o.rate_nats >= prev, "rate decreased at n=" + std::to_string(n));
    expect(r, o.rate_nats <= target + converse_tol, "converse violated at n=" + std::to_string(n));
    rows.push_back({{"n", n}, {"l", o.l}, {"h", o.h}, {"rate_nats", o.rate_nats}, {"xi", o.xi}, {"xi_method", o.xi_method}});
    prev = o.rate_nats;
    last = o;
  }
  double deficit = target - last.rate_nats;
  expect(r, last.xi <= c.at("xi_max").get<double>(), "xi " + fmt(last.xi) + " at n=" + std::to_string(last.n));
  expect(r, deficit <= c.at("deficit_max").get<double>(), "deficit " + fmt(deficit));
  r.details = {{"target", target}, {"rows", rows}, {"final_deficit", deficit}};
}

inline void universal(const nlohmann::json& c, CriterionResult& r) {
  auto ctx = qubit();
  Mat rho = preset_state("ground", ctx);
  const double target = relative_entropy(rho, thermal_state(ctx));
  const double converse_tol = c.at("converse_tol");
  const int seeds = c.at("seeds");
  const std::vector<std::string> others{"plus", "thermal", "mixed", "excited"};
  auto grid = c.at("n_grid").get<std::vector<long>>();
  std::vector<double> medians;
  nlohmann::json per_n = nlohmann::json::array();
  for (long n : grid) {
    auto params = universal_schedule(n, ctx);
    std::vector<double> rates;
    long hash_mismatch = 0, fid_fail = 0;
    for (int s = 0; s < seeds; ++s) {
      auto seed = static_cast<std::uint64_t>(s);
      auto o = universal_protocol(rho, ctx, params, seed);
      rates.push_back(o.rate_nats);
      if (o.rate_nats > target + converse_tol) expect(r, false, "converse violated n=" + std::to_string(n) + " seed=" + std::to_string(s));
      if (o.fidelity < 1.0 - 2.0 * params.eps - o.xi) ++fid_fail;
      auto other = universal_protocol(preset_state(others[s % others.size()], ctx), ctx, params, seed);
      if (other.protocol_hash != o.protocol_hash) ++hash_mismatch;
    }
    expect(r, fid_fail == 0, std::to_string(fid_fail) + " fidelity shortfalls at n=" + std::to_string(n));
    expect(r, hash_mismatch == 0, std::to_string(hash_mismatch) + " hash mismatches at n=" + std::to_string(n));
    medians.push_back(median(rates));
    per_n.push_back({{"n", n}, {"k", params.k}, {"m", params.m}, {"m_capped", params.m_capped}, {"eps", params.eps},
                     {"median_rate", medians.back()},
                     {"min_rate", *std::min_element(rates.begin(), rates.end())},
                     {"max_rate", *std::max_element(rates.begin(), rates.end())}});
  }
  for (std::size_t i = 1; i < medians.size(); ++i)
    expect(r, medians[i] > medians[i - 1], "median rate did not increase from n=" + std::to_string(grid[i - 1]));
  r.details = {{"target", target}, {"per_n", per_n}};
}

inline void hoeffding_coverage(const nlohmann::json& c, CriterionResult& r) {
  const double eta = c.at("eta"), delta = c.at("delta");
  const long m = c.at("m");
  const int trials = c.at("trials");
  long m_formula = hoeffding_sample_size(2.0, eta, delta);
  expect(r, m_formula == m, "sample size formula gives " + std::to_string(m_formula));
  std::vector<double> p = c.at("p").get<std::vector<double>>();
  SamplingOracle oracle{p, c.at("seed").get<std::uint64_t>(), SamplingMode::sampled};
  // The verdict uses the l1 distance; total variation (half of it) is
  // reported alongside.
  long exceed = 0, exceed_tv = 0;
  for (int t = 0; t < trials; ++t) {
    auto e = sample_types(oracle, m, static_cast<std::uint64_t>(t) + 1);
    double d1 = l1_distance(e.p_hat, p);
    exceed += d1 > eta;
    exceed_tv += 0.5 * d1 > eta;
  }
  double frac = static_cast<double>(exceed) / trials;
  double cap = delta + 3.0 * std::sqrt(delta * (1.0 - delta) / trials);
  expect(r, frac <= cap, "l1 exceedance " + fmt(frac) + " > " + fmt(cap));
  r.details = {{"m", m_formula},
               {"exceedances_l1", exceed},
               {"fraction_l1", frac},
               {"fraction_tv", static_cast<double>(exceed_tv) / trials},
               {"cap", cap}};
}

inline void continuity(const nlohmann::json& c, CriterionResult& r) {
  const double tol = c.at("tol");
  const int pairs = c.at("pairs");
  const auto seed = c.at("seed").get<std::uint64_t>();
  double worst = INFINITY;
  for (int i = 0; i < pairs; ++i) {
    auto ctx = i % 2 ? qutrit() : qubit();
    Rng rng = stream(seed, static_cast<std::uint64_t>(i));
    Mat a = random_density_matrix(rng, ctx.dim()), b = random_density_matrix(rng, ctx.dim());
    // Every fourth pair is close, where the bound is tightest.
    if (i % 4 == 3) b = 0.95 * a + 0.05 * b;
    Mat tau = thermal_state(ctx);
    double lhs = std::abs(relative_entropy(a, tau) - relative_entropy(b, tau));
    double rhs = ctx.continuity_constant() * trace_norm_hermitian(a - b);
    worst = std::min(worst, rhs + tol - lhs);
    if (lhs > rhs + tol) expect(r, false, "pair " + std::to_string(i) + " violates the bound");
  }
  double constant = qubit().continuity_constant();
  double expected = c.at("constant_expected"), ctol = c.at("constant_tol");
  expect(r, std::abs(constant - expected) <= ctol, "qubit constant " + fmt(constant) + " vs " + fmt(expected));
  r.details = {{"pairs", pairs}, {"min_slack", worst}, {"qubit_constant", constant}};
}

inline void measure_prepare(const nlohmann::json& c, CriterionResult& r) {
  auto ctx = qubit();
  const double target = std::log1p(std::exp(-1.0));
  const double tol = c.at("stochastic_tol");
  nlohmann::json rows = nlohmann::json::array();
  double prev = -INFINITY;
  for (long n : c.at("n_grid").get<std::vector<long>>()) {
    long M = mnp_default_resolution(n);
    auto res = measure_and_prepare_protocol(M, ctx, n, {1.0, 0.0});
    expect(r, res.gibbs_defect <= tol && res.stochastic_defect <= tol, "Gibbs defect " + fmt(res.gibbs_defect));
    expect(r, !res.boundary, "unexpected boundary flag at n=" + std::to_string(n));
    expect(r, res.rate_dominant > prev, "rate not increasing at n=" + std::to_string(n));
    expect(r, res.rate_dominant <= target + 1e-12, "converse violated at n=" + std::to_string(n));
    rows.push_back({{"n", n}, {"M", M}, {"rate", res.rate_dominant}, {"gibbs_defect", res.gibbs_defect}});
    prev = res.rate_dominant;
  }
  // p0 = 7/8 sits halfway between the grid points 1 and 3/4 at M = 4.
  auto edge = measure_and_prepare_protocol(4, ctx, 50, {0.875, 0.125});
  expect(r, edge.boundary && std::isnan(edge.outcome.rate_nats), "boundary state was not flagged");
  r.details = {{"target", target}, {"rows", rows}, {"boundary_flagged", edge.boundary}};
}

inline void infinite_dim(const nlohmann::json& c, CriterionResult& r) {
  InfiniteContext ictx;
  auto rho = TailState::power_law(4.0);
  long n = c.at("n");
  CutoffSchedule sched;
  sched.kind = CutoffSchedule::Kind::sqrt;
  auto curve = schedule_success_curve(rho, sched, {n});
  const auto& row = curve.rows.front();
  expect(r, row.success_lower >= c.at("success_min").get<double>(), "certified success " + fmt(row.success_lower));

  auto geo = TailState::geometric(c.at("geometric_a"));
  long d = c.at("d");
  auto fe = renormalized_free_energy(geo, ictx, d);
  double gap = std::abs(fe.direct - fe.limit);
  expect(r, std::isfinite(fe.limit), "no closed-form limit");
  expect(r, gap <= c.at("limit_tol").get<double>(), "free-energy gap " + fmt(gap));
  double dual = 0.0;
  for (long dd : c.at("dual_d").get<std::vector<long>>()) {
    auto f = renormalized_free_energy(geo, ictx, dd);
    dual = std::max(dual, std::abs(f.direct - f.via_lindblad));
  }
  expect(r, dual <= c.at("dual_tol").get<double>(), "dual-path disagreement " + fmt(dual));
  r.details = {{"n", n},           {"d_n", row.d},          {"success", row.success},
               {"success_lower", row.success_lower},        {"free_energy", fe.direct},
               {"limit", fe.limit}, {"gap", gap},           {"dual_max", dual}};
}

inline void haar(const nlohmann::json& c, CriterionResult& r) {
  auto rep = haar_experiment(c.at("n_qubits"), c.at("samples"), c.at("seed"), qubit());
  expect(r, rep.target_exact == Rational(3, 2), "target " + rational_label(rep.target_exact));
  expect(r, rep.pass, "mean " + fmt(rep.mean_energy) + " outside 3 standard errors");
  r.details = haar_to_json(rep);
}

inline void oracle(const nlohmann::json& c, CriterionResult& r) {
  const double tol = c.at("tol");
  auto ctx = qubit();
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& cs : c.at("cases")) {
    auto p = cs.at("p").get<std::vector<double>>();
    long n = cs.at("n"), l = cs.at("l");
    Alphabet a = letter_alphabet(ctx, p);
    ShiftFunction h = cs.at("h").is_string() ? choose_shift(a, n, l, 0.0) : cs.at("h").get<ShiftFunction>();
    auto plan = build_classical_plan(a, n, l, h);
    auto dm = simulate_plan_density_matrix(plan, ctx, diagonal_state(p));
    // Work read off the oracle's own bookkeeping: energy_defect = 0 means
    // every moved string paid exactly W into the storage.
    double dw = std::abs(dm.work - plan.work) + dm.energy_defect;
    double dxi = std::abs(dm.xi - plan.xi), dfid = std::abs(dm.fidelity - (1.0 - plan.xi));
    std::string tag = "n=" + std::to_string(n) + " l=" + std::to_string(l);
    expect(r, dw <= tol && dxi <= tol && dfid <= tol, "mismatch at " + tag + " dxi=" + fmt(dxi));
    expect(r, dm.overflow == 0 && dm.unitarity_defect == 0.0, "not a permutation at " + tag);
    expect(r, dm.gibbs_defect <= 1e-12, "not Gibbs preserving at " + tag);
    rows.push_back({{"n", n}, {"l", l}, {"p", p}, {"h", h}, {"W", plan.work}, {"xi", plan.xi}, {"xi_dm", dm.xi},
                    {"dim", dm.dim}});
  }
  r.details = {{"cases", rows}};
}

}  // namespace acc

inline const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {1, "schur_golden", "schur", "3-qubit Schur pinching golden projectors", acc::schur_golden},
      {2, "mixture", "pinching", "pinching as a mixture of energy-conserving unitaries", acc::mixture},
      {3, "pinching_inequality", "pinching", "pinching inequality and loss bound", acc::pinching_inequality},
      {4, "schur_recovery", "pinching", "free-energy recovery under Schur pinching", acc::schur_recovery},
      {5, "classical_convergence", "extraction", "classical protocol convergence", acc::classical_convergence},
      {6, "universal", "extraction", "universal protocol end to end", acc::universal},
      {7, "hoeffding_coverage", "estimation", "Hoeffding coverage", acc::hoeffding_coverage},
      {8, "continuity", "estimation", "relative-entropy continuity bound", acc::continuity},
      {9, "measure_prepare", "extraction", "measure-and-prepare protocol", acc::measure_prepare},
      {10, "infinite_dim", "infdim", "infinite-dimensional truncation", acc::infinite_dim},
      {11, "haar", "haar", "Haar average energy", acc::haar},
      {12, "oracle", "extraction", "density-matrix oracle equivalence", acc::oracle},
  };
  return all;
}

inline nlohmann::json default_acceptance_config() {
  using nlohmann::json;
  return {
      {"schur_golden", {{"tol", 1e-12}, {"budget_s", 1}}},
      {"mixture", {{"tol", 1e-10}, {"states", 20}, {"seed", 2}, {"budget_s", 5}}},
      {"pinching_inequality",
       {{"eig_tol", 1e-9}, {"loss_tol", 1e-8}, {"qubit_states", 50}, {"qutrit_states", 20}, {"seed", 3}, {"budget_s", 120}}},
      {"schur_recovery", {{"k_max", 6}, {"budget_s", 60}}},
      {"classical_convergence",
       {{"n_grid", {50, 100, 200, 400}}, {"xi_max", 0.05}, {"deficit_max", 0.15}, {"converse_tol", 1e-8}, {"budget_s", 300}}},
      {"universal", {{"n_grid", {1000, 10000}}, {"seeds", 20}, {"converse_tol", 1e-8}, {"budget_s", 600}}},
      {"hoeffding_coverage",
       {{"eta", 0.1}, {"delta", 0.05}, {"m", 220}, {"trials", 1000}, {"p", {0.3, 0.7}}, {"seed", 7}, {"budget_s", 10}}},
      {"continuity",
       {{"pairs", 200}, {"tol", 1e-8}, {"constant_expected", 1.92869}, {"constant_tol", 1e-4}, {"seed", 8}, {"budget_s", 10}}},
      {"measure_prepare", {{"n_grid", {50, 100, 200, 400, 800}}, {"stochastic_tol", 1e-12}, {"budget_s", 120}}},
      {"infinite_dim",
       {{"n", 1000000},
        {"success_min", 0.999},
        {"geometric_a", 0.2},
        {"d", 200},
        {"limit_tol", 1e-3},
        {"dual_d", {10, 50, 200}},
        {"dual_tol", 1e-10},
        {"budget_s", 30}}},
      {"haar", {{"n_qubits", 3}, {"samples", 2000}, {"seed", 11}, {"budget_s", 10}}},
      {"oracle",
       {{"tol", 1e-9},
        {"cases",
         json::array({{{"p", {0.0, 1.0}}, {"n", 3}, {"l", 4}, {"h", "auto"}},
                      {{"p", {0.8, 0.2}}, {"n", 3}, {"l", 4}, {"h", {-1, 1}}},
                      {{"p", {0.6, 0.4}}, {"n", 4}, {"l", 4}, {"h", {0, 0}}},
                      {{"p", {1.0, 0.0}}, {"n", 4}, {"l", 6}, {"h", {-1, 1}}},
                      {{"p", {0.9, 0.1}}, {"n", 5}, {"l", 5}, {"h", {-2, 2}}},
                      {{"p", {0.0, 1.0}}, {"n", 6}, {"l", 4}, {"h", "auto"}}})},
        {"budget_s", 60}}},
  };
}

// Overlays `file` onto the defaults. Unknown criteria and unknown knobs are
// rejected; a knob must keep its JSON type.
inline nlohmann::json merge_acceptance_config(const nlohmann::json& file) {
  nlohmann::json cfg = default_acceptance_config();
  if (!file.is_object()) throw ValidationError("acceptance config must be an object");
  for (const auto& [key, obj] : file.items()) {
    if (!cfg.contains(key)) throw ValidationError("unknown criterion '" + key + "'");
    if (!obj.is_object()) throw ValidationError("criterion '" + key + "' must map to an object");
    for (const auto& [knob, v] : obj.items()) {
      if (!cfg[key].contains(knob)) throw ValidationError("unknown knob '" + knob + "' for " + key);
      const auto& def = cfg[key][knob];
      bool same = def.is_number() ? v.is_number() : def.type() == v.type();
      if (!same) throw ValidationError("knob '" + knob + "' for " + key + " has the wrong type");
      cfg[key][knob] = v;
    }
  }
  return cfg;
}

inline nlohmann::json load_acceptance_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  return merge_acceptance_config(j);
}

inline std::set<std::string> criterion_groups() {
  std::set<std::string> g;
  for (const auto& c : criteria()) g.insert(c.group);
  return g;
}

struct AcceptanceReport {
  std::vector<CriterionResult> results;
  bool pass() const {
    return std::all_of(results.begin(), results.end(), [](const CriterionResult& r) { return r.pass; });
  }
};

inline CriterionResult run_criterion(const Criterion& c, const nlohmann::json& cfg) {
  CriterionResult r;
  r.id = c.id;
  r.key = c.key;
  r.group = c.group;
  r.title = c.title;
  const auto& knobs = cfg.at(c.key);
  r.budget_s = knobs.at("budget_s");
  auto t0 = std::chrono::steady_clock::now();
  try {
    c.run(knobs, r);
  } catch (const std::exception& e) {
    r.failures.push_back(std::string("exception: ") + e.what());
  }
  r.runtime_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (r.runtime_s > r.budget_s) r.failures.push_back("runtime " + acc::fmt(r.runtime_s) + " s over budget");
  r.pass = r.failures.empty();
  return r;
}

// `only` filters by group name or criterion key; empty runs everything.
inline AcceptanceReport run_acceptance(const nlohmann::json& cfg, const std::set<std::string>& only = {},
                                       const std::function<void(const CriterionResult&)>& on_result = {}) {
  for (const auto& o : only) {
    bool known = criterion_groups().count(o) > 0;
    for (const auto& c : criteria()) known = known || c.key == o;
    if (!known) throw ValidationError("unknown criterion group '" + o + "'");
  }
  AcceptanceReport rep;
  for (const auto& c : criteria()) {
    if (!only.empty() && !only.count(c.group) && !only.count(c.key)) continue;
    rep.results.push_back(run_criterion(c, cfg));
    if (on_result) on_result(rep.results.back());
  }
  return rep;
}

inline std::string criterion_line(const CriterionResult& r) {
  std::ostringstream os;
  os << (r.pass ? "PASS" : "FAIL") << "  [" << std::setw(2) << r.id << "] " << r.title << " (" << r.group << ", "
     << std::fixed << std::setprecision(2) << r.runtime_s << " s)";
  for (const auto& f : r.failures) os << "\n        - " << f;
  return os.str();
}

inline nlohmann::json acceptance_to_json(const AcceptanceReport& rep) {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& r : rep.results)
    list.push_back({{"id", r.id},
                    {"key", r.key},
                    {"group", r.group},
                    {"title", r.title},
                    {"pass", r.pass},
                    {"runtime_s", r.runtime_s},
                    {"budget_s", r.budget_s},
                    {"failures", r.failures},
                    {"details", r.details}});
  return {{"version", kVersion}, {"pass", rep.pass()}, {"criteria", list}};
}

}  // namespace thermoflux
