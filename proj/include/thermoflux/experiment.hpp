#pragma once

// Sweep orchestration: validated JSON configs, seeded rows, CSV/JSON output.

#include "thermoflux/extraction.hpp"
#include "thermoflux/random.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace thermoflux {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// States

// Presets: ground, excited (top level), plus (uniform superposition),
// thermal, mixed (maximally mixed).
inline Mat preset_state(const std::string& name, const ThermalContext& ctx) {
  const std::size_t d = ctx.dim();
  if (name == "ground") return diagonal_state([&] { std::vector<double> p(d, 0.0); p[0] = 1.0; return p; }());
  if (name == "excited") return diagonal_state([&] { std::vector<double> p(d, 0.0); p[d - 1] = 1.0; return p; }());
  if (name == "plus") return pure_state(Vec::Constant(d, cplx(1.0 / std::sqrt(static_cast<double>(d)), 0.0)));
  if (name == "thermal") return thermal_state(ctx);
  if (name == "mixed") return Mat::Identity(d, d) / static_cast<double>(d);
  throw ValidationError("unknown state preset '" + name + "'");
}

// A preset name, a diagonal list, an inline matrix {dim, re, im}, or
// {"matrix_file": path}.
inline Mat parse_state(const nlohmann::json& j, const ThermalContext& ctx) {
  Mat rho;
  if (j.is_string()) {
    rho = preset_state(j.get<std::string>(), ctx);
  } else if (j.is_array()) {
    std::vector<double> p;
    for (const auto& v : j) {
      if (!v.is_number()) throw ValidationError("diagonal state entries must be numbers");
      p.push_back(v.get<double>());
    }
    rho = diagonal_state(p);
  } else if (j.is_object() && j.contains("matrix_file")) {
    if (j.size() != 1) throw ValidationError("matrix_file state takes no other keys");
    std::ifstream in(j.at("matrix_file").get<std::string>());
    if (!in) throw ValidationError("cannot open matrix file");
    nlohmann::json mj;
    try {
      in >> mj;
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(std::string("matrix file: ") + e.what());
    }
    rho = matrix_from_json(mj);
  } else if (j.is_object()) {
    rho = matrix_from_json(j);
  } else {
    throw ValidationError("state must be a preset, a diagonal list or a matrix");
  }
  if (static_cast<std::size_t>(rho.rows()) != ctx.dim()) throw ValidationError("state dimension does not match levels");
  validate_state(rho);
  return rho;
}

inline bool is_diagonal(const Mat& m, double tol = 1e-14) {
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      if (i != j && std::abs(m(i, j)) > tol) return false;
  return true;
}

// ---------------------------------------------------------------------------
// Config

struct ParamOverrides {
  long k = 0;
  long m = 0;
  long l = 0;
  double c = 1.0;
  double margin = 0.0;         // classical / aware: nats per symbol
  double margin_factor = 2.0;  // universal
  double eta = 0.0;            // tomo
  long M = 0;                  // mnp resolution, 0 selects ceil(sqrt n)
};

struct ExperimentConfig {
  std::string mode = "classical";  // classical | aware | universal | mnp | tomo
  nlohmann::json state = "ground";
  std::vector<std::string> levels{"0", "1"};
  double beta = 1.0;
  std::vector<long> n_grid;
  std::vector<std::uint64_t> seeds{0};
  SamplingMode sampling = SamplingMode::sampled;
  ParamOverrides params;
  std::string csv_path;
  std::string json_path;
  int threads = 1;

  ThermalContext context() const {
    std::vector<Rational> lv;
    for (const auto& s : levels) lv.push_back(parse_rational(s));
    return ThermalContext(lv, beta);
  }
};

namespace detail {

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where + " must be an object");
  for (const auto& [key, _] : j.items())
    if (!allowed.count(key)) throw ValidationError("unknown key '" + key + "' in " + where);
}

inline std::string level_string(const nlohmann::json& v) {
  if (v.is_string()) return v.get<std::string>();
  if (v.is_number_integer()) return std::to_string(v.get<long long>());
  if (v.is_number()) {
    std::ostringstream os;
    os << std::setprecision(15) << v.get<double>();
    return os.str();
  }
  throw ValidationError("levels must be numbers or rational strings");
}

}  // namespace detail

inline const std::set<std::string>& known_modes() {
  static const std::set<std::string> m{"classical", "aware", "universal", "mnp", "tomo"};
  return m;
}

inline void validate_config(const ExperimentConfig& c) {
  if (!known_modes().count(c.mode)) throw ValidationError("unknown mode '" + c.mode + "'");
  if (c.n_grid.empty()) throw ValidationError("n_grid must not be empty");
  for (long n : c.n_grid)
    if (n < 2) throw ValidationError("n_grid entries must be >= 2");
  if (c.seeds.empty()) throw ValidationError("seeds must not be empty");
  if (c.threads < 1) throw ValidationError("threads must be >= 1");
  if (c.params.c <= 0.0) throw ValidationError("params.c must be > 0");
  if (c.params.margin < 0.0 || c.params.margin_factor < 0.0) throw ValidationError("margins must be >= 0");
  if (c.params.eta < 0.0) throw ValidationError("params.eta must be >= 0");
  auto ctx = c.context();
  Mat rho = parse_state(c.state, ctx);
  if (c.mode == "classical" && !is_diagonal(rho)) throw ValidationError("classical mode needs a diagonal state");
  if (c.mode == "mnp" && !is_diagonal(rho)) throw ValidationError("mnp mode needs a diagonal state");
}

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  detail::reject_unknown(j, {"mode", "state", "levels", "beta", "n_grid", "seeds", "sampling", "params", "output", "threads"},
                         "config");
  ExperimentConfig c;
  try {
    if (j.contains("mode")) c.mode = j.at("mode").get<std::string>();
    if (j.contains("state")) c.state = j.at("state");
    if (j.contains("levels")) {
      c.levels.clear();
      for (const auto& v : j.at("levels")) c.levels.push_back(detail::level_string(v));
    }
    if (j.contains("beta")) c.beta = j.at("beta").get<double>();
    if (j.contains("n_grid")) c.n_grid = j.at("n_grid").get<std::vector<long>>();
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("threads")) c.threads = j.at("threads").get<int>();
    if (j.contains("sampling")) {
      auto s = j.at("sampling").get<std::string>();
      if (s == "exact")
        c.sampling = SamplingMode::exact;
      else if (s == "sampled")
        c.sampling = SamplingMode::sampled;
      else
        throw ValidationError("sampling must be exact or sampled");
    }
    if (j.contains("params")) {
      const auto& p = j.at("params");
      detail::reject_unknown(p, {"k", "m", "l", "c", "margin", "margin_factor", "eta", "M"}, "params");
      if (p.contains("k")) c.params.k = p.at("k").get<long>();
      if (p.contains("m")) c.params.m = p.at("m").get<long>();
      if (p.contains("l")) c.params.l = p.at("l").get<long>();
      if (p.contains("c")) c.params.c = p.at("c").get<double>();
      if (p.contains("margin")) c.params.margin = p.at("margin").get<double>();
      if (p.contains("margin_factor")) c.params.margin_factor = p.at("margin_factor").get<double>();
      if (p.contains("eta")) c.params.eta = p.at("eta").get<double>();
      if (p.contains("M")) c.params.M = p.at("M").get<long>();
      if (c.params.k < 0 || c.params.m < 0 || c.params.l < 0 || c.params.M < 0)
        throw ValidationError("integer params must be >= 0");
    }
    if (j.contains("output")) {
      const auto& o = j.at("output");
      detail::reject_unknown(o, {"csv", "json"}, "output");
      if (o.contains("csv")) c.csv_path = o.at("csv").get<std::string>();
      if (o.contains("json")) c.json_path = o.at("json").get<std::string>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  validate_config(c);
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  return {{"mode", c.mode},
          {"state", c.state},
          {"levels", c.levels},
          {"beta", c.beta},
          {"n_grid", c.n_grid},
          {"seeds", c.seeds},
          {"sampling", c.sampling == SamplingMode::exact ? "exact" : "sampled"},
          {"params",
           {{"k", c.params.k},
            {"m", c.params.m},
            {"l", c.params.l},
            {"c", c.params.c},
            {"margin", c.params.margin},
            {"margin_factor", c.params.margin_factor},
            {"eta", c.params.eta},
            {"M", c.params.M}}}};
}

// Output paths and thread count do not change results, so they stay out of
// the hash.
inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(config_to_json(c).dump())); }

// ---------------------------------------------------------------------------
// Single runs

inline ProtocolOutcome run_mode(const std::string& mode, const Mat& rho, const ThermalContext& ctx, long n,
                                std::uint64_t seed, SamplingMode sampling, const ParamOverrides& prm) {
  if (mode == "classical") {
    ClassicalOptions o;
    o.c = prm.c;
    o.l = prm.l;
    o.margin = prm.margin;
    auto out = classical_protocol(diagonal_of(rho), ctx, n, o);
    out.seed = seed;
    return out;
  }
  if (mode == "aware") {
    ClassicalOptions o;
    o.c = prm.c;
    o.l = prm.l;
    o.margin = prm.margin;
    auto out = state_aware_protocol(rho, ctx, n, prm.k > 0 ? prm.k : 1, o);
    out.seed = seed;
    return out;
  }
  if (mode == "universal") {
    ScheduleOverrides ov;
    ov.k = prm.k;
    ov.m = prm.m;
    ov.c = prm.c;
    ov.margin_factor = prm.margin_factor;
    return universal_protocol(rho, ctx, universal_schedule(n, ctx, ov), seed, sampling);
  }
  if (mode == "mnp") {
    long M = prm.M > 0 ? prm.M : mnp_default_resolution(n);
    auto out = measure_and_prepare_protocol(M, ctx, n, diagonal_of(rho)).outcome;
    out.seed = seed;
    return out;
  }
  if (mode == "tomo") {
    TomoParams tp{n, prm.k > 0 ? prm.k : 1, prm.eta, prm.c};
    return tomographic_universal_protocol(rho, ctx, tp, seed);
  }
  throw ValidationError("unknown mode '" + mode + "'");
}

// ---------------------------------------------------------------------------
// Sweep

// Runs fn(0..count-1) on up to `threads` workers. fn must only touch its own
// slot of any shared output.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  threads = std::min(threads, count);
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) fn(i);
    });
  for (auto& th : pool) th.join();
}

inline std::size_t default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

struct SweepRow {
  long n = 0;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  ProtocolOutcome outcome;
};

struct SweepResult {
  std::string config_hash;
  std::string version = kVersion;
  std::string mode;
  std::vector<SweepRow> rows;  // n-major, seeds in config order
};

inline std::string sweep_csv_header() { return outcome_csv_header() + ",success_prob,status"; }

inline std::string sweep_csv(const SweepResult& r) {
  std::ostringstream os;
  os << "# thermoflux " << r.version << " config_hash=" << r.config_hash << '\n' << sweep_csv_header() << '\n';
  for (const auto& row : r.rows) {
    if (row.ok) {
      os << outcome_csv_row(row.outcome) << ',' << format_double(row.outcome.success_prob) << ",ok\n";
    } else {
      std::string why = row.error;
      std::replace(why.begin(), why.end(), ',', ';');
      std::replace(why.begin(), why.end(), '\n', ' ');
      os << row.n << ",,,,,,,,," << row.seed << ',' << r.mode << ",,error: " << why << '\n';
    }
  }
  return os.str();
}

inline nlohmann::json sweep_summary(const SweepResult& r) {
  nlohmann::json per_n = nlohmann::json::array();
  std::map<long, std::vector<const SweepRow*>> groups;
  for (const auto& row : r.rows) groups[row.n].push_back(&row);
  for (const auto& [n, rows] : groups) {
    std::vector<double> rate, xi, fid;
    long failed = 0;
    for (const auto* row : rows) {
      if (!row->ok) {
        ++failed;
        continue;
      }
      rate.push_back(row->outcome.rate_nats);
      xi.push_back(row->outcome.xi);
      fid.push_back(row->outcome.fidelity);
    }
    auto stats = [](const std::vector<double>& v) -> nlohmann::json {
      if (v.empty()) return nullptr;
      double s = 0.0;
      for (double x : v) s += x;
      return {{"mean", s / static_cast<double>(v.size())},
              {"min", *std::min_element(v.begin(), v.end())},
              {"max", *std::max_element(v.begin(), v.end())}};
    };
    per_n.push_back({{"n", n}, {"runs", rows.size()}, {"failed", failed}, {"rate_nats", stats(rate)},
                     {"xi", stats(xi)}, {"fidelity", stats(fid)}});
  }
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& row : r.rows)
    if (!row.ok) failures.push_back({{"n", row.n}, {"seed", row.seed}, {"error", row.error}});
  return {{"version", r.version}, {"config_hash", r.config_hash}, {"mode", r.mode},
          {"rows", r.rows.size()}, {"per_n", per_n}, {"failures", failures}};
}

// Rows are independent (each carries its own seed), so they may run on
// several threads; results are written back by index.
inline SweepResult run_sweep(const ExperimentConfig& cfg) {
  validate_config(cfg);
  auto ctx = cfg.context();
  Mat rho = parse_state(cfg.state, ctx);
  SweepResult res;
  res.config_hash = config_hash(cfg);
  res.mode = cfg.mode;
  for (long n : cfg.n_grid)
    for (auto s : cfg.seeds) res.rows.push_back({n, s, false, "", {}});

  auto work = [&](std::size_t i) {
    SweepRow& row = res.rows[i];
    try {
      row.outcome = run_mode(cfg.mode, rho, ctx, row.n, row.seed, cfg.sampling, cfg.params);
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };
  parallel_for(res.rows.size(), static_cast<std::size_t>(cfg.threads), work);
  return res;
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path);
  out << text;
}

// ---------------------------------------------------------------------------
// Haar average energy

struct HaarReport {
  int n_qubits = 0;
  long samples = 0;
  std::uint64_t seed = 0;
  double mean_energy = 0.0;
  Rational target_exact;
  double target = 0.0;
  double std_error = 0.0;
  double mean_free_energy = 0.0;  // beta <E> (pure states have S = 0)
  bool pass = false;
};

inline HaarReport haar_experiment(int n_qubits, long samples, std::uint64_t seed, const ThermalContext& ctx) {
  if (n_qubits < 1 || n_qubits > 6) throw ValidationError("haar: need 1 <= n_qubits <= 6");
  if (samples < 1) throw ValidationError("haar: samples must be >= 1");
  const std::size_t n = static_cast<std::size_t>(n_qubits);
  auto e = total_energies(ctx, n);
  Rational sum = 0;
  for (const auto& v : e) sum += v;
  HaarReport r;
  r.n_qubits = n_qubits;
  r.samples = samples;
  r.seed = seed;
  r.target_exact = sum / static_cast<std::int64_t>(e.size());
  r.target = to_double(r.target_exact);
  std::vector<double> ed(e.size());
  for (std::size_t i = 0; i < e.size(); ++i) ed[i] = to_double(e[i]);
  Rng rng = stream(seed, 0);
  double s1 = 0.0, s2 = 0.0;
  for (long t = 0; t < samples; ++t) {
    Vec psi = random_pure_state(rng, e.size());
    double en = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) en += std::norm(psi(static_cast<Eigen::Index>(i))) * ed[i];
    s1 += en;
    s2 += en * en;
  }
  double ns = static_cast<double>(samples);
  r.mean_energy = s1 / ns;
  double var = samples > 1 ? std::max(0.0, (s2 - ns * r.mean_energy * r.mean_energy) / (ns - 1.0)) : 0.0;
  r.std_error = std::sqrt(var / ns);
  r.mean_free_energy = ctx.beta() * r.mean_energy;
  r.pass = std::abs(r.mean_energy - r.target) <= 3.0 * r.std_error + 1e-12;
  return r;
}

inline nlohmann::json haar_to_json(const HaarReport& r) {
  return {{"n_qubits", r.n_qubits},          {"samples", r.samples},
          {"seed", r.seed},                  {"mean_energy", r.mean_energy},
          {"target", r.target},              {"target_exact", rational_label(r.target_exact)},
          {"std_error", r.std_error},        {"mean_free_energy", r.mean_free_energy},
          {"pass", r.pass}};
}

}  // namespace thermoflux
