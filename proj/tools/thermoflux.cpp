// thermoflux command line: schur, pinch, extract, sweep, infdim, haar,
// acceptance. Exit codes: 0 ok, 2 validation error, 3 acceptance failure.

#include "thermoflux/acceptance.hpp"
#include "thermoflux/experiment.hpp"
#include "thermoflux/infdim.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#ifndef THERMOFLUX_ACCEPTANCE_DIR
#define THERMOFLUX_ACCEPTANCE_DIR "acceptance"
#endif

using namespace thermoflux;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitValidation = 2;
constexpr int kExitAcceptance = 3;

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

// Inline JSON, a path to a JSON file, or a bare preset name.
json state_argument(const std::string& s) {
  if (!s.empty() && (s[0] == '[' || s[0] == '{')) {
    try {
      return json::parse(s);
    } catch (const json::exception& e) {
      throw ValidationError(std::string("--state: ") + e.what());
    }
  }
  if (std::filesystem::exists(s)) return read_json_file(s);
  return s;
}

ThermalContext context_from(const std::vector<std::string>& levels, double beta) {
  std::vector<Rational> lv;
  for (const auto& s : levels) lv.push_back(parse_rational(s));
  return ThermalContext(lv, beta);
}

std::vector<std::string> split_levels(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

void append_csv(const std::string& path, const std::string& header, const std::string& row) {
  bool fresh = !std::filesystem::exists(path) || std::filesystem::file_size(path) == 0;
  std::ofstream out(path, std::ios::app);
  if (!out) throw ValidationError("cannot write " + path);
  if (fresh) out << header << '\n';
  out << row << '\n';
}

// Power-law rule "power" (exponent 2 + eps), "geometric:<a>", or a JSON
// file holding a diagonal list or a matrix.
TailState tail_state_argument(const std::string& s, double eps) {
  if (s == "power") return TailState::power_law(2.0 + eps);
  if (s.rfind("geometric:", 0) == 0) return TailState::geometric(std::stod(s.substr(10)));
  json j = read_json_file(s);
  if (j.is_array()) return TailState::finite(j.get<std::vector<double>>());
  return TailState::finite_matrix(matrix_from_json(j));
}

CutoffSchedule schedule_argument(const std::string& s, double eps, long d0) {
  CutoffSchedule c;
  c.eps = eps;
  c.d0 = d0;
  if (s == "power")
    c.kind = CutoffSchedule::Kind::power;
  else if (s == "sqrt")
    c.kind = CutoffSchedule::Kind::sqrt;
  else if (s == "constant")
    c.kind = CutoffSchedule::Kind::constant;
  else
    throw ValidationError("unknown schedule '" + s + "'");
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"thermoflux: state-agnostic work extraction simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string("thermoflux ") + kVersion);

  // schur
  int schur_n = 3;
  std::string schur_levels = "0,1";
  auto* schur = app.add_subcommand("schur", "Schur basis of n copies as JSON");
  schur->add_option("--n", schur_n, "number of copies")->check(CLI::Range(1, 12));
  schur->add_option("--levels", schur_levels, "comma-separated single-system energies");

  // pinch
  std::string pinch_state = "plus", pinch_kind = "schur", pinch_levels = "0,1";
  double pinch_beta = 1.0;
  int pinch_k = 2;
  std::size_t pinch_cut = 1;
  auto* pinch = app.add_subcommand("pinch", "apply a pinching to k copies of a state");
  pinch->add_option("--state", pinch_state, "preset, inline JSON, or JSON file");
  pinch->add_option("--kind", pinch_kind, "energy | schur | coarse")->check(CLI::IsMember({"energy", "schur", "coarse"}));
  pinch->add_option("--k", pinch_k, "copies")->check(CLI::Range(1, 12));
  pinch->add_option("--levels", pinch_levels, "comma-separated energies");
  pinch->add_option("--beta", pinch_beta, "inverse temperature");
  pinch->add_option("--d-cut", pinch_cut, "coarse pinching cut (levels kept in the low block)");

  // extract
  std::string ex_mode = "classical", ex_state = "ground", ex_levels = "0,1", ex_csv;
  double ex_beta = 1.0;
  long ex_n = 100;
  std::uint64_t ex_seed = 0;
  bool ex_exact = false;
  ParamOverrides ex_params;
  auto* extract = app.add_subcommand("extract", "run one extraction protocol");
  extract->add_option("--mode", ex_mode, "classical | aware | universal | mnp | tomo")
      ->check(CLI::IsMember({"classical", "aware", "universal", "mnp", "tomo"}));
  extract->add_option("--state", ex_state, "preset, inline JSON, or JSON file");
  extract->add_option("--n", ex_n, "copies")->check(CLI::Range(2L, 100000000L));
  extract->add_option("--beta", ex_beta, "inverse temperature");
  extract->add_option("--levels", ex_levels, "comma-separated energies");
  extract->add_option("--seed", ex_seed, "seed");
  auto* exact_flag = extract->add_flag("--exact", ex_exact, "estimation sees the true distribution");
  extract->add_flag("--sampled", "estimation samples the distribution (default)")->excludes(exact_flag);
  extract->add_option("--k", ex_params.k, "block size");
  extract->add_option("--m", ex_params.m, "learning blocks (universal)");
  extract->add_option("--l", ex_params.l, "bath size");
  extract->add_option("--c", ex_params.c, "bath constant, l = ceil(c n^1.5)");
  extract->add_option("--margin", ex_params.margin, "margin in nats per symbol (classical, aware)");
  extract->add_option("--eta", ex_params.eta, "tomography error (tomo)");
  extract->add_option("--M", ex_params.M, "grid resolution (mnp)");
  extract->add_option("--csv", ex_csv, "append the CSV row to this file");

  // sweep
  std::string sw_config, sw_csv, sw_json;
  int sw_threads = 0;
  auto* sweep = app.add_subcommand("sweep", "run a configured sweep");
  sweep->add_option("--config", sw_config, "JSON config")->required();
  sweep->add_option("--csv", sw_csv, "CSV output (overrides config)");
  sweep->add_option("--json", sw_json, "JSON summary output (overrides config)");
  sweep->add_option("--threads", sw_threads, "worker threads (overrides config)");

  // infdim
  std::string id_state = "power", id_schedule = "power", id_candidates;
  double id_eps = 2.0, id_beta = 1.0;
  long id_d0 = 10;
  bool id_rates = false;
  std::size_t id_true = 0;
  std::vector<long> id_grid{10, 100, 1000, 10000, 100000, 1000000};
  auto* infdim = app.add_subcommand("infdim", "truncation of a ladder system; CSV n,d_n,success,rate,target");
  infdim->add_option("--state", id_state, "power | geometric:<a> | JSON file");
  infdim->add_option("--epsilon", id_eps, "tail exponent is 2 + epsilon; also the schedule exponent");
  infdim->add_option("--schedule", id_schedule, "power | sqrt | constant");
  infdim->add_option("--d0", id_d0, "cutoff of the constant schedule");
  infdim->add_option("--n-grid", id_grid, "copy numbers")->delimiter(',');
  infdim->add_option("--beta", id_beta, "inverse temperature");
  infdim->add_flag("--rates", id_rates, "also run the extraction protocol per row");
  infdim->add_option("--candidates", id_candidates, "JSON file [{name, state}] for the semiuniversal protocol");
  infdim->add_option("--true-index", id_true, "true candidate");

  // haar
  int hq = 3;
  long hs = 2000;
  std::uint64_t hseed = 0;
  std::string h_levels = "0,1";
  auto* haar = app.add_subcommand("haar", "Haar-average energy check");
  haar->add_option("--qubits", hq, "number of systems")->check(CLI::Range(1, 6));
  haar->add_option("--samples", hs, "samples");
  haar->add_option("--seed", hseed, "seed");
  haar->add_option("--levels", h_levels, "single-system energies");

  // acceptance
  std::string acc_dir = THERMOFLUX_ACCEPTANCE_DIR, acc_config = "criteria.json", acc_json = "acceptance_verdict.json";
  std::vector<std::string> acc_only;
  auto* acceptance = app.add_subcommand("acceptance", "run the acceptance criteria");
  acceptance->add_option("--config-dir", acc_dir, "directory holding the bundled configs");
  acceptance->add_option("--config", acc_config, "config file, relative to the directory unless absolute");
  acceptance->add_option("--only", acc_only, "restrict to criterion groups or keys");
  acceptance->add_option("--json", acc_json, "verdict output path ('-' for stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (*schur) {
      auto ctx = context_from(split_levels(schur_levels), 1.0);
      auto basis = build_schur_basis(schur_n, static_cast<int>(ctx.dim()));
      std::cout << schur_basis_to_json(basis, &ctx).dump(2) << '\n';
    } else if (*pinch) {
      auto ctx = context_from(split_levels(pinch_levels), pinch_beta);
      Mat rho = parse_state(state_argument(pinch_state), ctx);
      auto k = static_cast<std::size_t>(pinch_k);
      Mat rho_k = tensor_power(rho, k);
      PinchingChannel ch = pinch_kind == "energy"  ? energy_pinching(ctx, k)
                           : pinch_kind == "schur" ? schur_pinching(ctx, k)
                                                   : coarse_pinching(pinch_cut, static_cast<std::size_t>(rho_k.rows()));
      Mat out = apply(ch, rho_k);
      double kk = static_cast<double>(k);
      double bound = pinch_kind == "schur" ? 2.0 * (static_cast<double>(ctx.dim()) - 1.0) * std::log(kk + 1.0) / kk
                                           : std::log(static_cast<double>(ch.projector_count())) / kk;
      json j{{"kind", pinch_kind},
             {"k", k},
             {"projector_count", ch.projector_count()},
             {"labels", ch.family.labels},
             {"loss_nats", relative_entropy(rho_k, out) / kk},
             {"bound_nats", bound},
             {"state", matrix_to_json(out)}};
      std::cout << j.dump(2) << '\n';
    } else if (*extract) {
      auto ctx = context_from(split_levels(ex_levels), ex_beta);
      Mat rho = parse_state(state_argument(ex_state), ctx);
      if ((ex_mode == "classical" || ex_mode == "mnp") && !is_diagonal(rho))
        throw ValidationError(ex_mode + " mode needs a diagonal state");
      auto o = run_mode(ex_mode, rho, ctx, ex_n, ex_seed, ex_exact ? SamplingMode::exact : SamplingMode::sampled,
                        ex_params);
      std::cout << outcome_to_json(o).dump(2) << '\n';
      if (!ex_csv.empty()) append_csv(ex_csv, outcome_csv_header(), outcome_csv_row(o));
    } else if (*sweep) {
      auto cfg = config_from_json(read_json_file(sw_config));
      if (!sw_csv.empty()) cfg.csv_path = sw_csv;
      if (!sw_json.empty()) cfg.json_path = sw_json;
      if (sw_threads > 0) cfg.threads = sw_threads;
      auto res = run_sweep(cfg);
      std::string csv = sweep_csv(res);
      json summary = sweep_summary(res);
      summary["config"] = config_to_json(cfg);
      if (!cfg.csv_path.empty()) write_text(cfg.csv_path, csv);
      if (!cfg.json_path.empty()) write_text(cfg.json_path, summary.dump(2) + "\n");
      if (cfg.csv_path.empty()) std::cout << csv;
      if (cfg.json_path.empty()) std::cerr << summary.dump(2) << '\n';
    } else if (*infdim) {
      InfiniteContext ictx(Rational(1), 1, id_beta);
      auto sched = schedule_argument(id_schedule, id_eps, id_d0);
      std::cout << "# schedule=" << sched.name() << '\n' << "n,d_n,success,success_lower,rate,target\n";
      if (!id_candidates.empty()) {
        json cj = read_json_file(id_candidates);
        if (!cj.is_array() || cj.empty()) throw ValidationError("candidates must be a non-empty array");
        std::vector<Candidate> cands;
        for (const auto& c : cj) {
          detail::reject_unknown(c, {"name", "state"}, "candidate");
          const auto& st = c.at("state");
          TailState ts = st.is_string() ? tail_state_argument(st.get<std::string>(), id_eps)
                         : st.is_array() ? TailState::finite(st.get<std::vector<double>>())
                                         : TailState::finite_matrix(matrix_from_json(st));
          cands.push_back({c.at("name").get<std::string>(), ts});
        }
        if (id_true >= cands.size()) throw ValidationError("--true-index out of range");
        SemiuniversalOptions so;
        so.schedule = sched;
        for (long n : id_grid) {
          auto o = semiuniversal_protocol(cands, id_true, ictx, n, 0, so);
          long d = o.extra.at("d");
          auto m = cands[id_true].state.mass(d);
          std::cout << n << ',' << d << ',' << format_double(o.success_prob) << ','
                    << format_double(std::exp(log_success(std::max(m.lower, 0.0), n))) << ','
                    << format_double(o.rate_nats) << ',' << format_double(o.target_nats) << '\n';
        }
      } else {
        auto rho = tail_state_argument(id_state, id_eps);
        auto curve = schedule_success_curve(rho, sched, id_grid);
        auto fe_target = free_energy_limit(rho, ictx);
        for (const auto& row : curve.rows) {
          std::string rate = "", target = fe_target ? format_double(*fe_target) : "";
          if (id_rates) {
            SemiuniversalOptions so;
            so.schedule = sched;
            auto o = semiuniversal_protocol({{"state", rho}}, 0, ictx, row.n, 0, so);
            rate = format_double(o.rate_nats);
            target = format_double(o.target_nats);
          }
          std::cout << row.n << ',' << row.d << ',' << format_double(row.success) << ','
                    << format_double(row.success_lower) << ',' << rate << ',' << target << '\n';
        }
        std::cout << "# monotone_from_row=" << curve.n0 << '\n';
      }
    } else if (*haar) {
      auto ctx = context_from(split_levels(h_levels), 1.0);
      std::cout << haar_to_json(haar_experiment(hq, hs, hseed, ctx)).dump(2) << '\n';
    } else if (*acceptance) {
      std::filesystem::path cfg_path(acc_config);
      if (cfg_path.is_relative()) cfg_path = std::filesystem::path(acc_dir) / cfg_path;
      auto cfg = load_acceptance_config(cfg_path.string());
      std::set<std::string> only(acc_only.begin(), acc_only.end());
      auto rep = run_acceptance(cfg, only, [](const CriterionResult& r) { std::cout << criterion_line(r) << std::endl; });
      std::size_t passed = 0;
      for (const auto& r : rep.results) passed += r.pass;
      std::cout << passed << "/" << rep.results.size() << " criteria passed\n";
      std::string verdict = acceptance_to_json(rep).dump(2) + "\n";
      if (acc_json == "-")
        std::cout << verdict;
      else if (!acc_json.empty())
        write_text(acc_json, verdict);
      return rep.pass() ? kExitOk : kExitAcceptance;
    }
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const SupportError& e) {
    std::cerr << "support error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const CapExceeded& e) {
    std::cerr << "cap exceeded: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return kExitOk;
}
