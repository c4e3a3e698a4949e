#include "thermoflux/acceptance.hpp"
#include "thermoflux/experiment.hpp"

#include <gtest/gtest.h>

using namespace thermoflux;
using nlohmann::json;

namespace {

json base_config() {
  return json{{"mode", "classical"},  {"state", "ground"}, {"levels", {"0", "1"}},   {"beta", 1.0},
              {"n_grid", {20, 40}},   {"seeds", {1, 2}},  {"sampling", "exact"}};
}

}  // namespace

TEST(Config, UnknownKeysRejected) {
  auto j = base_config();
  j["colour"] = "blue";
  EXPECT_THROW(config_from_json(j), ValidationError);
  auto p = base_config();
  p["params"] = {{"kk", 1}};
  EXPECT_THROW(config_from_json(p), ValidationError);
  auto o = base_config();
  o["output"] = {{"xml", "x"}};
  EXPECT_THROW(config_from_json(o), ValidationError);
}

TEST(Config, BadValuesRejected) {
  auto j = base_config();
  j["mode"] = "teleport";
  EXPECT_THROW(config_from_json(j), ValidationError);
  auto s = base_config();
  s["sampling"] = "sometimes";
  EXPECT_THROW(config_from_json(s), ValidationError);
  auto t = base_config();
  t["beta"] = "hot";
  EXPECT_THROW(config_from_json(t), ValidationError);
  auto c = base_config();
  c["state"] = "plus";  // classical mode needs a diagonal state
  EXPECT_THROW(config_from_json(c), ValidationError);
}

TEST(Config, RoundTripAndHash) {
  auto cfg = config_from_json(base_config());
  auto again = config_from_json(config_to_json(cfg));
  EXPECT_EQ(config_hash(cfg), config_hash(again));
  again.csv_path = "/tmp/elsewhere.csv";
  again.threads = 4;
  EXPECT_EQ(config_hash(cfg), config_hash(again));
  again.n_grid.push_back(80);
  EXPECT_NE(config_hash(cfg), config_hash(again));
}

TEST(States, PresetsAndInlineForms) {
  ThermalContext ctx({Rational(0), Rational(1)}, 1.0);
  EXPECT_LT(max_abs(parse_state("ground", ctx) - diagonal_state({1, 0})), 1e-15);
  EXPECT_LT(max_abs(parse_state("thermal", ctx) - thermal_state(ctx)), 1e-15);
  EXPECT_LT(max_abs(parse_state(json::array({0.25, 0.75}), ctx) - diagonal_state({0.25, 0.75})), 1e-15);
  Mat plus = parse_state("plus", ctx);
  EXPECT_NEAR(plus(0, 1).real(), 0.5, 1e-15);
  EXPECT_LT(max_abs(parse_state(matrix_to_json(plus), ctx) - plus), 1e-15);
  EXPECT_THROW(parse_state("nonsense", ctx), ValidationError);
  EXPECT_THROW(parse_state(json::array({0.5, 0.6}), ctx), ValidationError);
  EXPECT_THROW(parse_state(json::array({1.0}), ctx), ValidationError);
}

TEST(Sweep, ThermalInputGivesZeroRate) {
  auto j = base_config();
  j["state"] = "thermal";
  auto res = run_sweep(config_from_json(j));
  ASSERT_EQ(res.rows.size(), 4u);
  for (const auto& r : res.rows) {
    ASSERT_TRUE(r.ok) << r.error;
    EXPECT_EQ(r.outcome.rate_nats, 0.0);
    EXPECT_EQ(r.outcome.fidelity, 1.0);
  }
}

TEST(Sweep, CsvIsByteIdenticalAndThreadIndependent) {
  auto j = base_config();
  j["mode"] = "universal";
  j["sampling"] = "sampled";
  j["n_grid"] = {100, 200};
  j["seeds"] = {3, 4, 5};
  auto cfg = config_from_json(j);
  auto a = sweep_csv(run_sweep(cfg));
  auto b = sweep_csv(run_sweep(cfg));
  EXPECT_EQ(a, b);
  cfg.threads = 4;
  EXPECT_EQ(sweep_csv(run_sweep(cfg)), a);
  EXPECT_EQ(a.rfind("# thermoflux " + std::string(kVersion) + " config_hash=" + config_hash(cfg), 0), 0u);
  EXPECT_NE(a.find(sweep_csv_header()), std::string::npos);
  // one comment line, one header, six rows
  EXPECT_EQ(std::count(a.begin(), a.end(), '\n'), 8);
}

TEST(Sweep, SummaryAggregatesPerN) {
  auto res = run_sweep(config_from_json(base_config()));
  auto s = sweep_summary(res);
  ASSERT_TRUE(s.contains("per_n"));
  EXPECT_EQ(s["per_n"].size(), 2u);
  EXPECT_TRUE(s["failures"].empty());
}

TEST(Sweep, FailuresAreReportedPerRow) {
  auto j = base_config();
  j["mode"] = "aware";
  j["params"] = {{"k", 3}};
  j["n_grid"] = {2, 20};
  auto res = run_sweep(config_from_json(j));
  EXPECT_FALSE(res.rows[0].ok);
  EXPECT_TRUE(res.rows.back().ok);
  EXPECT_FALSE(sweep_summary(res)["failures"].empty());
}

TEST(Parallel, VisitsEveryIndexOnce) {
  std::vector<int> hits(1000, 0);
  parallel_for(hits.size(), 4, [&](std::size_t i) { hits[i] += 1; });
  EXPECT_TRUE(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
}

TEST(Haar, MeanEnergyTargets) {
  ThermalContext ctx({Rational(0), Rational(1)}, 1.0);
  auto one = haar_experiment(1, 4000, 2, ctx);
  EXPECT_EQ(one.target_exact, Rational(1, 2));
  EXPECT_TRUE(one.pass);
  auto three = haar_experiment(3, 2000, 11, ctx);
  EXPECT_EQ(three.target_exact, Rational(3, 2));
  EXPECT_NEAR(three.mean_energy, 1.5, 3.0 * three.std_error + 1e-12);
  auto single = haar_experiment(2, 1, 5, ctx);
  EXPECT_GE(single.mean_energy, 0.0);
  EXPECT_LE(single.mean_energy, 2.0);
  EXPECT_THROW(haar_experiment(7, 10, 1, ctx), ValidationError);
}

TEST(AcceptanceHarness, ConfigMerging) {
  auto def = default_acceptance_config();
  EXPECT_EQ(def.size(), criteria().size());
  EXPECT_THROW(merge_acceptance_config(json{{"no_such_criterion", json::object()}}), ValidationError);
  EXPECT_THROW(merge_acceptance_config(json{{"continuity", {{"bogus", 1}}}}), ValidationError);
  EXPECT_THROW(merge_acceptance_config(json{{"continuity", {{"constant_tol", "small"}}}}), ValidationError);
  auto m = merge_acceptance_config(json{{"continuity", {{"constant_tol", 1e-3}}}});
  EXPECT_EQ(m["continuity"]["constant_tol"].get<double>(), 1e-3);
}

TEST(AcceptanceHarness, FilterByGroup) {
  auto rep = run_acceptance(default_acceptance_config(), {"pinching"});
  ASSERT_EQ(rep.results.size(), 3u);
  for (const auto& r : rep.results) EXPECT_EQ(r.group, "pinching");
  EXPECT_THROW(run_acceptance(default_acceptance_config(), {"nope"}), ValidationError);
}

TEST(AcceptanceHarness, NegativeControlFails) {
  auto cfg = merge_acceptance_config(json{{"continuity", {{"constant_tol", 1e-6}}}});
  auto rep = run_acceptance(cfg, {"continuity"});
  ASSERT_EQ(rep.results.size(), 1u);
  EXPECT_FALSE(rep.results[0].pass);
}

TEST(AcceptanceHarness, BudgetIsEnforced) {
  auto cfg = merge_acceptance_config(json{{"schur_golden", {{"budget_s", 0.0}}}});
  auto rep = run_acceptance(cfg, {"schur_golden"});
  ASSERT_EQ(rep.results.size(), 1u);
  EXPECT_FALSE(rep.results[0].pass);
}
