#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#ifndef THERMOFLUX_CLI
#error "THERMOFLUX_CLI must point at the thermoflux binary"
#endif

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out;
};

Run run(const std::string& args) {
  std::string cmd = std::string(THERMOFLUX_CLI) + " " + args + " 2>/dev/null";
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return {-1, ""};
  std::string out;
  std::array<char, 4096> buf{};
  std::size_t got;
  while ((got = fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), got);
  int status = pclose(p);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

fs::path scratch_dir() {
  auto d = fs::temp_directory_path() / ("thermoflux_cli_" + std::to_string(::getpid()));
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST(Cli, VersionAndUsage) {
  auto v = run("--version");
  EXPECT_EQ(v.code, 0);
  EXPECT_NE(v.out.find("thermoflux"), std::string::npos);
  EXPECT_EQ(run("").code, 2);
  EXPECT_EQ(run("frobnicate").code, 2);
}

TEST(Cli, SchurBasis) {
  auto r = run("schur --n 3");
  ASSERT_EQ(r.code, 0);
  auto j = json::parse(r.out);
  EXPECT_EQ(j["n"], 3);
  EXPECT_EQ(j["blocks"].size(), 2u);
}

TEST(Cli, PinchPlusState) {
  auto r = run("pinch --state plus --kind energy --k 1");
  ASSERT_EQ(r.code, 0);
  auto j = json::parse(r.out);
  EXPECT_EQ(j["projector_count"], 2);
  EXPECT_NEAR(j["loss_nats"].get<double>(), std::log(2.0), 1e-12);
  auto s = run("pinch --state plus --kind schur --k 3");
  ASSERT_EQ(s.code, 0);
  EXPECT_EQ(json::parse(s.out)["projector_count"], 6);
}

TEST(Cli, ExtractWritesJsonAndCsv) {
  auto dir = scratch_dir();
  auto csv = dir / "rows.csv";
  fs::remove(csv);
  auto r = run("extract --mode classical --state ground --n 50 --exact --csv " + csv.string());
  ASSERT_EQ(r.code, 0);
  auto j = json::parse(r.out);
  EXPECT_GT(j["rate_nats"].get<double>(), 0.0);
  ASSERT_EQ(run("extract --mode classical --state ground --n 60 --exact --csv " + csv.string()).code, 0);
  auto text = slurp(csv);
  EXPECT_EQ(text.rfind("n,k,m,l,W,rate_nats,target_nats,xi,fidelity,seed,mode\n", 0), 0u);
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 3);
  fs::remove_all(dir);
}

TEST(Cli, ExtractValidation) {
  EXPECT_EQ(run("extract --mode classical --state plus --n 50").code, 2);
  EXPECT_EQ(run("extract --mode warp --state ground --n 50").code, 2);
  EXPECT_EQ(run("extract --mode classical --state '[0.5,0.6]' --n 50").code, 2);
  EXPECT_EQ(run("extract --mode classical --state ground --n 50 --exact --sampled").code, 2);
  EXPECT_EQ(run("extract --mode universal --state thermal --n 200 --seed 4").code, 0);
}

TEST(Cli, SweepIsReproducible) {
  auto dir = scratch_dir();
  json cfg{{"mode", "universal"}, {"state", "excited"}, {"n_grid", {100, 300}}, {"seeds", {1, 2}}};
  std::ofstream(dir / "cfg.json") << cfg.dump();
  auto a = dir / "a.csv", b = dir / "b.csv", s = dir / "s.json";
  ASSERT_EQ(run("sweep --config " + (dir / "cfg.json").string() + " --csv " + a.string() + " --json " + s.string()).code, 0);
  ASSERT_EQ(run("sweep --config " + (dir / "cfg.json").string() + " --csv " + b.string() + " --threads 2").code, 0);
  EXPECT_EQ(slurp(a), slurp(b));
  auto summary = json::parse(slurp(s));
  EXPECT_EQ(summary["rows"], 4);
  std::ofstream(dir / "bad.json") << R"({"mode":"classical","typo":1})";
  EXPECT_EQ(run("sweep --config " + (dir / "bad.json").string()).code, 2);
  EXPECT_EQ(run("sweep --config " + (dir / "missing.json").string()).code, 2);
  fs::remove_all(dir);
}

TEST(Cli, InfdimCurve) {
  auto r = run("infdim --state power --epsilon 2 --schedule sqrt --n-grid 100,10000");
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("n,d_n,success,success_lower,rate,target"), std::string::npos);
  EXPECT_NE(r.out.find("\n100,10,"), std::string::npos);
  EXPECT_NE(r.out.find("\n10000,100,"), std::string::npos);
  EXPECT_EQ(run("infdim --state power --schedule cubic --n-grid 10").code, 2);
}

TEST(Cli, Haar) {
  auto r = run("haar --qubits 2 --samples 500 --seed 3");
  ASSERT_EQ(r.code, 0);
  auto j = json::parse(r.out);
  EXPECT_EQ(j["target"].get<double>(), 1.0);
  EXPECT_EQ(run("haar --qubits 9").code, 2);
}

TEST(Cli, AcceptanceExitCodes) {
  auto dir = scratch_dir();
  auto ok = run("acceptance --only pinching --json -");
  EXPECT_EQ(ok.code, 0);
  EXPECT_NE(ok.out.find("3/3 criteria passed"), std::string::npos);
  std::ofstream(dir / "neg.json") << R"({"continuity":{"constant_tol":1e-6}})";
  auto bad = run("acceptance --config " + (dir / "neg.json").string() + " --only estimation --json " +
                 (dir / "v.json").string());
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.out.find("FAIL  [ 8]"), std::string::npos);
  auto verdict = json::parse(slurp(dir / "v.json"));
  EXPECT_FALSE(verdict["pass"].get<bool>());
  EXPECT_EQ(run("acceptance --only nothing-like-this --json -").code, 2);
  fs::remove_all(dir);
}
