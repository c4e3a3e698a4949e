// Runs every acceptance criterion and prints one line per criterion.
// Usage: thermoflux_acceptance [config.json] [--only group]...

#include "thermoflux/acceptance.hpp"

#include <iostream>

#ifndef THERMOFLUX_ACCEPTANCE_DIR
#define THERMOFLUX_ACCEPTANCE_DIR "acceptance"
#endif

int main(int argc, char** argv) {
  using namespace thermoflux;
  std::string config = std::string(THERMOFLUX_ACCEPTANCE_DIR) + "/criteria.json";
  std::set<std::string> only;
  for (int i = 1; i < argc; ++i) {
    std::string a = argv[i];
    if (a == "--only" && i + 1 < argc)
      only.insert(argv[++i]);
    else
      config = a;
  }
  try {
    auto cfg = load_acceptance_config(config);
    auto rep = run_acceptance(cfg, only, [](const CriterionResult& r) { std::cout << criterion_line(r) << std::endl; });
    std::size_t passed = 0;
    for (const auto& r : rep.results) passed += r.pass;
    std::cout << passed << "/" << rep.results.size() << " criteria passed\n";
    return rep.pass() ? 0 : 3;
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << '\n';
    return 2;
  }
}
