// Acceptance suite: runs every criterion of the validation battery at its
// stated tolerance and prints one pass/fail line per criterion.

#include <cstdio>
#include <exception>
#include <iostream>

#include "sglab/lab.hpp"

int main(int argc, char** argv) {
  using namespace sglab;
  try {
    Config c;
    if (argc > 1) c = Config::from_file(argv[1]);
    ExperimentConfig cfg = ExperimentConfig::from_config(c);
    ValidationReport rep = validate(cfg, "acceptance_out");
    std::cout << rep.table();
    int fails = 0;
    for (const auto& r : rep.results)
      if (!r.pass) ++fails;
    return fails;
  } catch (const std::exception& e) {
    std::cerr << "acceptance suite aborted: " << e.what() << "\n";
    return 99;
  }
}
