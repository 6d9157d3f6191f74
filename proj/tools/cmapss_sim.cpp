// Writes a simulated fleet in the C-MAPSS text layout, for exercising the
// pipeline when the real data files are not at hand.
#include <CLI11.hpp>
#include <iostream>

#include "fleet_sim.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Simulated C-MAPSS-format fleet writer"};
  std::string out_dir = "data";
  std::vector<std::string> conditions{"FD001"};
  std::uint64_t seed = 2024;
  int units = 0;
  app.add_option("--out-dir", out_dir, "destination directory");
  app.add_option("--condition", conditions, "one or more of FD001..FD004");
  app.add_option("--seed", seed, "simulation seed");
  app.add_option("--units", units, "override train and test unit counts");
  CLI11_PARSE(app, argc, argv);

  try {
    for (const auto& condition : conditions) {
      auto spec = piml::testing::fleet_spec(condition);
      if (units > 0) spec.train_units = spec.test_units = units;
      const auto fleet = piml::testing::simulate_fleet(spec, seed);
      piml::testing::write_fleet(out_dir, fleet);
      std::cout << condition << ": " << spec.train_units << " train units, " << spec.test_units
                << " test units -> " << out_dir << '\n';
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
