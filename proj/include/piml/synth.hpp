#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "piml/physics.hpp"

namespace piml {

struct SyntheticTrajectory {
  int sensor_id = 0;
  std::vector<double> values;  // cycle k at index k-1, normalized units
  std::uint64_t seed = 0;
  std::vector<int> mode_trace;  // sampled cluster per timestep
};

// Each timestep independently: choose mode m with probability weights[m], then
// draw N(mu[m], rho[m]). Throws LengthExceedsSupport when length > T_max.
SyntheticTrajectory sample_path(const SensorPhysics& physics, int length, std::uint64_t seed);

// n_paths paths for every sensor. Path p of sensor s uses a seed derived from
// (master_seed, sensor_id, p). Output is sensor-major.
std::vector<SyntheticTrajectory> generate_dataset(const std::vector<SensorPhysics>& physics, int n_paths,
                                                  int length, std::uint64_t master_seed);

// CSV with one row per (path_id, cycle) and one column per sensor, plus a JSON
// sidecar next to it recording the seed and physics schema.
void write_synthetic_csv(const std::filesystem::path& csv_path, const std::vector<SyntheticTrajectory>& dataset,
                         int n_paths, std::uint64_t master_seed);

}  // namespace piml
