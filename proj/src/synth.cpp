#include "piml/synth.hpp"

#include <fmt/format.h>

#include <cmath>
#include <fstream>
#include <map>
#include "json.hpp"

#include "piml/error.hpp"
#include "piml/random.hpp"
#include "piml/serialize.hpp"

namespace piml {

SyntheticTrajectory sample_path(const SensorPhysics& physics, int length, std::uint64_t seed) {
  if (length < 0) throw InvalidArgument("negative path length");
  if (length > physics.t_max())
    throw LengthExceedsSupport("requested " + std::to_string(length) + " cycles, physics covers " +
                               std::to_string(physics.t_max()));
  SyntheticTrajectory out;
  out.sensor_id = physics.sensor_id;
  out.seed = seed;
  out.values.resize(static_cast<std::size_t>(length));
  out.mode_trace.resize(static_cast<std::size_t>(length));
  Rng rng(seed);
  for (int k = 0; k < length; ++k) {
    const auto& step = physics.steps[static_cast<std::size_t>(k)];
    int mode = 0;
    if (step.modality == 2) {
      const double u = rng.uniform();
      mode = u < step.weights[0] ? 0 : 1;
    }
    const double sd = std::sqrt(std::max(0.0, step.rho[mode]));
    // draw even when sd == 0 so the stream position is independent of rho
    const double z = rng.normal();
    out.values[k] = step.mu[mode] + sd * z;
    out.mode_trace[k] = mode;
  }
  return out;
}

std::vector<SyntheticTrajectory> generate_dataset(const std::vector<SensorPhysics>& physics, int n_paths,
                                                  int length, std::uint64_t master_seed) {
  if (n_paths < 1) throw InvalidArgument("n_paths must be >= 1");
  std::vector<SyntheticTrajectory> out;
  out.reserve(physics.size() * static_cast<std::size_t>(n_paths));
  for (const auto& phys : physics) {
    const auto sensor_seed = derive_seed(master_seed, static_cast<std::uint64_t>(phys.sensor_id));
    for (int p = 0; p < n_paths; ++p)
      out.push_back(sample_path(phys, length, derive_seed(sensor_seed, static_cast<std::uint64_t>(p))));
  }
  return out;
}

void write_synthetic_csv(const std::filesystem::path& csv_path, const std::vector<SyntheticTrajectory>& dataset,
                         int n_paths, std::uint64_t master_seed) {
  if (n_paths < 1 || dataset.size() % static_cast<std::size_t>(n_paths) != 0)
    throw InvalidArgument("dataset size is not a multiple of n_paths");
  const std::size_t n_sensors = dataset.size() / static_cast<std::size_t>(n_paths);
  std::vector<int> sensor_ids;
  for (std::size_t s = 0; s < n_sensors; ++s) sensor_ids.push_back(dataset[s * n_paths].sensor_id);
  const std::size_t length = dataset.empty() ? 0 : dataset.front().values.size();

  std::ofstream out(csv_path);
  if (!out) throw IoError("cannot write " + csv_path.string());
  out << "path_id,cycle";
  for (int id : sensor_ids) out << ",s" << id;
  out << '\n';
  for (int p = 0; p < n_paths; ++p) {
    for (std::size_t k = 0; k < length; ++k) {
      out << p << ',' << (k + 1);
      for (std::size_t s = 0; s < n_sensors; ++s) out << ',' << fmt::format("{}", dataset[s * n_paths + p].values[k]);
      out << '\n';
    }
  }
  if (!out) throw IoError("write failed for " + csv_path.string());

  nlohmann::json sidecar{{"master_seed", master_seed},
                         {"physics_schema", kPhysicsSchema},
                         {"n_paths", n_paths},
                         {"length", length},
                         {"sensor_ids", sensor_ids},
                         {"seed_derivation", "path seed = derive(derive(master, sensor_id), path_id)"}};
  auto sidecar_path = csv_path;
  sidecar_path.replace_extension(".json");
  write_json_file(sidecar_path, sidecar);
}

}  // namespace piml
