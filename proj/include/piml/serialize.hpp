#pragma once

#include <filesystem>
#include <string>

#include "json.hpp"
#include "piml/cmapss.hpp"
#include "piml/harness.hpp"
#include "piml/physics.hpp"

namespace piml {

// Schema tags written into every document; readers reject any other tag.
inline constexpr const char* kTrajectorySchema = "piml.trajectory_set/1";
inline constexpr const char* kPhysicsSchema = "piml.sensor_physics/1";
inline constexpr const char* kCheckpointSchema = "piml.checkpoint/1";
inline constexpr const char* kReportSchema = "piml.metrics_report/1";

// Doubles are written in shortest round-trip form, so every document
// reproduces its floating-point values bit-exactly when read back.
nlohmann::json to_json(const TrajectorySet& set);
TrajectorySet trajectory_set_from_json(const nlohmann::json& doc);

// {schema, sensor_id, grid, timesteps: [{k, modality, mu[], rho[], weights[],
//  r2, a_bar, alive, mean, var, carried}]}
nlohmann::json to_json(const SensorPhysics& physics);
SensorPhysics sensor_physics_from_json(const nlohmann::json& doc);

nlohmann::json checkpoint_to_json(const TrainedModel& model, const std::string& config_hash);
TrainedModel checkpoint_from_json(const nlohmann::json& doc, std::string* config_hash = nullptr);

nlohmann::json history_to_json(const TrainedModel& model);
nlohmann::json to_json(const MetricsReport& report);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace piml
