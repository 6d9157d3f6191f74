#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "piml/adam.hpp"
#include "piml/cmapss.hpp"
#include "piml/lstm.hpp"
#include "piml/physics.hpp"

namespace piml {

enum class TargetScaling {
  None,      // train on raw cycles
  TrainMax,  // divide targets by the largest training target
};

enum class BimodalFeed {
  Nearest,  // one (mu, rho) per sensor: the mode whose centroid is closest to the reading
  Both,     // both modes per sensor, unimodal timesteps duplicated
};

const char* to_string(TargetScaling s);
TargetScaling target_scaling_from_string(const std::string& text);
const char* to_string(BimodalFeed f);
BimodalFeed bimodal_feed_from_string(const std::string& text);

struct FeatureOptions {
  bool use_mu = false;
  bool use_rho = false;
  BimodalFeed bimodal_feed = BimodalFeed::Nearest;

  int feature_dim(int n_sensors) const;
};

struct TrainConfig {
  std::string condition = "FD001";
  bool use_mu = false;
  bool use_rho = false;
  int batch_size = 64;
  std::optional<int> epochs;  // unset: 100 for FD001/FD003, 1000 for FD002/FD004
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::uint64_t master_seed = 0;
  bool early_stopping = true;
  double val_fraction = 0.1;
  // select the checkpoint on the test set instead of a validation split
  bool paper_protocol = false;
  int window_len = kDefaultWindowLength;
  IngestOptions ingest;
  PhysicsOptions physics;
  TargetScaling target_scaling = TargetScaling::None;
  BimodalFeed bimodal_feed = BimodalFeed::Nearest;
  int hidden = 12;
  int mlp_hidden = 12;
  Activation mlp_activation = Activation::Tanh;
  AdamConfig adam;
  int threads = 0;  // 0: hardware concurrency

  int resolved_epochs() const;
  FeatureOptions features() const { return {use_mu, use_rho, bimodal_feed}; }
  void validate() const;  // throws ValidationError
};

// Physics estimates keyed by retained sensor, in the column order of the
// trajectories they were estimated from.
struct PhysicsBundle {
  std::vector<int> sensor_ids;
  std::vector<SensorPhysics> sensors;

  const SensorPhysics& for_sensor(int sensor_id) const;  // throws MissingPhysics
};

PhysicsBundle estimate_bundle(const TrajectorySet& train, const PhysicsOptions& options);

// Appends per-timestep mu and/or rho of each sensor to a window whose last row
// is cycle `end_cycle`. Cycles past the physics grid use its last point.
Eigen::MatrixXd augment_features(const Eigen::MatrixXd& window, int end_cycle, std::span<const int> sensor_ids,
                                 const PhysicsBundle* physics, const FeatureOptions& options);

// Model inputs ready for batching: augmented features plus targets in cycles.
struct PreparedSet {
  std::vector<Eigen::MatrixXd> features;
  std::vector<double> targets;
  std::vector<int> unit_ids;
  std::vector<int> end_cycles;

  std::size_t size() const { return targets.size(); }
};

PreparedSet prepare_windows(std::span<const Window> windows, std::span<const int> sensor_ids,
                            const PhysicsBundle* physics, const FeatureOptions& options);

// Final window of every test unit; units shorter than the window are skipped.
PreparedSet prepare_final_windows(const TrajectorySet& set, int window_len, const PhysicsBundle* physics,
                                  const FeatureOptions& options);

struct EpochRecord {
  int epoch = 0;
  double train_mse = 0.0;             // cycles^2, mean over the epoch's batches
  std::optional<double> select_mse;   // cycles^2 on the selection set
};

struct TrainedModel {
  LstmModel model;
  AdamState adam;
  FeatureOptions features;
  double target_scale = 1.0;
  int best_epoch = 0;  // 0: the initial model
  std::vector<EpochRecord> history;
  std::string rng_state;
  std::uint64_t seed = 0;

  // Predicted RUL in cycles for each prepared input.
  std::vector<double> predict(const PreparedSet& set) const;
};

// Trains on `data`, holding out val_fraction of its units (by unit id) for
// checkpoint selection unless `selection_override` is given.
TrainedModel train(const TrainConfig& config, const WindowBatchSet& data, std::span<const int> sensor_ids,
                   const PhysicsBundle* physics, std::uint64_t seed,
                   const std::optional<PreparedSet>& selection_override = std::nullopt);

struct ErrorMetrics {
  double mse = 0.0;
  double l1 = 0.0;
  std::size_t count = 0;
};

ErrorMetrics error_metrics(std::span<const double> predictions, std::span<const double> targets);

// One prediction per test unit from its final window, against the final RUL.
ErrorMetrics evaluate(const TrainedModel& model, const TrajectorySet& test, int window_len,
                      const PhysicsBundle* physics);

struct SeedMetrics {
  std::uint64_t seed = 0;
  double test_mse = 0.0;
  double test_l1 = 0.0;
  int best_epoch = 0;
};

struct CellMetrics {
  std::string condition;
  bool use_mu = false;
  bool use_rho = false;
  std::vector<SeedMetrics> seeds;
  double mse_mean = 0.0, mse_std = 0.0;
  double l1_mean = 0.0, l1_std = 0.0;
};

struct MetricsReport {
  std::vector<CellMetrics> cells;
  double runtime_seconds = 0.0;
  std::string data_source;
};

// Arithmetic mean and sample standard deviation of the per-seed metrics.
void aggregate(CellMetrics& cell);

// Effective seed of run `seed` under `master_seed`.
std::uint64_t run_seed(std::uint64_t master_seed, std::uint64_t seed);

struct CellRun {
  TrainedModel model;
  SeedMetrics metrics;
};

// Trains one (mu, rho, seed) cell. `test_set` is only read under paper_protocol.
TrainedModel train_cell(const TrainConfig& config, const TrajectorySet& train_set, const TrajectorySet* test_set,
                        const PhysicsBundle& physics, bool use_mu, bool use_rho, std::uint64_t seed);

// train_cell followed by evaluate on the test split.
CellRun run_cell(const TrainConfig& config, const ConditionData& data, const PhysicsBundle& physics, bool use_mu,
                 bool use_rho, std::uint64_t seed);

// The four (mu, rho) cells times every seed, trained concurrently. Writes
// report.csv, report.md, report.json and per-run artifacts when out_dir is set.
MetricsReport run_ablation_suite(const TrainConfig& config, const std::filesystem::path& data_dir,
                                 const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                 const std::string& config_hash = "");
MetricsReport run_ablation_suite(const TrainConfig& config, const ConditionData& data,
                                 const std::optional<std::filesystem::path>& out_dir = std::nullopt,
                                 const std::string& config_hash = "");

void write_report_csv(const std::filesystem::path& path, const MetricsReport& report);
void write_report_markdown(const std::filesystem::path& path, const MetricsReport& report);

}  // namespace piml
