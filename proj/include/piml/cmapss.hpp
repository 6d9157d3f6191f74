#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace piml {

inline constexpr int kOpSettingCount = 3;
inline constexpr int kSensorCount = 21;
inline constexpr int kRecordFieldCount = 2 + kOpSettingCount + kSensorCount;
inline constexpr int kDefaultWindowLength = 20;

// Sensor indices (1-based) excluded from modeling. Index 22 does not exist in
// the 21-column files; it is kept so the list reads the same as the published
// drop set and triggers a warning when applied.
inline const std::set<int> kDefaultDropSensors{1, 5, 6, 10, 16, 18, 19, 22};

struct RawRecord {
  int unit_id = 0;
  int cycle = 0;
  std::array<double, kOpSettingCount> op_settings{};
  std::array<double, kSensorCount> sensor_values{};
};

struct UnitRecords {
  int unit_id = 0;
  std::vector<RawRecord> records;
};

enum class Split { Train, Test };

const char* to_string(Split split);
Split split_from_string(const std::string& text);

// One record per nonblank line, in file order. Throws MalformedLine for short
// or non-numeric lines and NonContiguousCycles when a unit skips a cycle.
std::vector<RawRecord> parse_cmapss_file(std::istream& in);
std::vector<RawRecord> parse_cmapss_file(const std::filesystem::path& path);

// One non-negative integer per nonblank line.
std::vector<int> parse_rul_file(std::istream& in);
std::vector<int> parse_rul_file(const std::filesystem::path& path);

// Groups by unit in order of first appearance; record order within a unit is
// file order.
std::vector<UnitRecords> group_by_unit(std::span<const RawRecord> records);

// train: label(t) = L - t.  test: label(t) = r + L - t with r the provided
// final RUL. An optional cap clips labels from above.
std::vector<std::vector<double>> compute_rul_labels(std::span<const UnitRecords> units, Split split,
                                                    const std::optional<std::vector<int>>& final_rul,
                                                    std::optional<double> cap = std::nullopt);

struct SensorStats {
  double mean = 0.0;
  double stddev = 0.0;
  bool constant = false;
};

struct Normalization {
  std::vector<SensorStats> sensors;  // aligned with retained_sensor_ids

  double normalize(std::size_t column, double raw) const;
  double denormalize(std::size_t column, double z) const;
};

struct Trajectory {
  int unit_id = 0;
  Eigen::MatrixXd values;  // cycles x retained sensors, z-scored
  std::vector<double> rul;

  int length() const { return static_cast<int>(values.rows()); }
};

struct TrajectorySet {
  std::vector<Trajectory> trajectories;
  std::vector<int> retained_sensor_ids;
  Normalization normalization;
  Split split = Split::Train;

  std::size_t sensor_column(int sensor_id) const;  // throws if not retained
};

// Retained columns are z-scored with `stats` when given, otherwise with
// statistics computed from `units` (use this for the train split only).
TrajectorySet select_and_normalize(std::span<const UnitRecords> units,
                                   const std::vector<std::vector<double>>& labels, const std::set<int>& drop_ids,
                                   Split split, const std::optional<Normalization>& stats = std::nullopt);

// Raw sensor values of one trajectory, reconstructed from the z-scores.
Eigen::MatrixXd denormalize(const TrajectorySet& set, std::size_t trajectory_index);

struct Window {
  Eigen::MatrixXd features;  // window_len x feature_dim
  double target = 0.0;
  int unit_id = 0;
  int end_cycle = 0;  // 1-based cycle of the last row
};

struct WindowBatchSet {
  std::vector<Window> windows;
  int window_len = kDefaultWindowLength;
  std::uint64_t shuffle_seed = 0;
  std::vector<int> skipped_units;
};

// Non-overlapping windows tiled backward from each trajectory's final cycle,
// then shuffled with `seed`.
WindowBatchSet make_windows(const TrajectorySet& set, int window_len, std::uint64_t seed);

// The final window of one trajectory (used for test-set evaluation).
Window final_window(const Trajectory& trajectory, int window_len);

struct ConditionFiles {
  std::filesystem::path train;
  std::filesystem::path test;
  std::filesystem::path rul;
};

ConditionFiles condition_files(const std::filesystem::path& data_dir, const std::string& condition);

struct IngestOptions {
  std::set<int> drop_sensors = kDefaultDropSensors;
  std::optional<double> rul_cap;
};

struct ConditionData {
  TrajectorySet train;
  TrajectorySet test;
};

TrajectorySet ingest_train(const ConditionFiles& files, const IngestOptions& options);
// Test trajectories normalized with the train statistics; throws MissingRulFile
// when the RUL file is absent.
TrajectorySet ingest_test(const ConditionFiles& files, const Normalization& train_stats,
                          const IngestOptions& options);
ConditionData load_condition(const std::filesystem::path& data_dir, const std::string& condition,
                             const IngestOptions& options);

}  // namespace piml
