#include "piml/cmapss.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>

#include "piml/error.hpp"
#include "piml/random.hpp"

namespace piml {

namespace {

constexpr double kConstantSensorTolerance = 1e-10;

bool parse_double(std::string_view token, double& out) {
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && std::isfinite(out);
}

std::vector<std::string_view> split_whitespace(std::string_view line) {
  std::vector<std::string_view> tokens;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) tokens.push_back(line.substr(start, i - start));
  }
  return tokens;
}

int as_positive_int(double v, std::size_t line_no, const char* field) {
  if (v < 1.0 || v != std::floor(v) || v > 1e9)
    throw MalformedLine(line_no, std::string(field) + " must be a positive integer");
  return static_cast<int>(v);
}

std::ifstream open_or_throw(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

}  // namespace

const char* to_string(Split split) { return split == Split::Train ? "train" : "test"; }

Split split_from_string(const std::string& text) {
  if (text == "train") return Split::Train;
  if (text == "test") return Split::Test;
  throw ParseError("unknown split '" + text + "'");
}

std::vector<RawRecord> parse_cmapss_file(std::istream& in) {
  std::vector<RawRecord> records;
  std::map<int, int> last_cycle;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    if (tokens.size() < static_cast<std::size_t>(kRecordFieldCount))
      throw MalformedLine(line_no, "expected " + std::to_string(kRecordFieldCount) + " fields, found " +
                                       std::to_string(tokens.size()));
    std::array<double, kRecordFieldCount> fields{};
    for (int i = 0; i < kRecordFieldCount; ++i) {
      if (!parse_double(tokens[i], fields[i]))
        throw MalformedLine(line_no, "field " + std::to_string(i + 1) + " is not numeric: '" +
                                         std::string(tokens[i]) + "'");
    }
    RawRecord rec;
    rec.unit_id = as_positive_int(fields[0], line_no, "unit id");
    rec.cycle = as_positive_int(fields[1], line_no, "cycle");
    std::copy_n(fields.begin() + 2, kOpSettingCount, rec.op_settings.begin());
    std::copy_n(fields.begin() + 2 + kOpSettingCount, kSensorCount, rec.sensor_values.begin());

    auto [it, inserted] = last_cycle.try_emplace(rec.unit_id, 0);
    if (rec.cycle != it->second + 1) throw NonContiguousCycles(rec.unit_id, line_no);
    it->second = rec.cycle;
    records.push_back(rec);
  }
  return records;
}

std::vector<RawRecord> parse_cmapss_file(const std::filesystem::path& path) {
  auto in = open_or_throw(path);
  try {
    return parse_cmapss_file(in);
  } catch (const MalformedLine& e) {
    throw ParseError(path.string() + ": " + e.what());
  } catch (const NonContiguousCycles& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<int> parse_rul_file(std::istream& in) {
  std::vector<int> rul;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto tokens = split_whitespace(line);
    if (tokens.empty()) continue;
    double v = 0.0;
    if (!parse_double(tokens[0], v) || v < 0.0 || v != std::floor(v))
      throw MalformedLine(line_no, "RUL must be a non-negative integer");
    rul.push_back(static_cast<int>(v));
  }
  return rul;
}

std::vector<int> parse_rul_file(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw MissingRulFile(path.string());
  auto in = open_or_throw(path);
  try {
    return parse_rul_file(in);
  } catch (const MalformedLine& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<UnitRecords> group_by_unit(std::span<const RawRecord> records) {
  std::vector<UnitRecords> units;
  std::map<int, std::size_t> slot;
  for (const auto& rec : records) {
    auto [it, inserted] = slot.try_emplace(rec.unit_id, units.size());
    if (inserted) units.push_back(UnitRecords{rec.unit_id, {}});
    units[it->second].records.push_back(rec);
  }
  return units;
}

std::vector<std::vector<double>> compute_rul_labels(std::span<const UnitRecords> units, Split split,
                                                    const std::optional<std::vector<int>>& final_rul,
                                                    std::optional<double> cap) {
  if (split == Split::Test) {
    if (!final_rul) throw MissingRulFile("test split requires per-unit final RUL values");
    if (final_rul->size() != units.size())
      throw ValidationError("RUL file has " + std::to_string(final_rul->size()) + " entries for " +
                            std::to_string(units.size()) + " test units");
  }
  std::vector<std::vector<double>> labels;
  labels.reserve(units.size());
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto length = static_cast<int>(units[u].records.size());
    const double offset = split == Split::Test ? (*final_rul)[u] : 0.0;
    std::vector<double> lab(length);
    for (int t = 1; t <= length; ++t) {
      double v = offset + (length - t);
      if (cap) v = std::min(v, *cap);
      lab[t - 1] = v;
    }
    labels.push_back(std::move(lab));
  }
  return labels;
}

double Normalization::normalize(std::size_t column, double raw) const {
  const auto& s = sensors.at(column);
  if (s.constant) return 0.0;
  return (raw - s.mean) / s.stddev;
}

double Normalization::denormalize(std::size_t column, double z) const {
  const auto& s = sensors.at(column);
  if (s.constant) return s.mean;
  return z * s.stddev + s.mean;
}

std::size_t TrajectorySet::sensor_column(int sensor_id) const {
  auto it = std::find(retained_sensor_ids.begin(), retained_sensor_ids.end(), sensor_id);
  if (it == retained_sensor_ids.end())
    throw InvalidArgument("sensor " + std::to_string(sensor_id) + " is not retained");
  return static_cast<std::size_t>(it - retained_sensor_ids.begin());
}

TrajectorySet select_and_normalize(std::span<const UnitRecords> units,
                                   const std::vector<std::vector<double>>& labels, const std::set<int>& drop_ids,
                                   Split split, const std::optional<Normalization>& stats) {
  if (labels.size() != units.size()) throw InvalidArgument("label count does not match unit count");
  // once per process: every split of every run would otherwise repeat it
  static std::atomic<bool> warned{false};
  for (int id : drop_ids) {
    if ((id < 1 || id > kSensorCount) && !warned.exchange(true))
      spdlog::warn("drop list names sensor {} but the files carry sensors 1..{}; ignored", id, kSensorCount);
  }

  TrajectorySet set;
  set.split = split;
  for (int id = 1; id <= kSensorCount; ++id)
    if (!drop_ids.contains(id)) set.retained_sensor_ids.push_back(id);
  const std::size_t n_cols = set.retained_sensor_ids.size();

  if (stats) {
    if (stats->sensors.size() != n_cols)
      throw InvalidArgument("normalization covers " + std::to_string(stats->sensors.size()) +
                            " sensors, expected " + std::to_string(n_cols));
    set.normalization = *stats;
  } else {
    // two-pass mean/variance over every cycle of every unit
    set.normalization.sensors.resize(n_cols);
    std::size_t count = 0;
    for (const auto& u : units) count += u.records.size();
    if (count == 0) throw InvalidArgument("cannot compute normalization from an empty split");
    for (std::size_t c = 0; c < n_cols; ++c) {
      const int idx = set.retained_sensor_ids[c] - 1;
      double sum = 0.0;
      for (const auto& u : units)
        for (const auto& r : u.records) sum += r.sensor_values[idx];
      const double mean = sum / static_cast<double>(count);
      double ss = 0.0;
      for (const auto& u : units)
        for (const auto& r : u.records) ss += (r.sensor_values[idx] - mean) * (r.sensor_values[idx] - mean);
      const double sd = std::sqrt(ss / static_cast<double>(count));
      auto& s = set.normalization.sensors[c];
      s.mean = mean;
      s.stddev = sd;
      s.constant = sd <= kConstantSensorTolerance * std::max(1.0, std::abs(mean));
    }
  }

  set.trajectories.reserve(units.size());
  for (std::size_t u = 0; u < units.size(); ++u) {
    const auto& recs = units[u].records;
    if (labels[u].size() != recs.size())
      throw InvalidArgument("label vector length differs from cycle count for unit " +
                            std::to_string(units[u].unit_id));
    Trajectory traj;
    traj.unit_id = units[u].unit_id;
    traj.values.resize(static_cast<Eigen::Index>(recs.size()), static_cast<Eigen::Index>(n_cols));
    for (std::size_t t = 0; t < recs.size(); ++t)
      for (std::size_t c = 0; c < n_cols; ++c)
        traj.values(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) =
            set.normalization.normalize(c, recs[t].sensor_values[set.retained_sensor_ids[c] - 1]);
    traj.rul = labels[u];
    set.trajectories.push_back(std::move(traj));
  }
  return set;
}

Eigen::MatrixXd denormalize(const TrajectorySet& set, std::size_t trajectory_index) {
  const auto& z = set.trajectories.at(trajectory_index).values;
  Eigen::MatrixXd raw(z.rows(), z.cols());
  for (Eigen::Index t = 0; t < z.rows(); ++t)
    for (Eigen::Index c = 0; c < z.cols(); ++c)
      raw(t, c) = set.normalization.denormalize(static_cast<std::size_t>(c), z(t, c));
  return raw;
}

Window final_window(const Trajectory& trajectory, int window_len) {
  if (window_len < 1) throw InvalidArgument("window_len must be >= 1");
  if (trajectory.length() < window_len)
    throw InvalidArgument("unit " + std::to_string(trajectory.unit_id) + " is shorter than the window");
  const int end = trajectory.length();
  Window w;
  w.features = trajectory.values.middleRows(end - window_len, window_len);
  w.target = trajectory.rul[end - 1];
  w.unit_id = trajectory.unit_id;
  w.end_cycle = end;
  return w;
}

WindowBatchSet make_windows(const TrajectorySet& set, int window_len, std::uint64_t seed) {
  if (window_len < 1) throw InvalidArgument("window_len must be >= 1");
  WindowBatchSet out;
  out.window_len = window_len;
  out.shuffle_seed = seed;
  for (const auto& traj : set.trajectories) {
    const int length = traj.length();
    if (length < window_len) {
      spdlog::warn("unit {} has {} cycles, fewer than the window length {}; skipped", traj.unit_id, length,
                   window_len);
      out.skipped_units.push_back(traj.unit_id);
      continue;
    }
    for (int end = length; end >= window_len; end -= window_len) {
      Window w;
      w.features = traj.values.middleRows(end - window_len, window_len);
      w.target = traj.rul[end - 1];
      w.unit_id = traj.unit_id;
      w.end_cycle = end;
      out.windows.push_back(std::move(w));
    }
  }
  Rng rng(seed);
  rng.shuffle(std::span<Window>(out.windows));
  return out;
}

ConditionFiles condition_files(const std::filesystem::path& data_dir, const std::string& condition) {
  return {data_dir / ("train_" + condition + ".txt"), data_dir / ("test_" + condition + ".txt"),
          data_dir / ("RUL_" + condition + ".txt")};
}

TrajectorySet ingest_train(const ConditionFiles& files, const IngestOptions& options) {
  const auto records = parse_cmapss_file(files.train);
  const auto units = group_by_unit(records);
  const auto labels = compute_rul_labels(units, Split::Train, std::nullopt, options.rul_cap);
  return select_and_normalize(units, labels, options.drop_sensors, Split::Train);
}

TrajectorySet ingest_test(const ConditionFiles& files, const Normalization& train_stats,
                          const IngestOptions& options) {
  if (!std::filesystem::exists(files.rul)) throw MissingRulFile(files.rul.string());
  const auto final_rul = parse_rul_file(files.rul);
  const auto records = parse_cmapss_file(files.test);
  const auto units = group_by_unit(records);
  const auto labels = compute_rul_labels(units, Split::Test, final_rul, options.rul_cap);
  return select_and_normalize(units, labels, options.drop_sensors, Split::Test, train_stats);
}

ConditionData load_condition(const std::filesystem::path& data_dir, const std::string& condition,
                             const IngestOptions& options) {
  const auto files = condition_files(data_dir, condition);
  ConditionData data;
  data.train = ingest_train(files, options);
  data.test = ingest_test(files, data.train.normalization, options);
  return data;
}

}  // namespace piml
