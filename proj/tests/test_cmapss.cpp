#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "fleet_sim.hpp"
#include "piml/cmapss.hpp"
#include "piml/error.hpp"

using namespace piml;

namespace {

std::string record_line(int unit, int cycle, double sensor_base = 0.0) {
  std::ostringstream out;
  out << unit << ' ' << cycle << " 0.0 0.0 100.0";
  for (int s = 1; s <= kSensorCount; ++s) out << ' ' << sensor_base + s + 0.01 * cycle;
  return out.str();
}

std::vector<UnitRecords> units_of_lengths(std::initializer_list<int> lengths) {
  std::ostringstream text;
  int unit = 1;
  for (int len : lengths) {
    for (int c = 1; c <= len; ++c) text << record_line(unit, c, unit) << '\n';
    ++unit;
  }
  std::istringstream in(text.str());
  return group_by_unit(parse_cmapss_file(in));
}

TrajectorySet train_set_of_lengths(std::initializer_list<int> lengths) {
  const auto units = units_of_lengths(lengths);
  return select_and_normalize(units, compute_rul_labels(units, Split::Train, std::nullopt), kDefaultDropSensors,
                              Split::Train);
}

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("piml_test_cmapss_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("published record layout maps field by field") {
  std::istringstream in("1 1 -0.0007 -0.0004 100.0 518.67 641.82 1589.70 1400.60 14.62 21.61 554.36 2388.06 "
                        "9046.19 1.30 47.47 521.66 2388.02 8138.62 8.4195 0.03 392 2388 100.00 39.06 23.4190  \n");
  const auto records = parse_cmapss_file(in);
  REQUIRE(records.size() == 1);
  CHECK(records[0].unit_id == 1);
  CHECK(records[0].cycle == 1);
  CHECK(records[0].op_settings[0] == -0.0007);
  CHECK(records[0].op_settings[2] == 100.0);
  CHECK(records[0].sensor_values[0] == 518.67);
  CHECK(records[0].sensor_values[20] == 23.4190);
}

TEST_CASE("empty file parses to nothing") {
  std::istringstream in("");
  CHECK(parse_cmapss_file(in).empty());
}

TEST_CASE("25 tokens is a malformed line") {
  std::string line = record_line(1, 1);
  line = line.substr(0, line.rfind(' '));
  std::istringstream in(record_line(1, 1) + "\n\n" + line + "\n");
  try {
    parse_cmapss_file(in);
    FAIL("expected MalformedLine");
  } catch (const MalformedLine& e) {
    CHECK(e.line_no() == 3);
  }
}

TEST_CASE("non-numeric token is a malformed line") {
  std::string line = record_line(1, 1);
  line.replace(line.find("100.0"), 5, "abc");
  std::istringstream in(line);
  CHECK_THROWS_AS(parse_cmapss_file(in), MalformedLine);
}

TEST_CASE("skipped cycle is rejected") {
  std::istringstream in(record_line(1, 1) + "\n" + record_line(1, 3) + "\n");
  CHECK_THROWS_AS(parse_cmapss_file(in), NonContiguousCycles);
}

TEST_CASE("RUL file parsing") {
  std::istringstream in("112\n98\n\n69\n");
  CHECK(parse_rul_file(in) == std::vector<int>{112, 98, 69});
  std::istringstream bad("12\n-3\n");
  CHECK_THROWS_AS(parse_rul_file(bad), ParseError);
}

TEST_CASE("train labels count down to 0") {
  const auto units = units_of_lengths({5});
  const auto labels = compute_rul_labels(units, Split::Train, std::nullopt);
  CHECK(labels[0] == std::vector<double>{4, 3, 2, 1, 0});
}

TEST_CASE("test labels shift by the final RUL") {
  const auto units = units_of_lengths({3});
  const auto labels = compute_rul_labels(units, Split::Test, std::vector<int>{10});
  CHECK(labels[0] == std::vector<double>{12, 11, 10});
}

TEST_CASE("optional cap clips labels") {
  const auto units = units_of_lengths({5});
  const auto labels = compute_rul_labels(units, Split::Train, std::nullopt, 2.0);
  CHECK(labels[0] == std::vector<double>{2, 2, 2, 1, 0});
}

TEST_CASE("missing RUL file") {
  const auto dir = temp_dir("missing_rul");
  testing::FleetSpec spec = testing::fleet_spec("FD001");
  spec.train_units = spec.test_units = 3;
  testing::write_fleet(dir, testing::simulate_fleet(spec, 1));
  const auto files = condition_files(dir, "FD001");
  std::filesystem::remove(files.rul);
  const auto train = ingest_train(files, {});
  try {
    ingest_test(files, train.normalization, {});
    FAIL("expected MissingRulFile");
  } catch (const MissingRulFile& e) {
    CHECK(std::string(e.what()).find("RUL_FD001.txt") != std::string::npos);
  }
}

TEST_CASE("default drop set retains 14 sensors") {
  const auto set = train_set_of_lengths({30, 25});
  CHECK(set.retained_sensor_ids == std::vector<int>{2, 3, 4, 7, 8, 9, 11, 12, 13, 14, 15, 17, 20, 21});
  for (const auto& t : set.trajectories) CHECK(t.values.cols() == 14);
}

TEST_CASE("constant sensor normalizes to zeros") {
  std::ostringstream text;
  for (int c = 1; c <= 6; ++c) {
    text << "1 " << c << " 0 0 100";
    for (int s = 1; s <= kSensorCount; ++s) text << ' ' << (s == 2 ? 642.5 : s + c);
    text << '\n';
  }
  std::istringstream in(text.str());
  const auto units = group_by_unit(parse_cmapss_file(in));
  const auto set = select_and_normalize(units, compute_rul_labels(units, Split::Train, std::nullopt),
                                        kDefaultDropSensors, Split::Train);
  const auto col = set.sensor_column(2);
  CHECK(set.normalization.sensors[col].constant);
  CHECK(set.trajectories[0].values.col(static_cast<Eigen::Index>(col)).isZero(0.0));
}

TEST_CASE("test split is z-scored with train statistics") {
  const auto train = train_set_of_lengths({30, 40});
  const auto test_units = units_of_lengths({10});
  const auto test = select_and_normalize(test_units, compute_rul_labels(test_units, Split::Test, std::vector<int>{5}),
                                         kDefaultDropSensors, Split::Test, train.normalization);
  const auto col = train.sensor_column(3);
  const auto& stats = train.normalization.sensors[col];
  const double raw = test_units[0].records[4].sensor_values[2];
  CHECK(test.trajectories[0].values(4, static_cast<Eigen::Index>(col)) ==
        doctest::Approx((raw - stats.mean) / stats.stddev).epsilon(1e-14));
}

TEST_CASE("normalization round trip within 1e-9 relative") {
  const auto units = units_of_lengths({33, 57, 41});
  const auto set = select_and_normalize(units, compute_rul_labels(units, Split::Train, std::nullopt),
                                        kDefaultDropSensors, Split::Train);
  for (std::size_t i = 0; i < set.trajectories.size(); ++i) {
    const auto raw = denormalize(set, i);
    for (std::size_t c = 0; c < set.retained_sensor_ids.size(); ++c) {
      const int sensor = set.retained_sensor_ids[c];
      for (int t = 0; t < raw.rows(); ++t) {
        const double truth = units[i].records[t].sensor_values[sensor - 1];
        CHECK(std::abs(raw(t, static_cast<Eigen::Index>(c)) - truth) <= 1e-9 * std::abs(truth));
      }
    }
  }
}

TEST_CASE("window counts by length") {
  const auto set = train_set_of_lengths({45, 20, 19});
  const auto w = make_windows(set, 20, 0);
  CHECK(w.skipped_units == std::vector<int>{3});
  std::vector<int> ends_unit1;
  for (const auto& win : w.windows)
    if (win.unit_id == 1) ends_unit1.push_back(win.end_cycle);
  std::sort(ends_unit1.begin(), ends_unit1.end());
  CHECK(ends_unit1 == std::vector<int>{25, 45});
  CHECK(std::count_if(w.windows.begin(), w.windows.end(), [](const Window& x) { return x.unit_id == 2; }) == 1);
}

TEST_CASE("window partition and label consistency on a simulated fleet") {
  testing::FleetSpec spec = testing::fleet_spec("FD001");
  spec.train_units = 30;
  const auto dir = temp_dir("partition");
  testing::write_fleet(dir, testing::simulate_fleet(spec, 3));
  const auto set = ingest_train(condition_files(dir, "FD001"), {});
  const auto w = make_windows(set, 20, 99);
  for (const auto& t : set.trajectories) {
    const int len = t.length();
    CHECK(t.rul.size() == static_cast<std::size_t>(len));
    CHECK(t.rul.back() == 0.0);
    std::vector<int> covered;
    for (const auto& win : w.windows) {
      if (win.unit_id != t.unit_id) continue;
      REQUIRE(win.features.rows() == 20);
      CHECK(win.end_cycle <= len);
      CHECK(win.target == static_cast<double>(len - win.end_cycle));
      CHECK(win.features == t.values.middleRows(win.end_cycle - 20, 20));
      for (int c = win.end_cycle - 19; c <= win.end_cycle; ++c) covered.push_back(c);
    }
    std::sort(covered.begin(), covered.end());
    // disjoint windows whose union is the suffix of length 20 * floor(L / 20)
    const int suffix = 20 * (len / 20);
    REQUIRE(covered.size() == static_cast<std::size_t>(suffix));
    for (int i = 0; i < suffix; ++i) CHECK(covered[i] == len - suffix + 1 + i);
  }
}

TEST_CASE("shuffle determinism") {
  const auto set = train_set_of_lengths({80, 60, 100});
  const auto a = make_windows(set, 20, 5);
  const auto b = make_windows(set, 20, 5);
  const auto c = make_windows(set, 20, 6);
  auto order = [](const WindowBatchSet& w) {
    std::vector<std::pair<int, int>> o;
    for (const auto& x : w.windows) o.emplace_back(x.unit_id, x.end_cycle);
    return o;
  };
  CHECK(order(a) == order(b));
  CHECK(order(a) != order(c));
}

TEST_CASE("final window is the last 20 cycles") {
  const auto set = train_set_of_lengths({37});
  const auto w = final_window(set.trajectories[0], 20);
  CHECK(w.end_cycle == 37);
  CHECK(w.features == set.trajectories[0].values.bottomRows(20));
}
