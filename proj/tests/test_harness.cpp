#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "fleet_sim.hpp"
#include "piml/error.hpp"
#include "piml/harness.hpp"
#include "piml/random.hpp"

using namespace piml;

namespace {

const std::vector<int> kIds{2, 3, 4, 7, 8, 9, 11, 12, 13, 14, 15, 17, 20, 21};

SensorPhysics flat_physics(int sensor_id, int t_max, std::vector<double> mu, std::vector<double> rho) {
  SensorPhysics p;
  p.sensor_id = sensor_id;
  for (int k = 1; k <= t_max; ++k) {
    p.grid.push_back(k);
    TimestepPhysics s;
    s.k = k;
    s.modality = static_cast<int>(mu.size());
    s.mu = mu;
    s.rho = rho;
    s.weights.assign(mu.size(), 1.0 / static_cast<double>(mu.size()));
    p.steps.push_back(s);
  }
  return p;
}

PhysicsBundle flat_bundle(int t_max) {
  PhysicsBundle b;
  b.sensor_ids = kIds;
  for (int id : kIds) b.sensors.push_back(flat_physics(id, t_max, {0.1 * id}, {0.01 * id}));
  return b;
}

Eigen::MatrixXd random_window(std::uint64_t seed) {
  Rng rng(seed);
  Eigen::MatrixXd w(20, 14);
  for (Eigen::Index j = 0; j < 14; ++j)
    for (Eigen::Index i = 0; i < 20; ++i) w(i, j) = rng.normal();
  return w;
}

// One unit with `n` windows of random features and a constant target.
WindowBatchSet constant_target_set(int n, double target) {
  WindowBatchSet set;
  for (int i = 0; i < n; ++i) set.windows.push_back({random_window(static_cast<std::uint64_t>(i)), target, 1, 20 * (i + 1)});
  return set;
}

ConditionData small_fleet(const std::string& name, int units) {
  auto spec = testing::fleet_spec("FD001");
  spec.train_units = spec.test_units = units;
  const auto dir = std::filesystem::temp_directory_path() / ("piml_test_harness_" + name);
  std::filesystem::remove_all(dir);
  testing::write_fleet(dir, testing::simulate_fleet(spec, 4));
  return load_condition(dir, "FD001", {});
}

}  // namespace

TEST_CASE("augmented feature widths") {
  const auto bundle = flat_bundle(60);
  const auto w = random_window(1);
  CHECK(augment_features(w, 40, kIds, &bundle, {false, false}) == w);
  CHECK(augment_features(w, 40, kIds, &bundle, {true, false}).cols() == 28);
  CHECK(augment_features(w, 40, kIds, &bundle, {false, true}).cols() == 28);
  const auto both = augment_features(w, 40, kIds, &bundle, {true, true});
  CHECK(both.cols() == 42);
  CHECK(both.leftCols(14) == w);
  CHECK(both(0, 14) == 0.1 * 2);    // mu of sensor 2
  CHECK(both(0, 28 + 13) == 0.01 * 21);  // rho of sensor 21
}

TEST_CASE("bimodal step feeds the nearest centroid") {
  PhysicsBundle bundle;
  bundle.sensor_ids = {2};
  bundle.sensors.push_back(flat_physics(2, 30, {0.0, 10.0}, {0.5, 2.0}));
  Eigen::MatrixXd w = Eigen::MatrixXd::Constant(20, 1, 9.2);
  w(3, 0) = 1.0;
  const std::vector<int> ids{2};
  const auto out = augment_features(w, 25, ids, &bundle, {true, true});
  CHECK(out(0, 1) == 10.0);
  CHECK(out(0, 2) == 2.0);
  CHECK(out(3, 1) == 0.0);
  CHECK(out(3, 2) == 0.5);
  FeatureOptions both{true, false, BimodalFeed::Both};
  const auto wide = augment_features(w, 25, ids, &bundle, both);
  CHECK(wide.cols() == 3);
  CHECK(wide(0, 1) == 0.0);
  CHECK(wide(0, 2) == 10.0);
}

TEST_CASE("cycles past the physics grid use its last point") {
  auto bundle = flat_bundle(10);
  bundle.sensors[0].steps.back().mu = {7.5};
  const auto out = augment_features(random_window(2), 30, kIds, &bundle, {true, false});
  CHECK(out(19, 14) == 7.5);
}

TEST_CASE("missing physics for a requested block") {
  CHECK_THROWS_AS(augment_features(random_window(3), 20, kIds, nullptr, {true, false}), MissingPhysics);
}

TEST_CASE("error metrics arithmetic") {
  auto m = error_metrics(std::vector<double>{1, 2}, std::vector<double>{1, 2});
  CHECK(m.mse == 0.0);
  CHECK(m.l1 == 0.0);
  m = error_metrics(std::vector<double>{3, -4}, std::vector<double>{0, 0});
  CHECK(m.mse == 12.5);
  CHECK(m.l1 == 3.5);
  m = error_metrics(std::vector<double>{0, 0}, std::vector<double>{10, 20});
  CHECK(m.mse == 250.0);
  CHECK(m.l1 == 15.0);
}

TEST_CASE("aggregate is the arithmetic mean and sample std") {
  CellMetrics cell;
  for (int i = 1; i <= 3; ++i) cell.seeds.push_back({static_cast<std::uint64_t>(i), double(i), 2.0 * i, 0});
  aggregate(cell);
  CHECK(cell.mse_mean == 2.0);
  CHECK(cell.l1_mean == 4.0);
  CHECK(cell.mse_std == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("config validation") {
  TrainConfig c;
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  c.val_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
  c = {};
  CHECK(c.resolved_epochs() == 100);
  c.condition = "FD004";
  CHECK(c.resolved_epochs() == 1000);
}

TEST_CASE("zero epochs returns the initialized model") {
  TrainConfig c;
  c.epochs = 0;
  const auto data = constant_target_set(6, 5.0);
  const auto m = train(c, data, kIds, nullptr, 3);
  CHECK(m.history.empty());
  CHECK(m.best_epoch == 0);
  LstmShape shape;
  CHECK(m.model.params() == LstmModel::initialized(shape, derive_seed(3, "init")).params());
}

TEST_CASE("constant target is learned to within 1% of c^2") {
  for (auto scaling : {TargetScaling::None, TargetScaling::TrainMax}) {
    TrainConfig c;
    c.epochs = 200;
    c.early_stopping = false;
    c.target_scaling = scaling;
    const double target = scaling == TargetScaling::None ? 1.0 : 150.0;
    const auto m = train(c, constant_target_set(10, target), kIds, nullptr, 5);
    CHECK(m.history.back().train_mse < 0.01 * target * target);
  }
}

TEST_CASE("same config and seed give identical history") {
  TrainConfig c;
  c.epochs = 5;
  auto data = constant_target_set(30, 2.0);
  for (std::size_t i = 0; i < data.windows.size(); ++i) data.windows[i].unit_id = 1 + static_cast<int>(i % 10);
  const auto a = train(c, data, kIds, nullptr, 8);
  const auto b = train(c, data, kIds, nullptr, 8);
  REQUIRE(a.history.size() == b.history.size());
  for (std::size_t i = 0; i < a.history.size(); ++i) {
    CHECK(a.history[i].train_mse == b.history[i].train_mse);
    CHECK(a.history[i].select_mse == b.history[i].select_mse);
  }
  CHECK(a.model.params() == b.model.params());
}

TEST_CASE("flags off: physics present or not, training is bit-identical") {
  const auto data = small_fleet("identity", 12);
  const auto physics = estimate_bundle(data.train, {});
  TrainConfig c;
  c.epochs = 3;
  const auto windows = make_windows(data.train, 20, 1);
  const auto with = train(c, windows, data.train.retained_sensor_ids, &physics, 2);
  const auto without = train(c, windows, data.train.retained_sensor_ids, nullptr, 2);
  CHECK(with.model.params() == without.model.params());
  const auto prepared = prepare_windows(windows.windows, data.train.retained_sensor_ids, &physics, {});
  for (std::size_t i = 0; i < prepared.size(); ++i) CHECK(prepared.features[i] == windows.windows[i].features);
}

TEST_CASE("physics comes from the train split only") {
  const auto data = small_fleet("leakage", 15);
  const auto a = estimate_bundle(data.train, {});
  auto perturbed = data;
  for (auto& t : perturbed.test.trajectories) t.values.array() += 5.0;
  const auto b = estimate_bundle(perturbed.train, {});
  for (std::size_t s = 0; s < a.sensors.size(); ++s)
    for (std::size_t k = 0; k < a.sensors[s].steps.size(); ++k) CHECK(a.sensors[s].steps[k].mu == b.sensors[s].steps[k].mu);
}

TEST_CASE("final test windows skip short units") {
  auto data = small_fleet("short", 5);
  data.test.trajectories[0].values.conservativeResize(12, Eigen::NoChange);
  data.test.trajectories[0].rul.resize(12);
  const auto set = prepare_final_windows(data.test, 20, nullptr, {});
  CHECK(set.size() == 4);
}

TEST_CASE("ablation suite: four cells averaging every seed") {
  auto data = small_fleet("suite", 10);
  TrainConfig c;
  c.epochs = 2;
  c.seeds = {0, 1, 2};
  c.threads = 2;
  const auto report = run_ablation_suite(c, data);
  REQUIRE(report.cells.size() == 4);
  for (const auto& cell : report.cells) {
    CHECK(cell.seeds.size() == 3);
    double sum = 0;
    for (const auto& s : cell.seeds) sum += s.test_mse;
    CHECK(std::abs(cell.mse_mean - sum / 3.0) <= 1e-12 * std::max(1.0, cell.mse_mean));
  }
  CHECK(!report.cells[0].use_mu);
  CHECK(report.cells[3].use_mu);
  CHECK(report.cells[3].use_rho);
}
