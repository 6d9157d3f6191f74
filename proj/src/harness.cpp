#include "piml/harness.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include "piml/error.hpp"
#include "piml/random.hpp"
#include "piml/serialize.hpp"

namespace piml {

const char* to_string(TargetScaling s) { return s == TargetScaling::None ? "none" : "train_max"; }

TargetScaling target_scaling_from_string(const std::string& text) {
  if (text == "none") return TargetScaling::None;
  if (text == "train_max") return TargetScaling::TrainMax;
  throw ParseError("unknown target scaling '" + text + "' (expected none|train_max)");
}

const char* to_string(BimodalFeed f) { return f == BimodalFeed::Nearest ? "nearest" : "both"; }

BimodalFeed bimodal_feed_from_string(const std::string& text) {
  if (text == "nearest") return BimodalFeed::Nearest;
  if (text == "both") return BimodalFeed::Both;
  throw ParseError("unknown bimodal feed '" + text + "' (expected nearest|both)");
}

int FeatureOptions::feature_dim(int n_sensors) const {
  const int per_flag = bimodal_feed == BimodalFeed::Both ? 2 : 1;
  return n_sensors * (1 + per_flag * (use_mu ? 1 : 0) + per_flag * (use_rho ? 1 : 0));
}

int TrainConfig::resolved_epochs() const {
  if (epochs) return *epochs;
  return (condition == "FD002" || condition == "FD004") ? 1000 : 100;
}

void TrainConfig::validate() const {
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) throw ValidationError("val_fraction must lie in (0, 1)");
  if (resolved_epochs() < 0) throw ValidationError("epochs must be >= 0");
  if (seeds.empty()) throw ValidationError("at least one seed is required");
  if (window_len < 1) throw ValidationError("window_len must be >= 1");
  if (!(adam.lr > 0.0)) throw ValidationError("lr must be positive");
  if (hidden < 1 || mlp_hidden < 1) throw ValidationError("layer widths must be positive");
}

const SensorPhysics& PhysicsBundle::for_sensor(int sensor_id) const {
  for (std::size_t i = 0; i < sensor_ids.size(); ++i)
    if (sensor_ids[i] == sensor_id && i < sensors.size()) return sensors[i];
  throw MissingPhysics(sensor_id);
}

PhysicsBundle estimate_bundle(const TrajectorySet& train, const PhysicsOptions& options) {
  return {train.retained_sensor_ids, estimate_all(train, options)};
}

Eigen::MatrixXd augment_features(const Eigen::MatrixXd& window, int end_cycle, std::span<const int> sensor_ids,
                                 const PhysicsBundle* physics, const FeatureOptions& options) {
  const auto n_sensors = static_cast<int>(sensor_ids.size());
  if (window.cols() != n_sensors) throw ShapeMismatch("window columns do not match the sensor list");
  if (!options.use_mu && !options.use_rho) return window;
  if (!physics) throw MissingPhysics(sensor_ids.empty() ? 0 : sensor_ids.front());

  std::vector<const SensorPhysics*> per_sensor;
  for (int id : sensor_ids) per_sensor.push_back(&physics->for_sensor(id));

  const int width = options.bimodal_feed == BimodalFeed::Both ? 2 : 1;
  Eigen::MatrixXd out(window.rows(), options.feature_dim(n_sensors));
  out.leftCols(n_sensors) = window;
  const auto first_cycle = end_cycle - static_cast<int>(window.rows()) + 1;
  for (Eigen::Index t = 0; t < window.rows(); ++t) {
    const int cycle = first_cycle + static_cast<int>(t);
    for (int s = 0; s < n_sensors; ++s) {
      const auto& step = per_sensor[s]->at_clamped(cycle);
      std::array<double, 2> mu{}, rho{};
      if (options.bimodal_feed == BimodalFeed::Nearest) {
        std::size_t m = 0;
        if (step.modality == 2) {
          const double x = window(t, s);
          m = std::abs(x - step.mu[1]) < std::abs(x - step.mu[0]) ? 1 : 0;
        }
        mu[0] = step.mu[m];
        rho[0] = step.rho[m];
      } else {
        const std::size_t hi = step.modality == 2 ? 1 : 0;
        mu = {step.mu[0], step.mu[hi]};
        rho = {step.rho[0], step.rho[hi]};
      }
      // layout: [sensors | mu block | rho block]
      if (options.use_mu)
        for (int w = 0; w < width; ++w) out(t, n_sensors + s * width + w) = mu[w];
      if (options.use_rho) {
        const Eigen::Index base = n_sensors + (options.use_mu ? n_sensors * width : 0);
        for (int w = 0; w < width; ++w) out(t, base + s * width + w) = rho[w];
      }
    }
  }
  return out;
}

PreparedSet prepare_windows(std::span<const Window> windows, std::span<const int> sensor_ids,
                            const PhysicsBundle* physics, const FeatureOptions& options) {
  PreparedSet out;
  out.features.reserve(windows.size());
  for (const auto& w : windows) {
    out.features.push_back(augment_features(w.features, w.end_cycle, sensor_ids, physics, options));
    out.targets.push_back(w.target);
    out.unit_ids.push_back(w.unit_id);
    out.end_cycles.push_back(w.end_cycle);
  }
  return out;
}

PreparedSet prepare_final_windows(const TrajectorySet& set, int window_len, const PhysicsBundle* physics,
                                  const FeatureOptions& options) {
  std::vector<Window> windows;
  for (const auto& traj : set.trajectories) {
    if (traj.length() < window_len) {
      spdlog::warn("test unit {} has {} cycles, fewer than the window length {}; skipped", traj.unit_id,
                   traj.length(), window_len);
      continue;
    }
    windows.push_back(final_window(traj, window_len));
  }
  return prepare_windows(windows, set.retained_sensor_ids, physics, options);
}

std::vector<double> TrainedModel::predict(const PreparedSet& set) const {
  std::vector<double> out;
  out.reserve(set.size());
  constexpr std::size_t kChunk = 256;
  for (std::size_t start = 0; start < set.size(); start += kChunk) {
    const std::size_t end = std::min(set.size(), start + kChunk);
    std::vector<const Eigen::MatrixXd*> ptrs;
    for (std::size_t i = start; i < end; ++i) ptrs.push_back(&set.features[i]);
    const std::vector<double> dummy(ptrs.size(), 0.0);
    const auto batch = make_batch(std::span<const Eigen::MatrixXd* const>(ptrs), dummy);
    const Eigen::RowVectorXd y = forward_batch(model, batch);
    for (Eigen::Index i = 0; i < y.size(); ++i) out.push_back(y(i) * target_scale);
  }
  return out;
}

ErrorMetrics error_metrics(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw ShapeMismatch("prediction and target counts differ");
  if (predictions.empty()) throw EmptyBatch();
  ErrorMetrics m;
  m.count = predictions.size();
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double e = predictions[i] - targets[i];
    m.mse += e * e;
    m.l1 += std::abs(e);
  }
  m.mse /= static_cast<double>(m.count);
  m.l1 /= static_cast<double>(m.count);
  return m;
}

namespace {

struct SelectionSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> select;
};

SelectionSplit split_by_unit(const WindowBatchSet& data, double val_fraction, bool hold_out, std::uint64_t seed) {
  SelectionSplit split;
  std::vector<int> units;
  for (const auto& w : data.windows) units.push_back(w.unit_id);
  std::sort(units.begin(), units.end());
  units.erase(std::unique(units.begin(), units.end()), units.end());

  std::set<int> held;
  if (hold_out && units.size() >= 2) {
    Rng rng(seed);
    rng.shuffle(std::span<int>(units));
    auto n_val = static_cast<std::size_t>(std::llround(val_fraction * static_cast<double>(units.size())));
    n_val = std::clamp<std::size_t>(n_val, 1, units.size() - 1);
    held.insert(units.begin(), units.begin() + static_cast<std::ptrdiff_t>(n_val));
  }
  for (std::size_t i = 0; i < data.windows.size(); ++i)
    (held.contains(data.windows[i].unit_id) ? split.select : split.train).push_back(i);
  return split;
}

double mse_of(const TrainedModel& m, const PreparedSet& set) {
  const auto preds = m.predict(set);
  return error_metrics(preds, set.targets).mse;
}

}  // namespace

TrainedModel train(const TrainConfig& config, const WindowBatchSet& data, std::span<const int> sensor_ids,
                   const PhysicsBundle* physics, std::uint64_t seed,
                   const std::optional<PreparedSet>& selection_override) {
  config.validate();
  if (data.windows.empty()) throw InvalidArgument("train: no windows");
  const auto features = config.features();
  if ((features.use_mu || features.use_rho) && !physics)
    throw MissingPhysics(sensor_ids.empty() ? 0 : sensor_ids.front());

  const bool hold_out = config.early_stopping && !selection_override;
  const auto split = split_by_unit(data, config.val_fraction, hold_out, derive_seed(seed, "validation-split"));

  std::vector<Window> train_windows, select_windows;
  for (auto i : split.train) train_windows.push_back(data.windows[i]);
  for (auto i : split.select) select_windows.push_back(data.windows[i]);
  const auto train_set = prepare_windows(train_windows, sensor_ids, physics, features);
  std::optional<PreparedSet> select_set = selection_override;
  if (!select_set && !select_windows.empty()) select_set = prepare_windows(select_windows, sensor_ids, physics, features);

  LstmShape shape;
  shape.input_dim = features.feature_dim(static_cast<int>(sensor_ids.size()));
  shape.hidden = config.hidden;
  shape.mlp_hidden = config.mlp_hidden;
  shape.seq_len = data.window_len;
  shape.head_activation = config.mlp_activation;

  TrainedModel result;
  result.seed = seed;
  result.features = features;
  result.model = LstmModel::initialized(shape, derive_seed(seed, "init"));
  result.adam = AdamState::zeros(result.model.param_count(), config.adam);
  result.target_scale = 1.0;
  if (config.target_scaling == TargetScaling::TrainMax) {
    const double top = *std::max_element(train_set.targets.begin(), train_set.targets.end());
    if (top > 0.0) result.target_scale = top;
  }

  Rng batch_rng(derive_seed(seed, "batches"));
  const int epochs = config.resolved_epochs();
  TrainedModel best = result;
  double best_score = select_set && config.early_stopping ? mse_of(result, *select_set)
                                                          : std::numeric_limits<double>::infinity();

  std::vector<std::size_t> order(train_set.size());
  std::vector<double> scaled_targets(train_set.size());
  for (std::size_t i = 0; i < train_set.size(); ++i) scaled_targets[i] = train_set.targets[i] / result.target_scale;
  const double scale_sq = result.target_scale * result.target_scale;

  for (int epoch = 1; epoch <= epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    batch_rng.shuffle(std::span<std::size_t>(order));
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<const Eigen::MatrixXd*> ptrs;
      std::vector<double> targets;
      for (std::size_t i = start; i < end; ++i) {
        ptrs.push_back(&train_set.features[order[i]]);
        targets.push_back(scaled_targets[order[i]]);
      }
      const auto batch = make_batch(std::span<const Eigen::MatrixXd* const>(ptrs), targets);
      const auto lg = backward(result.model, batch);
      adam_step(result.model, lg.grad, result.adam);
      loss_sum += lg.loss * static_cast<double>(end - start);
    }
    if (!result.model.all_finite())
      throw ValidationError("training diverged: non-finite parameters at epoch " + std::to_string(epoch));

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_mse = loss_sum / static_cast<double>(order.size()) * scale_sq;
    if (select_set) rec.select_mse = mse_of(result, *select_set);
    result.history.push_back(rec);

    if (config.early_stopping && rec.select_mse && *rec.select_mse < best_score) {
      best_score = *rec.select_mse;
      best = result;
      best.best_epoch = epoch;
    }
  }
  result.rng_state = batch_rng.state();
  if (config.early_stopping && select_set && epochs > 0) {
    best.history = result.history;
    best.rng_state = result.rng_state;
    return best;
  }
  result.best_epoch = epochs;
  return result;
}

ErrorMetrics evaluate(const TrainedModel& model, const TrajectorySet& test, int window_len,
                      const PhysicsBundle* physics) {
  const auto set = prepare_final_windows(test, window_len, physics, model.features);
  const auto preds = model.predict(set);
  return error_metrics(preds, set.targets);
}

void aggregate(CellMetrics& cell) {
  const auto n = static_cast<double>(cell.seeds.size());
  if (cell.seeds.empty()) return;
  double mse = 0.0, l1 = 0.0;
  for (const auto& s : cell.seeds) {
    mse += s.test_mse;
    l1 += s.test_l1;
  }
  cell.mse_mean = mse / n;
  cell.l1_mean = l1 / n;
  double mse_ss = 0.0, l1_ss = 0.0;
  for (const auto& s : cell.seeds) {
    mse_ss += (s.test_mse - cell.mse_mean) * (s.test_mse - cell.mse_mean);
    l1_ss += (s.test_l1 - cell.l1_mean) * (s.test_l1 - cell.l1_mean);
  }
  cell.mse_std = cell.seeds.size() > 1 ? std::sqrt(mse_ss / (n - 1.0)) : 0.0;
  cell.l1_std = cell.seeds.size() > 1 ? std::sqrt(l1_ss / (n - 1.0)) : 0.0;
}

std::uint64_t run_seed(std::uint64_t master_seed, std::uint64_t seed) { return derive_seed(master_seed, seed); }

TrainedModel train_cell(const TrainConfig& config, const TrajectorySet& train_set, const TrajectorySet* test_set,
                        const PhysicsBundle& physics, bool use_mu, bool use_rho, std::uint64_t seed) {
  TrainConfig cell = config;
  cell.use_mu = use_mu;
  cell.use_rho = use_rho;
  const auto effective = run_seed(config.master_seed, seed);
  // windows depend on the seed only, so all four cells of a seed see the same data order
  const auto windows = make_windows(train_set, cell.window_len, derive_seed(effective, "windows"));
  std::optional<PreparedSet> selection;
  if (cell.paper_protocol) {
    if (!test_set) throw InvalidArgument("paper_protocol selection needs the test split");
    selection = prepare_final_windows(*test_set, cell.window_len, &physics, cell.features());
  }
  return train(cell, windows, train_set.retained_sensor_ids, &physics, effective, selection);
}

CellRun run_cell(const TrainConfig& config, const ConditionData& data, const PhysicsBundle& physics, bool use_mu,
                 bool use_rho, std::uint64_t seed) {
  CellRun run;
  run.model = train_cell(config, data.train, &data.test, physics, use_mu, use_rho, seed);
  const auto metrics = evaluate(run.model, data.test, config.window_len, &physics);
  run.metrics = {seed, metrics.mse, metrics.l1, run.model.best_epoch};
  return run;
}

MetricsReport run_ablation_suite(const TrainConfig& config, const std::filesystem::path& data_dir,
                                 const std::optional<std::filesystem::path>& out_dir,
                                 const std::string& config_hash) {
  config.validate();
  const auto data = load_condition(data_dir, config.condition, config.ingest);
  auto report = run_ablation_suite(config, data, out_dir, config_hash);
  report.data_source = std::filesystem::absolute(data_dir).lexically_normal().string();
  if (out_dir) {
    write_report_markdown(*out_dir / "report.md", report);
    write_json_file(*out_dir / "report.json", to_json(report));
  }
  return report;
}

MetricsReport run_ablation_suite(const TrainConfig& config, const ConditionData& data,
                                 const std::optional<std::filesystem::path>& out_dir,
                                 const std::string& config_hash) {
  config.validate();
  const auto started = std::chrono::steady_clock::now();
  // physics comes from the training split only and stays frozen for the test split
  const auto physics = estimate_bundle(data.train, config.physics);

  constexpr std::array<std::pair<bool, bool>, 4> kCells{{{false, false}, {true, false}, {false, true}, {true, true}}};
  struct Job {
    std::size_t cell;
    std::size_t seed_index;
  };
  std::vector<Job> jobs;
  for (std::size_t c = 0; c < kCells.size(); ++c)
    for (std::size_t s = 0; s < config.seeds.size(); ++s) jobs.push_back({c, s});

  std::vector<std::optional<CellRun>> runs(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) {
      try {
        const auto [mu, rho] = kCells[jobs[j].cell];
        runs[j] = run_cell(config, data, physics, mu, rho, config.seeds[jobs[j].seed_index]);
        spdlog::info("{} mu={} rho={} seed={}: test mse {:.4f} l1 {:.4f}", config.condition, mu, rho,
                     config.seeds[jobs[j].seed_index], runs[j]->metrics.test_mse, runs[j]->metrics.test_l1);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
  const auto n_threads = std::min<std::size_t>(jobs.size(), config.threads > 0 ? config.threads : hw);
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);

  MetricsReport report;
  for (std::size_t c = 0; c < kCells.size(); ++c) {
    CellMetrics cell;
    cell.condition = config.condition;
    cell.use_mu = kCells[c].first;
    cell.use_rho = kCells[c].second;
    for (std::size_t j = 0; j < jobs.size(); ++j)
      if (jobs[j].cell == c) cell.seeds.push_back(runs[j]->metrics);
    aggregate(cell);
    report.cells.push_back(std::move(cell));
  }
  report.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    write_report_csv(*out_dir / "report.csv", report);
    write_report_markdown(*out_dir / "report.md", report);
    write_json_file(*out_dir / "report.json", to_json(report));
    for (std::size_t j = 0; j < jobs.size(); ++j) {
      const auto [mu, rho] = kCells[jobs[j].cell];
      const auto dir = *out_dir / "runs" /
                       fmt::format("mu{}_rho{}_seed{}", mu ? 1 : 0, rho ? 1 : 0, config.seeds[jobs[j].seed_index]);
      write_json_file(dir / "checkpoint.json", checkpoint_to_json(runs[j]->model, config_hash));
      write_json_file(dir / "history.json", history_to_json(runs[j]->model));
    }
  }
  return report;
}

void write_report_csv(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "condition,mu,rho,seed,test_mse,test_l1\n";
  for (const auto& c : report.cells)
    for (const auto& s : c.seeds)
      out << fmt::format("{},{},{},{},{},{}\n", c.condition, c.use_mu ? 1 : 0, c.use_rho ? 1 : 0, s.seed, s.test_mse,
                         s.test_l1);
  if (!out) throw IoError("write failed for " + path.string());
}

void write_report_markdown(const std::filesystem::path& path, const MetricsReport& report) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "| Condition | Mu | Rho | Test MSE | Test L1 |\n";
  out << "|---|:-:|:-:|--:|--:|\n";
  for (const auto& c : report.cells)
    out << fmt::format("| {} | {} | {} | {:.2f} | {:.2f} |\n", c.condition, c.use_mu ? "✓" : "✗",
                       c.use_rho ? "✓" : "✗", c.mse_mean, c.l1_mean);
  out << "\nMeans over " << (report.cells.empty() ? 0 : report.cells.front().seeds.size())
      << " seeds; RUL errors in cycles.\n\n";
  out << "| Condition | Mu | Rho | MSE std | L1 std |\n|---|:-:|:-:|--:|--:|\n";
  for (const auto& c : report.cells)
    out << fmt::format("| {} | {} | {} | {:.2f} | {:.2f} |\n", c.condition, c.use_mu ? "✓" : "✗",
                       c.use_rho ? "✓" : "✗", c.mse_std, c.l1_std);
  if (!report.data_source.empty()) out << "\nData: files from " << report.data_source << '\n';
}

}  // namespace piml
