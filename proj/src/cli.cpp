#include "piml/cli.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "piml/config.hpp"
#include "piml/error.hpp"
#include "piml/harness.hpp"
#include "piml/random.hpp"
#include "piml/serialize.hpp"
#include "piml/synth.hpp"

namespace piml {

namespace fs = std::filesystem;

DirectoryLock::DirectoryLock(const fs::path& dir) : lock_path_(dir / ".piml.lock") {
  fs::create_directories(dir);
  // "x" gives O_EXCL semantics: creation fails when the file already exists
  std::FILE* f = std::fopen(lock_path_.c_str(), "wx");
  if (!f) {
    lock_path_.clear();
    throw IoError("output directory " + dir.string() + " is locked by another run (" +
                  (dir / ".piml.lock").string() + ")");
  }
  std::fclose(f);
}

DirectoryLock::~DirectoryLock() {
  if (lock_path_.empty()) return;
  std::error_code ec;
  fs::remove(lock_path_, ec);
}

namespace {

struct Context {
  RunConfig config;
  std::string hash;
  std::vector<std::string> artifacts;
  std::ostream& out;
};

fs::path train_set_path(const RunConfig& c) { return c.out_dir / "trajectories_train.json"; }
fs::path test_set_path(const RunConfig& c) { return c.out_dir / "trajectories_test.json"; }
fs::path physics_dir(const RunConfig& c) { return c.out_dir / "physics"; }
fs::path physics_path(const RunConfig& c, int sensor_id) {
  return physics_dir(c) / fmt::format("sensor_{:02d}.json", sensor_id);
}
fs::path run_dir(const RunConfig& c, bool mu, bool rho, std::uint64_t seed) {
  return c.out_dir / "runs" / fmt::format("mu{}_rho{}_seed{}", mu ? 1 : 0, rho ? 1 : 0, seed);
}

TrajectorySet load_train(const RunConfig& c) {
  if (fs::exists(train_set_path(c))) return trajectory_set_from_json(read_json_file(train_set_path(c)));
  return ingest_train(condition_files(c.data_dir, c.train.condition), c.train.ingest);
}

TrajectorySet load_test(const RunConfig& c, const TrajectorySet& train) {
  if (fs::exists(test_set_path(c))) return trajectory_set_from_json(read_json_file(test_set_path(c)));
  return ingest_test(condition_files(c.data_dir, c.train.condition), train.normalization, c.train.ingest);
}

PhysicsBundle load_physics(const RunConfig& c, const TrajectorySet& train) {
  PhysicsBundle bundle;
  bundle.sensor_ids = train.retained_sensor_ids;
  for (int id : train.retained_sensor_ids) {
    const auto path = physics_path(c, id);
    if (!fs::exists(path)) throw IoError("missing physics estimate " + path.string() + " (run `estimate` first)");
    bundle.sensors.push_back(sensor_physics_from_json(read_json_file(path)));
  }
  return bundle;
}

void write_manifest(const Context& ctx, const std::string& subcommand) {
  nlohmann::json doc{{"schema", "piml.manifest/1"},
                     {"subcommand", subcommand},
                     {"version", kVersion},
                     {"config_hash", ctx.hash},
                     {"config", canonical_config(ctx.config)},
                     {"master_seed", ctx.config.train.master_seed},
                     {"seeds", ctx.config.train.seeds},
                     {"artifacts", ctx.artifacts}};
  write_json_file(ctx.config.out_dir / fmt::format("manifest_{}.json", subcommand), doc);
}

void cmd_ingest(Context& ctx) {
  const auto& c = ctx.config;
  const auto data = load_condition(c.data_dir, c.train.condition, c.train.ingest);
  write_json_file(train_set_path(c), to_json(data.train));
  write_json_file(test_set_path(c), to_json(data.test));
  ctx.artifacts = {train_set_path(c).string(), test_set_path(c).string()};
  ctx.out << fmt::format("ingested {}: {} train units, {} test units, {} sensors retained\n", c.train.condition,
                         data.train.trajectories.size(), data.test.trajectories.size(),
                         data.train.retained_sensor_ids.size());
}

void cmd_estimate(Context& ctx) {
  const auto& c = ctx.config;
  const auto train = load_train(c);
  const auto bundle = estimate_bundle(train, c.train.physics);
  for (const auto& phys : bundle.sensors) {
    auto doc = to_json(phys);
    doc["condition"] = c.train.condition;
    write_json_file(physics_path(c, phys.sensor_id), doc);
    ctx.artifacts.push_back(physics_path(c, phys.sensor_id).string());
    int bimodal = 0;
    for (const auto& s : phys.steps) bimodal += s.modality == 2 ? 1 : 0;
    ctx.out << fmt::format("sensor {:2d}: T_max {:4d}, bimodal timesteps {:4d}, moment residual {:.3e}\n",
                           phys.sensor_id, phys.t_max(), bimodal, moment_identity_residual(phys));
  }
}

void cmd_generate(Context& ctx) {
  const auto& c = ctx.config;
  if (!fs::exists(physics_dir(c))) throw IoError("missing physics directory " + physics_dir(c).string());
  std::vector<SensorPhysics> physics;
  for (const auto& entry : fs::directory_iterator(physics_dir(c)))
    if (entry.path().extension() == ".json") physics.push_back(sensor_physics_from_json(read_json_file(entry.path())));
  std::sort(physics.begin(), physics.end(), [](const auto& a, const auto& b) { return a.sensor_id < b.sensor_id; });
  if (physics.empty()) throw IoError("no physics estimates in " + physics_dir(c).string());
  int length = c.synth_length.value_or(physics.front().t_max());
  if (!c.synth_length)
    for (const auto& p : physics) length = std::min(length, p.t_max());
  const auto seed = derive_seed(c.train.master_seed, "generate");
  const auto dataset = generate_dataset(physics, c.synth_paths, length, seed);
  const auto csv = c.out_dir / "synthetic.csv";
  write_synthetic_csv(csv, dataset, c.synth_paths, seed);
  ctx.artifacts = {csv.string(), (c.out_dir / "synthetic.json").string()};
  ctx.out << fmt::format("generated {} paths x {} cycles for {} sensors\n", c.synth_paths, length, physics.size());
}

void cmd_train(Context& ctx) {
  const auto& c = ctx.config;
  const auto train_set = load_train(c);
  const bool needs_physics = c.train.use_mu || c.train.use_rho;
  const auto physics = needs_physics ? load_physics(c, train_set) : PhysicsBundle{train_set.retained_sensor_ids, {}};
  std::optional<TrajectorySet> test_set;
  if (c.train.paper_protocol) test_set = load_test(c, train_set);
  for (auto seed : c.train.seeds) {
    const auto model = train_cell(c.train, train_set, test_set ? &*test_set : nullptr, physics, c.train.use_mu,
                                  c.train.use_rho, seed);
    const auto dir = run_dir(c, c.train.use_mu, c.train.use_rho, seed);
    write_json_file(dir / "checkpoint.json", checkpoint_to_json(model, ctx.hash));
    write_json_file(dir / "history.json", history_to_json(model));
    ctx.artifacts.push_back((dir / "checkpoint.json").string());
    ctx.out << fmt::format("seed {}: best epoch {} of {}\n", seed, model.best_epoch, model.history.size());
  }
}

void cmd_evaluate(Context& ctx) {
  const auto& c = ctx.config;
  const auto train_set = load_train(c);
  const auto test_set = load_test(c, train_set);
  const bool needs_physics = c.train.use_mu || c.train.use_rho;
  const auto physics = needs_physics ? load_physics(c, train_set) : PhysicsBundle{train_set.retained_sensor_ids, {}};
  MetricsReport report;
  CellMetrics cell;
  cell.condition = c.train.condition;
  cell.use_mu = c.train.use_mu;
  cell.use_rho = c.train.use_rho;
  for (auto seed : c.train.seeds) {
    const auto path = run_dir(c, c.train.use_mu, c.train.use_rho, seed) / "checkpoint.json";
    if (!fs::exists(path)) throw IoError("missing checkpoint " + path.string() + " (run `train` first)");
    const auto model = checkpoint_from_json(read_json_file(path));
    const auto m = evaluate(model, test_set, c.train.window_len, &physics);
    cell.seeds.push_back({seed, m.mse, m.l1, model.best_epoch});
    ctx.out << fmt::format("seed {}: test mse {:.4f}, l1 {:.4f} over {} units\n", seed, m.mse, m.l1, m.count);
  }
  aggregate(cell);
  report.cells.push_back(cell);
  write_report_csv(c.out_dir / "metrics.csv", report);
  write_json_file(c.out_dir / "metrics.json", to_json(report));
  ctx.artifacts = {(c.out_dir / "metrics.csv").string(), (c.out_dir / "metrics.json").string()};
}

void cmd_ablate(Context& ctx) {
  const auto& c = ctx.config;
  const auto report = run_ablation_suite(c.train, c.data_dir, c.out_dir, ctx.hash);
  for (const auto& cell : report.cells)
    ctx.out << fmt::format("{} mu={:d} rho={:d}: mse {:.4f} (sd {:.4f}), l1 {:.4f}\n", cell.condition, cell.use_mu,
                           cell.use_rho, cell.mse_mean, cell.mse_std, cell.l1_mean);
  ctx.artifacts = {(c.out_dir / "report.csv").string(), (c.out_dir / "report.md").string(),
                   (c.out_dir / "report.json").string()};
}

int cmd_gradcheck(Context& ctx) {
  const auto& c = ctx.config;
  const auto seed = derive_seed(c.train.master_seed, "gradcheck");
  LstmShape shape;
  int retained = kSensorCount;
  for (int id : c.train.ingest.drop_sensors) retained -= (id >= 1 && id <= kSensorCount) ? 1 : 0;
  shape.input_dim = c.train.features().feature_dim(retained);
  shape.hidden = c.train.hidden;
  shape.mlp_hidden = c.train.mlp_hidden;
  shape.seq_len = c.train.window_len;
  shape.head_activation = c.train.mlp_activation;
  const auto model = LstmModel::initialized(shape, derive_seed(seed, "model"));
  Rng rng(derive_seed(seed, "batch"));
  std::vector<Eigen::MatrixXd> windows(2, Eigen::MatrixXd(shape.seq_len, shape.input_dim));
  for (auto& w : windows)
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.normal();
  const std::vector<double> targets{rng.normal(), rng.normal()};
  const auto result = grad_check(model, make_batch(windows, targets), c.gradcheck_step);
  ctx.out << fmt::format("max relative error: {:.3e} (parameter {}, analytic {:.6e}, numeric {:.6e})\n",
                         result.max_rel_error, result.worst_index, result.analytic, result.numeric);
  if (!(result.max_rel_error <= c.gradcheck_threshold)) {
    ctx.out << fmt::format("gradient check FAILED: threshold {:.1e}\n", c.gradcheck_threshold);
    return 2;
  }
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Physics-informed RUL toolkit: ingest C-MAPSS data, estimate per-cycle mean/variance physics, "
               "generate synthetic paths, train and evaluate the augmented LSTM"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1, 1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::string data_dir, out_dir, condition;
  std::optional<std::uint64_t> seed;
  bool quiet = false, verbose = false;
  app.add_option("--config", config_path, "flat key = value run configuration")->check(CLI::ExistingFile);
  app.add_option("--set", overrides, "override a config key (key=value), repeatable");
  app.add_option("--data-dir", data_dir, "directory holding train_/test_/RUL_FD00x.txt");
  app.add_option("--out-dir", out_dir, "directory for artifacts");
  app.add_option("--seed", seed, "master seed");
  app.add_option("--condition", condition, "FD001 | FD002 | FD003 | FD004");
  auto* q = app.add_flag("--quiet", quiet, "warnings and errors only");
  app.add_flag("--verbose", verbose, "debug logging")->excludes(q);

  const std::vector<std::pair<std::string, std::string>> commands{
      {"ingest", "parse, label, normalize and serialize the train/test splits"},
      {"estimate", "estimate per-sensor mean/variance physics from the train split"},
      {"generate", "sample synthetic sensor trajectories from the physics"},
      {"train", "train one (mu, rho) cell for every configured seed"},
      {"evaluate", "evaluate trained checkpoints on the test split"},
      {"ablate", "run the four (mu, rho) cells over all seeds and write the report"},
      {"gradcheck", "compare backpropagation against finite differences"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 1;
  }
  const std::string subcommand = app.get_subcommands().front()->get_name();

  spdlog::set_level(quiet ? spdlog::level::warn : verbose ? spdlog::level::debug : spdlog::level::info);
  try {
    RunConfig config = config_path.empty() ? RunConfig{} : load_config(config_path);
    apply_overrides(config, overrides);
    if (!data_dir.empty()) config.data_dir = data_dir;
    if (!out_dir.empty()) config.out_dir = out_dir;
    if (seed) config.train.master_seed = *seed;
    if (!condition.empty()) config.train.condition = condition;
    config.train.validate();

    Context ctx{config, config_hash(config), {}, out};
    int code = 0;
    if (subcommand == "gradcheck") {
      code = cmd_gradcheck(ctx);
      fs::create_directories(config.out_dir);
    } else {
      DirectoryLock lock(config.out_dir);
      if (subcommand == "ingest") cmd_ingest(ctx);
      else if (subcommand == "estimate") cmd_estimate(ctx);
      else if (subcommand == "generate") cmd_generate(ctx);
      else if (subcommand == "train") cmd_train(ctx);
      else if (subcommand == "evaluate") cmd_evaluate(ctx);
      else if (subcommand == "ablate") cmd_ablate(ctx);
      write_manifest(ctx, subcommand);
      return 0;
    }
    write_manifest(ctx, subcommand);
    return code;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace piml
