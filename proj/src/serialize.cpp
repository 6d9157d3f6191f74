#include "piml/serialize.hpp"

#include <fstream>

#include "piml/error.hpp"

namespace piml {

using nlohmann::json;

namespace {

void expect_schema(const json& doc, const char* schema) {
  if (!doc.is_object() || !doc.contains("schema") || doc["schema"] != schema)
    throw ParseError(std::string("expected a document with schema ") + schema);
}

json matrix_rows(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_rows(const json& rows, Eigen::Index cols) {
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), cols);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto& row = rows.at(static_cast<std::size_t>(r));
    if (static_cast<Eigen::Index>(row.size()) != cols) throw ParseError("ragged matrix in document");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = row.at(static_cast<std::size_t>(c)).get<double>();
  }
  return m;
}

json vector_json(const Eigen::VectorXd& v) { return json(std::vector<double>(v.data(), v.data() + v.size())); }

Eigen::VectorXd vector_from(const json& a) {
  const auto values = a.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

json to_json(const TrajectorySet& set) {
  json norm = json::array();
  for (const auto& s : set.normalization.sensors)
    norm.push_back({{"mean", s.mean}, {"std", s.stddev}, {"constant", s.constant}});
  json trajs = json::array();
  for (const auto& t : set.trajectories)
    trajs.push_back({{"unit_id", t.unit_id}, {"values", matrix_rows(t.values)}, {"rul", t.rul}});
  return {{"schema", kTrajectorySchema},
          {"split", to_string(set.split)},
          {"retained_sensor_ids", set.retained_sensor_ids},
          {"normalization", norm},
          {"trajectories", trajs}};
}

TrajectorySet trajectory_set_from_json(const json& doc) {
  expect_schema(doc, kTrajectorySchema);
  TrajectorySet set;
  set.split = split_from_string(doc.at("split").get<std::string>());
  set.retained_sensor_ids = doc.at("retained_sensor_ids").get<std::vector<int>>();
  for (const auto& s : doc.at("normalization"))
    set.normalization.sensors.push_back(
        {s.at("mean").get<double>(), s.at("std").get<double>(), s.at("constant").get<bool>()});
  const auto cols = static_cast<Eigen::Index>(set.retained_sensor_ids.size());
  for (const auto& t : doc.at("trajectories")) {
    Trajectory traj;
    traj.unit_id = t.at("unit_id").get<int>();
    traj.values = matrix_from_rows(t.at("values"), cols);
    traj.rul = t.at("rul").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(traj.rul.size()) != traj.values.rows())
      throw ParseError("trajectory " + std::to_string(traj.unit_id) + ": label count differs from cycle count");
    set.trajectories.push_back(std::move(traj));
  }
  return set;
}

json to_json(const SensorPhysics& physics) {
  json steps = json::array();
  for (const auto& s : physics.steps) {
    steps.push_back({{"k", s.k},
                     {"modality", s.modality},
                     {"mu", s.mu},
                     {"rho", s.rho},
                     {"weights", s.weights},
                     {"r2", s.r2},
                     {"a_bar", s.a_bar},
                     {"alive", s.alive},
                     {"mean", s.mean},
                     {"var", s.var},
                     {"carried", s.carried}});
  }
  return {{"schema", kPhysicsSchema}, {"sensor_id", physics.sensor_id}, {"grid", physics.grid}, {"timesteps", steps}};
}

SensorPhysics sensor_physics_from_json(const json& doc) {
  expect_schema(doc, kPhysicsSchema);
  SensorPhysics p;
  p.sensor_id = doc.at("sensor_id").get<int>();
  p.grid = doc.at("grid").get<std::vector<int>>();
  for (const auto& s : doc.at("timesteps")) {
    TimestepPhysics t;
    t.k = s.at("k").get<int>();
    t.modality = s.at("modality").get<int>();
    t.mu = s.at("mu").get<std::vector<double>>();
    t.rho = s.at("rho").get<std::vector<double>>();
    t.weights = s.at("weights").get<std::vector<double>>();
    t.r2 = s.at("r2").get<double>();
    t.a_bar = s.at("a_bar").get<double>();
    t.alive = s.at("alive").get<int>();
    t.mean = s.at("mean").get<double>();
    t.var = s.at("var").get<double>();
    t.carried = s.value("carried", false);
    const auto m = static_cast<std::size_t>(t.modality);
    if ((m != 1 && m != 2) || t.mu.size() != m || t.rho.size() != m || t.weights.size() != m)
      throw ParseError("timestep " + std::to_string(t.k) + ": mode arrays disagree with modality");
    p.steps.push_back(std::move(t));
  }
  if (p.grid.size() != p.steps.size()) throw ParseError("grid length differs from timestep count");
  return p;
}

json checkpoint_to_json(const TrainedModel& m, const std::string& config_hash) {
  const auto& s = m.model.shape();
  const auto& a = m.adam.config;
  return {{"schema", kCheckpointSchema},
          {"config_hash", config_hash},
          {"shape",
           {{"input_dim", s.input_dim},
            {"hidden", s.hidden},
            {"mlp_hidden", s.mlp_hidden},
            {"seq_len", s.seq_len},
            {"head_activation", to_string(s.head_activation)}}},
          {"features",
           {{"use_mu", m.features.use_mu},
            {"use_rho", m.features.use_rho},
            {"bimodal_feed", to_string(m.features.bimodal_feed)}}},
          {"params", vector_json(m.model.params())},
          {"adam",
           {{"m", vector_json(m.adam.m)},
            {"v", vector_json(m.adam.v)},
            {"t", m.adam.t},
            {"lr", a.lr},
            {"beta1", a.beta1},
            {"beta2", a.beta2},
            {"eps", a.eps},
            {"clip_norm", a.clip_norm ? json(*a.clip_norm) : json(nullptr)}}},
          {"target_scale", m.target_scale},
          {"best_epoch", m.best_epoch},
          {"seed", m.seed},
          {"rng_state", m.rng_state}};
}

TrainedModel checkpoint_from_json(const json& doc, std::string* config_hash) {
  expect_schema(doc, kCheckpointSchema);
  const auto& sj = doc.at("shape");
  LstmShape shape;
  shape.input_dim = sj.at("input_dim").get<int>();
  shape.hidden = sj.at("hidden").get<int>();
  shape.mlp_hidden = sj.at("mlp_hidden").get<int>();
  shape.seq_len = sj.at("seq_len").get<int>();
  shape.head_activation = activation_from_string(sj.at("head_activation").get<std::string>());

  TrainedModel m;
  m.model = LstmModel(shape);
  const auto params = vector_from(doc.at("params"));
  if (params.size() != m.model.params().size()) throw ParseError("checkpoint parameter count does not match shape");
  m.model.params() = params;
  const auto& fj = doc.at("features");
  m.features.use_mu = fj.at("use_mu").get<bool>();
  m.features.use_rho = fj.at("use_rho").get<bool>();
  m.features.bimodal_feed = bimodal_feed_from_string(fj.at("bimodal_feed").get<std::string>());
  const auto& aj = doc.at("adam");
  m.adam.m = vector_from(aj.at("m"));
  m.adam.v = vector_from(aj.at("v"));
  m.adam.t = aj.at("t").get<std::int64_t>();
  m.adam.config.lr = aj.at("lr").get<double>();
  m.adam.config.beta1 = aj.at("beta1").get<double>();
  m.adam.config.beta2 = aj.at("beta2").get<double>();
  m.adam.config.eps = aj.at("eps").get<double>();
  if (!aj.at("clip_norm").is_null()) m.adam.config.clip_norm = aj.at("clip_norm").get<double>();
  m.target_scale = doc.at("target_scale").get<double>();
  m.best_epoch = doc.at("best_epoch").get<int>();
  m.seed = doc.at("seed").get<std::uint64_t>();
  m.rng_state = doc.at("rng_state").get<std::string>();
  if (config_hash) *config_hash = doc.at("config_hash").get<std::string>();
  return m;
}

json history_to_json(const TrainedModel& model) {
  json epochs = json::array();
  for (const auto& e : model.history)
    epochs.push_back({{"epoch", e.epoch},
                      {"train_mse", e.train_mse},
                      {"select_mse", e.select_mse ? json(*e.select_mse) : json(nullptr)}});
  return {{"best_epoch", model.best_epoch}, {"seed", model.seed}, {"epochs", epochs}};
}

json to_json(const MetricsReport& report) {
  json cells = json::array();
  for (const auto& c : report.cells) {
    json seeds = json::array();
    for (const auto& s : c.seeds)
      seeds.push_back(
          {{"seed", s.seed}, {"test_mse", s.test_mse}, {"test_l1", s.test_l1}, {"best_epoch", s.best_epoch}});
    cells.push_back({{"condition", c.condition},
                     {"mu", c.use_mu},
                     {"rho", c.use_rho},
                     {"mse_mean", c.mse_mean},
                     {"mse_std", c.mse_std},
                     {"l1_mean", c.l1_mean},
                     {"l1_std", c.l1_std},
                     {"seeds", seeds}});
  }
  return {{"schema", kReportSchema},
          {"data_source", report.data_source},
          {"runtime_seconds", report.runtime_seconds},
          {"cells", cells}};
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

}  // namespace piml
