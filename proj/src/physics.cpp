#include "piml/physics.hpp"

#include <algorithm>
#include <cmath>

#include "piml/error.hpp"

namespace piml {

PathEnsemble build_ensemble(int sensor_id, const std::vector<std::vector<double>>& paths) {
  if (paths.size() < 2) throw TooFewPaths(paths.size());
  PathEnsemble e;
  e.sensor_id = sensor_id;
  std::size_t t_max = 0;
  for (const auto& p : paths) {
    if (p.empty()) throw InvalidArgument("empty sample path");
    t_max = std::max(t_max, p.size());
  }
  e.paths = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(paths.size()), static_cast<Eigen::Index>(t_max));
  for (std::size_t k = 0; k < paths.size(); ++k) {
    for (std::size_t t = 0; t < paths[k].size(); ++t)
      e.paths(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(t)) = paths[k][t];
    e.original_lengths.push_back(static_cast<int>(paths[k].size()));
  }
  e.grid.resize(t_max);
  for (std::size_t t = 0; t < t_max; ++t) e.grid[t] = static_cast<int>(t + 1);
  return e;
}

PathEnsemble build_ensemble(const TrajectorySet& set, int sensor_id) {
  const auto col = static_cast<Eigen::Index>(set.sensor_column(sensor_id));
  std::vector<std::vector<double>> paths;
  paths.reserve(set.trajectories.size());
  for (const auto& traj : set.trajectories) {
    const auto& v = traj.values;
    paths.emplace_back(v.rows());
    for (Eigen::Index t = 0; t < v.rows(); ++t) paths.back()[t] = v(t, col);
  }
  return build_ensemble(sensor_id, paths);
}

const TimestepPhysics& SensorPhysics::at_clamped(int k) const {
  if (steps.empty()) throw InvalidArgument("empty physics grid");
  const int idx = std::clamp(k, 1, t_max()) - 1;
  return steps[static_cast<std::size_t>(idx)];
}

std::vector<double> finite_difference(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<double> d(n, 0.0);
  if (n < 2) return d;
  d[0] = values[1] - values[0];
  d[n - 1] = values[n - 1] - values[n - 2];
  for (std::size_t k = 1; k + 1 < n; ++k) d[k] = 0.5 * (values[k + 1] - values[k - 1]);
  return d;
}

namespace {

void fill_from_samples(std::vector<double>& samples, const PhysicsOptions& options, TimestepPhysics& step) {
  // sorted so that every reduction is independent of path order
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double sum = 0.0, sum_sq = 0.0;
  for (double x : samples) {
    sum += x;
    sum_sq += x * x;
  }
  step.mean = sum / n;
  step.r2 = sum_sq / n;
  double ss = 0.0;
  for (double x : samples) ss += (x - step.mean) * (x - step.mean);
  step.var = ss / n;

  step.modality = detect_modality(samples, options.modality, options.kmeans);
  const auto clusters = kmeans_1d(samples, step.modality, options.kmeans);
  step.modality = static_cast<int>(clusters.centroids.size());
  step.mu = clusters.centroids;
  step.rho = clusters.variances;
  step.weights = clusters.weights;
}

}  // namespace

SensorPhysics estimate_physics(const PathEnsemble& ensemble, const PhysicsOptions& options) {
  if (ensemble.path_count() < 2) throw TooFewPaths(ensemble.path_count());
  SensorPhysics phys;
  phys.sensor_id = ensemble.sensor_id;
  phys.grid = ensemble.grid;
  const int t_max = ensemble.t_max();
  phys.steps.resize(static_cast<std::size_t>(t_max));

  std::optional<std::size_t> last_supported;
  std::vector<double> samples;
  for (int k = 1; k <= t_max; ++k) {
    auto& step = phys.steps[static_cast<std::size_t>(k - 1)];
    samples.clear();
    int alive = 0;
    for (std::size_t p = 0; p < ensemble.path_count(); ++p) {
      const bool is_alive = ensemble.original_lengths[p] >= k;
      alive += is_alive ? 1 : 0;
      if (is_alive || options.include_extended_zeros)
        samples.push_back(ensemble.paths(static_cast<Eigen::Index>(p), k - 1));
    }
    const bool supported = samples.size() >= options.min_alive_paths;
    if (!supported && last_supported) {
      step = phys.steps[*last_supported];
      step.carried = true;
    } else {
      fill_from_samples(samples, options, step);
      step.carried = false;
      if (supported) last_supported = static_cast<std::size_t>(k - 1);
    }
    step.k = k;
    step.alive = alive;
  }

  std::vector<double> mean(static_cast<std::size_t>(t_max));
  for (int k = 0; k < t_max; ++k) mean[k] = phys.steps[k].mean;
  const auto a_bar = finite_difference(mean);
  for (int k = 0; k < t_max; ++k) phys.steps[k].a_bar = a_bar[k];
  return phys;
}

std::vector<SensorPhysics> estimate_all(const TrajectorySet& train, const PhysicsOptions& options) {
  std::vector<SensorPhysics> out;
  out.reserve(train.retained_sensor_ids.size());
  for (int id : train.retained_sensor_ids) out.push_back(estimate_physics(build_ensemble(train, id), options));
  return out;
}

ModeMoments interpolate(const SensorPhysics& physics, double t) {
  const int t_max = physics.t_max();
  if (!(t >= 1.0 && t <= static_cast<double>(t_max)))
    throw OutOfRange("t = " + std::to_string(t) + " outside [1, " + std::to_string(t_max) + "]");
  const int k0 = static_cast<int>(std::floor(t));
  const double frac = t - k0;
  const auto& lo = physics.steps[static_cast<std::size_t>(k0 - 1)];
  auto moments_of = [](const TimestepPhysics& s) { return ModeMoments{s.modality, s.mu, s.rho}; };
  if (frac == 0.0) return moments_of(lo);
  const auto& hi = physics.steps[static_cast<std::size_t>(k0)];
  if (lo.modality != hi.modality) return moments_of(frac <= 0.5 ? lo : hi);
  ModeMoments m;
  m.modality = lo.modality;
  for (std::size_t i = 0; i < lo.mu.size(); ++i) {
    m.mu.push_back((1.0 - frac) * lo.mu[i] + frac * hi.mu[i]);
    m.rho.push_back((1.0 - frac) * lo.rho[i] + frac * hi.rho[i]);
  }
  return m;
}

double moment_identity_residual(const SensorPhysics& physics) {
  const std::size_t n = physics.steps.size();
  if (n < 3) return 0.0;
  std::vector<double> mean(n), var(n), r2(n);
  for (std::size_t k = 0; k < n; ++k) {
    mean[k] = physics.steps[k].mean;
    var[k] = physics.steps[k].var;
    r2[k] = physics.steps[k].r2;
  }
  const auto d_var = finite_difference(var);
  const auto d_r2 = finite_difference(r2);
  double worst = 0.0;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double stencil_mean = 0.5 * (mean[k + 1] + mean[k - 1]);
    const double rhs = d_r2[k] - 2.0 * stencil_mean * physics.steps[k].a_bar;
    worst = std::max(worst, std::abs(d_var[k] - rhs));
  }
  return worst;
}

}  // namespace piml
