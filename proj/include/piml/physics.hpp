#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "piml/cmapss.hpp"
#include "piml/kmeans1d.hpp"

namespace piml {

// One sensor's sample paths, zero-extended to the longest path. Row k of
// `paths` is path k; column t-1 holds cycle t.
struct PathEnsemble {
  int sensor_id = 0;
  Eigen::MatrixXd paths;
  std::vector<int> original_lengths;
  std::vector<int> grid;  // 1..T_max

  int t_max() const { return static_cast<int>(paths.cols()); }
  std::size_t path_count() const { return static_cast<std::size_t>(paths.rows()); }
};

PathEnsemble build_ensemble(const TrajectorySet& set, int sensor_id);
PathEnsemble build_ensemble(int sensor_id, const std::vector<std::vector<double>>& paths);

struct PhysicsOptions {
  // Count zero-extended values as samples at timesteps past a path's end.
  bool include_extended_zeros = false;
  // Timesteps with fewer live paths reuse the last well-supported estimate.
  std::size_t min_alive_paths = 8;
  ModalityOptions modality;
  KMeansOptions kmeans;
};

struct TimestepPhysics {
  int k = 0;  // grid cycle
  int modality = 1;
  std::vector<double> mu;       // per mode, ascending
  std::vector<double> rho;      // per mode, within-cluster variance
  std::vector<double> weights;  // per mode, sums to 1
  double mean = 0.0;            // pooled E[S]
  double var = 0.0;             // pooled E[(S - mean)^2]
  double r2 = 0.0;              // pooled E[S^2]
  double a_bar = 0.0;           // finite-difference d(mean)/dt
  int alive = 0;                // paths not yet zero-extended at k
  bool carried = false;         // copied from an earlier well-supported timestep
};

struct SensorPhysics {
  int sensor_id = 0;
  std::vector<int> grid;
  std::vector<TimestepPhysics> steps;  // steps[k-1] belongs to grid cycle k

  int t_max() const { return static_cast<int>(steps.size()); }
  // Values at grid cycle k, clamped into [1, T_max].
  const TimestepPhysics& at_clamped(int k) const;
};

SensorPhysics estimate_physics(const PathEnsemble& ensemble, const PhysicsOptions& options = {});

// Physics for every retained sensor of a training set, in retained order.
std::vector<SensorPhysics> estimate_all(const TrajectorySet& train, const PhysicsOptions& options = {});

struct ModeMoments {
  int modality = 1;
  std::vector<double> mu;
  std::vector<double> rho;
};

// Piecewise-linear interpolation per mode on t in [1, T_max]. Across a
// modality change the nearer grid point wins. Throws OutOfRange.
ModeMoments interpolate(const SensorPhysics& physics, double t);

// Central differences with unit spacing, one-sided at both ends.
std::vector<double> finite_difference(std::span<const double> values);

// max over interior k of |D var(k) - (D R(k) - 2 m(k) a_bar(k))| where m(k) is
// the mean averaged over the two stencil points of D. With that m the discrete
// product rule D(mean^2) = 2 m D(mean) holds exactly, so the residual is a
// rounding-level quantity for any var = R - mean^2.
double moment_identity_residual(const SensorPhysics& physics);

}  // namespace piml
