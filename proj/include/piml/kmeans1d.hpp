#pragma once

#include <span>
#include <vector>

namespace piml {

enum class KMeansInit {
  // Seed Lloyd with the centroids of the best contiguous split of the sorted
  // samples. Lloyd then terminates on its first pass at the global optimum.
  SortedSplit,
  // Seed at (min, max). Lloyd may stop in a local optimum.
  Extremes,
};

struct KMeansOptions {
  double tol = 1e-12;
  int max_iter = 300;
  KMeansInit init = KMeansInit::SortedSplit;
};

struct ClusterResult {
  std::vector<double> centroids;  // ascending
  std::vector<int> assignments;   // per sample, index into centroids
  std::vector<double> weights;    // sample fraction per cluster, sums to 1
  std::vector<double> variances;  // population variance within each cluster
  double within_sse = 0.0;
  int iterations = 0;
  // K=2 requested on identical samples; the result is the K=1 solution.
  bool degenerate = false;
  // within-cluster SSE after each Lloyd iteration
  std::vector<double> sse_trace;
};

// K-means on scalars, K in {1, 2}. K=1 is the arithmetic mean.
ClusterResult kmeans_1d(std::span<const double> samples, int k, const KMeansOptions& options = {});

struct ModalityOptions {
  double sse_ratio = 0.5;   // SSE(K=2)/SSE(K=1) must fall below this
  double separation = 2.0;  // |c2 - c1| in units of the pooled standard deviation
  std::size_t min_samples = 8;
};

// 2 iff SSE(K=2)/SSE(K=1) < sse_ratio and |c2 - c1| >= separation * pooled std.
int detect_modality(std::span<const double> samples, const ModalityOptions& options = {},
                    const KMeansOptions& kmeans = {});

}  // namespace piml
