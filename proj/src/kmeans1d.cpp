#include "piml/kmeans1d.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "piml/error.hpp"

namespace piml {

namespace {

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

// Best split of sorted data into a prefix and suffix, by prefix sums.
std::pair<double, double> best_sorted_split(std::span<const double> samples) {
  std::vector<double> s(samples.begin(), samples.end());
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  const double shift = mean_of(s);  // centring keeps the prefix-sum SSE well conditioned
  std::vector<double> p1(n + 1, 0.0), p2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = s[i] - shift;
    p1[i + 1] = p1[i] + v;
    p2[i + 1] = p2[i] + v * v;
  }
  auto sse = [&](std::size_t a, std::size_t b) {
    const double m = static_cast<double>(b - a);
    const double sum = p1[b] - p1[a];
    return std::max(0.0, (p2[b] - p2[a]) - sum * sum / m);
  };
  std::size_t best = 1;
  double best_sse = sse(0, 1) + sse(1, n);
  for (std::size_t i = 2; i < n; ++i) {
    if (s[i] == s[i - 1]) continue;  // equal values never straddle a split
    const double v = sse(0, i) + sse(i, n);
    if (v < best_sse) {
      best_sse = v;
      best = i;
    }
  }
  const double left = shift + (p1[best] / static_cast<double>(best));
  const double right = shift + (p1[n] - p1[best]) / static_cast<double>(n - best);
  return {left, right};
}

struct Partition {
  std::vector<int> assignments;
  std::vector<double> sums{0.0, 0.0};
  std::vector<std::size_t> counts{0, 0};
};

Partition assign(std::span<const double> samples, double c0, double c1) {
  Partition p;
  p.assignments.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int a = std::abs(samples[i] - c0) <= std::abs(samples[i] - c1) ? 0 : 1;
    p.assignments[i] = a;
    p.sums[a] += samples[i];
    ++p.counts[a];
  }
  return p;
}

double within_sse(std::span<const double> samples, const std::vector<int>& assignments,
                  const std::vector<double>& centroids) {
  double sse = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double d = samples[i] - centroids[assignments[i]];
    sse += d * d;
  }
  return sse;
}

void fill_cluster_stats(std::span<const double> samples, ClusterResult& r) {
  const std::size_t k = r.centroids.size();
  std::vector<double> ss(k, 0.0);
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const int a = r.assignments[i];
    const double d = samples[i] - r.centroids[a];
    ss[a] += d * d;
    ++counts[a];
  }
  r.weights.assign(k, 0.0);
  r.variances.assign(k, 0.0);
  r.within_sse = 0.0;
  for (std::size_t m = 0; m < k; ++m) {
    r.weights[m] = static_cast<double>(counts[m]) / static_cast<double>(samples.size());
    r.variances[m] = ss[m] / static_cast<double>(counts[m]);
    r.within_sse += ss[m];
  }
}

ClusterResult single_cluster(std::span<const double> samples) {
  ClusterResult r;
  r.centroids = {mean_of(samples)};
  r.assignments.assign(samples.size(), 0);
  fill_cluster_stats(samples, r);
  r.weights = {1.0};
  r.sse_trace = {r.within_sse};
  return r;
}

}  // namespace

ClusterResult kmeans_1d(std::span<const double> samples, int k, const KMeansOptions& options) {
  if (k != 1 && k != 2) throw InvalidArgument("kmeans_1d supports K = 1 or 2");
  if (samples.size() < static_cast<std::size_t>(k)) throw InvalidArgument("kmeans_1d: fewer samples than clusters");
  if (!(options.tol > 0.0)) throw InvalidArgument("kmeans_1d: tol must be positive");
  if (options.max_iter < 1) throw InvalidArgument("kmeans_1d: max_iter must be >= 1");

  if (k == 1) return single_cluster(samples);

  const auto [lo, hi] = std::minmax_element(samples.begin(), samples.end());
  if (*lo == *hi) {
    auto r = single_cluster(samples);
    r.degenerate = true;
    return r;
  }

  double c0, c1;
  if (options.init == KMeansInit::SortedSplit) {
    std::tie(c0, c1) = best_sorted_split(samples);
  } else {
    c0 = *lo;
    c1 = *hi;
  }

  ClusterResult r;
  Partition part = assign(samples, c0, c1);
  for (int it = 0; it < options.max_iter; ++it) {
    // an emptied cluster is reseeded at the sample farthest from the other centroid
    for (int m = 0; m < 2; ++m) {
      if (part.counts[m] != 0) continue;
      const double other = m == 0 ? c1 : c0;
      const auto far = std::max_element(samples.begin(), samples.end(), [&](double a, double b) {
        return std::abs(a - other) < std::abs(b - other);
      });
      (m == 0 ? c0 : c1) = *far;
      part = assign(samples, c0, c1);
    }
    const double n0 = part.sums[0] / static_cast<double>(part.counts[0]);
    const double n1 = part.sums[1] / static_cast<double>(part.counts[1]);
    const double moved = std::max(std::abs(n0 - c0), std::abs(n1 - c1));
    c0 = n0;
    c1 = n1;
    r.iterations = it + 1;
    auto next = assign(samples, c0, c1);
    const bool stable = next.assignments == part.assignments;
    part = std::move(next);
    r.sse_trace.push_back(within_sse(samples, part.assignments, {c0, c1}));
    if (moved < options.tol || stable) break;
  }
  if (part.counts[0] == 0 || part.counts[1] == 0) {
    auto single = single_cluster(samples);
    single.degenerate = true;
    return single;
  }
  // recompute centroids from the final partition so centroids and assignments agree
  c0 = part.sums[0] / static_cast<double>(part.counts[0]);
  c1 = part.sums[1] / static_cast<double>(part.counts[1]);
  r.assignments = std::move(part.assignments);
  if (c0 > c1) {
    std::swap(c0, c1);
    for (int& a : r.assignments) a = 1 - a;
  }
  r.centroids = {c0, c1};
  fill_cluster_stats(samples, r);
  return r;
}

int detect_modality(std::span<const double> samples, const ModalityOptions& options, const KMeansOptions& kmeans) {
  if (samples.size() < options.min_samples || samples.size() < 2) return 1;
  const auto one = kmeans_1d(samples, 1, kmeans);
  if (one.within_sse <= 0.0) return 1;
  const auto two = kmeans_1d(samples, 2, kmeans);
  if (two.degenerate) return 1;
  const double ratio = two.within_sse / one.within_sse;
  const double pooled_std = std::sqrt(one.within_sse / static_cast<double>(samples.size()));
  const double gap = two.centroids[1] - two.centroids[0];
  return (ratio < options.sse_ratio && gap >= options.separation * pooled_std) ? 2 : 1;
}

}  // namespace piml
