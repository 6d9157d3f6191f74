#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "piml/kmeans1d.hpp"
#include "piml/random.hpp"

using namespace piml;

namespace {

// Exhaustive oracle: SSE of every contiguous split of the sorted samples,
// each computed from scratch.
double brute_force_sse(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  auto sse = [&](std::size_t lo, std::size_t hi) {
    double mean = 0;
    for (std::size_t i = lo; i < hi; ++i) mean += x[i];
    mean /= static_cast<double>(hi - lo);
    double s = 0;
    for (std::size_t i = lo; i < hi; ++i) s += (x[i] - mean) * (x[i] - mean);
    return s;
  };
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t split = 1; split < x.size(); ++split) best = std::min(best, sse(0, split) + sse(split, x.size()));
  return best;
}

std::vector<double> random_sample(Rng& rng) {
  const int n = 2 + static_cast<int>(rng.index(63));
  std::vector<double> x(n);
  switch (rng.index(3)) {
    case 0:
      for (auto& v : x) v = rng.normal();
      break;
    case 1:  // two populations of random size and spread
      for (auto& v : x) v = rng.uniform() < 0.3 ? rng.normal(4.0, 1.5) : rng.normal(0.0, 0.5);
      break;
    default:  // heavy tail
      for (auto& v : x) v = std::pow(rng.uniform() + 1e-3, -1.5);
  }
  return x;
}

}  // namespace

TEST_CASE("K=1 of identical samples") {
  const std::vector<double> x{1, 1, 1};
  const auto r = kmeans_1d(x, 1);
  CHECK(r.centroids == std::vector<double>{1.0});
  CHECK(r.within_sse == 0.0);
}

TEST_CASE("symmetric separation") {
  const std::vector<double> x{0, 0, 10, 10};
  const auto r = kmeans_1d(x, 2);
  CHECK(r.centroids == std::vector<double>{0.0, 10.0});
  CHECK(r.weights == std::vector<double>{0.5, 0.5});
}

TEST_CASE("[0,1,9,10] splits into (0.5, 9.5) with SSE 1") {
  const std::vector<double> x{0, 1, 9, 10};
  const auto r = kmeans_1d(x, 2);
  CHECK(r.centroids[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(r.centroids[1] == doctest::Approx(9.5).epsilon(1e-15));
  CHECK(r.within_sse == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(r.within_sse == doctest::Approx(brute_force_sse(x)).epsilon(1e-12));
}

TEST_CASE("K=1 centroid is the arithmetic mean") {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const auto x = random_sample(rng);
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
    CHECK(std::abs(kmeans_1d(x, 1).centroids[0] - mean) <= 1e-12 * std::max(1.0, std::abs(mean)));
  }
}

TEST_CASE("K=2 matches the sorted-split brute force") {
  Rng rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const auto x = random_sample(rng);
    const auto r = kmeans_1d(x, 2);
    const double oracle = brute_force_sse(x);
    REQUIRE(std::abs(r.within_sse - oracle) <= 1e-9 * std::max(1.0, oracle));
  }
}

TEST_CASE("cluster result invariants") {
  Rng rng(19);
  for (int trial = 0; trial < 300; ++trial) {
    const auto x = random_sample(rng);
    const auto r1 = kmeans_1d(x, 1);
    const auto r2 = kmeans_1d(x, 2);
    CHECK(r2.within_sse <= r1.within_sse + 1e-12);
    CHECK(std::accumulate(r2.weights.begin(), r2.weights.end(), 0.0) == doctest::Approx(1.0));
    CHECK(std::is_sorted(r2.centroids.begin(), r2.centroids.end()));
    std::vector<int> counts(r2.centroids.size(), 0);
    for (int a : r2.assignments) ++counts.at(a);
    for (int c : counts) CHECK(c > 0);
  }
}

TEST_CASE("Lloyd from the extremes never increases SSE") {
  Rng rng(23);
  KMeansOptions opts;
  opts.init = KMeansInit::Extremes;
  for (int trial = 0; trial < 500; ++trial) {
    const auto r = kmeans_1d(random_sample(rng), 2, opts);
    for (std::size_t i = 1; i < r.sse_trace.size(); ++i) CHECK(r.sse_trace[i] <= r.sse_trace[i - 1] + 1e-12);
  }
}

TEST_CASE("Lloyd from the extremes can stall where the sorted-split seed does not") {
  // seeds 1 and 20 settle on {1, 9} | {12, 18, 18, 19, 20}; the optimum moves 12 down
  const std::vector<double> x{1, 9, 12, 18, 18, 19, 20};
  KMeansOptions extremes;
  extremes.init = KMeansInit::Extremes;
  const double oracle = brute_force_sse(x);
  CHECK(oracle == doctest::Approx(67.41666666666667).epsilon(1e-12));
  CHECK(kmeans_1d(x, 2).within_sse == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(kmeans_1d(x, 2, extremes).within_sse == doctest::Approx(71.2).epsilon(1e-12));
}

TEST_CASE("identical samples with K=2 degrade to one cluster") {
  const std::vector<double> x(10, 3.0);
  const auto r = kmeans_1d(x, 2);
  CHECK(r.degenerate);
  CHECK(r.centroids.size() == 1);
}

TEST_CASE("invalid K and empty input are rejected") {
  const std::vector<double> x{1, 2};
  CHECK_THROWS(kmeans_1d(x, 3));
  CHECK_THROWS(kmeans_1d(std::vector<double>{}, 1));
}

TEST_CASE("modality detection") {
  CHECK(detect_modality(std::vector<double>{0, 0, 0, 0, 10, 10, 10, 10}) == 2);
  CHECK(detect_modality(std::vector<double>{1.0, 1.1, 0.9, 1.05, 0.95, 1.02, 0.98, 1.0}) == 1);
  CHECK(detect_modality(std::vector<double>{0, 0, 0, 10, 10, 10, 10}) == 1);  // 7 samples
  CHECK(detect_modality(std::vector<double>(12, 2.5)) == 1);
}

TEST_CASE("tight-cluster example by hand: ratio and separation") {
  const std::vector<double> x{1.0, 1.1, 0.9, 1.05, 0.95, 1.02, 0.98, 1.0};
  const auto k1 = kmeans_1d(x, 1);
  const auto k2 = kmeans_1d(x, 2);
  const double pooled_sd = std::sqrt(k1.within_sse / static_cast<double>(x.size()));
  CHECK(k2.centroids[1] - k2.centroids[0] < 2.0 * pooled_sd);
}
