#pragma once

#include <cstdint>
#include <vector>

#include "dicap/types.hpp"

namespace dicap {

struct KMeansResult {
  MatXd centroids;              // d x k
  std::vector<int> assignment;  // size n, values in [0, k)
  double inertia = 0.0;         // sum of squared distances to assigned centroid
};

/// Lloyd's algorithm over the columns of `points` with seeded multi-restart;
/// returns the lowest-inertia clustering. Empty clusters are reseeded at the
/// point farthest from its current centroid. Throws if k exceeds the number
/// of distinct columns.
KMeansResult kmeans(const MatXd& points, int k, int restarts = 10,
                    int max_iters = 100, std::uint64_t seed = 0);

}  // namespace dicap
