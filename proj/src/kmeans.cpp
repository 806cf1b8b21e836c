#include "dicap/kmeans.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "dicap/rng.hpp"

namespace dicap {

namespace {

std::vector<int> distinct_columns(const MatXd& p) {
  const int n = static_cast<int>(p.cols());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    for (int r = 0; r < p.rows(); ++r) {
      if (p(r, a) != p(r, b)) return p(r, a) < p(r, b);
    }
    return false;
  });
  std::vector<int> reps;
  for (int i = 0; i < n; ++i) {
    if (i == 0 || p.col(idx[i]) != p.col(idx[i - 1])) reps.push_back(idx[i]);
  }
  return reps;
}

/// Assigns every column to its nearest centroid; returns squared distances.
void assign_nearest(const MatXd& p, const MatXd& c, std::vector<int>& a,
                    VecXd& d2) {
  VecXd csq = c.colwise().squaredNorm();
  MatXd g = c.transpose() * p;  // k x n
  for (int i = 0; i < p.cols(); ++i) {
    int best = 0;
    double bv = csq(0) - 2.0 * g(0, i);
    for (int j = 1; j < c.cols(); ++j) {
      double v = csq(j) - 2.0 * g(j, i);
      if (v < bv) {
        bv = v;
        best = j;
      }
    }
    a[i] = best;
    d2(i) = std::max(0.0, bv + p.col(i).squaredNorm());
  }
}

KMeansResult lloyd(const MatXd& p, int k, int max_iters,
                   const std::vector<int>& reps, Rng& rng) {
  const int n = static_cast<int>(p.cols());
  std::vector<int> pick(reps);
  std::shuffle(pick.begin(), pick.end(), rng);
  MatXd c(p.rows(), k);
  for (int j = 0; j < k; ++j) c.col(j) = p.col(pick[j]);

  std::vector<int> a(n, -1), prev(n, -2);
  VecXd d2(n);
  for (int it = 0; it < max_iters && a != prev; ++it) {
    prev = a;
    assign_nearest(p, c, a, d2);
    MatXd sums = MatXd::Zero(p.rows(), k);
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
      sums.col(a[i]) += p.col(i);
      ++counts[a[i]];
    }
    for (int j = 0; j < k; ++j) {
      if (counts[j] > 0) {
        c.col(j) = sums.col(j) / counts[j];
      } else {
        int far = 0;
        for (int i = 1; i < n; ++i) {
          if (d2(i) > d2(far)) far = i;
        }
        c.col(j) = p.col(far);
        d2(far) = 0.0;  // don't reseed two empties at the same point
      }
    }
  }
  assign_nearest(p, c, a, d2);
  double inertia = 0.0;  // recomputed directly: no cancellation residue
  for (int i = 0; i < n; ++i) inertia += (p.col(i) - c.col(a[i])).squaredNorm();
  return {std::move(c), std::move(a), inertia};
}

}  // namespace

KMeansResult kmeans(const MatXd& points, int k, int restarts, int max_iters,
                    std::uint64_t seed) {
  if (points.cols() == 0) throw std::invalid_argument("kmeans: no points");
  if (k < 1) throw std::invalid_argument("kmeans: k must be positive");
  std::vector<int> reps = distinct_columns(points);
  if (k > static_cast<int>(reps.size())) {
    throw std::invalid_argument("kmeans: k exceeds the number of distinct points");
  }
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, restarts); ++r) {
    Rng rng(derive_seed(seed, r));
    KMeansResult cur = lloyd(points, k, max_iters, reps, rng);
    if (cur.inertia < best.inertia) best = std::move(cur);
  }
  return best;
}

}  // namespace dicap
