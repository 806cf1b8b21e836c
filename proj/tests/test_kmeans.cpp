#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "dicap/kmeans.hpp"
#include "dicap/rng.hpp"

using namespace dicap;

namespace {

MatXd two_blobs(int per, double gap, Rng& rng) {
  std::normal_distribution<double> n(0.0, 0.3);
  MatXd p(2, 2 * per);
  for (int i = 0; i < per; ++i) {
    p.col(i) << n(rng) - gap, n(rng);
    p.col(per + i) << n(rng) + gap, n(rng);
  }
  return p;
}

}  // namespace

TEST_CASE("kmeans separates well-spaced blobs") {
  Rng rng(3);
  MatXd p = two_blobs(50, 4.0, rng);
  KMeansResult r = kmeans(p, 2, 5, 100, 7);
  int left = r.assignment[0];
  for (int i = 0; i < 50; ++i) CHECK(r.assignment[i] == left);
  for (int i = 50; i < 100; ++i) CHECK(r.assignment[i] == 1 - left);
  CHECK(std::abs(std::abs(r.centroids(0, 0)) - 4.0) < 0.3);
  // inertia equals the recomputed within-cluster scatter
  double scatter = 0.0;
  for (int i = 0; i < 100; ++i) {
    scatter += (p.col(i) - r.centroids.col(r.assignment[i])).squaredNorm();
  }
  CHECK(r.inertia == doctest::Approx(scatter).epsilon(1e-12));
}

TEST_CASE("kmeans is deterministic for a fixed seed") {
  Rng rng(5);
  MatXd p = two_blobs(30, 1.0, rng);
  KMeansResult a = kmeans(p, 3, 4, 50, 11);
  KMeansResult b = kmeans(p, 3, 4, 50, 11);
  CHECK(a.inertia == b.inertia);
  CHECK(a.assignment == b.assignment);
  CHECK(a.centroids == b.centroids);
}

TEST_CASE("more restarts never worsen the best inertia") {
  Rng rng(7);
  MatXd p = two_blobs(40, 0.8, rng);
  double prev = kmeans(p, 4, 1, 50, 13).inertia;
  for (int restarts : {2, 5, 10}) {
    double cur = kmeans(p, 4, restarts, 50, 13).inertia;
    CHECK(cur <= prev + 1e-12);
    prev = cur;
  }
}

TEST_CASE("kmeans validates k against the distinct points") {
  MatXd p(2, 4);
  p.col(0) << 1.0, 0.0;
  p.col(1) << 1.0, 0.0;
  p.col(2) << 0.0, 1.0;
  p.col(3) << 0.0, 1.0;
  KMeansResult r = kmeans(p, 2, 3, 50, 1);
  CHECK(r.inertia == 0.0);
  CHECK(r.assignment[0] == r.assignment[1]);
  CHECK(r.assignment[2] == r.assignment[3]);
  CHECK(r.assignment[0] != r.assignment[2]);
  CHECK_THROWS_AS(kmeans(p, 3, 3, 50, 1), std::invalid_argument);
  CHECK_THROWS_AS(kmeans(p, 0, 3, 50, 1), std::invalid_argument);
  CHECK_THROWS_AS(kmeans(MatXd(2, 0), 1, 3, 50, 1), std::invalid_argument);
}

TEST_CASE("every point lands in exactly one cluster") {
  Rng rng(9);
  MatXd p = two_blobs(25, 0.5, rng);
  KMeansResult r = kmeans(p, 5, 3, 50, 17);
  std::vector<int> seen(5, 0);
  for (int a : r.assignment) {
    REQUIRE(a >= 0);
    REQUIRE(a < 5);
    ++seen[a];
  }
  for (int c = 0; c < 5; ++c) CHECK(seen[c] > 0);  // no empty clusters survive
}
