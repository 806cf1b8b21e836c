#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dicap/types.hpp"

namespace dicap {

// ---------------------------------------------------------------------------
// Peak-constrained constellations
//
// PAM places k points evenly on [-A, A] including both endpoints; QAM is the
// Cartesian square of a PAM of order sqrt(k), so every coordinate obeys the
// same peak bound. SNR is reported as A^2 / sigma^2 in dB throughout.

enum class ConstellationKind { kPam, kQam };

struct Constellation {
  ConstellationKind kind = ConstellationKind::kPam;
  int order = 0;       // number of points k
  double amplitude = 0.0;
  MatXd points;        // dim x k: one row for PAM, two for QAM

  int dim() const { return static_cast<int>(points.rows()); }
};

Constellation make_constellation(ConstellationKind kind, int k,
                                 double amplitude);

// ---------------------------------------------------------------------------
// Quadrature oracle

/// Gauss-Hermite rule for weight exp(-t^2): nodes and weights via the
/// symmetric tridiagonal Jacobi matrix. Weights sum to sqrt(pi).
std::pair<VecXd, VecXd> gauss_hermite_rule(int order);

/// Mutual information (bits) between a PMF on the constellation points and
/// the Gaussian-noise output, by Gauss-Hermite quadrature with the
/// substitution y = x_i + sigma * sqrt(2) * t. QAM with a PMF that
/// factorizes across the two coordinates is computed as the sum of the two
/// 1-D integrals; otherwise a 2-D tensor rule is used. Requires order >= 20
/// and sigma > 0.
double gauss_hermite_mi(const Constellation& c, const VecXd& pmf, double sigma,
                        int order);

/// Tensor-rule path unconditionally (2-D constellations only); exercised by
/// the product-identity checks against the factorized path.
double gauss_hermite_mi_tensor(const Constellation& c, const VecXd& pmf,
                               double sigma, int order);

// ---------------------------------------------------------------------------
// PMF shaping via the mutual-information estimator

struct ShapingConfig {
  int iters = 3000;
  int n = 512;             // samples per training iteration
  int ratio = 3;           // estimator updates per PMF update
  int mine_width = 64;
  int mine_depth = 2;
  double mine_lr = 1e-3;
  double pmf_lr = 1e-2;
  double warmup_frac = 0.3;  // estimator-only fraction before PMF steps
  double decay_frac = 0.3;   // trailing fraction with the PMF step fading out
  int eval_n = 100000;     // held-out estimator evaluation
  int quad_order = 64;
  std::uint64_t seed = 1;
  int workers = 1;         // SNR grid points are independent jobs
};

struct ShapingResult {
  double snr_db = 0.0;
  double sigma = 0.0;
  VecXd pmf;                         // learned law over the points
  double mi_mine_bits = 0.0;         // held-out estimate at the learned law
  double mi_uniform_bits = 0.0;      // quadrature at the uniform law
  double mi_learned_quad_bits = 0.0; // quadrature at the learned law
};

/// Trains a softmax-parameterized PMF per SNR point: the estimator scores
/// drive the closed-form score-function gradient on the logits. Grid points
/// run as independent seeded jobs.
std::vector<ShapingResult> run_shaping(const Constellation& c,
                                       std::span<const double> snr_db,
                                       const ShapingConfig& cfg);

/// CSV: snr_db, mi_mine_bits, mi_uniform_bits, mi_learned_quadrature_bits,
/// then one probability column per constellation point.
void write_shaping_csv(const std::string& path, const Constellation& c,
                       std::span<const ShapingResult> results);

/// PMF with point coordinates as JSON (the 2-D export format).
std::string shaping_pmf_json(const Constellation& c, const ShapingResult& r);

}  // namespace dicap
