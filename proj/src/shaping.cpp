#include "dicap/shaping.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#include "dicap/channels.hpp"
#include "dicap/estimators.hpp"
#include "dicap/nets.hpp"
#include "dicap/optimizer.hpp"
#include "dicap/parallel.hpp"
#include "dicap/pmf_optimizer.hpp"
#include "dicap/rng.hpp"

namespace dicap {

namespace {

VecXd pam_points(int k, double amplitude) {
  VecXd p(k);
  for (int i = 0; i < k; ++i)
    p(i) = -amplitude + 2.0 * amplitude * i / (k - 1);
  return p;
}

void validate_pmf(const VecXd& pmf, int k, const char* who) {
  if (pmf.size() != k)
    throw std::invalid_argument(std::string(who) + ": PMF size mismatch");
  if (pmf.minCoeff() < -1e-12 || std::abs(pmf.sum() - 1.0) > 1e-9)
    throw std::invalid_argument(std::string(who) + ": PMF not on the simplex");
}

}  // namespace

Constellation make_constellation(ConstellationKind kind, int k,
                                 double amplitude) {
  if (amplitude <= 0.0)
    throw std::invalid_argument("make_constellation: amplitude must be > 0");
  Constellation c;
  c.kind = kind;
  c.order = k;
  c.amplitude = amplitude;
  if (kind == ConstellationKind::kPam) {
    if (k < 2) throw std::invalid_argument("make_constellation: PAM needs k >= 2");
    c.points = pam_points(k, amplitude).transpose();
  } else {
    int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(k))));
    if (k < 4 || r * r != k)
      throw std::invalid_argument(
          "make_constellation: QAM needs k a perfect square >= 4");
    VecXd pam = pam_points(r, amplitude);
    c.points.resize(2, k);
    for (int a = 0; a < r; ++a)
      for (int b = 0; b < r; ++b) {
        c.points(0, a * r + b) = pam(a);
        c.points(1, a * r + b) = pam(b);
      }
  }
  return c;
}

// ---------------------------------------------------------------------------
// Gauss-Hermite quadrature

std::pair<VecXd, VecXd> gauss_hermite_rule(int order) {
  if (order < 1) throw std::invalid_argument("gauss_hermite_rule: order >= 1");
  MatXd j = MatXd::Zero(order, order);
  for (int i = 1; i < order; ++i) {
    double beta = std::sqrt(i / 2.0);
    j(i, i - 1) = beta;
    j(i - 1, i) = beta;
  }
  Eigen::SelfAdjointEigenSolver<MatXd> es(j);
  VecXd nodes = es.eigenvalues();
  VecXd weights(order);
  double mu0 = std::sqrt(M_PI);  // integral of exp(-t^2)
  for (int i = 0; i < order; ++i) {
    double v0 = es.eigenvectors()(0, i);
    weights(i) = mu0 * v0 * v0;
  }
  return {std::move(nodes), std::move(weights)};
}

namespace {

/// Sum over quadrature nodes of w * [-t^2 - log sum_j p_j phi-ratio], i.e.
/// the inner integral of the MI expression for the point at column i. The
/// Gaussian normalizer cancels between numerator and denominator.
double mi_nats_1d(const VecXd& xs, const VecXd& logp, const VecXd& pmf,
                  double sigma, const VecXd& nodes, const VecXd& weights) {
  double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double root2s = std::sqrt(2.0) * sigma;
  double total = 0.0;
  for (int i = 0; i < xs.size(); ++i) {
    if (pmf(i) <= 0.0) continue;
    double acc = 0.0;
    for (int m = 0; m < nodes.size(); ++m) {
      double y = xs(i) + root2s * nodes(m);
      // two-pass logsumexp over the mixture
      double hi = -std::numeric_limits<double>::infinity();
      for (int jj = 0; jj < xs.size(); ++jj) {
        if (pmf(jj) <= 0.0) continue;
        double d = y - xs(jj);
        hi = std::max(hi, logp(jj) - d * d * inv2s2);
      }
      double s = 0.0;
      for (int jj = 0; jj < xs.size(); ++jj) {
        if (pmf(jj) <= 0.0) continue;
        double d = y - xs(jj);
        s += std::exp(logp(jj) - d * d * inv2s2 - hi);
      }
      double lse = hi + std::log(s);
      double t = nodes(m);
      acc += weights(m) * (-t * t - lse);
    }
    total += pmf(i) * acc;
  }
  return total / std::sqrt(M_PI);
}

double mi_bits_1d(const VecXd& xs, const VecXd& pmf, double sigma, int order) {
  auto [nodes, weights] = gauss_hermite_rule(order);
  VecXd logp(pmf.size());
  for (int i = 0; i < pmf.size(); ++i)
    logp(i) = pmf(i) > 0.0 ? std::log(pmf(i)) : 0.0;
  double nats = mi_nats_1d(xs, logp, pmf, sigma, nodes, weights);
  // exact value is nonnegative; quadrature round-off can land a hair below
  return std::max(0.0, nats / kLn2);
}

double mi_bits_tensor(const Constellation& c, const VecXd& pmf, double sigma,
                      int order) {
  auto [nodes, weights] = gauss_hermite_rule(order);
  int k = c.order;
  VecXd logp(k);
  for (int i = 0; i < k; ++i) logp(i) = pmf(i) > 0.0 ? std::log(pmf(i)) : 0.0;
  double inv2s2 = 1.0 / (2.0 * sigma * sigma);
  double root2s = std::sqrt(2.0) * sigma;
  double total = 0.0;
  for (int i = 0; i < k; ++i) {
    if (pmf(i) <= 0.0) continue;
    double acc = 0.0;
    for (int m = 0; m < order; ++m) {
      for (int mm = 0; mm < order; ++mm) {
        double y0 = c.points(0, i) + root2s * nodes(m);
        double y1 = c.points(1, i) + root2s * nodes(mm);
        double hi = -std::numeric_limits<double>::infinity();
        for (int jj = 0; jj < k; ++jj) {
          if (pmf(jj) <= 0.0) continue;
          double d0 = y0 - c.points(0, jj);
          double d1 = y1 - c.points(1, jj);
          hi = std::max(hi, logp(jj) - (d0 * d0 + d1 * d1) * inv2s2);
        }
        double s = 0.0;
        for (int jj = 0; jj < k; ++jj) {
          if (pmf(jj) <= 0.0) continue;
          double d0 = y0 - c.points(0, jj);
          double d1 = y1 - c.points(1, jj);
          s += std::exp(logp(jj) - (d0 * d0 + d1 * d1) * inv2s2 - hi);
        }
        double lse = hi + std::log(s);
        acc += weights(m) * weights(mm) *
               (-nodes(m) * nodes(m) - nodes(mm) * nodes(mm) - lse);
      }
    }
    total += pmf(i) * acc;
  }
  return std::max(0.0, total / M_PI / kLn2);
}

/// Marginals (u over the first coordinate, v over the second) when the QAM
/// PMF is an exact product u x v; nullopt-like flag otherwise.
bool factorizes(const VecXd& pmf, int r, VecXd& u, VecXd& v) {
  u = VecXd::Zero(r);
  v = VecXd::Zero(r);
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b) {
      u(a) += pmf(a * r + b);
      v(b) += pmf(a * r + b);
    }
  for (int a = 0; a < r; ++a)
    for (int b = 0; b < r; ++b)
      if (std::abs(pmf(a * r + b) - u(a) * v(b)) > 1e-12) return false;
  return true;
}

}  // namespace

double gauss_hermite_mi(const Constellation& c, const VecXd& pmf, double sigma,
                        int order) {
  if (sigma <= 0.0)
    throw std::invalid_argument("gauss_hermite_mi: sigma must be > 0");
  if (order < 20)
    throw std::invalid_argument("gauss_hermite_mi: order must be >= 20");
  validate_pmf(pmf, c.order, "gauss_hermite_mi");
  if (c.dim() == 1)
    return mi_bits_1d(c.points.row(0).transpose(), pmf, sigma, order);
  int r = static_cast<int>(std::lround(std::sqrt(static_cast<double>(c.order))));
  VecXd u, v;
  if (factorizes(pmf, r, u, v)) {
    VecXd pam = pam_points(r, c.amplitude);
    return mi_bits_1d(pam, u, sigma, order) + mi_bits_1d(pam, v, sigma, order);
  }
  return mi_bits_tensor(c, pmf, sigma, order);
}

double gauss_hermite_mi_tensor(const Constellation& c, const VecXd& pmf,
                               double sigma, int order) {
  if (sigma <= 0.0)
    throw std::invalid_argument("gauss_hermite_mi_tensor: sigma must be > 0");
  if (order < 20)
    throw std::invalid_argument("gauss_hermite_mi_tensor: order must be >= 20");
  if (c.dim() != 2)
    throw std::invalid_argument("gauss_hermite_mi_tensor: 2-D constellations only");
  validate_pmf(pmf, c.order, "gauss_hermite_mi_tensor");
  return mi_bits_tensor(c, pmf, sigma, order);
}

// ---------------------------------------------------------------------------
// Shaping trainer

namespace {

void validate_config(const ShapingConfig& cfg) {
  if (cfg.iters < 1 || cfg.n < 4 || cfg.ratio < 1 || cfg.eval_n < 4)
    throw std::invalid_argument("run_shaping: bad training sizes");
  if (cfg.quad_order < 20)
    throw std::invalid_argument("run_shaping: quad_order must be >= 20");
}

/// Draws n (index, output) pairs under the logits' softmax law.
void sample_pairs(const Constellation& c, const VecXd& pmf, double sigma,
                  int n, Rng& rng, std::vector<int>& xs, MatXd& yf) {
  std::normal_distribution<double> noise(0.0, sigma);
  xs.resize(static_cast<std::size_t>(n));
  yf.resize(c.dim(), n);
  for (int t = 0; t < n; ++t) {
    int i = sample_from_pmf(pmf, rng);
    xs[static_cast<std::size_t>(t)] = i;
    for (int d = 0; d < c.dim(); ++d)
      yf(d, t) = c.points(d, i) + noise(rng);
  }
}

ShapingResult shape_one(const Constellation& c, double snr_db,
                        const ShapingConfig& cfg, std::uint64_t seed) {
  ShapingResult res;
  res.snr_db = snr_db;
  res.sigma = c.amplitude / std::pow(10.0, snr_db / 20.0);

  Rng init_rng(derive_seed(seed, 1));
  MineModel model = make_mine_model(c.order, c.dim(), cfg.mine_width,
                                    cfg.mine_depth, init_rng);
  MatXd phi = MatXd::Zero(c.order, 1);
  Adam opt_mine(model.params(),
                AdamConfig{.lr = cfg.mine_lr, .maximize = true});
  Adam opt_phi({&phi}, AdamConfig{.lr = cfg.pmf_lr, .maximize = true});

  std::vector<int> xs;
  MatXd yf;
  int warmup = static_cast<int>(cfg.warmup_frac * cfg.iters);
  int decay_start = cfg.iters - static_cast<int>(cfg.decay_frac * cfg.iters);
  for (int iter = 0; iter < cfg.iters; ++iter) {
    Rng rng(derive_seed(seed, 1000 + static_cast<std::uint64_t>(iter)));
    VecXd pmf = softmax_pmf(phi.col(0));
    sample_pairs(c, pmf, res.sigma, cfg.n, rng, xs, yf);
    MatXd xf = onehot_features(xs, c.order);

    for (int u = 0; u < cfg.ratio; ++u) {
      std::vector<int> perm = sattolo_cycle(cfg.n, rng);
      ad::Tape tape;
      ad::Var dv = mine_loss(ad::OpCtx<ad::Var>{&tape}, model, xf, yf, perm);
      tape.backward(dv);
      opt_mine.step_from_tape(tape);
    }
    if (iter < warmup) continue;  // scores are noise until the net settles

    VecXd g = mine_joint_scores(model, xf, yf);
    double i_nats = mine_estimate(model, xf, yf, sattolo_cycle(cfg.n, rng));
    VecXd grad = mi_policy_gradient(
        xs, std::span<const double>(g.data(), static_cast<std::size_t>(g.size())),
        i_nats, pmf);
    // Hold the step size through the middle of the run, then fade it out so
    // the law stops orbiting the optimum on estimator noise.
    double lr = cfg.pmf_lr;
    if (iter >= decay_start)
      lr *= 1.0 - static_cast<double>(iter - decay_start) /
                      std::max(1, cfg.iters - decay_start);
    opt_phi.set_lr(lr);
    opt_phi.step({MatXd(grad)});
  }

  res.pmf = softmax_pmf(phi.col(0));
  Rng eval_rng(derive_seed(seed, 2));
  sample_pairs(c, res.pmf, res.sigma, cfg.eval_n, eval_rng, xs, yf);
  MatXd xf = onehot_features(xs, c.order);
  double est_nats =
      mine_estimate(model, xf, yf, sattolo_cycle(cfg.eval_n, eval_rng));
  res.mi_mine_bits = est_nats / kLn2;

  VecXd uniform = VecXd::Constant(c.order, 1.0 / c.order);
  res.mi_uniform_bits = gauss_hermite_mi(c, uniform, res.sigma, cfg.quad_order);
  res.mi_learned_quad_bits =
      gauss_hermite_mi(c, res.pmf, res.sigma, cfg.quad_order);
  return res;
}

}  // namespace

std::vector<ShapingResult> run_shaping(const Constellation& c,
                                       std::span<const double> snr_db,
                                       const ShapingConfig& cfg) {
  validate_config(cfg);
  std::vector<ShapingResult> out(snr_db.size());
  parallel_for(cfg.workers, static_cast<int>(snr_db.size()), [&](int j) {
    out[static_cast<std::size_t>(j)] =
        shape_one(c, snr_db[static_cast<std::size_t>(j)], cfg,
                  derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(j)));
  });
  return out;
}

void write_shaping_csv(const std::string& path, const Constellation& c,
                       std::span<const ShapingResult> results) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << "snr_db,mi_mine_bits,mi_uniform_bits,mi_learned_quadrature_bits";
  for (int i = 0; i < c.order; ++i) f << ",p" << i;
  f << "\n";
  f.precision(12);
  for (const ShapingResult& r : results) {
    f << r.snr_db << ',' << r.mi_mine_bits << ',' << r.mi_uniform_bits << ','
      << r.mi_learned_quad_bits;
    for (int i = 0; i < c.order; ++i) f << ',' << r.pmf(i);
    f << "\n";
  }
  if (!f) throw std::runtime_error("write failed: " + path);
}

std::string shaping_pmf_json(const Constellation& c, const ShapingResult& r) {
  nlohmann::json j;
  j["snr_db"] = r.snr_db;
  j["sigma"] = r.sigma;
  nlohmann::json pmf = nlohmann::json::array();
  for (int i = 0; i < c.order; ++i) {
    nlohmann::json entry;
    nlohmann::json point = nlohmann::json::array();
    for (int d = 0; d < c.dim(); ++d) point.push_back(c.points(d, i));
    entry["point"] = point;
    entry["p"] = r.pmf(i);
    pmf.push_back(entry);
  }
  j["pmf"] = pmf;
  return j.dump(2);
}

}  // namespace dicap
