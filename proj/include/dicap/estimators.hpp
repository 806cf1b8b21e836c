#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dicap/autodiff.hpp"
#include "dicap/channels.hpp"
#include "dicap/nets.hpp"
#include "dicap/types.hpp"

namespace dicap {

// ---------------------------------------------------------------------------
// Donsker-Varadhan KL loss

namespace detail {
inline Eigen::Index numel(const ad::Var& v) { return v.tape->value(v).size(); }
inline Eigen::Index numel(const MatXd& m) { return m.size(); }
}  // namespace detail

/// mean(f over P-samples) - log(mean(exp f over Q-samples)), max-shifted.
template <typename V>
V dv_kl_loss(const V& p_scores, const V& q_scores) {
  if (detail::numel(p_scores) == 0 || detail::numel(q_scores) == 0)
    throw std::invalid_argument("dv_kl_loss: empty sample set");
  return ad::sub(ad::mean_all(p_scores), ad::logmeanexp_all(q_scores));
}

// ---------------------------------------------------------------------------
// DINE: recurrent DV potentials for directed information

/// One DV potential: an LSTM trunk advanced on the real sequence plus an
/// MLP head scoring the current symbol (real or uniform reference) against
/// the trunk state, i.e. the twin-output arrangement of the estimator.
struct DineNetParams {
  LstmParams trunk;
  MlpParams head;

  std::vector<MatXd*> params();
  std::vector<std::pair<std::string, MatXd*>> named(const std::string& prefix);
};

struct DineModel {
  int x_card = 2;
  int y_card = 2;
  DineNetParams y_net;   // trunk over y^i, head scores y_i | y^{i-1}
  DineNetParams xy_net;  // trunk over (x,y)^i, head scores y_i | y^{i-1}, x^i

  std::vector<MatXd*> params();
  NamedParams named();
};

DineModel make_dine_model(int x_card, int y_card, int hidden, int fc_width,
                          int fc_depth, Rng& rng);

/// Per-step potential scores across a batch of equal-length trajectories.
/// Entry [t] is a 1 x B row: one scalar per batch lane.
template <typename V>
struct NetScores {
  std::vector<V> real;
  std::vector<V> ref;
};

template <typename V>
struct DineScores {
  NetScores<V> y;
  NetScores<V> xy;
};

/// Unrolls both potentials over the batch. Works on-tape (training) and
/// tape-free (rollout/evaluation) through the OpCtx representation.
template <typename V>
DineScores<V> dine_scores(ad::OpCtx<V> ctx, DineModel& model,
                          std::span<const Trajectory> batch);

template <typename V>
struct DineLosses {
  V d_y;
  V d_xy;
  V lme_y;   // reference log-normalizers; zero at the canonical optimum
  V lme_xy;
};

/// Reduces per-step scores to the two DV objectives, dropping the leading
/// warm-up fraction of every trajectory to wash out the recurrent transient.
template <typename V>
DineLosses<V> dine_dv_losses(const DineScores<V>& scores, double warmup_frac);

enum class SymField { kX, kY, kYtilde };

/// Builds onehot columns for one time step across batch lanes.
MatXd onehot_cols(std::span<const Trajectory> batch, int t, SymField field,
                  int card);

// ---------------------------------------------------------------------------
// Evaluation

struct EstimateReport {
  double d_y_nats = 0.0;
  double d_xy_nats = 0.0;
  double i_se_nats = 0.0;  // batch-means standard error of the mean reward
  int n = 0;
  std::uint64_t seed = 0;

  double i_nats() const { return d_xy_nats - d_y_nats; }
  double i_bits() const { return nats_to_bits(i_nats()); }
  double d_y_bits() const { return nats_to_bits(d_y_nats); }
  double d_xy_bits() const { return nats_to_bits(d_xy_nats); }
  double i_se_bits() const { return nats_to_bits(i_se_nats); }
};

/// Tape-free DINE evaluation on a given trajectory.
EstimateReport evaluate_dine(DineModel& model, const Trajectory& traj,
                             double warmup_frac, std::uint64_t seed = 0);

/// Per-step reward proxy r̂_t = g_xy(y_t|·) - g_y(y_t|·), tape-free, full length.
std::vector<double> reward_proxy(DineModel& model, const Trajectory& traj);

/// Freezes parameters, samples one long trajectory, evaluates.
EstimateReport mc_evaluate(DineModel& model, const ChannelSpec& spec,
                           Policy& policy, bool feedback, int n_eval,
                           std::uint64_t seed, double warmup_frac = 0.1);

// ---------------------------------------------------------------------------
// DINE training with a fixed input policy (estimation mode)

struct DineTrainConfig {
  int hidden = 64;
  int fc_width = 64;
  int fc_depth = 2;
  int batch = 8;          // parallel rollouts per iteration
  int rollout_len = 128;
  int iters = 1000;
  double lr = 1e-3;
  double warmup_frac = 0.1;
  // Weight pulling the reference log-normalizers to zero during ascent. The
  // DV value is shift-invariant, so this selects the canonical potentials
  // (normalizer one) without biasing the estimate; it makes per-step score
  // differences readable as information densities. Zero disables.
  double lme_anchor = 0.25;
  int eval_len = 100'000;
  std::uint64_t seed = 1;
  int plateau_window = 200;
  double plateau_rel = 1e-3;
  int workers = 1;
};

struct CurvePoint {
  int iter = 0;
  double d_y = 0.0;      // nats
  double d_xy = 0.0;     // nats
  double di_bits = 0.0;
  double wall_ms = 0.0;
};

void write_curve_csv(const std::string& path, const std::vector<CurvePoint>& curve);

/// Windowed relative-change stop rule on a scalar series.
class PlateauDetector {
 public:
  PlateauDetector(int window, double rel_tol)
      : window_(window), rel_tol_(rel_tol) {}
  /// Feeds one value; true once the mean over the last window moved less
  /// than rel_tol relative to the previous window's mean.
  bool push(double v);

 private:
  int window_;
  double rel_tol_;
  std::vector<double> values_;
};

struct DineTrainResult {
  DineModel model;
  EstimateReport report;
  std::vector<CurvePoint> curve;
  bool diverged = false;
  std::string diagnostic;
};

DineTrainResult train_dine(const ChannelSpec& spec, Policy& policy,
                           bool feedback, const DineTrainConfig& cfg);

// ---------------------------------------------------------------------------
// MINE: feedforward DV potential for mutual information

struct MineModel {
  int x_dims = 0;
  int y_dims = 0;
  MlpParams net;  // (x_dims + y_dims) -> ... -> 1

  std::vector<MatXd*> params() { return net.params(); }
  NamedParams named() { return net.named("mine"); }
};

MineModel make_mine_model(int x_dims, int y_dims, int width, int depth,
                          Rng& rng);

/// Uniform random cyclic permutation (always a derangement), n >= 2.
std::vector<int> sattolo_cycle(int n, Rng& rng);

/// DV loss with joint pairs against derangement-paired negatives.
/// xf/yf are feature columns; perm reorders the y columns for negatives.
template <typename V>
V mine_loss(ad::OpCtx<V> ctx, MineModel& model, const MatXd& xf,
            const MatXd& yf, const std::vector<int>& perm);

/// Per-sample joint scores g(x_t, y_t), tape-free.
VecXd mine_joint_scores(MineModel& model, const MatXd& xf, const MatXd& yf);

/// Tape-free MINE estimate in nats.
double mine_estimate(MineModel& model, const MatXd& xf, const MatXd& yf,
                     const std::vector<int>& perm);

/// Onehot feature matrix (card x n) from a symbol sequence.
MatXd onehot_features(std::span<const int> symbols, int card);

}  // namespace dicap
