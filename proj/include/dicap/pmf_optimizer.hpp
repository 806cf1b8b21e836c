#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dicap/channels.hpp"
#include "dicap/estimators.hpp"
#include "dicap/kmeans.hpp"
#include "dicap/nets.hpp"

namespace dicap {

// ---------------------------------------------------------------------------
// Input-distribution generator
//
// The rate maximization is an average-reward control problem: the controller
// state is the pair of symbol histories, the action is the next channel
// input, and the per-step reward is the information density read off the
// trained score networks. The generator below is the stochastic policy: an
// LSTM digests the previous input (and, with feedback, the previous output)
// and a linear head emits the next input law.

struct PmfGenerator {
  int x_card = 0;
  int y_card = 0;
  bool feedback = false;  // off: previous outputs never reach the network
  LstmParams lstm;        // input: onehot(x_prev) [ + onehot(y_prev) ]
  MlpParams head;         // hidden -> x_card logits

  std::vector<MatXd*> params();
  std::vector<std::pair<std::string, MatXd*>> named(const std::string& prefix);
};

PmfGenerator make_pmf_generator(int x_card, int y_card, bool feedback,
                                int hidden, Rng& rng);

/// Advances the generator one step on the previous symbols (-1 sentinels at
/// t=1 map to zero input blocks) and emits the next input law.
template <typename V>
std::pair<V, LstmState<V>> pmf_step(ad::OpCtx<V> ctx, PmfGenerator& gen,
                                    int x_prev, int y_prev,
                                    const LstmState<V>& state);

/// Sampling adapter: rollouts draw x_t from (1-eps)*p_t + eps*uniform. The
/// floor keeps every log-likelihood bounded during training; evaluation runs
/// with eps = 0. Holds a frozen copy of the generator weights, so it is safe
/// to sample from several policies in parallel.
class GeneratorPolicy : public Policy {
 public:
  GeneratorPolicy(PmfGenerator& gen, double epsilon);
  void reset() override;
  VecXd next_pmf(int x_prev, int y_prev) override;

 private:
  PmfGenerator* gen_;
  double epsilon_;
  LstmCell<MatXd> cell_;
  Mlp<MatXd> head_;
  LstmState<MatXd> state_;
};

/// Re-runs the generator over a logged trajectory on the caller's context and
/// returns per-step log p_t(x_t) under the same epsilon-floored law the
/// rollout sampled from.
template <typename V>
std::vector<V> generator_logp(ad::OpCtx<V> ctx, PmfGenerator& gen,
                              const Trajectory& traj, double epsilon);

// ---------------------------------------------------------------------------
// Policy-gradient objective

/// Truncated-window value proxy: sum of r[t .. t+T) minus the rate estimate,
/// subtracted once per window.
double q_hat(std::span<const double> r, double i_nats, int t, int T);

/// J = (1/K) * sum_t logp[t] * q[t] with K = q.size(); q values enter as
/// constants so ascent on J moves only the generator.
template <typename V>
V policy_objective(ad::OpCtx<V> ctx, std::span<const V> logp,
                   std::span<const double> q);

/// Closed-form score-function gradient for the memoryless softmax policy:
/// (1/n) * sum_t (e_{x_t} - p) * (g[t] - i_nats). Equals the autodiff
/// gradient of (1/n) * sum_t log p(x_t) * (g[t] - i_nats).
VecXd mi_policy_gradient(std::span<const int> xs, std::span<const double> g,
                         double i_nats, const VecXd& softmax_pmf_vec);

// ---------------------------------------------------------------------------
// Alternating trainer

enum class EstimatorMode { kDine, kMine };

struct PolicyGradConfig {
  EstimatorMode mode = EstimatorMode::kDine;
  int T = 10;         // truncation horizon of the value windows
  int n = 128;        // rollout length (kDine) / i.i.d. batch size (kMine)
  int batch = 8;      // parallel rollouts per iteration (kDine)
  int ratio = 3;      // estimator updates per policy update
  int iters = 2000;
  double estimator_lr = 1e-3;
  double policy_lr = 1e-3;
  double epsilon = 0.01;  // exploration floor during training rollouts
  int gen_hidden = 32;
  int est_hidden = 64;  // LSTM width (kDine) / unused (kMine)
  int est_fc_width = 64;
  int est_fc_depth = 2;
  double warmup_frac = 0.1;
  double lme_anchor = 0.25;
  int eval_len = 100'000;
  int plateau_window = 200;
  double plateau_rel = 1e-3;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct TrainDiResult {
  EstimatorMode mode = EstimatorMode::kDine;
  EstimateReport report;  // final held-out evaluation
  PmfGenerator gen;       // kDine
  DineModel dine;         // kDine
  VecXd mine_logits;      // kMine: input law = softmax(mine_logits)
  MineModel mine;         // kMine
  std::vector<CurvePoint> curve;
  bool diverged = false;
  std::string diagnostic;
};

/// Alternates estimator ascent with policy-gradient ascent on the input law
/// and finishes with a frozen-parameter Monte-Carlo evaluation. kMine
/// requires a memoryless channel without feedback.
TrainDiResult train_di(const ChannelSpec& spec, bool feedback,
                       const PolicyGradConfig& cfg);

// ---------------------------------------------------------------------------
// Learned-law diagnostics

struct PmfClusterEdge {
  int from = 0;  // cluster of p_t
  int x = 0;     // symbols observed at step t
  int y = 0;
  int s = 0;     // latent channel state (oracle use only)
  int to = 0;    // cluster of p_{t+1}
  int count = 0;
};

struct PmfClusterSummary {
  KMeansResult clustering;
  std::vector<PmfClusterEdge> edges;  // aggregated transition counts
};

/// K-means over the emitted laws p_t plus a transition table keyed by the
/// symbols that drove each step.
PmfClusterSummary cluster_learned_pmf(const Trajectory& traj, int k,
                                      std::uint64_t seed = 0);

}  // namespace dicap
