#include "dicap/pmf_optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <tuple>

#include "dicap/optimizer.hpp"
#include "dicap/parallel.hpp"
#include "dicap/rng.hpp"

namespace dicap {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now() - t0)
      .count();
}

/// Structural gradient-isolation check: every parameter leaf on the tape
/// must point into one of the allowed storage sets.
void assert_params_within(ad::Tape& tape,
                          std::initializer_list<std::vector<MatXd*>> allowed) {
  for (ad::Var leaf : tape.params()) {
    MatXd* s = tape.param_storage(leaf);
    bool ok = false;
    for (const auto& set : allowed) {
      if (std::find(set.begin(), set.end(), s) != set.end()) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw std::logic_error(
          "gradient isolation violated: tape reaches a foreign parameter");
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Generator

std::vector<MatXd*> PmfGenerator::params() {
  std::vector<MatXd*> out = lstm.params();
  for (MatXd* p : head.params()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, MatXd*>> PmfGenerator::named(
    const std::string& prefix) {
  auto out = lstm.named(prefix + ".lstm");
  for (auto& kv : head.named(prefix + ".head")) out.push_back(kv);
  return out;
}

PmfGenerator make_pmf_generator(int x_card, int y_card, bool feedback,
                                int hidden, Rng& rng) {
  if (x_card < 2) throw std::invalid_argument("pmf generator: x_card >= 2");
  if (feedback && y_card < 2) {
    throw std::invalid_argument("pmf generator: y_card >= 2 with feedback");
  }
  PmfGenerator gen;
  gen.x_card = x_card;
  gen.y_card = y_card;
  gen.feedback = feedback;
  int in_dim = x_card + (feedback ? y_card : 0);
  gen.lstm = make_lstm(in_dim, hidden, rng);
  gen.head = make_mlp({hidden, x_card}, Act::kIdentity, Act::kIdentity, rng);
  return gen;
}

namespace {

MatXd prev_symbol_input(const PmfGenerator& gen, int x_prev, int y_prev) {
  if (x_prev < -1 || x_prev >= gen.x_card) {
    throw std::invalid_argument("pmf_step: x_prev out of range");
  }
  if (y_prev < -1 || y_prev >= gen.y_card) {
    throw std::invalid_argument("pmf_step: y_prev out of range");
  }
  int in_dim = gen.x_card + (gen.feedback ? gen.y_card : 0);
  MatXd in = MatXd::Zero(in_dim, 1);
  if (x_prev >= 0) in(x_prev, 0) = 1.0;
  if (gen.feedback && y_prev >= 0) in(gen.x_card + y_prev, 0) = 1.0;
  return in;
}

}  // namespace

template <typename V>
std::pair<V, LstmState<V>> pmf_step(ad::OpCtx<V> ctx, PmfGenerator& gen,
                                    int x_prev, int y_prev,
                                    const LstmState<V>& state) {
  LstmCell<V> cell(ctx, gen.lstm);
  Mlp<V> head(ctx, gen.head);
  LstmState<V> next =
      cell.step(ctx.lift(prev_symbol_input(gen, x_prev, y_prev)), state);
  V p = ad::softmax_cols(head.forward(next.h));
  return {std::move(p), std::move(next)};
}

template std::pair<ad::Var, LstmState<ad::Var>> pmf_step(ad::OpCtx<ad::Var>,
                                                         PmfGenerator&, int,
                                                         int,
                                                         const LstmState<ad::Var>&);
template std::pair<MatXd, LstmState<MatXd>> pmf_step(ad::OpCtx<MatXd>,
                                                     PmfGenerator&, int, int,
                                                     const LstmState<MatXd>&);

GeneratorPolicy::GeneratorPolicy(PmfGenerator& gen, double epsilon)
    : gen_(&gen),
      epsilon_(epsilon),
      cell_(ad::OpCtx<MatXd>{}, gen.lstm),
      head_(ad::OpCtx<MatXd>{}, gen.head) {
  if (epsilon < 0.0 || epsilon >= 1.0) {
    throw std::invalid_argument("generator policy: epsilon in [0, 1)");
  }
  reset();
}

void GeneratorPolicy::reset() { state_ = cell_.zero_state(ad::OpCtx<MatXd>{}, 1); }

VecXd GeneratorPolicy::next_pmf(int x_prev, int y_prev) {
  state_ = cell_.step(prev_symbol_input(*gen_, x_prev, y_prev), state_);
  MatXd p = ad::softmax_cols(head_.forward(state_.h));
  int m = gen_->x_card;
  VecXd out =
      (p.col(0).array() * (1.0 - epsilon_) + epsilon_ / m).matrix();
  double sum = out.sum();
  if (!(std::abs(sum - 1.0) <= 1e-9) || (out.array() < 0.0).any()) {
    throw ad::NumericError("generator policy: law left the simplex");
  }
  return out;
}

template <typename V>
std::vector<V> generator_logp(ad::OpCtx<V> ctx, PmfGenerator& gen,
                              const Trajectory& traj, double epsilon) {
  if (traj.n() == 0) throw std::invalid_argument("generator_logp: empty trajectory");
  LstmCell<V> cell(ctx, gen.lstm);
  Mlp<V> head(ctx, gen.head);
  LstmState<V> state = cell.zero_state(ctx, 1);
  int m = gen.x_card;
  std::vector<V> out;
  out.reserve(traj.n());
  for (int t = 0; t < traj.n(); ++t) {
    int x_prev = t > 0 ? traj.x[t - 1] : -1;
    int y_prev = t > 0 ? traj.y[t - 1] : -1;
    state = cell.step(ctx.lift(prev_symbol_input(gen, x_prev, y_prev)), state);
    V p = ad::softmax_cols(head.forward(state.h));
    if (epsilon > 0.0) {
      p = ad::add_scalar(ad::scale(p, 1.0 - epsilon), epsilon / m);
    }
    // select before the log: the 1x1 log takes the scalar libm path, so the
    // replayed value is bit-identical to the likelihood logged by the rollout
    out.push_back(ad::log(ad::rows(p, traj.x[t], 1)));
  }
  return out;
}

template std::vector<ad::Var> generator_logp(ad::OpCtx<ad::Var>, PmfGenerator&,
                                             const Trajectory&, double);
template std::vector<MatXd> generator_logp(ad::OpCtx<MatXd>, PmfGenerator&,
                                           const Trajectory&, double);

// ---------------------------------------------------------------------------
// Policy-gradient objective

double q_hat(std::span<const double> r, double i_nats, int t, int T) {
  if (T < 1) throw std::invalid_argument("q_hat: T must be >= 1");
  if (t < 0 || t + T > static_cast<int>(r.size())) {
    throw std::invalid_argument("q_hat: window exceeds the reward sequence");
  }
  double acc = 0.0;
  for (int i = t; i < t + T; ++i) acc += r[i];
  return acc - i_nats;
}

template <typename V>
V policy_objective(ad::OpCtx<V> ctx, std::span<const V> logp,
                   std::span<const double> q) {
  if (q.empty()) throw std::invalid_argument("policy_objective: empty window");
  if (logp.size() < q.size()) {
    throw std::invalid_argument("policy_objective: fewer log-probs than windows");
  }
  int K = static_cast<int>(q.size());
  V row = ad::concat_cols(std::span<const V>(logp.data(), q.size()));
  MatXd qrow(1, K);
  for (int t = 0; t < K; ++t) qrow(0, t) = q[t];
  return ad::scale(ad::sum_all(ad::mul(row, ctx.lift(std::move(qrow)))),
                   1.0 / K);
}

template ad::Var policy_objective(ad::OpCtx<ad::Var>, std::span<const ad::Var>,
                                  std::span<const double>);
template MatXd policy_objective(ad::OpCtx<MatXd>, std::span<const MatXd>,
                                std::span<const double>);

VecXd mi_policy_gradient(std::span<const int> xs, std::span<const double> g,
                         double i_nats, const VecXd& softmax_pmf_vec) {
  if (xs.size() != g.size() || xs.empty()) {
    throw std::invalid_argument("mi_policy_gradient: size mismatch");
  }
  int m = static_cast<int>(softmax_pmf_vec.size());
  VecXd grad = VecXd::Zero(m);
  double csum = 0.0;
  for (std::size_t t = 0; t < xs.size(); ++t) {
    if (xs[t] < 0 || xs[t] >= m) {
      throw std::invalid_argument("mi_policy_gradient: symbol out of range");
    }
    double c = g[t] - i_nats;
    grad(xs[t]) += c;
    csum += c;
  }
  grad -= softmax_pmf_vec * csum;
  grad /= static_cast<double>(xs.size());
  return grad;
}

// ---------------------------------------------------------------------------
// Alternating trainer

namespace {

void validate_config(const PolicyGradConfig& cfg) {
  if (cfg.T < 1 || cfg.T > cfg.n / 2) {
    throw std::invalid_argument("policy-grad config: need 1 <= T <= n/2");
  }
  if (cfg.ratio < 1) throw std::invalid_argument("policy-grad config: ratio >= 1");
  if (cfg.iters < 1) throw std::invalid_argument("policy-grad config: iters >= 1");
  if (cfg.batch < 1) throw std::invalid_argument("policy-grad config: batch >= 1");
}

TrainDiResult train_di_dine(const ChannelSpec& spec, bool feedback,
                            const PolicyGradConfig& cfg) {
  int m = spec.in_card();
  int ycard = spec.out_card();
  if (ycard <= 0) {
    throw std::invalid_argument("train_di: discrete channel required");
  }
  auto t0 = std::chrono::steady_clock::now();
  Rng init_rng(derive_seed(cfg.seed, 1));
  TrainDiResult res;
  res.mode = EstimatorMode::kDine;
  res.gen = make_pmf_generator(m, ycard, feedback, cfg.gen_hidden, init_rng);
  res.dine = make_dine_model(m, ycard, cfg.est_hidden, cfg.est_fc_width,
                             cfg.est_fc_depth, init_rng);

  AdamConfig est_cfg;
  est_cfg.lr = cfg.estimator_lr;
  est_cfg.maximize = true;
  Adam opt_y(res.dine.y_net.params(), est_cfg);
  Adam opt_xy(res.dine.xy_net.params(), est_cfg);
  AdamConfig pol_cfg;
  pol_cfg.lr = cfg.policy_lr;
  pol_cfg.maximize = true;
  Adam opt_gen(res.gen.params(), pol_cfg);

  PlateauDetector plateau(cfg.plateau_window, cfg.plateau_rel);
  int K = cfg.n - cfg.T;
  res.curve.reserve(cfg.iters);
  try {
    for (int iter = 0; iter < cfg.iters; ++iter) {
      std::vector<Trajectory> batch(cfg.batch);
      parallel_for(cfg.workers, cfg.batch, [&](int r) {
        Rng rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(iter) *
                                                 cfg.batch +
                                          r));
        GeneratorPolicy pol(res.gen, cfg.epsilon);
        batch[r] = sample_trajectory(spec, pol, cfg.n, feedback, rng);
      });

      double dy = 0.0, dxy = 0.0;
      for (int k = 0; k < cfg.ratio; ++k) {
        ad::Tape tape;
        ad::OpCtx<ad::Var> ctx{&tape};
        DineScores<ad::Var> scores = dine_scores(ctx, res.dine, batch);
        DineLosses<ad::Var> losses = dine_dv_losses(scores, cfg.warmup_frac);
        dy = ad::value_of(losses.d_y);
        dxy = ad::value_of(losses.d_xy);
        ad::Var root = ad::add(losses.d_y, losses.d_xy);
        if (cfg.lme_anchor > 0.0) {
          ad::Var pen = ad::add(ad::mul(losses.lme_y, losses.lme_y),
                                ad::mul(losses.lme_xy, losses.lme_xy));
          root = ad::sub(root, ad::scale(pen, cfg.lme_anchor));
        }
        tape.backward(root);
        assert_params_within(
            tape, {res.dine.y_net.params(), res.dine.xy_net.params()});
        opt_y.step_from_tape(tape);
        opt_xy.step_from_tape(tape);
      }

      // Frozen-estimator pass: rewards and the current rate estimate.
      ad::OpCtx<MatXd> mctx{};
      DineScores<MatXd> ms = dine_scores(mctx, res.dine, batch);
      DineLosses<MatXd> ml = dine_dv_losses(ms, cfg.warmup_frac);
      double i_nats = ad::value_of(ml.d_xy) - ad::value_of(ml.d_y);

      ad::Tape ptape;
      ad::OpCtx<ad::Var> pctx{&ptape};
      ad::Var obj;
      for (int lane = 0; lane < cfg.batch; ++lane) {
        std::vector<double> r_hat(cfg.n);
        for (int t = 0; t < cfg.n; ++t) {
          r_hat[t] = ms.xy.real[t](0, lane) - ms.y.real[t](0, lane);
        }
        std::vector<double> q(K);
        for (int t = 0; t < K; ++t) q[t] = q_hat(r_hat, i_nats, t, cfg.T);
        std::vector<ad::Var> logp =
            generator_logp(pctx, res.gen, batch[lane], cfg.epsilon);
        ad::Var j_lane = policy_objective(pctx, std::span<const ad::Var>(logp),
                                          std::span<const double>(q));
        obj = lane == 0 ? j_lane : ad::add(obj, j_lane);
      }
      ptape.backward(ad::scale(obj, 1.0 / cfg.batch));
      assert_params_within(ptape, {res.gen.params()});
      opt_gen.step_from_tape(ptape);

      res.curve.push_back({iter, dy, dxy, nats_to_bits(dxy - dy),
                           elapsed_ms(t0)});
      if (plateau.push(dxy - dy)) break;
    }
  } catch (const ad::NumericError& e) {
    res.diverged = true;
    res.diagnostic = e.what();
    return res;
  }

  GeneratorPolicy eval_pol(res.gen, 0.0);
  res.report = mc_evaluate(res.dine, spec, eval_pol, feedback, cfg.eval_len,
                           derive_seed(cfg.seed, 2));
  return res;
}

TrainDiResult train_di_mine(const ChannelSpec& spec, bool feedback,
                            const PolicyGradConfig& cfg) {
  int m = spec.in_card();
  int ycard = spec.out_card();
  if (ycard <= 0 || spec.state_card() != 1) {
    throw std::invalid_argument(
        "train_di: mine mode requires a memoryless discrete channel");
  }
  if (feedback) {
    throw std::invalid_argument(
        "train_di: mine mode is feedforward only (feedback cannot help a "
        "memoryless channel)");
  }
  auto t0 = std::chrono::steady_clock::now();
  Rng init_rng(derive_seed(cfg.seed, 1));
  TrainDiResult res;
  res.mode = EstimatorMode::kMine;
  res.mine_logits = VecXd::Zero(m);
  res.mine = make_mine_model(m, ycard, cfg.est_fc_width, cfg.est_fc_depth,
                             init_rng);

  AdamConfig est_cfg;
  est_cfg.lr = cfg.estimator_lr;
  est_cfg.maximize = true;
  Adam opt_theta(res.mine.params(), est_cfg);
  AdamConfig pol_cfg;
  pol_cfg.lr = cfg.policy_lr;
  pol_cfg.maximize = true;
  MatXd phi(m, 1);
  phi.col(0) = res.mine_logits;
  Adam opt_phi({&phi}, pol_cfg);

  auto sample_pairs = [&spec, m](const VecXd& pmf, int n, Rng& rng,
                                 std::vector<int>& xs, std::vector<int>& ys) {
    xs.resize(n);
    ys.resize(n);
    for (int t = 0; t < n; ++t) {
      xs[t] = sample_from_pmf(pmf, rng);
      ys[t] = channel_step(spec, ChannelState{0}, xs[t], rng).first;
    }
  };

  PlateauDetector plateau(cfg.plateau_window, cfg.plateau_rel);
  res.curve.reserve(cfg.iters);
  std::vector<int> xs, ys;
  try {
    for (int iter = 0; iter < cfg.iters; ++iter) {
      Rng rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(iter)));
      VecXd pmf = softmax_pmf(phi.col(0));
      sample_pairs(pmf, cfg.n, rng, xs, ys);
      MatXd xf = onehot_features(xs, m);
      MatXd yf = onehot_features(ys, ycard);

      for (int k = 0; k < cfg.ratio; ++k) {
        std::vector<int> perm = sattolo_cycle(cfg.n, rng);
        ad::Tape tape;
        ad::OpCtx<ad::Var> ctx{&tape};
        ad::Var l = mine_loss(ctx, res.mine, xf, yf, perm);
        tape.backward(l);
        assert_params_within(tape, {res.mine.params()});
        opt_theta.step_from_tape(tape);
      }

      VecXd g = mine_joint_scores(res.mine, xf, yf);
      double i_nats = mine_estimate(res.mine, xf, yf, sattolo_cycle(cfg.n, rng));
      VecXd grad = mi_policy_gradient(
          xs, std::span<const double>(g.data(), g.size()), i_nats, pmf);
      MatXd gmat(m, 1);
      gmat.col(0) = grad;
      opt_phi.step({gmat});

      res.curve.push_back(
          {iter, 0.0, i_nats, nats_to_bits(i_nats), elapsed_ms(t0)});
      if (plateau.push(i_nats)) break;
    }
  } catch (const ad::NumericError& e) {
    res.diverged = true;
    res.diagnostic = e.what();
    res.mine_logits = phi.col(0);
    return res;
  }
  res.mine_logits = phi.col(0);

  // Held-out evaluation under the frozen law and scorer.
  Rng erng(derive_seed(cfg.seed, 2));
  VecXd pmf = softmax_pmf(res.mine_logits);
  sample_pairs(pmf, cfg.eval_len, erng, xs, ys);
  MatXd xf = onehot_features(xs, m);
  MatXd yf = onehot_features(ys, ycard);
  res.report.d_y_nats = 0.0;
  res.report.d_xy_nats = mine_estimate(res.mine, xf, yf,
                                       sattolo_cycle(cfg.eval_len, erng));
  res.report.n = cfg.eval_len;
  res.report.seed = derive_seed(cfg.seed, 2);
  const int nb = 20;
  int chunk = cfg.eval_len / nb;
  if (chunk >= 2) {
    std::vector<double> est(nb);
    for (int b = 0; b < nb; ++b) {
      MatXd xc = xf.middleCols(b * chunk, chunk);
      MatXd yc = yf.middleCols(b * chunk, chunk);
      est[b] = mine_estimate(res.mine, xc, yc, sattolo_cycle(chunk, erng));
    }
    double mean = std::accumulate(est.begin(), est.end(), 0.0) / nb;
    double var = 0.0;
    for (double v : est) var += (v - mean) * (v - mean);
    res.report.i_se_nats = std::sqrt(var / (nb - 1) / nb);
  }
  return res;
}

}  // namespace

TrainDiResult train_di(const ChannelSpec& spec, bool feedback,
                       const PolicyGradConfig& cfg) {
  validate_config(cfg);
  return cfg.mode == EstimatorMode::kDine ? train_di_dine(spec, feedback, cfg)
                                          : train_di_mine(spec, feedback, cfg);
}

// ---------------------------------------------------------------------------
// Learned-law diagnostics

PmfClusterSummary cluster_learned_pmf(const Trajectory& traj, int k,
                                      std::uint64_t seed) {
  if (traj.pmf.empty()) {
    throw std::invalid_argument("cluster_learned_pmf: trajectory lacks laws");
  }
  int m = static_cast<int>(traj.pmf.front().size());
  MatXd points(m, traj.n());
  for (int t = 0; t < traj.n(); ++t) {
    if (static_cast<int>(traj.pmf[t].size()) != m) {
      throw std::invalid_argument("cluster_learned_pmf: ragged laws");
    }
    points.col(t) = traj.pmf[t];
  }
  PmfClusterSummary out;
  out.clustering = kmeans(points, k, 10, 100, seed);
  std::map<std::tuple<int, int, int, int, int>, int> counts;
  for (int t = 0; t + 1 < traj.n(); ++t) {
    ++counts[{out.clustering.assignment[t], traj.x[t], traj.y[t], traj.s[t],
              out.clustering.assignment[t + 1]}];
  }
  for (const auto& [key, c] : counts) {
    out.edges.push_back({std::get<0>(key), std::get<1>(key), std::get<2>(key),
                         std::get<3>(key), std::get<4>(key), c});
  }
  return out;
}

}  // namespace dicap
