#include "dicap/estimators.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>

#include "dicap/optimizer.hpp"
#include "dicap/parallel.hpp"

namespace dicap {

std::vector<MatXd*> DineNetParams::params() {
  std::vector<MatXd*> out = trunk.params();
  for (MatXd* p : head.params()) out.push_back(p);
  return out;
}

std::vector<std::pair<std::string, MatXd*>> DineNetParams::named(
    const std::string& prefix) {
  auto out = trunk.named(prefix + ".trunk");
  for (auto& kv : head.named(prefix + ".head")) out.push_back(kv);
  return out;
}

std::vector<MatXd*> DineModel::params() {
  std::vector<MatXd*> out = y_net.params();
  for (MatXd* p : xy_net.params()) out.push_back(p);
  return out;
}

NamedParams DineModel::named() {
  NamedParams out = y_net.named("y");
  for (auto& kv : xy_net.named("xy")) out.push_back(kv);
  return out;
}

DineModel make_dine_model(int x_card, int y_card, int hidden, int fc_width,
                          int fc_depth, Rng& rng) {
  if (x_card < 2 || y_card < 2)
    throw std::invalid_argument("make_dine_model: alphabets must have >= 2 symbols");
  DineModel m;
  m.x_card = x_card;
  m.y_card = y_card;
  auto head_widths = [&](int in) {
    std::vector<int> w{in};
    for (int l = 0; l < fc_depth; ++l) w.push_back(fc_width);
    w.push_back(1);
    return w;
  };
  m.y_net.trunk = make_lstm(y_card, hidden, rng);
  m.y_net.head =
      make_mlp(head_widths(hidden + y_card), Act::kTanh, Act::kIdentity, rng);
  m.xy_net.trunk = make_lstm(x_card + y_card, hidden, rng);
  m.xy_net.head = make_mlp(head_widths(hidden + x_card + y_card), Act::kTanh,
                           Act::kIdentity, rng);
  return m;
}

MatXd onehot_cols(std::span<const Trajectory> batch, int t, SymField field,
                  int card) {
  MatXd m = MatXd::Zero(card, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t lane = 0; lane < batch.size(); ++lane) {
    int sym = field == SymField::kX   ? batch[lane].x[t]
              : field == SymField::kY ? batch[lane].y[t]
                                      : batch[lane].ytilde[t];
    if (sym < 0 || sym >= card)
      throw std::invalid_argument("onehot_cols: symbol out of range");
    m(sym, static_cast<Eigen::Index>(lane)) = 1.0;
  }
  return m;
}

template <typename V>
DineScores<V> dine_scores(ad::OpCtx<V> ctx, DineModel& model,
                          std::span<const Trajectory> batch) {
  if (batch.empty())
    throw std::invalid_argument("dine_scores: empty batch");
  int L = batch[0].n();
  if (L < 2) throw std::invalid_argument("dine_scores: trajectories too short");
  for (const Trajectory& traj : batch)
    if (traj.n() != L)
      throw std::invalid_argument("dine_scores: trajectory length mismatch");
  int B = static_cast<int>(batch.size());

  LstmCell<V> y_trunk(ctx, model.y_net.trunk);
  LstmCell<V> xy_trunk(ctx, model.xy_net.trunk);
  Mlp<V> y_head(ctx, model.y_net.head);
  Mlp<V> xy_head(ctx, model.xy_net.head);
  LstmState<V> ys = y_trunk.zero_state(ctx, B);
  LstmState<V> xys = xy_trunk.zero_state(ctx, B);

  DineScores<V> out;
  out.y.real.reserve(L);
  out.y.ref.reserve(L);
  out.xy.real.reserve(L);
  out.xy.ref.reserve(L);
  for (int t = 0; t < L; ++t) {
    V xoh = ctx.lift(onehot_cols(batch, t, SymField::kX, model.x_card));
    V yoh = ctx.lift(onehot_cols(batch, t, SymField::kY, model.y_card));
    V ytoh = ctx.lift(onehot_cols(batch, t, SymField::kYtilde, model.y_card));
    {
      std::vector<V> real_in{ys.h, yoh};
      std::vector<V> ref_in{ys.h, ytoh};
      out.y.real.push_back(
          y_head.forward(ad::concat_rows(std::span<const V>(real_in))));
      out.y.ref.push_back(
          y_head.forward(ad::concat_rows(std::span<const V>(ref_in))));
    }
    {
      std::vector<V> real_in{xys.h, xoh, yoh};
      std::vector<V> ref_in{xys.h, xoh, ytoh};
      out.xy.real.push_back(
          xy_head.forward(ad::concat_rows(std::span<const V>(real_in))));
      out.xy.ref.push_back(
          xy_head.forward(ad::concat_rows(std::span<const V>(ref_in))));
    }
    ys = y_trunk.step(yoh, ys);
    std::vector<V> xy_in{xoh, yoh};
    xys = xy_trunk.step(ad::concat_rows(std::span<const V>(xy_in)), xys);
  }
  return out;
}

template DineScores<ad::Var> dine_scores(ad::OpCtx<ad::Var>, DineModel&,
                                         std::span<const Trajectory>);
template DineScores<MatXd> dine_scores(ad::OpCtx<MatXd>, DineModel&,
                                       std::span<const Trajectory>);

namespace {

int warmup_skip(int length, double warmup_frac) {
  int skip = static_cast<int>(std::ceil(warmup_frac * length));
  return std::min(skip, length - 1);
}

template <typename V>
std::pair<V, V> dv_and_lme(const NetScores<V>& s, int skip) {
  std::span<const V> real(s.real.data() + skip, s.real.size() - skip);
  std::span<const V> ref(s.ref.data() + skip, s.ref.size() - skip);
  V lme = ad::logmeanexp_all(ad::concat_cols(ref));
  V dv = ad::sub(ad::mean_all(ad::concat_cols(real)), lme);
  return {std::move(dv), std::move(lme)};
}

}  // namespace

template <typename V>
DineLosses<V> dine_dv_losses(const DineScores<V>& scores, double warmup_frac) {
  int L = static_cast<int>(scores.y.real.size());
  if (L == 0) throw std::invalid_argument("dine_dv_losses: no scores");
  int skip = warmup_skip(L, warmup_frac);
  auto [d_y, lme_y] = dv_and_lme(scores.y, skip);
  auto [d_xy, lme_xy] = dv_and_lme(scores.xy, skip);
  return {std::move(d_y), std::move(d_xy), std::move(lme_y),
          std::move(lme_xy)};
}

template DineLosses<ad::Var> dine_dv_losses(const DineScores<ad::Var>&, double);
template DineLosses<MatXd> dine_dv_losses(const DineScores<MatXd>&, double);

// ---------------------------------------------------------------------------
// Evaluation

EstimateReport evaluate_dine(DineModel& model, const Trajectory& traj,
                             double warmup_frac, std::uint64_t seed) {
  ad::OpCtx<MatXd> ctx{};
  std::span<const Trajectory> batch(&traj, 1);
  DineScores<MatXd> scores = dine_scores(ctx, model, batch);
  DineLosses<MatXd> losses = dine_dv_losses(scores, warmup_frac);
  EstimateReport rep;
  rep.d_y_nats = ad::value_of(losses.d_y);
  rep.d_xy_nats = ad::value_of(losses.d_xy);
  rep.n = traj.n();
  rep.seed = seed;
  // batch-means standard error of the mean per-step reward
  int skip = warmup_skip(traj.n(), warmup_frac);
  std::vector<double> r;
  r.reserve(traj.n() - skip);
  for (int t = skip; t < traj.n(); ++t)
    r.push_back(ad::value_of(scores.xy.real[t]) -
                ad::value_of(scores.y.real[t]));
  const int nb = 20;
  int chunk = static_cast<int>(r.size()) / nb;
  if (chunk >= 2) {
    std::vector<double> means(nb);
    for (int b = 0; b < nb; ++b) {
      double s = 0.0;
      for (int i = b * chunk; i < (b + 1) * chunk; ++i) s += r[i];
      means[b] = s / chunk;
    }
    double mbar = std::accumulate(means.begin(), means.end(), 0.0) / nb;
    double var = 0.0;
    for (double m : means) var += (m - mbar) * (m - mbar);
    var /= nb - 1;
    rep.i_se_nats = std::sqrt(var / nb);
  }
  return rep;
}

std::vector<double> reward_proxy(DineModel& model, const Trajectory& traj) {
  ad::OpCtx<MatXd> ctx{};
  std::span<const Trajectory> batch(&traj, 1);
  DineScores<MatXd> scores = dine_scores(ctx, model, batch);
  std::vector<double> r(traj.n());
  for (int t = 0; t < traj.n(); ++t)
    r[t] = ad::value_of(scores.xy.real[t]) - ad::value_of(scores.y.real[t]);
  return r;
}

EstimateReport mc_evaluate(DineModel& model, const ChannelSpec& spec,
                           Policy& policy, bool feedback, int n_eval,
                           std::uint64_t seed, double warmup_frac) {
  if (n_eval < 10'000)
    throw std::invalid_argument("mc_evaluate: n_eval must be >= 10000");
  Rng rng = make_rng(seed);
  Trajectory traj = sample_trajectory(spec, policy, n_eval, feedback, rng);
  return evaluate_dine(model, traj, warmup_frac, seed);
}

// ---------------------------------------------------------------------------
// Curves, plateau detection, training

void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& curve) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("write_curve_csv: cannot open " + path);
  // wall_ms stays out of the file: identical seeds must yield identical bytes
  os << "iter,d_y_nats,d_xy_nats,di_bits\n" << std::setprecision(12);
  for (const CurvePoint& p : curve)
    os << p.iter << "," << p.d_y << "," << p.d_xy << "," << p.di_bits << "\n";
  if (!os) throw std::runtime_error("write_curve_csv: write failed");
}

bool PlateauDetector::push(double v) {
  values_.push_back(v);
  int n = static_cast<int>(values_.size());
  if (n < 2 * window_ || n % window_ != 0) return false;
  auto mean = [&](int from) {
    double s = 0.0;
    for (int i = from; i < from + window_; ++i) s += values_[i];
    return s / window_;
  };
  double prev = mean(n - 2 * window_);
  double cur = mean(n - window_);
  return std::abs(cur - prev) <= rel_tol_ * std::max(std::abs(prev), 1e-9);
}

DineTrainResult train_dine(const ChannelSpec& spec, Policy& policy,
                           bool feedback, const DineTrainConfig& cfg) {
  Rng init_rng = make_rng(derive_seed(cfg.seed, 1));
  DineTrainResult result;
  result.model = make_dine_model(spec.in_card(), spec.out_card(), cfg.hidden,
                                 cfg.fc_width, cfg.fc_depth, init_rng);
  DineModel& model = result.model;
  AdamConfig opt_cfg;
  opt_cfg.lr = cfg.lr;
  opt_cfg.maximize = true;
  Adam opt_y(model.y_net.params(), opt_cfg);
  Adam opt_xy(model.xy_net.params(), opt_cfg);
  PlateauDetector plateau(cfg.plateau_window, cfg.plateau_rel);
  auto start = std::chrono::steady_clock::now();
  std::vector<Trajectory> batch(cfg.batch);
  for (int iter = 0; iter < cfg.iters; ++iter) {
    parallel_for(cfg.workers, cfg.batch, [&](int r) {
      Rng rng = make_rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(iter) * cfg.batch + r));
      batch[r] = sample_trajectory(spec, policy, cfg.rollout_len, feedback, rng);
    });
    double dy, dxy;
    try {
      ad::Tape tape;
      ad::OpCtx<ad::Var> ctx{&tape};
      DineScores<ad::Var> scores = dine_scores(ctx, model, batch);
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
      opt_y.step_from_tape(tape);
      opt_xy.step_from_tape(tape);
    } catch (const ad::NumericError& e) {
      result.diverged = true;
      result.diagnostic = e.what();
      break;
    }
    double ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
    result.curve.push_back(
        {iter, dy, dxy, nats_to_bits(dxy - dy), ms});
    if (plateau.push(dxy - dy)) break;
  }
  if (!result.diverged)
    result.report = mc_evaluate(model, spec, policy, feedback, cfg.eval_len,
                                derive_seed(cfg.seed, 2), cfg.warmup_frac);
  return result;
}

// ---------------------------------------------------------------------------
// MINE

MineModel make_mine_model(int x_dims, int y_dims, int width, int depth,
                          Rng& rng) {
  if (x_dims < 1 || y_dims < 1)
    throw std::invalid_argument("make_mine_model: feature dims must be positive");
  MineModel m;
  m.x_dims = x_dims;
  m.y_dims = y_dims;
  std::vector<int> widths{x_dims + y_dims};
  for (int l = 0; l < depth; ++l) widths.push_back(width);
  widths.push_back(1);
  m.net = make_mlp(std::move(widths), Act::kTanh, Act::kIdentity, rng);
  return m;
}

std::vector<int> sattolo_cycle(int n, Rng& rng) {
  if (n < 2)
    throw std::invalid_argument("sattolo_cycle: need at least 2 elements");
  std::vector<int> a(n);
  std::iota(a.begin(), a.end(), 0);
  for (int i = n - 1; i > 0; --i) {
    int j = static_cast<int>(
        std::uniform_int_distribution<int>(0, i - 1)(rng));
    std::swap(a[i], a[j]);
  }
  return a;
}

namespace {

void check_mine_args(const MineModel& model, const MatXd& xf, const MatXd& yf,
                     const std::vector<int>& perm) {
  if (xf.cols() != yf.cols() || xf.cols() < 2)
    throw std::invalid_argument("mine: need at least 2 aligned sample columns");
  if (xf.rows() != model.x_dims || yf.rows() != model.y_dims)
    throw std::invalid_argument("mine: feature dimension mismatch");
  if (static_cast<Eigen::Index>(perm.size()) != yf.cols())
    throw std::invalid_argument("mine: permutation length mismatch");
}

MatXd permute_cols(const MatXd& m, const std::vector<int>& perm) {
  MatXd out(m.rows(), m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) out.col(c) = m.col(perm[c]);
  return out;
}

}  // namespace

template <typename V>
V mine_loss(ad::OpCtx<V> ctx, MineModel& model, const MatXd& xf,
            const MatXd& yf, const std::vector<int>& perm) {
  check_mine_args(model, xf, yf, perm);
  Mlp<V> net(ctx, model.net);
  MatXd joint_in(xf.rows() + yf.rows(), xf.cols());
  joint_in << xf, yf;
  MatXd neg_in(xf.rows() + yf.rows(), xf.cols());
  neg_in << xf, permute_cols(yf, perm);
  V joint = net.forward(ctx.lift(std::move(joint_in)));
  V neg = net.forward(ctx.lift(std::move(neg_in)));
  return dv_kl_loss(joint, neg);
}

template ad::Var mine_loss(ad::OpCtx<ad::Var>, MineModel&, const MatXd&,
                           const MatXd&, const std::vector<int>&);
template MatXd mine_loss(ad::OpCtx<MatXd>, MineModel&, const MatXd&,
                         const MatXd&, const std::vector<int>&);

VecXd mine_joint_scores(MineModel& model, const MatXd& xf, const MatXd& yf) {
  if (xf.cols() != yf.cols())
    throw std::invalid_argument("mine_joint_scores: sample count mismatch");
  ad::OpCtx<MatXd> ctx{};
  Mlp<MatXd> net(ctx, model.net);
  MatXd joint_in(xf.rows() + yf.rows(), xf.cols());
  joint_in << xf, yf;
  return net.forward(joint_in).transpose();
}

double mine_estimate(MineModel& model, const MatXd& xf, const MatXd& yf,
                     const std::vector<int>& perm) {
  ad::OpCtx<MatXd> ctx{};
  return ad::value_of(mine_loss(ctx, model, xf, yf, perm));
}

MatXd onehot_features(std::span<const int> symbols, int card) {
  MatXd m = MatXd::Zero(card, static_cast<Eigen::Index>(symbols.size()));
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    if (symbols[i] < 0 || symbols[i] >= card)
      throw std::invalid_argument("onehot_features: symbol out of range");
    m(symbols[i], static_cast<Eigen::Index>(i)) = 1.0;
  }
  return m;
}

}  // namespace dicap
