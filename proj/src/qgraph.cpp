#include "dicap/qgraph.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "json.hpp"

#include "dicap/autodiff.hpp"
#include "dicap/kmeans.hpp"
#include "dicap/optimizer.hpp"
#include "dicap/parallel.hpp"
#include "dicap/rng.hpp"

namespace dicap {

namespace {

MatXd yoh_cols(std::span<const Trajectory> batch, int t, int card) {
  MatXd m = MatXd::Zero(card, static_cast<Eigen::Index>(batch.size()));
  for (Eigen::Index b = 0; b < m.cols(); ++b) {
    int y = batch[static_cast<std::size_t>(b)].y[static_cast<std::size_t>(t)];
    if (y < 0 || y >= card)
      throw std::invalid_argument("qnet: output symbol out of range");
    m(y, b) = 1.0;
  }
  return m;
}

}  // namespace

std::vector<MatXd*> QNet::params() { return net.params(); }

std::vector<std::pair<std::string, MatXd*>> QNet::named(
    const std::string& prefix) {
  return net.named(prefix + ".net");
}

QNet make_qnet(int s_card, int y_card, int width, int depth, Rng& rng) {
  if (s_card < 1 || y_card < 2)
    throw std::invalid_argument("make_qnet: need s_card >= 1 and y_card >= 2");
  if (width < 1 || depth < 1)
    throw std::invalid_argument("make_qnet: need width, depth >= 1");
  std::vector<int> widths;
  widths.push_back(s_card + y_card);
  for (int l = 0; l < depth; ++l) widths.push_back(width);
  widths.push_back(s_card);
  QNet qn;
  qn.s_card = s_card;
  qn.y_card = y_card;
  qn.net = make_mlp(std::move(widths), Act::kTanh, Act::kIdentity, rng);
  return qn;
}

MatXd qnet_beliefs(QNet& qnet, std::span<const int> ys) {
  ad::OpCtx<MatXd> ctx;
  Mlp<MatXd> net(ctx, qnet.net);
  MatXd q = MatXd::Zero(qnet.s_card, 1);
  MatXd out(qnet.s_card, static_cast<Eigen::Index>(ys.size()));
  for (Eigen::Index t = 0; t < out.cols(); ++t) {
    int y = ys[static_cast<std::size_t>(t)];
    if (y < 0 || y >= qnet.y_card)
      throw std::invalid_argument("qnet_beliefs: output symbol out of range");
    MatXd in(qnet.s_card + qnet.y_card, 1);
    in.topRows(qnet.s_card) = q;
    in.bottomRows(qnet.y_card) = MatXd(one_hot(y, qnet.y_card));
    q = ad::softmax_cols(net.forward(in));
    out.col(t) = q.col(0);
  }
  return out;
}

double qnet_ce(const MatXd& beliefs, std::span<const int> labels) {
  if (static_cast<std::size_t>(beliefs.cols()) != labels.size())
    throw std::invalid_argument("qnet_ce: beliefs/labels size mismatch");
  if (labels.empty()) throw std::invalid_argument("qnet_ce: empty sequence");
  double total = 0.0;
  for (Eigen::Index t = 0; t < beliefs.cols(); ++t) {
    int s = labels[static_cast<std::size_t>(t)];
    if (s < 0 || s >= beliefs.rows())
      throw std::invalid_argument("qnet_ce: label out of range");
    total -= std::log(beliefs(s, t));
  }
  return total / static_cast<double>(beliefs.cols());
}

QNetTrainResult train_qnet(const ChannelSpec& spec, Policy& policy,
                           bool feedback, const QNetTrainConfig& cfg) {
  if (spec.out_card() < 2)
    throw std::invalid_argument("train_qnet: " + spec.name() +
                                " exposes no discrete latent state to "
                                "supervise on");
  if (cfg.iters < 1 || cfg.batch < 1)
    throw std::invalid_argument("train_qnet: iters and batch must be >= 1");
  if (cfg.rollout_len < 2)
    throw std::invalid_argument(
        "train_qnet: rollout_len must be >= 2 (labels are next-step states)");

  QNetTrainResult res;
  Rng init_rng(derive_seed(cfg.seed, 1));
  res.qnet = make_qnet(spec.state_card(), spec.out_card(), cfg.width,
                       cfg.depth, init_rng);
  Adam opt(res.qnet.params(), AdamConfig{.lr = cfg.lr});
  res.loss_curve.reserve(static_cast<std::size_t>(cfg.iters));

  int n = cfg.rollout_len;
  for (int iter = 0; iter < cfg.iters; ++iter) {
    std::vector<Trajectory> batch(static_cast<std::size_t>(cfg.batch));
    for (int b = 0; b < cfg.batch; ++b) {
      Rng rng(derive_seed(cfg.seed, 1000 + static_cast<std::uint64_t>(iter) *
                                               static_cast<std::uint64_t>(
                                                   cfg.batch) +
                                        static_cast<std::uint64_t>(b)));
      batch[static_cast<std::size_t>(b)] =
          sample_trajectory(spec, policy, n, feedback, rng);
    }

    ad::Tape tape;
    ad::OpCtx<ad::Var> ctx{&tape};
    Mlp<ad::Var> net(ctx, res.qnet.net);
    ad::Var q = ctx.lift(MatXd::Zero(res.qnet.s_card, cfg.batch));
    std::vector<ad::Var> picks;
    picks.reserve(static_cast<std::size_t>(n - 1));
    for (int t = 0; t + 1 < n; ++t) {
      std::array<ad::Var, 2> parts{
          q, ctx.lift(yoh_cols(batch, t, res.qnet.y_card))};
      ad::Var z = net.forward(ad::concat_rows(parts));
      q = ad::softmax_cols(z);
      std::vector<int> labels(static_cast<std::size_t>(cfg.batch));
      for (int b = 0; b < cfg.batch; ++b)
        labels[static_cast<std::size_t>(b)] =
            batch[static_cast<std::size_t>(b)].s[static_cast<std::size_t>(t) +
                                                 1];
      picks.push_back(ad::select_cols(ad::log_softmax_cols(z), labels));
    }
    ad::Var loss = ad::neg(ad::mean_all(ad::concat_cols(picks)));
    tape.backward(loss);
    opt.step_from_tape(tape);
    res.loss_curve.push_back(ad::value_of(loss));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Graph extraction

namespace {

struct BeliefRun {
  MatXd beliefs;       // column t: belief after y[t]
  std::vector<int> y;  // y[t+1] labels the transition t -> t+1
};

BeliefRun roll_beliefs(QNet& qnet, const ChannelSpec& spec, Policy& policy,
                       bool feedback, int n, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 3));
  Trajectory traj = sample_trajectory(spec, policy, n, feedback, rng);
  BeliefRun run;
  run.beliefs = qnet_beliefs(qnet, traj.y);
  run.y = std::move(traj.y);
  return run;
}

QGraph graph_from_beliefs(const BeliefRun& run, int y_card, int k,
                          std::uint64_t seed) {
  KMeansResult km = kmeans(run.beliefs, k, 10, 100, derive_seed(seed, 4));
  std::vector<long> counts(
      static_cast<std::size_t>(k) * static_cast<std::size_t>(y_card) *
          static_cast<std::size_t>(k),
      0);
  auto at = [&](int i, int y, int j) -> long& {
    return counts[(static_cast<std::size_t>(i) *
                       static_cast<std::size_t>(y_card) +
                   static_cast<std::size_t>(y)) *
                      static_cast<std::size_t>(k) +
                  static_cast<std::size_t>(j)];
  };
  for (std::size_t t = 0; t + 1 < run.y.size(); ++t)
    ++at(km.assignment[t], run.y[t + 1], km.assignment[t + 1]);

  QGraph g;
  g.node_count = k;
  g.next = Eigen::MatrixXi::Zero(k, y_card);
  g.centroids = km.centroids;
  long modal_total = 0;
  long grand_total = 0;
  for (int i = 0; i < k; ++i) {
    for (int y = 0; y < y_card; ++y) {
      long best = -1;
      int arg = 0;
      long total = 0;
      for (int j = 0; j < k; ++j) {
        long c = at(i, y, j);
        total += c;
        if (c > best) {
          best = c;
          arg = j;
        }
      }
      if (total == 0)
        throw std::runtime_error(
            "extract_qgraph: no transition observed from node " +
            std::to_string(i) + " under y=" + std::to_string(y) +
            "; increase n");
      g.next(i, y) = arg;
      modal_total += best;
      grand_total += total;
    }
  }
  g.purity = static_cast<double>(modal_total) /
             static_cast<double>(grand_total);
  return g;
}

}  // namespace

QGraph extract_qgraph(QNet& qnet, const ChannelSpec& spec, Policy& policy,
                      bool feedback, int n, int k, std::uint64_t seed) {
  if (n < 100000)
    throw std::invalid_argument(
        "extract_qgraph: need n >= 100000 for stable modal transitions");
  BeliefRun run = roll_beliefs(qnet, spec, policy, feedback, n, seed);
  return graph_from_beliefs(run, qnet.y_card, k, seed);
}

KSelection select_qgraph_k(QNet& qnet, const ChannelSpec& spec, Policy& policy,
                           bool feedback, int n, int k_max, std::uint64_t seed,
                           double purity_min) {
  if (k_max < 2)
    throw std::invalid_argument("select_qgraph_k: k_max must be >= 2");
  if (n < 100000)
    throw std::invalid_argument(
        "select_qgraph_k: need n >= 100000 for stable modal transitions");
  BeliefRun run = roll_beliefs(qnet, spec, policy, feedback, n, seed);
  KSelection sel;
  for (int k = 2; k <= k_max; ++k) {
    QGraph g;
    try {
      g = graph_from_beliefs(run, qnet.y_card, k, seed);
    } catch (const std::invalid_argument&) {
      break;  // k exceeds the distinct belief points; larger k cannot work
    } catch (const std::runtime_error&) {
      sel.purities.push_back(0.0);  // some edge unobserved at this k
      continue;
    }
    sel.purities.push_back(g.purity);
    if (g.purity >= purity_min) {
      sel.k = k;
      sel.graph = std::move(g);
      return sel;
    }
  }
  std::ostringstream os;
  os << "select_qgraph_k: no k in [2, " << k_max << "] reaches purity "
     << purity_min << " (got:";
  for (double p : sel.purities) os << ' ' << p;
  os << ")";
  throw std::runtime_error(os.str());
}

QGraph trivial_qgraph(int y_card) {
  if (y_card < 2)
    throw std::invalid_argument("trivial_qgraph: y_card must be >= 2");
  QGraph g;
  g.node_count = 1;
  g.next = Eigen::MatrixXi::Zero(1, y_card);
  g.centroids = MatXd::Ones(1, 1);
  g.purity = 1.0;
  return g;
}

// ---------------------------------------------------------------------------
// Stationary law of the (s, q) chain

namespace {

/// P(s' | s, x, y) as index/mass pairs; handles the non-unifilar kinds.
std::array<std::pair<int, double>, 2> state_succ(const ChannelSpec& spec,
                                                 int s, int x, int y) {
  if (spec.kind == ChannelKind::kGilbertElliott) {
    double stay = s == 0 ? 1.0 - spec.b : 1.0 - spec.g;
    return {{{s, stay}, {1 - s, 1.0 - stay}}};
  }
  if (spec.kind == ChannelKind::kNost && spec.eta > 0.0) {
    if (y == 0) return {{{0, 1.0}, {1, 0.0}}};
    return {{{0, spec.eta}, {1, 1.0 - spec.eta}}};
  }
  return {{{next_state(spec, s, x, y), 1.0}, {0, 0.0}}};
}

MatXd sq_transition(const ChannelSpec& spec, const QGraph& graph,
                    const MatXd& p) {
  int S = spec.state_card();
  int Q = graph.node_count;
  int X = spec.in_card();
  int Y = spec.out_card();
  MatXd t = MatXd::Zero(S * Q, S * Q);
  for (int s = 0; s < S; ++s) {
    for (int q = 0; q < Q; ++q) {
      int row = s * Q + q;
      for (int x = 0; x < X; ++x) {
        double px = p(row, x);
        if (px <= 0.0) continue;
        for (int y = 0; y < Y; ++y) {
          double w = px * kernel_prob(spec, s, x, y);
          if (w <= 0.0) continue;
          int qn = graph.next(q, y);
          for (auto [sn, mass] : state_succ(spec, s, x, y))
            if (mass > 0.0) t(row, sn * Q + qn) += w * mass;
        }
      }
    }
  }
  return t;
}

int recurrent_class_count(const MatXd& t) {
  int n = static_cast<int>(t.rows());
  std::vector<std::vector<bool>> reach(
      static_cast<std::size_t>(n), std::vector<bool>(static_cast<std::size_t>(n)));
  for (int i = 0; i < n; ++i) {
    reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(i)] = true;
    for (int j = 0; j < n; ++j)
      if (t(i, j) > 0.0) reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;
  }
  for (int k = 0; k < n; ++k)
    for (int i = 0; i < n; ++i)
      if (reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)])
        for (int j = 0; j < n; ++j)
          if (reach[static_cast<std::size_t>(k)][static_cast<std::size_t>(j)])
            reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] = true;

  auto mutual = [&](int i, int j) {
    return reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] &&
           reach[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
  };
  int classes = 0;
  for (int i = 0; i < n; ++i) {
    bool recurrent = true;
    for (int j = 0; j < n && recurrent; ++j)
      if (reach[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)] &&
          !reach[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)])
        recurrent = false;
    if (!recurrent) continue;
    bool first = true;  // count each class once, at its smallest member
    for (int j = 0; j < i; ++j)
      if (mutual(i, j)) first = false;
    if (first) ++classes;
  }
  return classes;
}

double l1_residual(const VecXd& pi, const MatXd& t) {
  return ((t.transpose() * pi) - pi).cwiseAbs().sum();
}

VecXd stationary_of(const MatXd& t) {
  int n = static_cast<int>(t.rows());
  // Solve pi (T - I) = 0 with the normalization replacing one equation.
  MatXd a = t.transpose() - MatXd::Identity(n, n);
  a.row(n - 1).setOnes();
  VecXd b = VecXd::Zero(n);
  b(n - 1) = 1.0;
  VecXd pi = a.fullPivLu().solve(b);
  bool ok = pi.minCoeff() > -1e-10;
  if (ok) {
    pi = pi.cwiseMax(0.0);
    pi /= pi.sum();
    ok = l1_residual(pi, t) <= 1e-12;
  }
  if (!ok) {
    // Lazy power iteration fallback: same stationary vector, aperiodic.
    MatXd lazy = 0.5 * (t + MatXd::Identity(n, n));
    pi = VecXd::Constant(n, 1.0 / n);
    for (int it = 0; it < 2000000; ++it) {
      VecXd nxt = lazy.transpose() * pi;
      nxt /= nxt.sum();
      pi = nxt;
      if (it % 16 == 0 && l1_residual(pi, t) <= 1e-13) break;
    }
    if (l1_residual(pi, t) > 1e-12)
      throw std::runtime_error("stationary_joint: power iteration stalled");
  }
  return pi;
}

void validate_input_law(const ChannelSpec& spec, const QGraph& graph,
                        const MatXd& p) {
  int rows = spec.state_card() * graph.node_count;
  if (p.rows() != rows || p.cols() != spec.in_card())
    throw std::invalid_argument(
        "stationary_joint: input law must be (|S|*|Q|) x |X|");
  for (int r = 0; r < p.rows(); ++r) {
    if (p.row(r).minCoeff() < -1e-9 ||
        std::abs(p.row(r).sum() - 1.0) > 1e-9)
      throw std::invalid_argument("stationary_joint: input law row " +
                                  std::to_string(r) + " is not on the simplex");
  }
  if (graph.next.rows() != graph.node_count ||
      graph.next.cols() != spec.out_card())
    throw std::invalid_argument("stationary_joint: graph/channel shape mismatch");
  if (graph.next.minCoeff() < 0 || graph.next.maxCoeff() >= graph.node_count)
    throw std::invalid_argument("stationary_joint: graph successor out of range");
}

}  // namespace

VecXd stationary_joint(const ChannelSpec& spec, const QGraph& graph,
                       const MatXd& p_x_given_sq) {
  if (spec.out_card() < 2)
    throw std::invalid_argument("stationary_joint: discrete channels only");
  validate_input_law(spec, graph, p_x_given_sq);
  MatXd t = sq_transition(spec, graph, p_x_given_sq);
  int classes = recurrent_class_count(t);
  if (classes != 1)
    throw std::domain_error(
        "stationary_joint: not in P_Q — the (s,q) chain is reducible (" +
        std::to_string(classes) + " recurrent classes, need exactly one)");
  return stationary_of(t);
}

// ---------------------------------------------------------------------------
// Upper bound by coordinate ascent

namespace {

double cond_mi_bits(const ChannelSpec& spec, const QGraph& graph,
                    const MatXd& p, const VecXd& pi) {
  int S = spec.state_card();
  int Q = graph.node_count;
  int X = spec.in_card();
  int Y = spec.out_card();
  double nats = 0.0;
  for (int q = 0; q < Q; ++q) {
    double pq = 0.0;
    for (int s = 0; s < S; ++s) pq += pi(s * Q + q);
    if (pq < 1e-15) continue;
    VecXd py = VecXd::Zero(Y);
    for (int s = 0; s < S; ++s) {
      double w = pi(s * Q + q);
      if (w <= 0.0) continue;
      for (int x = 0; x < X; ++x) {
        double wx = w * p(s * Q + q, x);
        if (wx <= 0.0) continue;
        for (int y = 0; y < Y; ++y) py(y) += wx * kernel_prob(spec, s, x, y);
      }
    }
    py /= pq;
    for (int s = 0; s < S; ++s) {
      double w = pi(s * Q + q);
      if (w <= 0.0) continue;
      for (int x = 0; x < X; ++x) {
        double wx = w * p(s * Q + q, x);
        if (wx <= 0.0) continue;
        for (int y = 0; y < Y; ++y) {
          double ky = kernel_prob(spec, s, x, y);
          if (ky <= 0.0) continue;
          nats += wx * ky * (std::log(ky) - std::log(py(y)));
        }
      }
    }
  }
  return nats / kLn2;
}

struct AscentOutcome {
  double value_bits = 0.0;
  MatXd p;
  bool feasible = false;
};

std::optional<double> try_value(const ChannelSpec& spec, const QGraph& graph,
                                const MatXd& p) {
  try {
    VecXd pi = stationary_joint(spec, graph, p);
    return cond_mi_bits(spec, graph, p, pi);
  } catch (const std::domain_error&) {
    return std::nullopt;
  }
}

MatXd random_law(int rows, int cols, Rng& rng) {
  MatXd p(rows, cols);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int r = 0; r < rows; ++r) {
    double sum = 0.0;
    for (int c = 0; c < cols; ++c) {
      double u = unif(rng);
      while (u <= 0.0) u = unif(rng);
      p(r, c) = -std::log(u);  // Dirichlet(1) row after normalization
      sum += p(r, c);
    }
    p.row(r) /= sum;
  }
  return p;
}

AscentOutcome ascend_once(const ChannelSpec& spec, const QGraph& graph,
                          const QBoundConfig& cfg, std::uint64_t stream) {
  int rows = spec.state_card() * graph.node_count;
  int cols = spec.in_card();
  Rng rng(derive_seed(cfg.seed, 10 + stream));

  MatXd p;
  std::optional<double> value;
  if (stream == 0) {
    p = MatXd::Constant(rows, cols, 1.0 / cols);
    value = try_value(spec, graph, p);
  }
  for (int attempt = 0; attempt < 100 && !value.has_value(); ++attempt) {
    p = random_law(rows, cols, rng);
    value = try_value(spec, graph, p);
  }
  AscentOutcome out;
  if (!value.has_value()) return out;

  double best = *value;
  double tol_bits = cfg.tol_nats / kLn2;
  for (double step = cfg.step_init; step >= cfg.step_min * (1.0 - 1e-12);
       step *= 0.5) {
    for (int sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
      double gained = 0.0;
      for (int r = 0; r < rows; ++r) {
        for (int a = 0; a < cols; ++a) {
          for (int b = 0; b < cols; ++b) {
            if (a == b) continue;
            double delta = std::min(step, p(r, a));
            if (delta <= 1e-15) continue;
            MatXd cand = p;
            cand(r, a) -= delta;
            cand(r, b) += delta;
            std::optional<double> v = try_value(spec, graph, cand);
            if (v.has_value() && *v > best) {
              gained += *v - best;
              best = *v;
              p = std::move(cand);
            }
          }
        }
      }
      if (gained < tol_bits) break;
    }
  }
  out.value_bits = best;
  out.p = std::move(p);
  out.feasible = true;
  return out;
}

}  // namespace

BoundResult qgraph_bound(const ChannelSpec& spec, const QGraph& graph,
                         const QBoundConfig& cfg, double lb_proxy_bits) {
  if (spec.out_card() < 2)
    throw std::invalid_argument("qgraph_bound: discrete channels only");
  if (cfg.restarts < 1)
    throw std::invalid_argument("qgraph_bound: restarts must be >= 1");
  if (!(cfg.step_init > cfg.step_min) || !(cfg.step_min > 0.0))
    throw std::invalid_argument("qgraph_bound: need step_init > step_min > 0");

  std::vector<AscentOutcome> slots(static_cast<std::size_t>(cfg.restarts));
  parallel_for(cfg.workers, cfg.restarts, [&](int r) {
    slots[static_cast<std::size_t>(r)] =
        ascend_once(spec, graph, cfg, static_cast<std::uint64_t>(r));
  });

  int best = -1;
  for (int r = 0; r < cfg.restarts; ++r) {
    if (!slots[static_cast<std::size_t>(r)].feasible) continue;
    if (best < 0 || slots[static_cast<std::size_t>(r)].value_bits >
                        slots[static_cast<std::size_t>(best)].value_bits)
      best = r;
  }
  if (best < 0)
    throw std::runtime_error("qgraph_bound: no irreducible feasible point found");

  BoundResult res;
  res.ub_bits = slots[static_cast<std::size_t>(best)].value_bits;
  res.p_x_given_sq = std::move(slots[static_cast<std::size_t>(best)].p);
  res.pi = stationary_joint(spec, graph, res.p_x_given_sq);
  res.lb_proxy_bits = lb_proxy_bits;
  return res;
}

// ---------------------------------------------------------------------------
// Graph counting

QGraphCount count_qgraphs(int m, int y_card) {
  if (m < 1) throw std::invalid_argument("count_qgraphs: m must be >= 1");
  if (y_card < 2)
    throw std::invalid_argument("count_qgraphs: y_card must be >= 2");
  QGraphCount out;
  double lm = std::log(static_cast<double>(m));
  double log_fact = 0.0;  // ln m! as a plain sum: exact zero at m = 1
  for (int i = 2; i <= m; ++i) log_fact += std::log(static_cast<double>(i));
  out.log_count = static_cast<double>(m) * y_card * lm - log_fact;
  out.log_bound = static_cast<double>(m) * lm;
  out.bound_holds = out.log_count >= out.log_bound;
  // Exact quotient while the power stays inside the double mantissa.
  if (static_cast<double>(m) * y_card * std::log2(static_cast<double>(m)) <=
      52.0) {
    double power = 1.0;
    for (int i = 0; i < m * y_card; ++i) power *= m;
    double fact = 1.0;
    for (int i = 2; i <= m; ++i) fact *= i;
    out.count = power / fact;
  } else {
    out.count = std::exp(out.log_count);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

std::string qgraph_to_json(const QGraph& graph) {
  nlohmann::json j;
  j["node_count"] = graph.node_count;
  j["purity"] = graph.purity;
  nlohmann::json nodes = nlohmann::json::array();
  for (int i = 0; i < graph.node_count; ++i) {
    nlohmann::json v = nlohmann::json::array();
    for (int r = 0; r < graph.centroids.rows(); ++r)
      v.push_back(graph.centroids(r, i));
    nodes.push_back(v);
  }
  j["nodes"] = nodes;
  nlohmann::json edges = nlohmann::json::array();
  for (int i = 0; i < graph.node_count; ++i)
    for (int y = 0; y < graph.next.cols(); ++y)
      edges.push_back({{"from", i}, {"to", graph.next(i, y)}, {"y", y}});
  j["edges"] = edges;
  return j.dump(2);
}

std::string qgraph_to_dot(const QGraph& graph) {
  std::ostringstream os;
  os << "digraph qgraph {\n";
  for (int i = 0; i < graph.node_count; ++i) {
    os << "  n" << i << " [label=\"" << i << ": (";
    for (int r = 0; r < graph.centroids.rows(); ++r) {
      if (r) os << ", ";
      os << std::round(graph.centroids(r, i) * 1000.0) / 1000.0;
    }
    os << ")\"];\n";
  }
  for (int i = 0; i < graph.node_count; ++i)
    for (int y = 0; y < graph.next.cols(); ++y)
      os << "  n" << i << " -> n" << graph.next(i, y) << " [label=\"y=" << y
         << "\"];\n";
  os << "}\n";
  return os.str();
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path + " for writing");
  f << text;
  if (!f) throw std::runtime_error("write failed: " + path);
}

}  // namespace

void write_qgraph_json(const std::string& path, const QGraph& graph) {
  write_text(path, qgraph_to_json(graph));
}

void write_qgraph_dot(const std::string& path, const QGraph& graph) {
  write_text(path, qgraph_to_dot(graph));
}

}  // namespace dicap
