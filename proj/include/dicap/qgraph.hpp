#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dicap/channels.hpp"
#include "dicap/nets.hpp"

namespace dicap {

// ---------------------------------------------------------------------------
// Belief network
//
// A recurrent map g(q_prev, y) -> q onto the state simplex, trained to track
// the posterior over the channel's latent state given the output history.
// The only recurrent carry is the belief itself, which is what lets the map
// be quantized into a finite graph afterwards: a node plus an output symbol
// must determine the next node.

struct QNet {
  int s_card = 0;
  int y_card = 0;
  MlpParams net;  // input [q_prev; onehot(y)], output s_card logits

  std::vector<MatXd*> params();
  std::vector<std::pair<std::string, MatXd*>> named(const std::string& prefix);
};

QNet make_qnet(int s_card, int y_card, int width, int depth, Rng& rng);

/// Belief sequence over one output stream: column t is the belief after
/// consuming ys[t], the recursion starting from the zero vector. Beliefs lie
/// on the simplex.
MatXd qnet_beliefs(QNet& qnet, std::span<const int> ys);

/// Mean cross-entropy (nats) of the beliefs against latent-state labels:
/// column t of beliefs scored against labels[t].
double qnet_ce(const MatXd& beliefs, std::span<const int> labels);

struct QNetTrainConfig {
  int width = 32;
  int depth = 1;          // hidden layers
  int batch = 8;          // parallel rollouts per iteration
  int rollout_len = 128;
  int iters = 300;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct QNetTrainResult {
  QNet qnet;
  std::vector<double> loss_curve;  // mean CE per iteration (nats)
};

/// Supervised belief training: rolls the policy against the channel and
/// minimizes cross entropy between the belief after y_t and the latent state
/// entering step t+1. Requires a discrete channel (latent states are the
/// supervision signal).
QNetTrainResult train_qnet(const ChannelSpec& spec, Policy& policy,
                           bool feedback, const QNetTrainConfig& cfg);

// ---------------------------------------------------------------------------
// Graph extraction

/// Deterministic, complete labeled graph on belief clusters: exactly one
/// successor per (node, output symbol).
struct QGraph {
  int node_count = 0;
  Eigen::MatrixXi next;  // node_count x y_card, next(i, y) = successor node
  MatXd centroids;       // s_card x node_count cluster representatives
  double purity = 1.0;   // observed transitions that follow their modal edge
};

/// Clusters a long belief trajectory into k nodes and keeps, per (node, y),
/// the most frequent successor. Throws when some (node, y) pair is never
/// observed (the message names the edge; raise n). Requires n >= 100000 so
/// the modal estimates are meaningful.
QGraph extract_qgraph(QNet& qnet, const ChannelSpec& spec, Policy& policy,
                      bool feedback, int n, int k, std::uint64_t seed);

struct KSelection {
  int k = 0;
  QGraph graph;
  std::vector<double> purities;  // purity for k = 2, 3, ..., up to the pick
};

/// Runs extraction for k = 2..k_max on one shared trajectory and returns the
/// smallest k whose modal-transition purity reaches purity_min. Throws when
/// no k qualifies.
KSelection select_qgraph_k(QNet& qnet, const ChannelSpec& spec, Policy& policy,
                           bool feedback, int n, int k_max, std::uint64_t seed,
                           double purity_min = 0.99);

/// One-node graph (all self-loops): the exact graph for memoryless kinds.
QGraph trivial_qgraph(int y_card);

// ---------------------------------------------------------------------------
// Single-letter bounds
//
// Pairing the channel state s with the graph node q gives a Markov chain
// once an input law P(x | s, q) is fixed. Rows of that law are indexed by
// s * node_count + q throughout.

/// Stationary law of the (s, q) chain induced by the input law, the channel
/// kernel, and the graph. Throws "not in P_Q" when the chain has more than
/// one recurrent class (no unique stationary law). The returned vector
/// satisfies pi * P = pi with l1 residual <= 1e-12.
VecXd stationary_joint(const ChannelSpec& spec, const QGraph& graph,
                       const MatXd& p_x_given_sq);

struct QBoundConfig {
  int restarts = 20;
  double step_init = 0.1;
  double step_min = 1e-3;
  double tol_nats = 1e-6;  // stop a refinement level below this improvement
  int max_sweeps = 500;    // coordinate sweeps per refinement level
  std::uint64_t seed = 0;
  int workers = 1;
};

struct BoundResult {
  double ub_bits = 0.0;
  MatXd p_x_given_sq;        // maximizing input law, (|S| * |Q|) x |X|
  VecXd pi;                  // stationary (s, q) law at the maximizer
  double lb_proxy_bits = 0.0;  // achieved rate of the trained policy
};

/// Upper-bounds the feedback capacity by maximizing I(X,S; Y | Q) in bits
/// over input laws P(x | s, q) under the stationary (s, q) chain:
/// multi-restart pairwise mass-transfer ascent over the simplex rows with
/// step halving. lb_proxy_bits is recorded alongside; it is the achieved
/// rate reported by the policy optimizer, a genuine lower anchor. Throws
/// when no restart finds an irreducible input law.
BoundResult qgraph_bound(const ChannelSpec& spec, const QGraph& graph,
                         const QBoundConfig& cfg, double lb_proxy_bits);

// ---------------------------------------------------------------------------
// Graph counting

struct QGraphCount {
  double count = 0.0;      // m^(m * y_card) / m!, exact when it fits a double
  double log_count = 0.0;  // natural log, computed in log space
  double log_bound = 0.0;  // m * ln m
  bool bound_holds = false;  // log_count >= log_bound
};

/// Number of deterministic complete graphs on m nodes with y_card out-edges
/// per node, up to node relabeling, with the super-exponential lower bound
/// it dominates.
QGraphCount count_qgraphs(int m, int y_card);

// ---------------------------------------------------------------------------
// Serialization

std::string qgraph_to_json(const QGraph& graph);
std::string qgraph_to_dot(const QGraph& graph);
void write_qgraph_json(const std::string& path, const QGraph& graph);
void write_qgraph_dot(const std::string& path, const QGraph& graph);

}  // namespace dicap
