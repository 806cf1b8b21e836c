#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dicap/rng.hpp"
#include "dicap/types.hpp"

namespace dicap {

enum class ChannelKind {
  kBsc,
  kZ,
  kS,
  kGilbertElliott,
  kIsing,
  kTrapdoor,
  kNost,
  kPost,
  kAwgnPeak,
};

/// Sampleable channel description. The four finite-state binary kinds
/// (Ising, Trapdoor, NOST, POST) share one output kernel — y equals x
/// surely when x matches the state, otherwise y stays x w.p. 1-p and
/// reverts to the state symbol w.p. p — and differ only in how the state
/// evolves. POST is NOST with a noiseless state (eta = 0).
struct ChannelSpec {
  ChannelKind kind = ChannelKind::kBsc;
  double p = 0.0;                 // crossover / kernel parameter
  double eta = 0.0;               // NOST state noise
  double b = 0.0, g = 0.0;        // GE transitions Good->Bad, Bad->Good
  double p_good = 0.1;            // GE flip probability in Good
  double p_bad = 0.4;             // GE flip probability in Bad
  double sigma = 1.0;             // AWGN noise standard deviation
  std::vector<double> points;     // AWGN constellation (1-D real)

  int in_card() const;
  int out_card() const;           // 0 for continuous output (AWGN)
  int state_card() const;         // 1 for memoryless kinds
  bool is_unifilar() const;       // state a deterministic fn of (s, x, y)
  std::string name() const;
};

ChannelSpec make_bsc(double p);
ChannelSpec make_z(double p);
ChannelSpec make_s(double p);
ChannelSpec make_ge(double b, double g, double p_good = 0.1, double p_bad = 0.4);
ChannelSpec make_ising(double p = 0.5);
ChannelSpec make_trapdoor();      // kernel parameter fixed at 1/2
ChannelSpec make_nost(double p, double eta);
ChannelSpec make_post(double p);
ChannelSpec make_awgn_peak(double sigma, std::vector<double> points);

struct ChannelState {
  int s = 0;
};

/// Initial latent state: GE draws from the stationary Good/Bad law, the
/// rest start at state 0.
ChannelState init_state(const ChannelSpec& spec, Rng& rng);

/// P(y | x, s) for the discrete kinds.
double kernel_prob(const ChannelSpec& spec, int s, int x, int y);

/// Deterministic successor state for unifilar kinds.
int next_state(const ChannelSpec& spec, int s, int x, int y);

/// One channel use: draws y from the kernel and advances the state.
std::pair<int, ChannelState> channel_step(const ChannelSpec& spec,
                                          ChannelState state, int x, Rng& rng);

/// AWGN use: transmits constellation point i, returns the real output.
double awgn_sample(const ChannelSpec& spec, int i, Rng& rng);

/// Draws an index from a PMF using a single uniform variate (CDF walk).
int sample_from_pmf(const VecXd& pmf, Rng& rng);

// ---------------------------------------------------------------------------
// Policies and trajectories

/// Sequential input policy. Called once per step with the previous input
/// and output symbols (-1 sentinels at t=1, and y_prev = -1 throughout
/// when feedback is disabled).
class Policy {
 public:
  virtual ~Policy() = default;
  virtual void reset() = 0;
  virtual VecXd next_pmf(int x_prev, int y_prev) = 0;
};

/// Memoryless policy emitting a fixed PMF every step.
class FixedIidPolicy : public Policy {
 public:
  explicit FixedIidPolicy(VecXd pmf) : pmf_(std::move(pmf)) {}
  void reset() override {}
  VecXd next_pmf(int, int) override { return pmf_; }

 private:
  VecXd pmf_;
};

struct Trajectory {
  std::vector<int> x;
  std::vector<int> y;
  std::vector<int> s;        // latent states: oracle/supervision use only
  std::vector<int> ytilde;   // i.i.d. uniform reference outputs
  std::vector<VecXd> pmf;    // p_t emitted by the policy
  std::vector<double> logp;  // log p_t(x_t)
  int n() const { return static_cast<int>(x.size()); }
};

/// Rolls the policy against the channel for n steps. With feedback off the
/// policy never sees y. Policies must emit simplex vectors.
Trajectory sample_trajectory(const ChannelSpec& spec, Policy& policy, int n,
                             bool feedback, Rng& rng);

void write_trajectory_csv(const std::string& path, const Trajectory& traj);

// ---------------------------------------------------------------------------
// Capacity oracles (test/acceptance use)

/// Closed-form or simulation-based capacity in bits where known:
/// BSC, Z, S, POST (either direction), Trapdoor with feedback, GE.
/// Returns nullopt when no oracle exists for the spec.
std::optional<double> exact_capacity_oracle(const ChannelSpec& spec,
                                            bool feedback);

/// Entropy rate (bits/use) of the GE hidden-Markov noise process via the
/// forward posterior recursion on the Good/Bad belief, Monte-Carlo averaged.
double ge_noise_entropy_rate(const ChannelSpec& spec, int n, std::uint64_t seed);

/// |Y| x |X| kernel matrix of a memoryless kind.
MatXd kernel_matrix(const ChannelSpec& spec);

/// I(X;Y) in bits of a memoryless kind under the given input PMF.
double memoryless_mi(const ChannelSpec& spec, const VecXd& pmf);

struct GridCapacity {
  double bits = 0.0;
  double p1 = 0.0;  // maximizing P(X=1)
};

/// Brute-force capacity of a binary-input memoryless kind over the input
/// PMF grid with the given step.
GridCapacity grid_search_capacity(const ChannelSpec& spec, double step = 1e-3);

/// 1 - h2(p) style helpers.
double binary_entropy_bits(double p);

}  // namespace dicap
