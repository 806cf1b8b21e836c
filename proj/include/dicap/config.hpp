#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dicap/channels.hpp"
#include "dicap/estimators.hpp"
#include "dicap/pmf_optimizer.hpp"
#include "dicap/qgraph.hpp"
#include "dicap/shaping.hpp"

namespace dicap {

// ---------------------------------------------------------------------------
// Experiment configuration
//
// Plain-text config files with one [section] per module and key = value
// lines ('#' starts a comment). Unknown sections or keys are rejected with
// the offending section.key named. Channel parameters accept comma lists;
// the lists zip positionally into a parameter sweep.

struct ChannelSection {
  std::string kind = "bsc";  // bsc z s ge ising trapdoor nost post
  std::vector<double> p{0.1};
  std::vector<double> eta{0.0};
  std::vector<double> b{0.05};
  std::vector<double> g{0.15};
  std::vector<double> p_good{0.1};
  std::vector<double> p_bad{0.4};

  bool operator==(const ChannelSection&) const = default;
};

struct RunSection {
  std::string command;  // empty in a preset: filled from the CLI verb
  bool feedback = false;
  std::string estimator = "dine";  // dine | mine
  std::uint64_t seed = 1;
  int workers = 1;
  std::string out;  // empty: runs/<command>

  bool operator==(const RunSection&) const = default;
};

struct TrainSection {
  int T = 10;
  int n = 128;
  int batch = 8;
  int ratio = 3;
  int iters = 2000;
  double estimator_lr = 1e-3;
  double policy_lr = 1e-3;
  double epsilon = 0.01;
  int gen_hidden = 32;
  int est_hidden = 64;
  int est_fc_width = 64;
  int est_fc_depth = 2;
  double warmup_frac = 0.1;
  double lme_anchor = 0.25;
  int eval_len = 100'000;
  int plateau_window = 200;
  double plateau_rel = 1e-3;
  std::vector<double> input_pmf;  // estimate only; empty = uniform

  bool operator==(const TrainSection&) const = default;
};

struct QGraphSection {
  int qnet_width = 32;
  int qnet_depth = 1;
  int qnet_batch = 8;
  int qnet_rollout_len = 128;
  int qnet_iters = 300;
  double qnet_lr = 1e-3;
  int extract_n = 200'000;
  int k_max = 6;
  double purity_min = 0.99;
  int restarts = 20;
  double step_init = 0.1;
  double step_min = 1e-3;
  double tol_nats = 1e-6;
  int max_sweeps = 500;

  bool operator==(const QGraphSection&) const = default;
};

struct ShapingSection {
  std::string constellation = "pam";  // pam | qam
  int order = 16;
  double amplitude = 1.0;
  std::vector<double> snr_db{-10, -5, 0, 5, 10, 15, 20, 25, 30};
  int iters = 3000;
  int n = 512;
  int ratio = 3;
  int mine_width = 64;
  int mine_depth = 2;
  double mine_lr = 1e-3;
  double pmf_lr = 1e-2;
  double warmup_frac = 0.3;
  double decay_frac = 0.3;
  int eval_n = 100'000;
  int quad_order = 64;

  bool operator==(const ShapingSection&) const = default;
};

struct Lemma2Section {
  int m_max = 20;
  int y_card = 2;

  bool operator==(const Lemma2Section&) const = default;
};

struct ExperimentConfig {
  ChannelSection channel;
  RunSection run;
  TrainSection train;
  QGraphSection qgraph;
  ShapingSection shaping;
  Lemma2Section lemma2;

  bool operator==(const ExperimentConfig&) const = default;
};

/// Parses and validates; throws std::invalid_argument naming the offending
/// section.key (or line) on any problem.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

/// Canonical rendering of a config. Round-trips exactly:
/// parse_config_text(config_echo(c)) == c.
std::string config_echo(const ExperimentConfig& cfg);

/// Materializes the channel sweep: comma lists zip positionally (scalars
/// broadcast). Throws on mismatched list lengths or parameters the channel
/// constructors reject.
std::vector<ChannelSpec> channel_grid(const ExperimentConfig& cfg);

// Section-to-module-config adapters. Seed and workers come from [run].
PolicyGradConfig to_policy_grad_config(const ExperimentConfig& cfg);
DineTrainConfig to_dine_train_config(const ExperimentConfig& cfg);
QNetTrainConfig to_qnet_train_config(const ExperimentConfig& cfg);
QBoundConfig to_qbound_config(const ExperimentConfig& cfg);
ShapingConfig to_shaping_config(const ExperimentConfig& cfg);
Constellation config_constellation(const ExperimentConfig& cfg);

}  // namespace dicap
