#pragma once

#include <vector>

#include "dicap/autodiff.hpp"
#include "dicap/types.hpp"

namespace dicap {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double clip_norm = 5.0;   // global-norm gradient clip; <= 0 disables
  bool maximize = false;    // ascent (maximize=true) or descent
};

/// Bias-corrected Adam over a fixed set of externally owned parameters.
/// Gradients are clipped by global norm before every step; a non-finite
/// gradient refuses the whole step.
class Adam {
 public:
  explicit Adam(std::vector<MatXd*> params, AdamConfig cfg = {});

  /// Applies one update. grads[i] must match the shape of *params[i].
  void step(const std::vector<MatXd>& grads);

  /// Collects grads for this optimizer's parameters from a tape after
  /// backward() and applies one update. Parameters absent from the tape
  /// contribute zero gradient.
  void step_from_tape(ad::Tape& tape);

  int steps() const { return steps_; }
  const AdamConfig& config() const { return cfg_; }
  void set_lr(double lr) { cfg_.lr = lr; }

 private:
  AdamConfig cfg_;
  std::vector<MatXd*> params_;
  std::vector<MatXd> m_, v_;  // first/second moment accumulators
  int steps_ = 0;
};

}  // namespace dicap
