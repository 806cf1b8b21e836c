#include "dicap/optimizer.hpp"

#include <cmath>
#include <stdexcept>

namespace dicap {

Adam::Adam(std::vector<MatXd*> params, AdamConfig cfg)
    : cfg_(cfg), params_(std::move(params)) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (MatXd* p : params_) {
    if (p == nullptr) throw std::invalid_argument("Adam: null parameter");
    m_.push_back(MatXd::Zero(p->rows(), p->cols()));
    v_.push_back(MatXd::Zero(p->rows(), p->cols()));
  }
}

void Adam::step(const std::vector<MatXd>& grads) {
  if (grads.size() != params_.size())
    throw std::invalid_argument("Adam::step: gradient count mismatch");
  double sq = 0.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].rows() != params_[i]->rows() ||
        grads[i].cols() != params_[i]->cols())
      throw std::invalid_argument("Adam::step: gradient shape mismatch");
    if (!grads[i].allFinite())
      throw ad::NumericError("Adam::step: non-finite gradient, step refused");
    sq += grads[i].squaredNorm();
  }
  double clip = 1.0;
  if (cfg_.clip_norm > 0.0) {
    double norm = std::sqrt(sq);
    if (norm > cfg_.clip_norm) clip = cfg_.clip_norm / norm;
  }
  ++steps_;
  double bc1 = 1.0 - std::pow(cfg_.beta1, steps_);
  double bc2 = 1.0 - std::pow(cfg_.beta2, steps_);
  double sign = cfg_.maximize ? 1.0 : -1.0;
  for (std::size_t i = 0; i < grads.size(); ++i) {
    MatXd g = grads[i] * clip;
    m_[i] = cfg_.beta1 * m_[i] + (1.0 - cfg_.beta1) * g;
    v_[i] = cfg_.beta2 * v_[i] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    MatXd mhat = m_[i] / bc1;
    MatXd vhat = v_[i] / bc2;
    *params_[i] += sign * cfg_.lr *
                   mhat.cwiseQuotient((vhat.cwiseSqrt().array() + cfg_.eps).matrix());
  }
}

void Adam::step_from_tape(ad::Tape& tape) {
  std::vector<MatXd> grads;
  grads.reserve(params_.size());
  for (MatXd* p : params_) grads.push_back(MatXd::Zero(p->rows(), p->cols()));
  for (ad::Var leaf : tape.params()) {
    MatXd* storage = tape.param_storage(leaf);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      if (params_[i] == storage) {
        if (tape.grad(leaf).size() != 0) grads[i] += tape.grad(leaf);
        break;
      }
    }
  }
  step(grads);
}

}  // namespace dicap
