#pragma once

#include <string>
#include <utility>
#include <vector>

#include "dicap/autodiff.hpp"
#include "dicap/rng.hpp"
#include "dicap/types.hpp"

namespace dicap {

/// Documentation-only record of the sigmoid-RNN function class the theory
/// is stated for: s_{t+1} = (1-α)s_t + α·σ(A s_t + B x_t), y_t = C s_t.
/// Never instantiated; the implementation substitutes LSTMs throughout.
struct RnnFunctionClassNote {
  double state_decay_alpha;
  MatXd a, b, c;
};

// ---------------------------------------------------------------------------
// LSTM

struct LstmParams {
  int in_dim = 0;
  int hidden = 0;
  MatXd w;  // 4H x (in_dim + H); gate rows ordered input, forget, output, candidate
  MatXd b;  // 4H x 1

  std::vector<MatXd*> params() { return {&w, &b}; }
  std::vector<std::pair<std::string, MatXd*>> named(const std::string& prefix) {
    return {{prefix + ".w", &w}, {prefix + ".b", &b}};
  }
};

/// Uniform fan-in init; forget-gate bias starts at 1.0.
LstmParams make_lstm(int in_dim, int hidden, Rng& rng);

template <typename V>
struct LstmState {
  V h;
  V c;
};

/// LSTM cell bound to one value representation: tape nodes (training) or
/// plain matrices (rollout/evaluation). Columns of x are batch lanes.
template <typename V>
struct LstmCell {
  V w, b;
  int in_dim, hidden;

  LstmCell(ad::OpCtx<V> ctx, LstmParams& p)
      : w(ctx.lift_param(&p.w)),
        b(ctx.lift_param(&p.b)),
        in_dim(p.in_dim),
        hidden(p.hidden) {}

  LstmState<V> zero_state(ad::OpCtx<V> ctx, int batch) const {
    return {ctx.lift(MatXd::Zero(hidden, batch)),
            ctx.lift(MatXd::Zero(hidden, batch))};
  }

  LstmState<V> step(const V& x, const LstmState<V>& s) const {
    std::vector<V> xh{x, s.h};
    V z = ad::add_colwise(ad::matmul(w, ad::concat_rows(std::span<const V>(xh))), b);
    V i = ad::sigmoid(ad::rows(z, 0, hidden));
    V f = ad::sigmoid(ad::rows(z, hidden, hidden));
    V o = ad::sigmoid(ad::rows(z, 2 * hidden, hidden));
    V g = ad::tanh(ad::rows(z, 3 * hidden, hidden));
    V c = ad::add(ad::mul(f, s.c), ad::mul(i, g));
    V h = ad::mul(o, ad::tanh(c));
    return {h, c};
  }
};

// ---------------------------------------------------------------------------
// MLP

enum class Act { kIdentity, kTanh, kSigmoid, kSoftmax };

struct MlpParams {
  std::vector<int> widths;  // input width first, output width last
  std::vector<MatXd> w;     // w[l]: widths[l+1] x widths[l]
  std::vector<MatXd> b;     // widths[l+1] x 1
  Act hidden_act = Act::kTanh;
  Act out_act = Act::kIdentity;

  std::vector<MatXd*> params();
  std::vector<std::pair<std::string, MatXd*>> named(const std::string& prefix);
};

MlpParams make_mlp(std::vector<int> widths, Act hidden_act, Act out_act, Rng& rng);

template <typename V>
V apply_act(const V& z, Act act) {
  switch (act) {
    case Act::kIdentity: return z;
    case Act::kTanh: return ad::tanh(z);
    case Act::kSigmoid: return ad::sigmoid(z);
    case Act::kSoftmax: return ad::softmax_cols(z);
  }
  throw std::invalid_argument("apply_act: unknown activation");
}

template <typename V>
struct Mlp {
  std::vector<V> w, b;
  Act hidden_act, out_act;

  Mlp(ad::OpCtx<V> ctx, MlpParams& p)
      : hidden_act(p.hidden_act), out_act(p.out_act) {
    w.reserve(p.w.size());
    b.reserve(p.b.size());
    for (std::size_t l = 0; l < p.w.size(); ++l) {
      w.push_back(ctx.lift_param(&p.w[l]));
      b.push_back(ctx.lift_param(&p.b[l]));
    }
  }

  V forward(const V& x) const {
    V h = x;
    for (std::size_t l = 0; l < w.size(); ++l) {
      V z = ad::add_colwise(ad::matmul(w[l], h), b[l]);
      h = apply_act(z, l + 1 == w.size() ? out_act : hidden_act);
    }
    return h;
  }
};

// ---------------------------------------------------------------------------
// Direct softmax over a logit vector (shift-stabilized).

VecXd softmax_pmf(const VecXd& phi);

/// One-hot column vector e_i of dimension n.
MatXd one_hot(int i, int n);

// ---------------------------------------------------------------------------
// Serialization: magic + version + per-tensor manifest, row-major float64.
// Layout: "DICAPMDL" (8 bytes) | u32 version=1 | u32 tensor count |
//   per tensor: u32 name length, name bytes, u32 rows, u32 cols,
//               rows*cols little-endian float64 in row-major order.

using NamedParams = std::vector<std::pair<std::string, MatXd*>>;

void save_model(const std::string& path, const NamedParams& params);

/// Loads into the given tensors; names and shapes must match the file.
void load_model(const std::string& path, const NamedParams& params);

}  // namespace dicap
