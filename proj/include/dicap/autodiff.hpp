#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dicap/types.hpp"

namespace dicap::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  int id = -1;
};

/// Thrown when an op produces NaN/Inf.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Thrown on incompatible operand shapes.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Reverse-mode tape over dense double matrices. Nodes are recorded in
/// topological order (parents before children); backward() walks them once
/// in reverse. Single-writer: one thread records and differentiates.
class Tape {
 public:
  using PullFn = std::function<void(Tape&, int self)>;

  Var constant(MatXd value);
  Var scalar(double value);

  /// Leaf bound to external parameter storage. The current contents of
  /// *storage are copied onto the tape; grad(leaf) is valid after backward().
  Var param(MatXd* storage);

  /// Records a node. `pull` accumulates into the parents' grads and runs
  /// only when at least one parent requires a gradient.
  Var record(MatXd value, std::vector<int> parents, PullFn pull, const char* op);

  /// Seeds d(root)=1 and propagates adjoints to every leaf. Grads are
  /// zeroed first, so repeated calls give identical results.
  void backward(Var root);

  const MatXd& value(Var v) const { return nodes_[check(v)].value; }
  const MatXd& grad(Var v) const { return nodes_[check(v)].grad; }
  bool needs_grad(Var v) const { return nodes_[check(v)].needs_grad; }
  MatXd* param_storage(Var v) const { return nodes_[check(v)].storage; }

  /// Parameter leaves registered on this tape, in recording order.
  std::vector<Var> params();

  void accumulate(int id, const MatXd& g);

  int size() const { return static_cast<int>(nodes_.size()); }
  void reset() { nodes_.clear(); }

 private:
  struct Node {
    MatXd value;
    MatXd grad;
    MatXd* storage = nullptr;  // non-null for parameter leaves
    std::vector<int> parents;
    PullFn pull;
    bool needs_grad = false;
  };

  int check(Var v) const;

  std::vector<Node> nodes_;
};

// Primitive ops. Each records the forward value and the exact adjoint rule.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
Var mul(Var a, Var b);  // elementwise
Var matmul(Var a, Var b);
Var scale(Var a, double c);
Var add_scalar(Var a, double c);
Var add_colwise(Var m, Var col);  // broadcast col over the columns of m
Var sigmoid(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);
Var concat_rows(std::span<const Var> parts);
Var concat_cols(std::span<const Var> parts);
Var rows(Var a, int start, int count);
Var cols(Var a, int start, int count);
/// One-hot gather: picks entry (row_idx[c], c) of each column; returns 1 x C.
Var select_cols(Var a, std::vector<int> row_idx);
Var sum_all(Var a);
Var mean_all(Var a);
Var logsumexp_all(Var a);  // max-shifted
Var logmeanexp_all(Var a);
Var softmax_cols(Var a);
Var log_softmax_cols(Var a);

// Plain-matrix counterparts with identical semantics; the recurrent forward
// paths (rollout, evaluation) run on these to avoid tape growth. Shared
// network code is templated over Var/MatXd and resolves to one of the two.
MatXd add(const MatXd& a, const MatXd& b);
MatXd sub(const MatXd& a, const MatXd& b);
MatXd neg(const MatXd& a);
MatXd mul(const MatXd& a, const MatXd& b);
MatXd matmul(const MatXd& a, const MatXd& b);
MatXd scale(const MatXd& a, double c);
MatXd add_scalar(const MatXd& a, double c);
MatXd add_colwise(const MatXd& m, const MatXd& col);
MatXd sigmoid(const MatXd& a);
MatXd tanh(const MatXd& a);
MatXd exp(const MatXd& a);
MatXd log(const MatXd& a);
MatXd concat_rows(std::span<const MatXd> parts);
MatXd concat_cols(std::span<const MatXd> parts);
MatXd rows(const MatXd& a, int start, int count);
MatXd cols(const MatXd& a, int start, int count);
MatXd select_cols(const MatXd& a, std::vector<int> row_idx);
MatXd sum_all(const MatXd& a);
MatXd mean_all(const MatXd& a);
MatXd logsumexp_all(const MatXd& a);
MatXd logmeanexp_all(const MatXd& a);
MatXd softmax_cols(const MatXd& a);
MatXd log_softmax_cols(const MatXd& a);

inline double value_of(Var v) { return v.tape->value(v)(0, 0); }
inline double value_of(const MatXd& m) { return m(0, 0); }

/// Context that lifts raw matrices into the value type of a templated
/// forward pass: tape constants for Var, pass-through for MatXd.
template <typename V>
struct OpCtx;

template <>
struct OpCtx<Var> {
  Tape* tape;
  Var lift(MatXd m) const { return tape->constant(std::move(m)); }
  Var lift_param(MatXd* storage) const { return tape->param(storage); }
};

template <>
struct OpCtx<MatXd> {
  MatXd lift(MatXd m) const { return m; }
  MatXd lift_param(MatXd* storage) const { return *storage; }
};

}  // namespace dicap::ad
