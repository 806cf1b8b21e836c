#include "dicap/autodiff.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace dicap::ad {

namespace {

std::string shape_str(const MatXd& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const MatXd& a, const MatXd& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a) +
                   " vs " + shape_str(b));
}

void check_same_shape(const char* op, const MatXd& a, const MatXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) shape_fail(op, a, b);
}

void check_finite(const char* op, const MatXd& m) {
  if (!m.allFinite())
    throw NumericError(std::string(op) + ": non-finite output");
}

const MatXd& val(Var v) { return v.tape->value(v); }

Tape& tape_of(Var a, Var b, const char* op) {
  if (a.tape == nullptr || a.tape != b.tape)
    throw std::invalid_argument(std::string(op) + ": operands on different tapes");
  return *a.tape;
}

}  // namespace

int Tape::check(Var v) const {
  if (v.tape != this || v.id < 0 || v.id >= size())
    throw std::invalid_argument("Var does not belong to this tape");
  return v.id;
}

Var Tape::constant(MatXd value) {
  check_finite("constant", value);
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{this, size() - 1};
}

Var Tape::scalar(double value) {
  return constant(MatXd::Constant(1, 1, value));
}

Var Tape::param(MatXd* storage) {
  if (storage == nullptr) throw std::invalid_argument("param: null storage");
  check_finite("param", *storage);
  Node n;
  n.value = *storage;
  n.storage = storage;
  n.needs_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, size() - 1};
}

Var Tape::record(MatXd value, std::vector<int> parents, PullFn pull, const char* op) {
  check_finite(op, value);
  Node n;
  n.value = std::move(value);
  for (int p : parents) {
    if (p < 0 || p >= size())
      throw std::invalid_argument(std::string(op) + ": parent not on tape");
    n.needs_grad = n.needs_grad || nodes_[p].needs_grad;
  }
  n.parents = std::move(parents);
  if (n.needs_grad) n.pull = std::move(pull);
  nodes_.push_back(std::move(n));
  return Var{this, size() - 1};
}

void Tape::accumulate(int id, const MatXd& g) {
  Node& n = nodes_[id];
  if (!n.needs_grad) return;
  if (n.grad.size() == 0)
    n.grad = MatXd::Zero(n.value.rows(), n.value.cols());
  n.grad += g;
}

std::vector<Var> Tape::params() {
  std::vector<Var> out;
  for (int i = 0; i < size(); ++i)
    if (nodes_[i].storage != nullptr) out.push_back(Var{this, i});
  return out;
}

void Tape::backward(Var root) {
  int rid = check(root);
  if (nodes_.empty()) throw std::invalid_argument("backward: empty tape");
  const Node& r = nodes_[rid];
  if (r.value.rows() != 1 || r.value.cols() != 1)
    throw std::invalid_argument("backward: root must be scalar, got " +
                                shape_str(r.value));
  for (Node& n : nodes_)
    if (n.needs_grad) n.grad = MatXd::Zero(n.value.rows(), n.value.cols());
  if (!r.needs_grad) return;  // root independent of all parameters
  nodes_[rid].grad(0, 0) = 1.0;
  for (int i = rid; i >= 0; --i) {
    Node& n = nodes_[i];
    if (n.needs_grad && n.pull && n.grad.size() != 0) n.pull(*this, i);
  }
}

// ---------------------------------------------------------------------------
// Tape ops

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b, "add");
  check_same_shape("add", val(a), val(b));
  return t.record(
      val(a) + val(b), {a.id, b.id},
      [pa = a.id, pb = b.id](Tape& t, int self) {
        const MatXd& g = t.grad(Var{&t, self});
        t.accumulate(pa, g);
        t.accumulate(pb, g);
      },
      "add");
}

Var sub(Var a, Var b) {
  Tape& t = tape_of(a, b, "sub");
  check_same_shape("sub", val(a), val(b));
  return t.record(
      val(a) - val(b), {a.id, b.id},
      [pa = a.id, pb = b.id](Tape& t, int self) {
        const MatXd& g = t.grad(Var{&t, self});
        t.accumulate(pa, g);
        t.accumulate(pb, -g);
      },
      "sub");
}

Var neg(Var a) {
  Tape& t = *a.tape;
  return t.record(
      -val(a), {a.id},
      [pa = a.id](Tape& t, int self) {
        t.accumulate(pa, -t.grad(Var{&t, self}));
      },
      "neg");
}

Var mul(Var a, Var b) {
  Tape& t = tape_of(a, b, "mul");
  check_same_shape("mul", val(a), val(b));
  return t.record(
      val(a).cwiseProduct(val(b)), {a.id, b.id},
      [pa = a.id, pb = b.id](Tape& t, int self) {
        const MatXd& g = t.grad(Var{&t, self});
        t.accumulate(pa, g.cwiseProduct(t.value(Var{&t, pb})));
        t.accumulate(pb, g.cwiseProduct(t.value(Var{&t, pa})));
      },
      "mul");
}

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b, "matmul");
  if (val(a).cols() != val(b).rows()) shape_fail("matmul", val(a), val(b));
  return t.record(
      val(a) * val(b), {a.id, b.id},
      [pa = a.id, pb = b.id](Tape& t, int self) {
        const MatXd& g = t.grad(Var{&t, self});
        t.accumulate(pa, g * t.value(Var{&t, pb}).transpose());
        t.accumulate(pb, t.value(Var{&t, pa}).transpose() * g);
      },
      "matmul");
}

Var scale(Var a, double c) {
  Tape& t = *a.tape;
  return t.record(
      val(a) * c, {a.id},
      [pa = a.id, c](Tape& t, int self) {
        t.accumulate(pa, t.grad(Var{&t, self}) * c);
      },
      "scale");
}

Var add_scalar(Var a, double c) {
  Tape& t = *a.tape;
  return t.record(
      (val(a).array() + c).matrix(), {a.id},
      [pa = a.id](Tape& t, int self) {
        t.accumulate(pa, t.grad(Var{&t, self}));
      },
      "add_scalar");
}

Var add_colwise(Var m, Var col) {
  Tape& t = tape_of(m, col, "add_colwise");
  if (val(col).cols() != 1 || val(col).rows() != val(m).rows())
    shape_fail("add_colwise", val(m), val(col));
  return t.record(
      val(m).colwise() + val(col).col(0), {m.id, col.id},
      [pm = m.id, pc = col.id](Tape& t, int self) {
        const MatXd& g = t.grad(Var{&t, self});
        t.accumulate(pm, g);
        t.accumulate(pc, g.rowwise().sum());
      },
      "add_colwise");
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  MatXd s = (0.5 * (val(a) * 0.5).array().tanh() + 0.5).matrix();
  return t.record(
      std::move(s), {a.id},
      [pa = a.id](Tape& t, int self) {
        const MatXd& s = t.value(Var{&t, self});
        const MatXd& g = t.grad(Var{&t, self});
        t.accumulate(pa, g.cwiseProduct(s.cwiseProduct((1.0 - s.array()).matrix())));
      },
      "sigmoid");
}

Var tanh(Var a) {
  Tape& t = *a.tape;
  return t.record(
      val(a).array().tanh().matrix(), {a.id},
      [pa = a.id](Tape& t, int self) {
        const MatXd& y = t.value(Var{&t, self});
        const MatXd& g = t.grad(Var{&t, self});
        t.accumulate(pa, g.cwiseProduct((1.0 - y.array().square()).matrix()));
      },
      "tanh");
}

Var exp(Var a) {
  Tape& t = *a.tape;
  return t.record(
      val(a).array().exp().matrix(), {a.id},
      [pa = a.id](Tape& t, int self) {
        t.accumulate(pa, t.grad(Var{&t, self}).cwiseProduct(t.value(Var{&t, self})));
      },
      "exp");
}

Var log(Var a) {
  Tape& t = *a.tape;
  return t.record(
      val(a).array().log().matrix(), {a.id},
      [pa = a.id](Tape& t, int self) {
        t.accumulate(pa, t.grad(Var{&t, self}).cwiseQuotient(t.value(Var{&t, pa})));
      },
      "log");
}

Var concat_rows(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
  Tape& t = *parts[0].tape;
  Eigen::Index cols = val(parts[0]).cols(), total = 0;
  std::vector<int> parents;
  for (Var p : parts) {
    if (val(p).cols() != cols) shape_fail("concat_rows", val(parts[0]), val(p));
    total += val(p).rows();
    parents.push_back(p.id);
  }
  MatXd out(total, cols);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleRows(at, val(p).rows()) = val(p);
    at += val(p).rows();
  }
  return t.record(
      std::move(out), parents,
      [ps = parents](Tape& t, int self) {
        const MatXd& g = t.grad(Var{&t, self});
        Eigen::Index at = 0;
        for (int p : ps) {
          Eigen::Index r = t.value(Var{&t, p}).rows();
          t.accumulate(p, g.middleRows(at, r));
          at += r;
        }
      },
      "concat_rows");
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  Tape& t = *parts[0].tape;
  Eigen::Index rows = val(parts[0]).rows(), total = 0;
  std::vector<int> parents;
  for (Var p : parts) {
    if (val(p).rows() != rows) shape_fail("concat_cols", val(parts[0]), val(p));
    total += val(p).cols();
    parents.push_back(p.id);
  }
  MatXd out(rows, total);
  Eigen::Index at = 0;
  for (Var p : parts) {
    out.middleCols(at, val(p).cols()) = val(p);
    at += val(p).cols();
  }
  return t.record(
      std::move(out), parents,
      [ps = parents](Tape& t, int self) {
        const MatXd& g = t.grad(Var{&t, self});
        Eigen::Index at = 0;
        for (int p : ps) {
          Eigen::Index c = t.value(Var{&t, p}).cols();
          t.accumulate(p, g.middleCols(at, c));
          at += c;
        }
      },
      "concat_cols");
}

Var rows(Var a, int start, int count) {
  Tape& t = *a.tape;
  if (start < 0 || count < 1 || start + count > val(a).rows())
    throw ShapeError("rows: slice [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " +
                     shape_str(val(a)));
  return t.record(
      val(a).middleRows(start, count), {a.id},
      [pa = a.id, start, count](Tape& t, int self) {
        const MatXd& src = t.value(Var{&t, pa});
        MatXd g = MatXd::Zero(src.rows(), src.cols());
        g.middleRows(start, count) = t.grad(Var{&t, self});
        t.accumulate(pa, g);
      },
      "rows");
}

Var cols(Var a, int start, int count) {
  Tape& t = *a.tape;
  if (start < 0 || count < 1 || start + count > val(a).cols())
    throw ShapeError("cols: slice [" + std::to_string(start) + ", " +
                     std::to_string(start + count) + ") out of range for " +
                     shape_str(val(a)));
  return t.record(
      val(a).middleCols(start, count), {a.id},
      [pa = a.id, start, count](Tape& t, int self) {
        const MatXd& src = t.value(Var{&t, pa});
        MatXd g = MatXd::Zero(src.rows(), src.cols());
        g.middleCols(start, count) = t.grad(Var{&t, self});
        t.accumulate(pa, g);
      },
      "cols");
}

Var select_cols(Var a, std::vector<int> row_idx) {
  Tape& t = *a.tape;
  const MatXd& m = val(a);
  if (static_cast<Eigen::Index>(row_idx.size()) != m.cols())
    throw ShapeError("select_cols: " + std::to_string(row_idx.size()) +
                     " indices for " + shape_str(m));
  MatXd out(1, m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    int r = row_idx[c];
    if (r < 0 || r >= m.rows())
      throw ShapeError("select_cols: row index " + std::to_string(r) +
                       " out of range for " + shape_str(m));
    out(0, c) = m(r, c);
  }
  return t.record(
      std::move(out), {a.id},
      [pa = a.id, idx = std::move(row_idx)](Tape& t, int self) {
        const MatXd& src = t.value(Var{&t, pa});
        const MatXd& g = t.grad(Var{&t, self});
        MatXd acc = MatXd::Zero(src.rows(), src.cols());
        for (Eigen::Index c = 0; c < src.cols(); ++c) acc(idx[c], c) = g(0, c);
        t.accumulate(pa, acc);
      },
      "select_cols");
}

Var sum_all(Var a) {
  Tape& t = *a.tape;
  return t.record(
      MatXd::Constant(1, 1, val(a).sum()), {a.id},
      [pa = a.id](Tape& t, int self) {
        const MatXd& src = t.value(Var{&t, pa});
        double g = t.grad(Var{&t, self})(0, 0);
        t.accumulate(pa, MatXd::Constant(src.rows(), src.cols(), g));
      },
      "sum_all");
}

Var mean_all(Var a) {
  Tape& t = *a.tape;
  double n = static_cast<double>(val(a).size());
  return t.record(
      MatXd::Constant(1, 1, val(a).mean()), {a.id},
      [pa = a.id, n](Tape& t, int self) {
        const MatXd& src = t.value(Var{&t, pa});
        double g = t.grad(Var{&t, self})(0, 0) / n;
        t.accumulate(pa, MatXd::Constant(src.rows(), src.cols(), g));
      },
      "mean_all");
}

namespace {

// Shared forward for the max-shifted log-sum-exp reductions.
double lse_all(const MatXd& m) {
  double mx = m.maxCoeff();
  return mx + std::log((m.array() - mx).exp().sum());
}

}  // namespace

Var logsumexp_all(Var a) {
  Tape& t = *a.tape;
  double l = lse_all(val(a));
  return t.record(
      MatXd::Constant(1, 1, l), {a.id},
      [pa = a.id, l](Tape& t, int self) {
        const MatXd& src = t.value(Var{&t, pa});
        double g = t.grad(Var{&t, self})(0, 0);
        t.accumulate(pa, (g * (src.array() - l).exp()).matrix());
      },
      "logsumexp_all");
}

Var logmeanexp_all(Var a) {
  Tape& t = *a.tape;
  double n = static_cast<double>(val(a).size());
  double l = lse_all(val(a));  // logmeanexp = l - log n
  return t.record(
      MatXd::Constant(1, 1, l - std::log(n)), {a.id},
      [pa = a.id, l](Tape& t, int self) {
        const MatXd& src = t.value(Var{&t, pa});
        double g = t.grad(Var{&t, self})(0, 0);
        t.accumulate(pa, (g * (src.array() - l).exp()).matrix());
      },
      "logmeanexp_all");
}

namespace {

MatXd softmax_cols_fwd(const MatXd& z) {
  MatXd p(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    Eigen::ArrayXd e = (z.col(c).array() - z.col(c).maxCoeff()).exp();
    p.col(c) = (e / e.sum()).matrix();
  }
  return p;
}

}  // namespace

Var softmax_cols(Var a) {
  Tape& t = *a.tape;
  return t.record(
      softmax_cols_fwd(val(a)), {a.id},
      [pa = a.id](Tape& t, int self) {
        const MatXd& p = t.value(Var{&t, self});
        const MatXd& g = t.grad(Var{&t, self});
        MatXd acc(p.rows(), p.cols());
        for (Eigen::Index c = 0; c < p.cols(); ++c) {
          double dot = g.col(c).dot(p.col(c));
          acc.col(c) = p.col(c).cwiseProduct((g.col(c).array() - dot).matrix());
        }
        t.accumulate(pa, acc);
      },
      "softmax_cols");
}

Var log_softmax_cols(Var a) {
  Tape& t = *a.tape;
  const MatXd& z = val(a);
  MatXd out(z.rows(), z.cols());
  for (Eigen::Index c = 0; c < z.cols(); ++c) {
    double mx = z.col(c).maxCoeff();
    double lse = mx + std::log((z.col(c).array() - mx).exp().sum());
    out.col(c) = (z.col(c).array() - lse).matrix();
  }
  return t.record(
      std::move(out), {a.id},
      [pa = a.id](Tape& t, int self) {
        const MatXd& l = t.value(Var{&t, self});
        const MatXd& g = t.grad(Var{&t, self});
        MatXd acc(l.rows(), l.cols());
        for (Eigen::Index c = 0; c < l.cols(); ++c) {
          double gsum = g.col(c).sum();
          acc.col(c) = g.col(c) - gsum * l.col(c).array().exp().matrix();
        }
        t.accumulate(pa, acc);
      },
      "log_softmax_cols");
}

// ---------------------------------------------------------------------------
// Plain-matrix counterparts

MatXd add(const MatXd& a, const MatXd& b) {
  check_same_shape("add", a, b);
  return a + b;
}
MatXd sub(const MatXd& a, const MatXd& b) {
  check_same_shape("sub", a, b);
  return a - b;
}
MatXd neg(const MatXd& a) { return -a; }
MatXd mul(const MatXd& a, const MatXd& b) {
  check_same_shape("mul", a, b);
  return a.cwiseProduct(b);
}
MatXd matmul(const MatXd& a, const MatXd& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", a, b);
  MatXd out = a * b;
  check_finite("matmul", out);
  return out;
}
MatXd scale(const MatXd& a, double c) { return a * c; }
MatXd add_scalar(const MatXd& a, double c) { return (a.array() + c).matrix(); }
MatXd add_colwise(const MatXd& m, const MatXd& col) {
  if (col.cols() != 1 || col.rows() != m.rows()) shape_fail("add_colwise", m, col);
  return m.colwise() + col.col(0);
}
MatXd sigmoid(const MatXd& a) {
  return (0.5 * (a * 0.5).array().tanh() + 0.5).matrix();
}
MatXd tanh(const MatXd& a) { return a.array().tanh().matrix(); }
MatXd exp(const MatXd& a) {
  MatXd out = a.array().exp().matrix();
  check_finite("exp", out);
  return out;
}
MatXd log(const MatXd& a) {
  MatXd out = a.array().log().matrix();
  check_finite("log", out);
  return out;
}
MatXd concat_rows(std::span<const MatXd> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
  Eigen::Index cols = parts[0].cols(), total = 0;
  for (const MatXd& p : parts) {
    if (p.cols() != cols) shape_fail("concat_rows", parts[0], p);
    total += p.rows();
  }
  MatXd out(total, cols);
  Eigen::Index at = 0;
  for (const MatXd& p : parts) {
    out.middleRows(at, p.rows()) = p;
    at += p.rows();
  }
  return out;
}
MatXd concat_cols(std::span<const MatXd> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
  Eigen::Index rows = parts[0].rows(), total = 0;
  for (const MatXd& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", parts[0], p);
    total += p.cols();
  }
  MatXd out(rows, total);
  Eigen::Index at = 0;
  for (const MatXd& p : parts) {
    out.middleCols(at, p.cols()) = p;
    at += p.cols();
  }
  return out;
}
MatXd rows(const MatXd& a, int start, int count) {
  return a.middleRows(start, count);
}
MatXd cols(const MatXd& a, int start, int count) {
  return a.middleCols(start, count);
}
MatXd select_cols(const MatXd& a, std::vector<int> row_idx) {
  MatXd out(1, a.cols());
  for (Eigen::Index c = 0; c < a.cols(); ++c) out(0, c) = a(row_idx[c], c);
  return out;
}
MatXd sum_all(const MatXd& a) { return MatXd::Constant(1, 1, a.sum()); }
MatXd mean_all(const MatXd& a) { return MatXd::Constant(1, 1, a.mean()); }
MatXd logsumexp_all(const MatXd& a) { return MatXd::Constant(1, 1, lse_all(a)); }
MatXd logmeanexp_all(const MatXd& a) {
  return MatXd::Constant(1, 1, lse_all(a) - std::log(static_cast<double>(a.size())));
}
MatXd softmax_cols(const MatXd& a) { return softmax_cols_fwd(a); }
MatXd log_softmax_cols(const MatXd& a) {
  MatXd out(a.rows(), a.cols());
  for (Eigen::Index c = 0; c < a.cols(); ++c) {
    double mx = a.col(c).maxCoeff();
    double lse = mx + std::log((a.col(c).array() - mx).exp().sum());
    out.col(c) = (a.col(c).array() - lse).matrix();
  }
  return out;
}

}  // namespace dicap::ad
