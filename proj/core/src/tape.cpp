#include "dgpo/tape.hpp"

#include <cmath>
#include <sstream>

#include "dgpo/errors.hpp"

namespace dgpo::nn {
namespace {

void require(bool ok, const char* op, const std::string& what) {
  if (!ok) throw InputError(std::string(op) + ": " + what);
}

std::string shape(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), op,
          "shape mismatch " + shape(a) + " vs " + shape(b));
}

double stable_softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

Var Tape::push(const char* op, Matrix value, bool requires_grad, Backward backward) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.op = op;
  if (requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

void Tape::accumulate(Var v, const Matrix& g) {
  Node& n = nodes_[v.id];
  if (!n.requires_grad) return;
  if (!n.has_grad) {
    n.grad = g;
    n.has_grad = true;
  } else {
    n.grad += g;
  }
}

Var Tape::constant(Matrix value) { return push("constant", std::move(value), false, {}); }

Var Tape::constant_scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Var Tape::leaf(Matrix value) { return push("leaf", std::move(value), true, {}); }

double Tape::scalar(Var v) const {
  const Matrix& m = value(v);
  require(m.rows() == 1 && m.cols() == 1, "scalar", "node is " + shape(m));
  return m(0, 0);
}

Matrix Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.has_grad) return n.grad;
  return Matrix::Zero(n.value.rows(), n.value.cols());
}

void Tape::backward(Var root) {
  require(nodes_[root.id].value.size() == 1, "backward", "root must be scalar");
  for (Node& n : nodes_) {
    n.has_grad = false;
  }
  if (!nodes_[root.id].requires_grad) return;
  accumulate(root, Matrix::Ones(1, 1));
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

std::string Tape::first_nonfinite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.allFinite()) {
      return std::string(nodes_[i].op) + " (node " + std::to_string(i) + ")";
    }
  }
  return {};
}

template <typename F>
Var Tape::unary(const char* op, Var a, Matrix value, F&& local_grad) {
  const bool rg = requires_grad(a);
  return push(op, std::move(value), rg,
              [a, lg = std::forward<F>(local_grad)](Tape& t, const Matrix& g) {
                t.accumulate(a, lg(t, g));
              });
}

Var Tape::slice(Var flat, std::size_t offset, std::size_t rows, std::size_t cols) {
  const Matrix& f = value(flat);
  require(f.cols() == 1, "slice", "source must be a column vector");
  require(offset + rows * cols <= static_cast<std::size_t>(f.rows()), "slice",
          "range out of bounds");
  Matrix out = Eigen::Map<const Matrix>(f.data() + offset, rows, cols);
  const auto n = f.rows();
  return unary("slice", flat, std::move(out), [offset, n, rows, cols](Tape&, const Matrix& g) {
    Matrix full = Matrix::Zero(n, 1);
    Eigen::Map<Matrix>(full.data() + offset, rows, cols) = g;
    return full;
  });
}

Var Tape::matmul(Var a, Var b) {
  const Matrix& av = value(a);
  const Matrix& bv = value(b);
  require(av.cols() == bv.rows(), "matmul", "inner dims " + shape(av) + " * " + shape(bv));
  Matrix out = av * bv;
  return push("matmul", std::move(out), requires_grad(a) || requires_grad(b),
              [a, b](Tape& t, const Matrix& g) {
                if (t.requires_grad(a)) t.accumulate(a, g * t.value(b).transpose());
                if (t.requires_grad(b)) t.accumulate(b, t.value(a).transpose() * g);
              });
}

Var Tape::add(Var a, Var b) {
  require_same_shape(value(a), value(b), "add");
  Matrix out = value(a) + value(b);
  return push("add", std::move(out), requires_grad(a) || requires_grad(b),
              [a, b](Tape& t, const Matrix& g) {
                t.accumulate(a, g);
                t.accumulate(b, g);
              });
}

Var Tape::sub(Var a, Var b) {
  require_same_shape(value(a), value(b), "sub");
  Matrix out = value(a) - value(b);
  return push("sub", std::move(out), requires_grad(a) || requires_grad(b),
              [a, b](Tape& t, const Matrix& g) {
                t.accumulate(a, g);
                if (t.requires_grad(b)) t.accumulate(b, -g);
              });
}

Var Tape::mul(Var a, Var b) {
  require_same_shape(value(a), value(b), "mul");
  Matrix out = value(a).cwiseProduct(value(b));
  return push("mul", std::move(out), requires_grad(a) || requires_grad(b),
              [a, b](Tape& t, const Matrix& g) {
                if (t.requires_grad(a)) t.accumulate(a, g.cwiseProduct(t.value(b)));
                if (t.requires_grad(b)) t.accumulate(b, g.cwiseProduct(t.value(a)));
              });
}

Var Tape::scale(Var a, double c) {
  return unary("scale", a, value(a) * c, [c](Tape&, const Matrix& g) { return Matrix(g * c); });
}

Var Tape::add_scalar(Var a, double c) {
  Matrix out = value(a).array() + c;
  return unary("add_scalar", a, std::move(out), [](Tape&, const Matrix& g) { return g; });
}

Var Tape::add_row(Var a, Var row) {
  const Matrix& av = value(a);
  const Matrix& rv = value(row);
  require(rv.rows() == 1 && rv.cols() == av.cols(), "add_row",
          "row " + shape(rv) + " does not broadcast over " + shape(av));
  Matrix out = av.rowwise() + rv.row(0);
  return push("add_row", std::move(out), requires_grad(a) || requires_grad(row),
              [a, row](Tape& t, const Matrix& g) {
                t.accumulate(a, g);
                if (t.requires_grad(row)) t.accumulate(row, g.colwise().sum());
              });
}

Var Tape::silu(Var a) {
  const Matrix& x = value(a);
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.size(); ++i) out.data()[i] = x.data()[i] * sigmoid(x.data()[i]);
  return unary("silu", a, std::move(out), [a](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      const double s = sigmoid(x.data()[i]);
      d.data()[i] = g.data()[i] * s * (1.0 + x.data()[i] * (1.0 - s));
    }
    return d;
  });
}

Var Tape::softplus(Var a) {
  Matrix out = value(a).unaryExpr([](double x) { return stable_softplus(x); });
  return unary("softplus", a, std::move(out), [a](Tape& t, const Matrix& g) {
    return Matrix(g.cwiseProduct(t.value(a).unaryExpr([](double x) { return sigmoid(x); })));
  });
}

Var Tape::exp(Var a) {
  Matrix out = value(a).array().exp();
  const Var self{nodes_.size()};
  return unary("exp", a, std::move(out), [self](Tape& t, const Matrix& g) {
    return Matrix(g.cwiseProduct(t.value(self)));
  });
}

Var Tape::square(Var a) {
  Matrix out = value(a).cwiseAbs2();
  return unary("square", a, std::move(out), [a](Tape& t, const Matrix& g) {
    return Matrix(2.0 * g.cwiseProduct(t.value(a)));
  });
}

Var Tape::clamp(Var a, double lo, double hi) {
  require(lo <= hi, "clamp", "empty interval");
  Matrix out = value(a).cwiseMax(lo).cwiseMin(hi);
  return unary("clamp", a, std::move(out), [a, lo, hi](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    Matrix d = g;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      if (x.data()[i] < lo || x.data()[i] > hi) d.data()[i] = 0.0;
    }
    return d;
  });
}

Var Tape::minimum(Var a, Var b) {
  require_same_shape(value(a), value(b), "minimum");
  Matrix out = value(a).cwiseMin(value(b));
  return push("minimum", std::move(out), requires_grad(a) || requires_grad(b),
              [a, b](Tape& t, const Matrix& g) {
                const Matrix& av = t.value(a);
                const Matrix& bv = t.value(b);
                Matrix ga = Matrix::Zero(g.rows(), g.cols());
                Matrix gb = Matrix::Zero(g.rows(), g.cols());
                for (Eigen::Index i = 0; i < g.size(); ++i) {
                  if (av.data()[i] <= bv.data()[i]) {
                    ga.data()[i] = g.data()[i];
                  } else {
                    gb.data()[i] = g.data()[i];
                  }
                }
                t.accumulate(a, ga);
                t.accumulate(b, gb);
              });
}

Var Tape::concat_cols(std::initializer_list<Var> parts) {
  require(parts.size() > 0, "concat_cols", "no inputs");
  const Eigen::Index rows = value(*parts.begin()).rows();
  Eigen::Index cols = 0;
  bool rg = false;
  for (Var p : parts) {
    require(value(p).rows() == rows, "concat_cols", "row count mismatch");
    cols += value(p).cols();
    rg = rg || requires_grad(p);
  }
  Matrix out(rows, cols);
  Eigen::Index c = 0;
  std::vector<Var> inputs(parts);
  for (Var p : inputs) {
    out.middleCols(c, value(p).cols()) = value(p);
    c += value(p).cols();
  }
  return push("concat_cols", std::move(out), rg, [inputs](Tape& t, const Matrix& g) {
    Eigen::Index c = 0;
    for (Var p : inputs) {
      const Eigen::Index w = t.value(p).cols();
      if (t.requires_grad(p)) t.accumulate(p, g.middleCols(c, w));
      c += w;
    }
  });
}

Var Tape::gather_rows(Var table, std::span<const int> rows) {
  const Matrix& tv = value(table);
  Matrix out(static_cast<Eigen::Index>(rows.size()), tv.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i] >= 0 && rows[i] < tv.rows(), "gather_rows", "row index out of range");
    out.row(static_cast<Eigen::Index>(i)) = tv.row(rows[i]);
  }
  std::vector<int> idx(rows.begin(), rows.end());
  return unary("gather_rows", table, std::move(out), [table, idx](Tape& t, const Matrix& g) {
    const Matrix& tv = t.value(table);
    Matrix d = Matrix::Zero(tv.rows(), tv.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) d.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
    return d;
  });
}

Var Tape::row_sq_norm(Var a) {
  Matrix out = value(a).rowwise().squaredNorm();
  return unary("row_sq_norm", a, std::move(out), [a](Tape& t, const Matrix& g) {
    const Matrix& x = t.value(a);
    return Matrix(2.0 * (x.array().colwise() * g.col(0).array()));
  });
}

Var Tape::sum(Var a) {
  Matrix out(1, 1);
  out(0, 0) = value(a).sum();
  const auto r = value(a).rows();
  const auto c = value(a).cols();
  return unary("sum", a, std::move(out), [r, c](Tape&, const Matrix& g) {
    return Matrix(Matrix::Constant(r, c, g(0, 0)));
  });
}

Var Tape::mean(Var a) {
  const auto n = static_cast<double>(value(a).size());
  require(n > 0, "mean", "empty input");
  return scale(sum(a), 1.0 / n);
}

}  // namespace dgpo::nn
