#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace dgpo::nn {

/// Row-major dense matrix; rows are batch entries throughout the library.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Handle to a node recorded on a Tape.
struct Var {
  std::size_t id = 0;
};

/// Reverse-mode tape over dense matrices.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order and backward() is a single reverse sweep. Gradients are
/// only propagated into nodes that (transitively) depend on a leaf.
class Tape {
 public:
  Tape() { nodes_.reserve(256); }

  Var constant(Matrix value);
  Var constant_scalar(double value);
  /// Differentiable input; its gradient is available after backward().
  Var leaf(Matrix value);

  const Matrix& value(Var v) const { return nodes_[v.id].value; }
  double scalar(Var v) const;
  /// Gradient of the last backward() root w.r.t. `v` (zeros if unreached).
  Matrix grad(Var v) const;
  bool requires_grad(Var v) const { return nodes_[v.id].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Seeds d(root)/d(root) = 1 and sweeps. `root` must be 1x1.
  void backward(Var root);

  /// Name of the earliest node holding a non-finite value, or empty.
  std::string first_nonfinite() const;

  // Primitives. Shapes are checked and mismatches throw dgpo::InputError.
  /// Block of a column vector reinterpreted as a rows x cols matrix.
  Var slice(Var flat, std::size_t offset, std::size_t rows, std::size_t cols);
  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  /// Adds a 1 x n row to every row of `a`.
  Var add_row(Var a, Var row);
  Var silu(Var a);
  Var softplus(Var a);
  Var exp(Var a);
  Var square(Var a);
  /// Clamp with zero gradient outside [lo, hi].
  Var clamp(Var a, double lo, double hi);
  /// Elementwise minimum; ties route the gradient to `a`.
  Var minimum(Var a, Var b);
  Var concat_cols(std::initializer_list<Var> parts);
  Var gather_rows(Var table, std::span<const int> rows);
  /// n x m -> n x 1 of squared row norms.
  Var row_sq_norm(Var a);
  Var sum(Var a);
  Var mean(Var a);

 private:
  using Backward = std::function<void(Tape&, const Matrix& out_grad)>;

  struct Node {
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    bool has_grad = false;
    const char* op = "";
    Backward backward;
  };

  Var push(const char* op, Matrix value, bool requires_grad, Backward backward);
  void accumulate(Var v, const Matrix& g);
  template <typename F>
  Var unary(const char* op, Var a, Matrix value, F&& local_grad);

  std::vector<Node> nodes_;
};

}  // namespace dgpo::nn
