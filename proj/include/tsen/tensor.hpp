#pragma once

#include <Eigen/Core>
#include <functional>
#include <initializer_list>
#include <memory>
#include <unordered_map>
#include <vector>

#include "tsen/rng.hpp"

namespace tsen {

/// Dense 2-D double matrix, row-major. Row-major layout is part of the
/// checkpoint file contract, so it is fixed here rather than left to Eigen's
/// default.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Index = Eigen::Index;

class Tape;

namespace detail {
struct TensorData {
  Matrix value;
  bool requires_grad = false;
  Matrix grad;  // same shape as value when requires_grad, else 0x0
};
}  // namespace detail

/// Value-semantics handle to a dense 2-D tensor. Copies share storage;
/// values are treated as immutable once an op has consumed them (mutation
/// is reserved for initialization and optimizer updates between passes).
///
/// A tensor optionally carries a (tape, node) pair linking it into the
/// recording tape of the forward pass it was produced by. Plain tensors
/// (constants, inputs) carry none and cost nothing at backward time.
class Tensor {
 public:
  Tensor() : Tensor(0, 0) {}
  Tensor(Index rows, Index cols);  // zero-filled
  explicit Tensor(Matrix values);
  Tensor(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor zeros(Index rows, Index cols);
  static Tensor ones(Index rows, Index cols);
  static Tensor full(Index rows, Index cols, double v);
  static Tensor identity(Index n);

  Index rows() const { return data_->value.rows(); }
  Index cols() const { return data_->value.cols(); }
  Index size() const { return data_->value.size(); }

  double operator()(Index i, Index j) const { return data_->value(i, j); }
  const Matrix& value() const { return data_->value; }
  Matrix& value() { return data_->value; }

  bool requires_grad() const { return data_->requires_grad; }
  Tensor& set_requires_grad(bool on);
  const Matrix& grad() const;
  Matrix& grad();
  void zero_grad();

  /// Deep copy of values (drops tape linkage and gradient).
  Tensor clone() const;

  bool on_tape() const { return tape_ != nullptr; }

 private:
  std::shared_ptr<detail::TensorData> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;

  friend class Tape;
};

enum class Activation { relu, gelu, tanh, identity };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

/// Exact GELU, x * Phi(x) with the Gaussian CDF (not the tanh approximation).
double gelu_scalar(double x);
double gelu_derivative_scalar(double x);

/// Records one forward pass for reverse-mode differentiation. A tape is
/// owned by exactly one pass; independent passes on separate tapes may run
/// concurrently as long as the leaf values are not mutated in between.
///
/// Usage: watch() the trainable leaves, build the computation with the ops
/// below (ops whose operands carry this tape record themselves), then call
/// backward() on a scalar result. A tape is consumed by backward() and
/// cannot be reused.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Register a leaf tensor and return a tape-bound view of it. Idempotent:
  /// watching the same storage twice yields the same node.
  Tensor watch(const Tensor& leaf);

  /// Reverse sweep from a scalar (1x1) loss. Every watched leaf with
  /// requires_grad receives (accumulates) its gradient unless deposit is
  /// false, in which case gradients are only retrievable via grad_of().
  /// The tape is consumed; a second call throws.
  void backward(const Tensor& loss, bool deposit = true);

  /// Gradient of the last backward() w.r.t. a watched leaf, looked up by
  /// storage identity. Zero matrix if the loss did not depend on it.
  const Matrix& grad_of(const Tensor& leaf) const;

  bool consumed() const { return consumed_; }
  std::size_t node_count() const { return nodes_.size(); }

  // --- recording API, used by ops (including fused ops in other modules) ---

  /// Backward closure: receives the node's output gradient and distributes
  /// contributions to its parents via add_grad().
  using BackwardFn = std::function<void(const Matrix& out_grad, Tape& tape)>;

  int record_node(Index rows, Index cols, BackwardFn fn);
  void add_grad(int node, const Matrix& g);

  /// The unique tape among the given operands, or nullptr if none is
  /// tape-bound. Throws std::logic_error when operands mix two tapes.
  static Tape* joint(std::initializer_list<const Tensor*> operands);

  /// Bind a freshly computed tensor to this tape as node `id`.
  static void bind(Tensor& t, Tape* tape, int id);
  static int node_of(const Tensor& t) { return t.node_; }

 private:
  struct Node {
    Index rows = 0, cols = 0;
    BackwardFn back;                               // empty for leaves
    std::shared_ptr<detail::TensorData> leaf_data; // set for leaves only
  };

  std::vector<Node> nodes_;
  std::vector<Matrix> grads_;
  std::vector<char> has_grad_;
  std::unordered_map<const detail::TensorData*, int> leaf_ids_;
  Matrix zero_;  // returned by grad_of for untouched leaves
  bool consumed_ = false;
};

// --- ops -------------------------------------------------------------------
// Every op validates shapes, computes the value eagerly, and records a node
// when any operand is tape-bound. Gradient rules are in tensor.cpp.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);

/// x + broadcast of a 1xC row vector over the rows of x.
Tensor add_rowvec(const Tensor& x, const Tensor& row);

/// Row-wise softmax with per-row max subtraction. Non-finite inputs raise
/// NumericError.
Tensor softmax_rows(const Tensor& x);

/// Per-row layer normalization followed by the affine map gamma, beta
/// (both 1xC). Population variance; eps keeps zero-variance rows finite.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor activation(const Tensor& x, Activation kind);

/// Column-wise concatenation; all parts must share their row count.
Tensor concat_cols(const std::vector<Tensor>& parts);

/// Columns [begin, begin+count) of x.
Tensor slice_cols(const Tensor& x, Index begin, Index count);

/// Inverted dropout: in training mode entries are dropped with probability
/// `rate` and survivors are scaled by 1/(1-rate); in eval mode the input is
/// returned unchanged.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng);

/// Sum of all entries, as a 1x1 tensor.
Tensor sum_all(const Tensor& x);

}  // namespace tsen
