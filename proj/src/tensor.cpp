#include "tsen/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "tsen/errors.hpp"

namespace tsen {

namespace {

std::string shape_str(Index r, Index c) {
  std::ostringstream os;
  os << "(" << r << "x" << c << ")";
  return os.str();
}

std::string shape_str(const Tensor& t) { return shape_str(t.rows(), t.cols()); }

}  // namespace

// --- Tensor ------------------------------------------------------------------

Tensor::Tensor(Index rows, Index cols)
    : data_(std::make_shared<detail::TensorData>()) {
  data_->value = Matrix::Zero(rows, cols);
}

Tensor::Tensor(Matrix values) : data_(std::make_shared<detail::TensorData>()) {
  data_->value = std::move(values);
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows)
    : data_(std::make_shared<detail::TensorData>()) {
  const Index r = static_cast<Index>(rows.size());
  const Index c = r > 0 ? static_cast<Index>(rows.begin()->size()) : 0;
  data_->value.resize(r, c);
  Index i = 0;
  for (const auto& row : rows) {
    if (static_cast<Index>(row.size()) != c) {
      throw std::invalid_argument("Tensor: ragged initializer list");
    }
    Index j = 0;
    for (double v : row) data_->value(i, j++) = v;
    ++i;
  }
}

Tensor Tensor::zeros(Index rows, Index cols) { return Tensor(rows, cols); }

Tensor Tensor::ones(Index rows, Index cols) {
  return Tensor(Matrix::Ones(rows, cols));
}

Tensor Tensor::full(Index rows, Index cols, double v) {
  return Tensor(Matrix::Constant(rows, cols, v));
}

Tensor Tensor::identity(Index n) { return Tensor(Matrix::Identity(n, n)); }

Tensor& Tensor::set_requires_grad(bool on) {
  data_->requires_grad = on;
  if (on) {
    data_->grad = Matrix::Zero(rows(), cols());
  } else {
    data_->grad.resize(0, 0);
  }
  return *this;
}

const Matrix& Tensor::grad() const {
  if (!data_->requires_grad) {
    throw std::logic_error("Tensor::grad: tensor does not require gradients");
  }
  return data_->grad;
}

Matrix& Tensor::grad() {
  if (!data_->requires_grad) {
    throw std::logic_error("Tensor::grad: tensor does not require gradients");
  }
  return data_->grad;
}

void Tensor::zero_grad() {
  if (data_->requires_grad) data_->grad.setZero();
}

Tensor Tensor::clone() const { return Tensor(Matrix(data_->value)); }

// --- Tape --------------------------------------------------------------------

Tensor Tape::watch(const Tensor& leaf) {
  if (consumed_) throw std::logic_error("Tape::watch: tape already consumed");
  if (leaf.tape_ != nullptr && leaf.tape_ != this) {
    throw std::logic_error("Tape::watch: tensor is bound to another tape");
  }
  auto it = leaf_ids_.find(leaf.data_.get());
  int id;
  if (it != leaf_ids_.end()) {
    id = it->second;
  } else {
    Node node;
    node.rows = leaf.rows();
    node.cols = leaf.cols();
    node.leaf_data = leaf.data_;
    id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(node));
    leaf_ids_.emplace(leaf.data_.get(), id);
  }
  Tensor bound = leaf;
  bound.tape_ = this;
  bound.node_ = id;
  return bound;
}

int Tape::record_node(Index rows, Index cols, BackwardFn fn) {
  if (consumed_) throw std::logic_error("Tape: recording on a consumed tape");
  Node node;
  node.rows = rows;
  node.cols = cols;
  node.back = std::move(fn);
  nodes_.push_back(std::move(node));
  return static_cast<int>(nodes_.size()) - 1;
}

void Tape::add_grad(int node, const Matrix& g) {
  if (has_grad_[static_cast<std::size_t>(node)]) {
    grads_[static_cast<std::size_t>(node)] += g;
  } else {
    grads_[static_cast<std::size_t>(node)] = g;
    has_grad_[static_cast<std::size_t>(node)] = 1;
  }
}

void Tape::backward(const Tensor& loss, bool deposit) {
  if (consumed_) throw std::logic_error("Tape::backward: tape already consumed");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw std::invalid_argument("Tape::backward: loss must be 1x1, got " +
                                shape_str(loss));
  }
  grads_.assign(nodes_.size(), Matrix());
  has_grad_.assign(nodes_.size(), 0);

  if (loss.tape_ == this && loss.node_ >= 0) {
    add_grad(loss.node_, Matrix::Ones(1, 1));
    for (std::size_t i = nodes_.size(); i-- > 0;) {
      if (has_grad_[i] && nodes_[i].back) {
        nodes_[i].back(grads_[i], *this);
      }
    }
  } else if (loss.tape_ != nullptr) {
    throw std::logic_error("Tape::backward: loss belongs to another tape");
  }
  // else: loss is a constant; every gradient is zero.

  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    auto& node = nodes_[i];
    if (!node.leaf_data) continue;
    if (!has_grad_[i]) {
      grads_[i] = Matrix::Zero(node.rows, node.cols);
      has_grad_[i] = 1;
    }
    if (deposit && node.leaf_data->requires_grad) {
      node.leaf_data->grad += grads_[i];
    }
  }
  consumed_ = true;
}

const Matrix& Tape::grad_of(const Tensor& leaf) const {
  if (!consumed_) throw std::logic_error("Tape::grad_of: call backward() first");
  auto it = leaf_ids_.find(leaf.data_.get());
  if (it == leaf_ids_.end()) {
    throw std::logic_error("Tape::grad_of: tensor was not watched on this tape");
  }
  return grads_[static_cast<std::size_t>(it->second)];
}

Tape* Tape::joint(std::initializer_list<const Tensor*> operands) {
  Tape* tape = nullptr;
  for (const Tensor* t : operands) {
    if (t->tape_ == nullptr) continue;
    if (tape == nullptr) {
      tape = t->tape_;
    } else if (tape != t->tape_) {
      throw std::logic_error("op mixes tensors from two different tapes");
    }
  }
  return tape;
}

void Tape::bind(Tensor& t, Tape* tape, int id) {
  t.tape_ = tape;
  t.node_ = id;
}

// --- activation helpers --------------------------------------------------------

Activation activation_from_string(const std::string& name) {
  if (name == "relu") return Activation::relu;
  if (name == "gelu") return Activation::gelu;
  if (name == "tanh") return Activation::tanh;
  if (name == "identity") return Activation::identity;
  throw std::invalid_argument("unknown activation '" + name + "'");
}

std::string to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::gelu: return "gelu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

double gelu_scalar(double x) {
  return x * 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
}

double gelu_derivative_scalar(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014326779;
  const double cdf = 0.5 * (1.0 + std::erf(x * M_SQRT1_2));
  const double pdf = inv_sqrt_2pi * std::exp(-0.5 * x * x);
  return cdf + x * pdf;
}

// --- ops -----------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument("matmul: inner dimensions differ: " +
                                shape_str(a) + " * " + shape_str(b));
  }
  Tensor out(Matrix(a.value() * b.value()));
  if (Tape* tape = Tape::joint({&a, &b})) {
    const int pa = Tape::node_of(a), pb = Tape::node_of(b);
    int id = tape->record_node(
        out.rows(), out.cols(), [a, b, pa, pb](const Matrix& g, Tape& tp) {
          if (pa >= 0) tp.add_grad(pa, g * b.value().transpose());
          if (pb >= 0) tp.add_grad(pb, a.value().transpose() * g);
        });
    Tape::bind(out, tape, id);
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  Tensor out(Matrix(x.value().transpose()));
  if (Tape* tape = Tape::joint({&x})) {
    const int px = Tape::node_of(x);
    int id = tape->record_node(out.rows(), out.cols(),
                               [px](const Matrix& g, Tape& tp) {
                                 tp.add_grad(px, g.transpose());
                               });
    Tape::bind(out, tape, id);
  }
  return out;
}

namespace {
void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw std::invalid_argument(std::string(op) + ": shapes differ: " +
                                shape_str(a) + " vs " + shape_str(b));
  }
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  Tensor out(Matrix(a.value() + b.value()));
  if (Tape* tape = Tape::joint({&a, &b})) {
    const int pa = Tape::node_of(a), pb = Tape::node_of(b);
    int id = tape->record_node(out.rows(), out.cols(),
                               [pa, pb](const Matrix& g, Tape& tp) {
                                 if (pa >= 0) tp.add_grad(pa, g);
                                 if (pb >= 0) tp.add_grad(pb, g);
                               });
    Tape::bind(out, tape, id);
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  Tensor out(Matrix(a.value() - b.value()));
  if (Tape* tape = Tape::joint({&a, &b})) {
    const int pa = Tape::node_of(a), pb = Tape::node_of(b);
    int id = tape->record_node(out.rows(), out.cols(),
                               [pa, pb](const Matrix& g, Tape& tp) {
                                 if (pa >= 0) tp.add_grad(pa, g);
                                 if (pb >= 0) tp.add_grad(pb, Matrix(-g));
                               });
    Tape::bind(out, tape, id);
  }
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape("hadamard", a, b);
  Tensor out(Matrix(a.value().cwiseProduct(b.value())));
  if (Tape* tape = Tape::joint({&a, &b})) {
    const int pa = Tape::node_of(a), pb = Tape::node_of(b);
    int id = tape->record_node(
        out.rows(), out.cols(), [a, b, pa, pb](const Matrix& g, Tape& tp) {
          if (pa >= 0) tp.add_grad(pa, g.cwiseProduct(b.value()));
          if (pb >= 0) tp.add_grad(pb, g.cwiseProduct(a.value()));
        });
    Tape::bind(out, tape, id);
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  Tensor out(Matrix(x.value() * c));
  if (Tape* tape = Tape::joint({&x})) {
    const int px = Tape::node_of(x);
    int id = tape->record_node(out.rows(), out.cols(),
                               [px, c](const Matrix& g, Tape& tp) {
                                 tp.add_grad(px, Matrix(g * c));
                               });
    Tape::bind(out, tape, id);
  }
  return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& row) {
  if (row.rows() != 1 || row.cols() != x.cols()) {
    throw std::invalid_argument("add_rowvec: expected (1x" +
                                std::to_string(x.cols()) + ") row, got " +
                                shape_str(row));
  }
  Matrix v = x.value();
  v.rowwise() += row.value().row(0);
  Tensor out(std::move(v));
  if (Tape* tape = Tape::joint({&x, &row})) {
    const int px = Tape::node_of(x), pr = Tape::node_of(row);
    int id = tape->record_node(out.rows(), out.cols(),
                               [px, pr](const Matrix& g, Tape& tp) {
                                 if (px >= 0) tp.add_grad(px, g);
                                 if (pr >= 0) tp.add_grad(pr, Matrix(g.colwise().sum()));
                               });
    Tape::bind(out, tape, id);
  }
  return out;
}

Tensor softmax_rows(const Tensor& x) {
  if (x.cols() < 1) {
    throw std::invalid_argument("softmax_rows: need at least one column, got " +
                                shape_str(x));
  }
  if (!x.value().allFinite()) {
    throw NumericError("softmax_rows: non-finite input");
  }
  Matrix y = x.value();
  for (Index i = 0; i < y.rows(); ++i) {
    auto row = y.row(i);
    row.array() -= row.maxCoeff();
    row = row.array().exp();
    row /= row.sum();
  }
  Tensor out{Matrix(y)};
  if (Tape* tape = Tape::joint({&x})) {
    const int px = Tape::node_of(x);
    int id = tape->record_node(
        out.rows(), out.cols(), [y = std::move(y), px](const Matrix& g, Tape& tp) {
          Matrix dx(g.rows(), g.cols());
          for (Index i = 0; i < g.rows(); ++i) {
            const double dot = g.row(i).cwiseProduct(y.row(i)).sum();
            dx.row(i) = (y.row(i).array() * (g.row(i).array() - dot)).matrix();
          }
          tp.add_grad(px, dx);
        });
    Tape::bind(out, tape, id);
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
  const Index m = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != m || beta.rows() != 1 ||
      beta.cols() != m) {
    throw std::invalid_argument("layer_norm: gamma/beta must be (1x" +
                                std::to_string(m) + "), got " +
                                shape_str(gamma) + " and " + shape_str(beta));
  }
  if (eps <= 0) throw std::invalid_argument("layer_norm: eps must be > 0");

  Matrix xhat(x.rows(), m);
  Eigen::VectorXd inv_std(x.rows());
  for (Index i = 0; i < x.rows(); ++i) {
    const auto row = x.value().row(i);
    const double mu = row.mean();
    const double var = (row.array() - mu).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + eps);
    xhat.row(i) = (row.array() - mu) * inv_std(i);
  }
  Matrix y = xhat;
  y.array().rowwise() *= gamma.value().row(0).array();
  y.rowwise() += beta.value().row(0);

  Tensor out(std::move(y));
  if (Tape* tape = Tape::joint({&x, &gamma, &beta})) {
    const int px = Tape::node_of(x);
    const int pg = Tape::node_of(gamma);
    const int pb = Tape::node_of(beta);
    int id = tape->record_node(
        out.rows(), out.cols(),
        [xhat = std::move(xhat), inv_std = std::move(inv_std), gamma, px, pg,
         pb](const Matrix& g, Tape& tp) {
          if (pb >= 0) tp.add_grad(pb, Matrix(g.colwise().sum()));
          if (pg >= 0) tp.add_grad(pg, Matrix(g.cwiseProduct(xhat).colwise().sum()));
          if (px >= 0) {
            Matrix dxhat = g;
            dxhat.array().rowwise() *= gamma.value().row(0).array();
            Matrix dx(g.rows(), g.cols());
            for (Index i = 0; i < g.rows(); ++i) {
              const double mean_d = dxhat.row(i).mean();
              const double mean_dx = dxhat.row(i).cwiseProduct(xhat.row(i)).mean();
              dx.row(i) = (inv_std(i) *
                           (dxhat.row(i).array() - mean_d -
                            xhat.row(i).array() * mean_dx))
                              .matrix();
            }
            tp.add_grad(px, dx);
          }
        });
    Tape::bind(out, tape, id);
  }
  return out;
}

Tensor activation(const Tensor& x, Activation kind) {
  if (kind == Activation::identity) return x;

  Matrix y(x.rows(), x.cols());
  const Matrix& v = x.value();
  switch (kind) {
    case Activation::relu:
      y = v.cwiseMax(0.0);
      break;
    case Activation::gelu:
      y = v.unaryExpr([](double a) { return gelu_scalar(a); });
      break;
    case Activation::tanh:
      y = v.array().tanh();
      break;
    case Activation::identity:
      break;
  }
  Tensor out(std::move(y));
  if (Tape* tape = Tape::joint({&x})) {
    const int px = Tape::node_of(x);
    int id = tape->record_node(
        out.rows(), out.cols(), [x, out, kind, px](const Matrix& g, Tape& tp) {
          Matrix dx;
          switch (kind) {
            case Activation::relu:
              dx = g.cwiseProduct(
                  x.value().unaryExpr([](double a) { return a > 0 ? 1.0 : 0.0; }));
              break;
            case Activation::gelu:
              dx = g.cwiseProduct(x.value().unaryExpr(
                  [](double a) { return gelu_derivative_scalar(a); }));
              break;
            case Activation::tanh:
              dx = g.cwiseProduct(
                  (1.0 - out.value().array().square()).matrix());
              break;
            case Activation::identity:
              dx = g;
              break;
          }
          tp.add_grad(px, dx);
        });
    Tape::bind(out, tape, id);
  }
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) {
    throw std::invalid_argument("concat_cols: empty part list");
  }
  const Index rows = parts.front().rows();
  Index cols = 0;
  for (const Tensor& p : parts) {
    if (p.rows() != rows) {
      throw std::invalid_argument("concat_cols: row mismatch: " +
                                  shape_str(parts.front()) + " vs " +
                                  shape_str(p));
    }
    cols += p.cols();
  }
  Matrix v(rows, cols);
  Index off = 0;
  for (const Tensor& p : parts) {
    v.middleCols(off, p.cols()) = p.value();
    off += p.cols();
  }

  Tape* tape = nullptr;
  for (const Tensor& p : parts) {
    Tape* t = Tape::joint({&p});
    if (t != nullptr) {
      if (tape != nullptr && tape != t) {
        throw std::logic_error("concat_cols mixes tensors from two tapes");
      }
      tape = t;
    }
  }

  Tensor out(std::move(v));
  if (tape) {
    std::vector<std::pair<int, Index>> spans;  // (parent node, width)
    spans.reserve(parts.size());
    for (const Tensor& p : parts) spans.emplace_back(Tape::node_of(p), p.cols());
    int id = tape->record_node(
        out.rows(), out.cols(), [spans = std::move(spans)](const Matrix& g, Tape& tp) {
          Index off = 0;
          for (const auto& [node, width] : spans) {
            if (node >= 0) tp.add_grad(node, Matrix(g.middleCols(off, width)));
            off += width;
          }
        });
    Tape::bind(out, tape, id);
  }
  return out;
}

Tensor slice_cols(const Tensor& x, Index begin, Index count) {
  if (begin < 0 || count < 0 || begin + count > x.cols()) {
    throw std::invalid_argument(
        "slice_cols: range [" + std::to_string(begin) + ", " +
        std::to_string(begin + count) + ") out of bounds for " + shape_str(x));
  }
  Tensor out(Matrix(x.value().middleCols(begin, count)));
  if (Tape* tape = Tape::joint({&x})) {
    const int px = Tape::node_of(x);
    const Index rows = x.rows(), cols = x.cols();
    int id = tape->record_node(out.rows(), out.cols(),
                               [px, begin, count, rows, cols](const Matrix& g, Tape& tp) {
                                 Matrix dx = Matrix::Zero(rows, cols);
                                 dx.middleCols(begin, count) = g;
                                 tp.add_grad(px, dx);
                               });
    Tape::bind(out, tape, id);
  }
  return out;
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw std::invalid_argument("dropout: rate must be in [0, 1), got " +
                                std::to_string(rate));
  }
  if (!training || rate == 0.0) return x;

  const double keep_scale = 1.0 / (1.0 - rate);
  Matrix mask(x.rows(), x.cols());
  for (Index i = 0; i < mask.rows(); ++i) {
    for (Index j = 0; j < mask.cols(); ++j) {
      mask(i, j) = rng.uniform() >= rate ? keep_scale : 0.0;
    }
  }
  Tensor out(Matrix(x.value().cwiseProduct(mask)));
  if (Tape* tape = Tape::joint({&x})) {
    const int px = Tape::node_of(x);
    int id = tape->record_node(out.rows(), out.cols(),
                               [mask = std::move(mask), px](const Matrix& g, Tape& tp) {
                                 tp.add_grad(px, g.cwiseProduct(mask));
                               });
    Tape::bind(out, tape, id);
  }
  return out;
}

Tensor sum_all(const Tensor& x) {
  Tensor out(Matrix::Constant(1, 1, x.value().sum()));
  if (Tape* tape = Tape::joint({&x})) {
    const int px = Tape::node_of(x);
    const Index rows = x.rows(), cols = x.cols();
    int id = tape->record_node(1, 1, [px, rows, cols](const Matrix& g, Tape& tp) {
      tp.add_grad(px, Matrix(Matrix::Constant(rows, cols, g(0, 0))));
    });
    Tape::bind(out, tape, id);
  }
  return out;
}

}  // namespace tsen
