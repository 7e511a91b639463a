#pragma once

// Reverse-mode differentiation over a fixed set of dense-matrix ops.
//
// Nodes are appended in creation order, which is already a topological
// order, so backward() is a single reverse sweep that visits every node at
// most once. Parameters that are never reached from the loss get an exactly
// zero gradient.

#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "topologic/nn/matrix.hpp"

namespace topologic::nn {

/// Named learnable tensor.
struct Parameter {
  std::string name;
  Matrix value;
};

enum class OpKind {
  constant,
  parameter,
  matmul,
  transpose,
  add,
  add_bias,
  sub,
  mul,
  scale,
  scale_by,
  exp,
  log,
  power,
  sigmoid,
  relu,
  abs,
  sum,
  mean,
  stddev,
  row_normalize,
  zero_diagonal,
  gather_rows,
  concat_cols,
  reshape,
  focal,
};

inline const char* to_string(OpKind op) {
  switch (op) {
    case OpKind::constant: return "constant";
    case OpKind::parameter: return "parameter";
    case OpKind::matmul: return "matmul";
    case OpKind::transpose: return "transpose";
    case OpKind::add: return "add";
    case OpKind::add_bias: return "add_bias";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::scale_by: return "scale_by";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::power: return "power";
    case OpKind::sigmoid: return "sigmoid";
    case OpKind::relu: return "relu";
    case OpKind::abs: return "abs";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::stddev: return "std";
    case OpKind::row_normalize: return "row_normalize";
    case OpKind::zero_diagonal: return "zero_diagonal";
    case OpKind::gather_rows: return "gather_rows";
    case OpKind::concat_cols: return "concat_cols";
    case OpKind::reshape: return "reshape";
    case OpKind::focal: return "focal";
  }
  return "?";
}

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }
  const Matrix& value() const;
  std::size_t rows() const { return value().rows(); }
  std::size_t cols() const { return value().cols(); }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient per parameter, keyed by identity.
class Gradients {
 public:
  const Matrix* find(const Parameter& p) const {
    auto it = grads_.find(&p);
    return it == grads_.end() ? nullptr : &it->second;
  }

  /// Gradient of `p`, or a zero matrix of its shape when `p` was unreachable.
  Matrix of(const Parameter& p) const {
    if (const Matrix* g = find(p)) return *g;
    return Matrix(p.value.rows(), p.value.cols());
  }

  void accumulate(const Parameter& p, const Matrix& g) {
    auto [it, inserted] = grads_.try_emplace(&p, g);
    if (!inserted) it->second += g;
  }

  void scale(double s) {
    for (auto& [p, g] : grads_)
      for (auto& v : g.values()) v *= s;
  }

  std::size_t size() const { return grads_.size(); }

 private:
  std::map<const Parameter*, Matrix> grads_;
};

class Tape {
 public:
  /// View handed to an op's backward function.
  class Context {
   public:
    const Matrix& out() const { return tape_.nodes_[node_].value; }
    const Matrix& grad() const { return tape_.nodes_[node_].grad; }
    const Matrix& in(std::size_t k) const { return tape_.nodes_[tape_.nodes_[node_].parents[k]].value; }
    /// Gradient accumulator of parent k, or nullptr when it needs none.
    Matrix* in_grad(std::size_t k) {
      auto& parent = tape_.nodes_[tape_.nodes_[node_].parents[k]];
      if (!parent.requires_grad) return nullptr;
      if (!parent.has_grad) {
        parent.grad = Matrix(parent.value.rows(), parent.value.cols());
        parent.has_grad = true;
      }
      return &parent.grad;
    }

   private:
    friend class Tape;
    Context(Tape& tape, std::size_t node) : tape_(tape), node_(node) {}
    Tape& tape_;
    std::size_t node_;
  };

  using BackwardFn = std::function<void(Context&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Matrix value) {
    check_finite(OpKind::constant, value);
    nodes_.push_back(Node{OpKind::constant, std::move(value), {}, {}, false, nullptr, {}, false});
    return Var(this, nodes_.size() - 1);
  }

  /// Leaf for `p`. Registering the same parameter twice returns the same node.
  Var parameter(Parameter& p) {
    if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
    check_finite(OpKind::parameter, p.value, p.name);
    nodes_.push_back(Node{OpKind::parameter, p.value, {}, {}, true, &p, {}, false});
    param_nodes_.emplace(&p, nodes_.size() - 1);
    return Var(this, nodes_.size() - 1);
  }

  Var record(OpKind op, Matrix value, std::initializer_list<Var> parents, BackwardFn backward) {
    check_finite(op, value);
    Node node{op, std::move(value), {}, std::move(backward), false, nullptr, {}, false};
    node.parents.reserve(parents.size());
    for (const Var& p : parents) {
      if (p.tape_ != this) throw InvalidInput(std::string("operand of ") + to_string(op) + " lives on another tape");
      node.parents.push_back(p.id_);
      node.requires_grad = node.requires_grad || nodes_[p.id_].requires_grad;
    }
    nodes_.push_back(std::move(node));
    return Var(this, nodes_.size() - 1);
  }

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  OpKind kind(const Var& v) const { return nodes_[v.id_].op; }
  bool requires_grad(const Var& v) const { return nodes_[v.id_].requires_grad; }
  std::size_t size() const { return nodes_.size(); }

  /// Smallest |x| over the inputs of relu and abs nodes: how far this pass
  /// sits from a point where the gradient is not defined.
  double kink_margin() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& n : nodes_) {
      if (n.op != OpKind::relu && n.op != OpKind::abs) continue;
      for (double v : nodes_[n.parents[0]].value.values()) m = std::min(m, std::abs(v));
    }
    return m;
  }

  /// Gradients of the scalar `loss` with respect to every registered parameter.
  Gradients backward(const Var& loss) {
    if (loss.tape_ != this) throw InvalidInput("loss lives on another tape");
    const Matrix& lv = nodes_[loss.id_].value;
    if (lv.rows() != 1 || lv.cols() != 1) throw InvalidInput("backward needs a scalar (1x1) loss, got " + lv.shape());
    for (auto& n : nodes_) {
      n.has_grad = false;
      n.grad = Matrix();
    }
    nodes_[loss.id_].grad = Matrix::scalar(1.0);
    nodes_[loss.id_].has_grad = true;
    for (std::size_t id = loss.id_ + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.has_grad || !n.requires_grad || !n.backward) continue;
      Context ctx(*this, id);
      n.backward(ctx);
    }
    Gradients out;
    for (const auto& [param, id] : param_nodes_) {
      const Node& n = nodes_[id];
      if (!n.has_grad) continue;
      check_finite(OpKind::parameter, n.grad, "gradient of " + param->name);
      out.accumulate(*param, n.grad);
    }
    return out;
  }

 private:
  struct Node {
    OpKind op;
    Matrix value;
    std::vector<std::size_t> parents;
    BackwardFn backward;
    bool requires_grad;
    Parameter* param;
    Matrix grad;
    bool has_grad;
  };

  static void check_finite(OpKind op, const Matrix& m, const std::string& what = {}) {
    for (std::size_t k = 0; k < m.size(); ++k) {
      if (!std::isfinite(m[k])) {
        throw NumericalError(std::string("non-finite value from ") + to_string(op) + (what.empty() ? "" : " (" + what + ")") +
                             " at entry (" + std::to_string(k / std::max<std::size_t>(1, m.cols())) + "," +
                             std::to_string(k % std::max<std::size_t>(1, m.cols())) + ")");
      }
    }
  }

  std::vector<Node> nodes_;
  std::map<const Parameter*, std::size_t> param_nodes_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

}  // namespace topologic::nn
