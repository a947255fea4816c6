// Copyright (c) 2026, The forgetlab Authors
// SPDX-License-Identifier: Apache-2.0

// Dense float64 tensors and a define-by-run reverse-mode tape.
//
// A Graph is rebuilt for every forward pass. Parameters live outside the
// graph in Tensors owned by the model; binding one with Graph::parameter()
// makes backward() accumulate into that Tensor's grad buffer.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace forgetlab::ndgrad {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return values_.size(); }
  /// Leading extent for rank-2 tensors; 1 for vectors and scalars.
  std::size_t rows() const;
  /// Trailing extent; 1 for scalars.
  std::size_t cols() const;

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double item() const;

  bool requires_grad() const { return requires_grad_; }
  void set_requires_grad(bool on) { requires_grad_ = on; }

  bool has_grad() const { return !grad_.empty(); }
  std::span<const double> grad() const { return grad_; }
  /// Allocates a zero-filled buffer on first use.
  std::span<double> mutable_grad();
  void zero_grad();
  void clear_grad() { grad_.clear(); grad_.shrink_to_fit(); }

 private:
  Shape shape_;
  std::vector<double> values_;
  std::vector<double> grad_;
  bool requires_grad_ = false;
};

/// True when shapes match and every value has the same bit pattern.
bool bitwise_equal(const Tensor& a, const Tensor& b);

class Graph;

/// Handle to one node of a Graph.
struct Var {
  Graph* graph = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

struct AttentionMask {
  std::size_t batch = 1;
  std::size_t query_len = 0;
  std::size_t key_len = 0;
  /// Number of leading non-pad keys per batch row; empty means all valid.
  std::vector<std::size_t> key_lengths;
  bool causal = false;
};

class Graph {
 public:
  /// Closure run during backward with the node's output gradient and value.
  using BackwardFn = std::function<void(Graph&, std::span<const double>, const Tensor&)>;

  explicit Graph(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  /// Binds an external tensor. Gradients accumulate into t.grad when
  /// t.requires_grad() and the graph records gradients.
  Var parameter(Tensor& t);
  /// Binds an external tensor read-only. It must outlive the graph.
  Var input(const Tensor& t);
  Var constant(Tensor t);

  const Tensor& value(Var v) const;
  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  /// Gradient of an intermediate node after backward(); empty if untouched.
  std::span<const double> grad(Var v) const;

  /// Seeds dL/dL = 1 and walks the tape once in reverse.
  void backward(Var loss);

  std::size_t size() const { return nodes_.size(); }

  // Op-author interface.
  Var record(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var record(Tensor value, std::span<const Var> inputs, BackwardFn fn);
  /// Gradient accumulator for v, or an empty span when v needs no gradient.
  std::span<double> accumulator(Var v);

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor* sink = nullptr;
    std::vector<double> grad;
    BackwardFn backward;
    bool needs_grad = false;
    bool touched = false;
  };

  Var push(Node node);
  const Tensor& node_value(const Node& n) const { return n.external ? *n.external : n.owned; }

  std::vector<Node> nodes_;
  bool grad_enabled_;
};

// ---- forward operations ------------------------------------------------

/// [m x k] * [k x n].
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
/// Adds bias[n] to every row of x[m x n].
Var add_row(Var x, Var bias);
/// Subgradient at 0 is 0.
Var relu(Var x);
Var sum(Var x);
Var softmax(Var x, std::size_t axis);
/// Row-wise normalization of x[m x n] with learned gain[n] and bias[n].
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Gathers rows of table[V x d]; result is [ids.size() x d].
Var embedding(Var table, std::span<const std::int32_t> ids);
/// Joins matrices with equal row counts side by side.
Var concat_cols(std::span<const Var> parts);
/// Splits x[m x n] into `parts` equal-width column blocks.
std::vector<Var> split_cols(Var x, std::size_t parts);
/// Scaled dot-product attention for a batch packed row-wise:
/// q is [batch*query_len x d], k and v are [batch*key_len x d].
Var attention(Var q, Var k, Var v, const AttentionMask& mask);
/// Mean token negative log-likelihood over rows whose target != pad_id.
Var cross_entropy(Var logits, std::span<const std::int32_t> targets, std::int32_t pad_id);
/// Inverted dropout driven by a deterministic seed.
Var dropout(Var x, double rate, std::uint64_t seed);

}  // namespace forgetlab::ndgrad
