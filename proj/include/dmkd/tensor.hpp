// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensor of 64-bit reals with tape-based reverse-mode
// autodiff. A Tensor is a shared handle: copies alias the same storage and
// graph node, clone() makes an independent leaf.
#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace dmkd {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node;

struct TensorImpl {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty when no gradient has been accumulated
  bool requires_grad = false;
  std::shared_ptr<Node> node;  // null for leaves
};

// Accumulates d(loss)/d(parent_i) into parent_grads[i] (nullptr when the
// parent does not require grad).
using BackwardFn = std::function<void(std::span<const double> grad_out,
                                      std::span<std::vector<double>* const> parent_grads)>;

struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> parents;
  BackwardFn backward;
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor ones(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  const std::vector<double>& vec() const;
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();
  void clear_grad();

  bool is_leaf() const;
  // Op name of the producing node, empty for leaves.
  std::string op() const;

  Tensor detach() const;
  Tensor clone() const;

  // Internal: used by ops and the graph.
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Builds a result tensor. A graph node is recorded only when some parent
// requires grad.
Tensor make_result(std::string op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents, detail::BackwardFn backward);

struct GraphNode {
  std::string op;  // empty for leaves
  std::vector<std::size_t> parents;  // indices into Graph::nodes()
  bool leaf = false;
};

// Topologically ordered view of everything that contributed to a tensor.
class Graph {
 public:
  static Graph trace(const Tensor& root);

  const std::vector<GraphNode>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend void backward(const Tensor& loss);
  std::vector<GraphNode> nodes_;
  std::vector<detail::TensorImpl*> impls_;
};

// Seeds d(loss)/d(loss) = 1 and accumulates into every requires_grad leaf.
void backward(const Tensor& loss);

// Scales the incoming gradient of the named ops during backward while alive.
// Exists to check that the gradient checker catches broken backward rules.
class FaultInjection {
 public:
  explicit FaultInjection(std::vector<std::string> ops, double factor = 1.1);
  ~FaultInjection();
  FaultInjection(const FaultInjection&) = delete;
  FaultInjection& operator=(const FaultInjection&) = delete;

 private:
  std::vector<std::string> previous_;
  double previous_factor_;
};

}  // namespace dmkd
