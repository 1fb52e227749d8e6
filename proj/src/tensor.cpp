// Copyright 2026 The DMKD Workbench Authors
// SPDX-License-Identifier: Apache-2.0
#include "dmkd/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <unordered_map>
#include <utility>

#include "dmkd/errors.hpp"

namespace dmkd {

namespace {

thread_local std::vector<std::string> g_faulty_ops;
thread_local double g_fault_factor = 1.0;

std::shared_ptr<detail::TensorImpl> new_impl(Shape shape, std::vector<double> data,
                                              bool requires_grad) {
  if (data.size() != shape_numel(shape)) {
    throw ShapeMismatch("data length " + std::to_string(data.size()) +
                        " does not match shape " + shape_str(shape));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->data = std::move(data);
  impl->requires_grad = requires_grad;
  return impl;
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::ones(Shape shape, bool requires_grad) {
  return full(std::move(shape), 1.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw ShapeMismatch("zero extent in shape " + shape_str(shape));
  }
  std::vector<double> data(shape_numel(shape), value);
  return Tensor(new_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
  for (auto e : shape) {
    if (e == 0) throw ShapeMismatch("zero extent in shape " + shape_str(shape));
  }
  return Tensor(new_impl(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return full({1}, value, requires_grad);
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::size(std::size_t axis) const {
  if (axis >= impl_->shape.size()) throw BadAxis("axis " + std::to_string(axis) + " out of range");
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->data.size(); }

std::span<const double> Tensor::data() const { return impl_->data; }

std::span<double> Tensor::mutable_data() { return impl_->data; }

const std::vector<double>& Tensor::vec() const { return impl_->data; }

double Tensor::item() const {
  if (numel() != 1) throw NotScalar("item() on tensor of shape " + shape_str(shape()));
  return impl_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw BadAxis("index rank does not match tensor rank");
  std::size_t off = 0;
  std::size_t axis = 0;
  for (auto i : index) {
    if (i >= s[axis]) throw BadAxis("index out of range on axis " + std::to_string(axis));
    off = off * s[axis] + i;
    ++axis;
  }
  return impl_->data[off];
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  impl_->requires_grad = on;
  if (!on) impl_->grad.clear();
}

bool Tensor::has_grad() const { return !impl_->grad.empty(); }

std::span<const double> Tensor::grad() const { return impl_->grad; }

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

void Tensor::clear_grad() { impl_->grad.clear(); }

bool Tensor::is_leaf() const { return impl_->node == nullptr; }

std::string Tensor::op() const { return impl_->node ? impl_->node->op : std::string(); }

Tensor Tensor::detach() const {
  return Tensor(new_impl(impl_->shape, impl_->data, false));
}

Tensor Tensor::clone() const {
  return Tensor(new_impl(impl_->shape, impl_->data, impl_->requires_grad && is_leaf()));
}

Tensor make_result(std::string op, Shape shape, std::vector<double> data,
                   std::vector<Tensor> parents, detail::BackwardFn backward) {
#ifndef NDEBUG
  bool inputs_finite = true;
  for (const auto& p : parents) {
    for (double v : p.data()) inputs_finite = inputs_finite && std::isfinite(v);
  }
  if (inputs_finite) {
    for (double v : data) {
      if (!std::isfinite(v)) throw Error(op + " produced a non-finite value from finite inputs");
    }
  }
#endif
  bool needs_grad = std::any_of(parents.begin(), parents.end(),
                                [](const Tensor& p) { return p.requires_grad(); });
  auto impl = new_impl(std::move(shape), std::move(data), needs_grad);
  if (needs_grad) {
    auto node = std::make_shared<detail::Node>();
    node->op = std::move(op);
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.impl());
    node->backward = std::move(backward);
    impl->node = std::move(node);
  }
  return Tensor(std::move(impl));
}

Graph Graph::trace(const Tensor& root) {
  Graph g;
  std::unordered_map<detail::TensorImpl*, std::size_t> index;
  // Iterative post-order DFS: a node is emitted after all of its parents.
  std::vector<std::pair<detail::TensorImpl*, std::size_t>> stack;
  stack.emplace_back(root.impl().get(), 0);
  std::unordered_map<detail::TensorImpl*, bool> on_stack;
  on_stack[root.impl().get()] = true;
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto* node = impl->node.get();
    if (node && next < node->parents.size()) {
      auto* parent = node->parents[next++].get();
      if (!parent->requires_grad) continue;
      if (index.count(parent) || on_stack[parent]) continue;
      on_stack[parent] = true;
      stack.emplace_back(parent, 0);
      continue;
    }
    GraphNode gn;
    gn.leaf = (node == nullptr);
    if (node) {
      gn.op = node->op;
      for (const auto& p : node->parents) {
        if (p->requires_grad) gn.parents.push_back(index.at(p.get()));
      }
    }
    index[impl] = g.nodes_.size();
    g.nodes_.push_back(std::move(gn));
    g.impls_.push_back(impl);
    stack.pop_back();
  }
  return g;
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw NotScalar("backward() needs a scalar loss, got shape " +
                    (loss.defined() ? shape_str(loss.shape()) : std::string("<undefined>")));
  }
  if (!loss.requires_grad()) throw Error("backward() on a tensor that is not part of a graph");

  Graph graph = Graph::trace(loss);
  std::unordered_map<detail::TensorImpl*, std::vector<double>> grads;
  auto* root = loss.impl().get();
  if (!root->node) {
    if (root->grad.empty()) root->grad.assign(1, 0.0);
    root->grad[0] += 1.0;
    return;
  }
  grads[root] = {1.0};

  std::vector<std::vector<double>*> buffers;
  for (std::size_t i = graph.impls_.size(); i-- > 0;) {
    auto* impl = graph.impls_[i];
    if (!impl->node) continue;  // leaves were accumulated by their children
    auto it = grads.find(impl);
    if (it == grads.end()) continue;
    std::vector<double> grad_out = std::move(it->second);
    grads.erase(it);

    const auto& node = *impl->node;
    if (g_fault_factor != 1.0 &&
        std::find(g_faulty_ops.begin(), g_faulty_ops.end(), node.op) != g_faulty_ops.end()) {
      for (auto& v : grad_out) v *= g_fault_factor;
    }

    buffers.assign(node.parents.size(), nullptr);
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      auto* parent = node.parents[p].get();
      if (!parent->requires_grad) continue;
      std::vector<double>& buf = parent->node ? grads[parent] : parent->grad;
      if (buf.empty()) buf.assign(parent->data.size(), 0.0);
      buffers[p] = &buf;
    }
    node.backward(grad_out, buffers);
  }
}

FaultInjection::FaultInjection(std::vector<std::string> ops, double factor)
    : previous_(std::move(g_faulty_ops)), previous_factor_(g_fault_factor) {
  g_faulty_ops = std::move(ops);
  g_fault_factor = factor;
}

FaultInjection::~FaultInjection() {
  g_faulty_ops = std::move(previous_);
  g_fault_factor = previous_factor_;
}

}  // namespace dmkd
