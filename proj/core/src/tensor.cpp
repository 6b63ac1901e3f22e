// SPDX-License-Identifier: Apache-2.0
#include "stvl/tensor.hpp"

#include <sstream>
#include <unordered_set>

#include "stvl/errors.hpp"

namespace stvl {

namespace {
thread_local bool g_grad_enabled = true;
thread_local MacCounter* g_mac_counter = nullptr;
}  // namespace

Index numel_of(const Shape& shape) {
  Index n = 1;
  for (Index s : shape) n *= s;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double v) {
  const Index n = numel_of(shape);
  return from(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), v));
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
  if (numel_of(shape) != static_cast<Index>(values.size()))
    throw ShapeError("Tensor::from: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(shape));
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  return Tensor(std::move(n));
}

Tensor Tensor::parameter(Shape shape, std::vector<double> values) {
  Tensor t = from(std::move(shape), std::move(values));
  t.node_->requires_grad = true;
  return t;
}

const Shape& Tensor::shape() const { return node_->shape; }

Index Tensor::dim(int axis) const {
  const auto& s = node_->shape;
  if (axis < 0) axis += static_cast<int>(s.size());
  if (axis < 0 || axis >= static_cast<int>(s.size()))
    throw ShapeError("Tensor::dim: axis out of range for " + shape_str(s));
  return s[static_cast<std::size_t>(axis)];
}

Index Tensor::numel() const { return static_cast<Index>(node_->value.size()); }

Index Tensor::cols() const { return node_->shape.empty() ? 1 : node_->shape.back(); }

Index Tensor::rows() const {
  const Index c = cols();
  return c == 0 ? 0 : numel() / c;
}

std::span<const double> Tensor::data() const { return node_->value; }
std::span<double> Tensor::mutable_data() { return node_->value; }

std::span<const double> Tensor::grad() const {
  return node_->grad.empty() ? std::span<const double>() : std::span<const double>(node_->grad);
}

std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }

double Tensor::item() const {
  if (node_->value.size() != 1) throw ShapeError("Tensor::item on " + shape_str(shape()));
  return node_->value[0];
}

double Tensor::at(std::initializer_list<Index> idx) const {
  const auto& s = node_->shape;
  if (idx.size() != s.size()) throw ShapeError("Tensor::at: rank mismatch");
  Index flat = 0;
  std::size_t k = 0;
  for (Index i : idx) {
    if (i < 0 || i >= s[k]) throw ShapeError("Tensor::at: index out of range");
    flat = flat * s[k] + i;
    ++k;
  }
  return node_->value[static_cast<std::size_t>(flat)];
}

bool Tensor::requires_grad() const { return node_ && node_->requires_grad; }

void Tensor::zero_grad() { node_->grad.clear(); }

void Tensor::backward() const {
  if (node_->value.size() != 1) throw ShapeError("backward() needs a scalar output");
  if (!node_->requires_grad) return;

  // Iterative post-order DFS gives a topological order.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      detail::Node* p = n->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  node_->ensure_grad()[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* n = *it;
    if (n->backward && !n->grad.empty()) n->backward(*n);
  }
}

Tensor Tensor::detach() const { return from(shape(), node_->value); }

Tensor Tensor::reshape(Shape shape) const {
  if (numel_of(shape) != numel())
    throw ShapeError("reshape " + shape_str(this->shape()) + " -> " + shape_str(shape));
  return make_result(std::move(shape), node_->value, {*this}, [](detail::Node& self) {
    auto& g = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward) {
  auto n = std::make_shared<detail::Node>();
  n->shape = std::move(shape);
  n->value = std::move(values);
  if (g_grad_enabled) {
    bool any = false;
    for (const auto& t : inputs) any = any || t.requires_grad();
    if (any) {
      n->requires_grad = true;
      n->parents.reserve(inputs.size());
      for (auto& t : inputs) n->parents.push_back(t.node_ptr());
      n->backward = std::move(backward);
    }
  }
  return Tensor(std::move(n));
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

MacCounter::MacCounter() : previous_(g_mac_counter) { g_mac_counter = this; }
MacCounter::~MacCounter() {
  g_mac_counter = previous_;
  if (previous_) previous_->macs_ += macs_;
}

void MacCounter::add(std::uint64_t n) {
  if (g_mac_counter) g_mac_counter->macs_ += n;
}

}  // namespace stvl
