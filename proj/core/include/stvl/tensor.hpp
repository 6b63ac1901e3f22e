// SPDX-License-Identifier: Apache-2.0
//
// Dense double-precision tensors with tape-based reverse-mode
// differentiation. A Tensor is a cheap handle onto a shared node; ops build
// new nodes that remember their inputs and a backward closure. Calling
// backward() on a scalar walks the graph in reverse topological order and
// accumulates into every node that requires a gradient. Leaf parameters keep
// their gradient across calls until zero_grad().
#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace stvl {

using Index = std::ptrdiff_t;
using Shape = std::vector<Index>;

Index numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  std::vector<double>& ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    return grad;
  }
};

}  // namespace detail

class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double v);
  static Tensor from(Shape shape, std::vector<double> values);
  static Tensor scalar(double v) { return from({}, {v}); }
  // A leaf that accumulates gradient.
  static Tensor parameter(Shape shape, std::vector<double> values);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  Index dim(int axis) const;
  int ndim() const { return static_cast<int>(shape().size()); }
  Index numel() const;
  // Treat as 2-D: leading axes collapsed into rows.
  Index rows() const;
  Index cols() const;

  std::span<const double> data() const;
  std::span<double> mutable_data();
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  double item() const;
  double at(std::initializer_list<Index> idx) const;

  bool requires_grad() const;
  void zero_grad();

  // Seeds d(this)/d(this) = 1; this must be a scalar.
  void backward() const;

  // Copy sharing no graph history.
  Tensor detach() const;
  Tensor reshape(Shape shape) const;

  detail::Node* node() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node_ptr() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<detail::Node> n) : node_(std::move(n)) {}
  std::shared_ptr<detail::Node> node_;

  friend Tensor make_result(Shape, std::vector<double>, std::vector<Tensor>,
                            std::function<void(detail::Node&)>);
};

// Builds an op output. If no input needs a gradient, or grad mode is off,
// the closure and parent links are dropped.
Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> inputs,
                   std::function<void(detail::Node&)> backward);

bool grad_enabled();

// Disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Multiply-accumulate counter used by the profiler. Ops add their MAC count
// while a counter is active on the current thread.
class MacCounter {
 public:
  MacCounter();
  ~MacCounter();
  MacCounter(const MacCounter&) = delete;
  MacCounter& operator=(const MacCounter&) = delete;
  std::uint64_t macs() const { return macs_; }

  static void add(std::uint64_t n);

 private:
  std::uint64_t macs_ = 0;
  MacCounter* previous_;
};

}  // namespace stvl
