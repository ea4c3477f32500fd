// Copyright 2026 The SAiW Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
// Reverse-mode differentiation substrate over dense N-dimensional arrays.
// Define-by-run: every primitive records its parents and a backward closure;
// backward() replays closures in exact reverse creation order, which is a
// valid topological order for a graph built sequentially.

#ifndef SAIW_TENSOR_HPP_
#define SAIW_TENSOR_HPP_

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "saiw/common.hpp"

namespace saiw {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
  Shape shape;
  std::vector<Scalar> value;
  std::vector<Scalar> grad;  // allocated lazily, same length as value
  bool requires_grad = false;
  uint64_t seq = 0;  // creation order; backward sweeps descending
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Distributes this node's grad into parents' grads (additive).
  std::function<void(TensorNode&)> backward_fn;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Scalar(0));
  }
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor constant(Shape shape, std::vector<Scalar> data);
  static Tensor scalar(Scalar v);
  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar v, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return static_cast<int64_t>(node_->value.size()); }
  int64_t dim(int i) const;
  int ndim() const { return static_cast<int>(node_->shape.size()); }

  Scalar* data() { return node_->value.data(); }
  const Scalar* data() const { return node_->value.data(); }
  std::vector<Scalar>& values() { return node_->value; }
  const std::vector<Scalar>& values() const { return node_->value; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool rg) { node_->requires_grad = rg; }
  // Gradient buffer; allocated (zeroed) on first access.
  std::vector<Scalar>& grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) node_->grad.assign(node_->grad.size(), Scalar(0));
  }

  Scalar item() const;

  std::shared_ptr<TensorNode>& node() { return node_; }
  const std::shared_ptr<TensorNode>& node() const { return node_; }

  explicit Tensor(std::shared_ptr<TensorNode> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<TensorNode> node_;
};

// Creates a node for a primitive result. `parents` are the differentiable
// inputs; `backward_fn` must add into each tracked parent's grad buffer.
// Non-finite outputs raise NumericError (tagged with `op`) unless
// runtime().finite_checks is off.
Tensor make_op(const std::string& op, Shape shape, std::vector<Scalar> value,
               std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward_fn);

// Accumulates gradients for every tracked node reachable from `loss`.
// Pre: loss is scalar (numel == 1). Calling twice without zeroing
// accumulates additively.
void backward(const Tensor& loss);

// Named, tracked parameters of a model. Registration order is stable and
// defines the optimizer/checkpoint ordering.
class ParameterSet {
 public:
  Tensor create(const std::string& name, Shape shape,
                const std::function<void(std::vector<Scalar>&)>& init);
  Tensor get(const std::string& name) const;
  bool contains(const std::string& name) const;
  const std::vector<std::string>& names() const { return order_; }
  std::vector<Tensor> all() const;
  void zero_grad();
  int64_t total_size() const;

 private:
  std::map<std::string, Tensor> params_;
  std::vector<std::string> order_;
};

}  // namespace saiw

#endif  // SAIW_TENSOR_HPP_
