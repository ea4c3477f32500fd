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

#include "saiw/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <unordered_set>

namespace saiw {

namespace {
std::atomic<uint64_t> g_seq{1};
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

Tensor Tensor::constant(Shape shape, std::vector<Scalar> data) {
  if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
    throw ShapeError("constant: data length " + std::to_string(data.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(data);
  node->seq = g_seq.fetch_add(1);
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(Scalar v) { return constant({1}, {v}); }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), Scalar(0), requires_grad);
}

Tensor Tensor::full(Shape shape, Scalar v, bool requires_grad) {
  const int64_t n = shape_numel(shape);
  auto t = constant(std::move(shape), std::vector<Scalar>(n, v));
  t.set_requires_grad(requires_grad);
  return t;
}

int64_t Tensor::dim(int i) const {
  if (i < 0 || i >= ndim()) throw ShapeError("dim index out of range");
  return node_->shape[i];
}

Scalar Tensor::item() const {
  if (numel() != 1) throw ShapeError("item(): tensor is not scalar, shape " + shape_str(shape()));
  return node_->value[0];
}

Tensor make_op(const std::string& op, Shape shape, std::vector<Scalar> value,
               std::vector<Tensor> parents,
               std::function<void(TensorNode&)> backward_fn) {
  if (shape_numel(shape) != static_cast<int64_t>(value.size())) {
    throw ShapeError(op + ": result buffer does not match shape " + shape_str(shape));
  }
  if (runtime().finite_checks) {
    for (const Scalar v : value) {
      if (!std::isfinite(static_cast<double>(v))) {
        throw NumericError("non-finite value produced by primitive '" + op + "'");
      }
    }
  }
  auto node = std::make_shared<TensorNode>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  node->seq = g_seq.fetch_add(1);
  bool track = false;
  for (const auto& p : parents) track = track || p.requires_grad();
  if (track) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node());
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw Error("backward: undefined loss tensor");
  if (loss.numel() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;

  // Collect the reachable tracked subgraph (iterative DFS).
  std::vector<TensorNode*> stack{loss.node().get()};
  std::vector<TensorNode*> nodes;
  std::unordered_set<const TensorNode*> visited;
  while (!stack.empty()) {
    TensorNode* n = stack.back();
    stack.pop_back();
    if (visited.count(n)) continue;
    visited.insert(n);
    nodes.push_back(n);
    for (const auto& p : n->parents) {
      if (p->requires_grad && !visited.count(p.get())) stack.push_back(p.get());
    }
  }
  std::sort(nodes.begin(), nodes.end(),
            [](const TensorNode* a, const TensorNode* b) { return a->seq > b->seq; });

  // Interior grads are scratch for this sweep; only leaf (parameter/input)
  // grads accumulate across calls.
  for (TensorNode* n : nodes) {
    if (n->backward_fn) {
      n->ensure_grad();
      std::fill(n->grad.begin(), n->grad.end(), Scalar(0));
    }
  }
  loss.node()->ensure_grad();
  loss.node()->grad[0] += Scalar(1);
  for (TensorNode* n : nodes) {
    if (!n->backward_fn) continue;
    for (const auto& p : n->parents) {
      if (p->requires_grad) p->ensure_grad();
    }
    n->backward_fn(*n);
  }
}

Tensor ParameterSet::create(const std::string& name, Shape shape,
                            const std::function<void(std::vector<Scalar>&)>& init) {
  if (params_.count(name)) throw Error("parameter already registered: " + name);
  const int64_t n = shape_numel(shape);
  std::vector<Scalar> data(n, Scalar(0));
  if (init) init(data);
  Tensor t = Tensor::constant(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  params_.emplace(name, t);
  order_.push_back(name);
  return t;
}

Tensor ParameterSet::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

bool ParameterSet::contains(const std::string& name) const { return params_.count(name) > 0; }

std::vector<Tensor> ParameterSet::all() const {
  std::vector<Tensor> out;
  out.reserve(order_.size());
  for (const auto& n : order_) out.push_back(params_.at(n));
  return out;
}

void ParameterSet::zero_grad() {
  for (auto& [name, t] : params_) {
    Tensor copy = t;
    copy.zero_grad();
  }
}

int64_t ParameterSet::total_size() const {
  int64_t n = 0;
  for (const auto& [name, t] : params_) n += t.numel();
  return n;
}

}  // namespace saiw
