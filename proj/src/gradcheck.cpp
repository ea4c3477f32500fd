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

#include "saiw/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace saiw {

double gradient_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                      const std::vector<Tensor>& params, double eps) {
  if (eps <= 0) throw Error("gradient_check: eps must be positive");

  for (const auto& p : params) {
    Tensor t = p;
    t.zero_grad();
  }
  Tensor loss = fn(params);
  if (loss.numel() != 1) throw ShapeError("gradient_check: fn must produce a scalar");
  backward(loss);

  std::vector<std::vector<Scalar>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    Tensor t = p;
    analytic.push_back(t.grad());
  }

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi];
    Scalar* data = t.data();
    for (int64_t i = 0; i < t.numel(); ++i) {
      const Scalar orig = data[i];
      data[i] = orig + static_cast<Scalar>(eps);
      const double up = static_cast<double>(fn(params).item());
      data[i] = orig - static_cast<Scalar>(eps);
      const double down = static_cast<double>(fn(params).item());
      data[i] = orig;
      const double central = (up - down) / (2.0 * eps);
      const double a = static_cast<double>(analytic[pi][i]);
      const double denom = std::max({std::abs(a), std::abs(central), 1e-8});
      max_rel = std::max(max_rel, std::abs(a - central) / denom);
    }
  }
  return max_rel;
}

double gradient_check_sampled(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                              const std::vector<Tensor>& params, double eps,
                              int entries_per_param, Rng& rng) {
  if (eps <= 0) throw Error("gradient_check_sampled: eps must be positive");
  for (const auto& p : params) {
    Tensor t = p;
    t.zero_grad();
  }
  Tensor loss = fn(params);
  if (loss.numel() != 1) throw ShapeError("gradient_check_sampled: fn must produce a scalar");
  backward(loss);

  std::vector<std::vector<Scalar>> analytic;
  analytic.reserve(params.size());
  for (const auto& p : params) {
    Tensor t = p;
    analytic.push_back(t.grad());
  }

  double max_rel = 0.0;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor t = params[pi];
    Scalar* data = t.data();
    const int64_t n = t.numel();
    const int64_t checks = std::min<int64_t>(entries_per_param, n);
    for (int64_t k = 0; k < checks; ++k) {
      const int64_t i = (n == checks) ? k : rng.uniform_int(0, n - 1);
      const Scalar orig = data[i];
      data[i] = orig + static_cast<Scalar>(eps);
      const double up = static_cast<double>(fn(params).item());
      data[i] = orig - static_cast<Scalar>(eps);
      const double down = static_cast<double>(fn(params).item());
      data[i] = orig;
      const double central = (up - down) / (2.0 * eps);
      const double a = static_cast<double>(analytic[pi][i]);
      const double denom = std::max({std::abs(a), std::abs(central), 1e-8});
      max_rel = std::max(max_rel, std::abs(a - central) / denom);
    }
  }
  return max_rel;
}

}  // namespace saiw
