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

#ifndef SAIW_GRADCHECK_HPP_
#define SAIW_GRADCHECK_HPP_

#include <functional>
#include <vector>

#include "saiw/tensor.hpp"

namespace saiw {

// Compares reverse-mode gradients of the scalar produced by `fn` against
// central finite differences at the current parameter values. Returns the
// max over all parameter entries of
//   |analytic - central| / max(|analytic|, |central|, 1e-8).
// `fn` must rebuild its graph from the given tensors on every call.
double gradient_check(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                      const std::vector<Tensor>& params, double eps);

// Same check restricted to up to `entries_per_param` randomly chosen entries
// of each parameter; keeps whole-network checks tractable.
double gradient_check_sampled(const std::function<Tensor(const std::vector<Tensor>&)>& fn,
                              const std::vector<Tensor>& params, double eps,
                              int entries_per_param, Rng& rng);

}  // namespace saiw

#endif  // SAIW_GRADCHECK_HPP_
