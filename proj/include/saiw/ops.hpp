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
// Differentiable primitives. Shape conventions:
//   feature maps   [N, C, H, W]
//   token tensors  [B, T, D]
//   matrices       [M, K]
// Every op is deterministic for fixed inputs; accumulation order inside a
// single output element is fixed regardless of worker count.

#ifndef SAIW_OPS_HPP_
#define SAIW_OPS_HPP_

#include <vector>

#include "saiw/tensor.hpp"

namespace saiw {

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor scalar_mul(const Tensor& a, Scalar s);
Tensor scalar_add(const Tensor& a, Scalar s);
Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor acos(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor softplus(const Tensor& a);
// Gradient is gated: passes only where lo < x < hi.
Tensor clamp(const Tensor& a, Scalar lo, Scalar hi);
// Hard clip to [0,1] forward, identity gradient (pass-through clamp).
Tensor clip01_ste(const Tensor& a);

// ---- shape ----
Tensor reshape(const Tensor& a, Shape shape);
Tensor permute(const Tensor& a, const std::vector<int>& axes);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, const std::vector<int64_t>& starts,
             const std::vector<int64_t>& sizes);
// Numpy-style broadcast (trailing alignment, size-1 dims expand).
Tensor broadcast_to(const Tensor& a, Shape target);

// ---- reductions ----
Tensor sum_all(const Tensor& a);
Tensor mean_all(const Tensor& a);
Tensor sum_lastdim(const Tensor& a);           // [..., D] -> [..., 1]
Tensor sum_channels(const Tensor& a);          // [N,C,H,W] -> [N,1,H,W]

// ---- linear algebra ----
// Batched matmul. a: [B..., M, K] (or 2-D), b likewise; a 2-D operand is
// broadcast across the other operand's batch. Transposition applies to the
// last two axes.
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

// ---- convolution family ----
// x [N,Ci,H,W], w [Co,Ci,kh,kw], optional bias [Co] (pass Tensor() for none).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad);
// w [Ci,Co,kh,kw]; out size (H-1)*stride - 2*pad + kh + out_pad.
Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int pad, int out_pad = 0);
// Depthwise: w [C,1,kh,kw], stride 1.
Tensor dwconv2d(const Tensor& x, const Tensor& w, const Tensor& b, int pad);
Tensor avg_pool2d(const Tensor& x, int k, int stride);
Tensor global_avg_pool(const Tensor& x);       // [N,C,H,W] -> [N,C]
Tensor upsample_nearest2x(const Tensor& x);

// ---- normalization / attention pieces ----
Tensor softmax_lastdim(const Tensor& x);
Tensor layer_norm_lastdim(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          double eps = 1e-5);
// Training-mode batch statistics over (N,H,W) per channel; the computed
// batch mean/var are written out for the layer's running-stat update.
Tensor batch_norm2d_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          std::vector<Scalar>* batch_mean, std::vector<Scalar>* batch_var,
                          double eps = 1e-5);
Tensor batch_norm2d_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         const std::vector<Scalar>& running_mean,
                         const std::vector<Scalar>& running_var, double eps = 1e-5);
Tensor l2_normalize_lastdim(const Tensor& x);
Tensor l2_normalize_channels(const Tensor& x);  // [N,C,H,W], unit norm over C

// ---- windowed attention plumbing ----
// [N,C,H,W] -> [N*(H/win)*(W/win), win*win, C]
Tensor window_partition(const Tensor& x, int win);
Tensor window_merge(const Tensor& t, int win, int64_t n, int64_t c, int64_t h, int64_t w);
Tensor roll2d(const Tensor& x, int dy, int dx);
// x [N,C,H,W] scaled by map [1,1,H,W] or [N,1,H,W], broadcast over channels.
Tensor spatial_scale(const Tensor& x, const Tensor& map);
// Channel-wise affine: y[n,c,:,:] = gamma[c] * x[n,c,:,:] + beta[c].
Tensor film(const Tensor& x, const Tensor& gamma, const Tensor& beta);

}  // namespace saiw

#endif  // SAIW_OPS_HPP_
