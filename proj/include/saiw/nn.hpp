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
// Layer building blocks. Layers register their parameters (and running
// buffers) under hierarchical names at construction; forward methods build
// graph nodes.

#ifndef SAIW_NN_HPP_
#define SAIW_NN_HPP_

#include <map>
#include <string>
#include <vector>

#include "saiw/ops.hpp"
#include "saiw/tensor.hpp"

namespace saiw {

// Named non-trained state (batch-norm running statistics). Checkpointed
// alongside parameters.
class BufferStore {
 public:
  std::vector<Scalar>& create(const std::string& name, int64_t size, Scalar fill);
  std::vector<Scalar>& get(const std::string& name);
  const std::vector<Scalar>& get(const std::string& name) const;
  bool contains(const std::string& name) const { return bufs_.count(name) > 0; }
  const std::vector<std::string>& names() const { return order_; }

 private:
  std::map<std::string, std::vector<Scalar>> bufs_;
  std::vector<std::string> order_;
};

// He-normal fan-in initialization using the model rng stream.
void init_he_normal(std::vector<Scalar>& w, int64_t fan_in, Rng& rng);

struct Conv2d {
  Tensor w, b;
  int stride = 1, pad = 0;

  Conv2d() = default;
  Conv2d(ParameterSet& ps, const std::string& name, int cin, int cout, int k, int stride_,
         int pad_, Rng& rng, bool zero_init = false);
  Tensor forward(const Tensor& x) const { return conv2d(x, w, b, stride, pad); }
};

struct ConvTranspose2d {
  Tensor w, b;
  int stride = 1, pad = 0, out_pad = 0;

  ConvTranspose2d() = default;
  ConvTranspose2d(ParameterSet& ps, const std::string& name, int cin, int cout, int k,
                  int stride_, int pad_, Rng& rng, int out_pad_ = 0);
  Tensor forward(const Tensor& x) const {
    return conv_transpose2d(x, w, b, stride, pad, out_pad);
  }
};

struct DwConv2d {
  Tensor w, b;
  int pad = 0;

  DwConv2d() = default;
  DwConv2d(ParameterSet& ps, const std::string& name, int channels, int k, int pad_, Rng& rng);
  Tensor forward(const Tensor& x) const { return dwconv2d(x, w, b, pad); }
};

struct Linear {
  Tensor w, b;  // w is [in, out]

  Linear() = default;
  Linear(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng,
         bool zero_weights = false, Scalar bias_fill = 0);
  // x [..., in] -> [..., out]
  Tensor forward(const Tensor& x) const;
};

struct BatchNorm2d {
  Tensor gamma, beta;
  std::vector<Scalar>* running_mean = nullptr;
  std::vector<Scalar>* running_var = nullptr;
  double momentum = 0.9;
  double eps = 1e-5;

  BatchNorm2d() = default;
  BatchNorm2d(ParameterSet& ps, BufferStore& bs, const std::string& name, int channels);
  // Training mode uses batch statistics and folds them into the running
  // buffers with the configured momentum; eval mode uses the stored stats.
  Tensor forward(const Tensor& x, bool training);
};

struct LayerNorm {
  Tensor gamma, beta;

  LayerNorm() = default;
  LayerNorm(ParameterSet& ps, const std::string& name, int dim);
  Tensor forward(const Tensor& x) const { return layer_norm_lastdim(x, gamma, beta); }
};

// [N,C,H,W] <-> [N, H*W, C] token views.
Tensor nchw_to_tokens(const Tensor& x);
Tensor tokens_to_nchw(const Tensor& t, int64_t c, int64_t h, int64_t w);

// Pre-norm windowed self-attention block with a 2-layer GELU MLP. Shifted
// variants cyclically roll the feature map by half a window before
// partitioning and roll back after.
struct WindowAttentionBlock {
  int dim = 0, heads = 0, window = 0;
  bool shifted = false;
  LayerNorm ln1, ln2;
  Linear qkv, proj, mlp1, mlp2;

  WindowAttentionBlock() = default;
  WindowAttentionBlock(ParameterSet& ps, const std::string& name, int dim_, int heads_,
                       int window_, bool shifted_, int mlp_ratio, Rng& rng);
  Tensor forward(const Tensor& x) const;  // x [N,dim,H,W]
};

}  // namespace saiw

#endif  // SAIW_NN_HPP_
