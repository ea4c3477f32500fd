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

#include "saiw/nn.hpp"

#include <cmath>

namespace saiw {

std::vector<Scalar>& BufferStore::create(const std::string& name, int64_t size, Scalar fill) {
  if (bufs_.count(name)) throw Error("buffer already registered: " + name);
  order_.push_back(name);
  return bufs_.emplace(name, std::vector<Scalar>(size, fill)).first->second;
}

std::vector<Scalar>& BufferStore::get(const std::string& name) {
  auto it = bufs_.find(name);
  if (it == bufs_.end()) throw Error("unknown buffer: " + name);
  return it->second;
}

const std::vector<Scalar>& BufferStore::get(const std::string& name) const {
  auto it = bufs_.find(name);
  if (it == bufs_.end()) throw Error("unknown buffer: " + name);
  return it->second;
}

void init_he_normal(std::vector<Scalar>& w, int64_t fan_in, Rng& rng) {
  const double std = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (auto& v : w) v = static_cast<Scalar>(std * rng.normal());
}

Conv2d::Conv2d(ParameterSet& ps, const std::string& name, int cin, int cout, int k, int stride_,
               int pad_, Rng& rng, bool zero_init)
    : stride(stride_), pad(pad_) {
  const int64_t fan_in = static_cast<int64_t>(cin) * k * k;
  w = ps.create(name + ".w", {cout, cin, k, k}, [&](std::vector<Scalar>& v) {
    if (!zero_init) init_he_normal(v, fan_in, rng);
  });
  b = ps.create(name + ".b", {cout}, nullptr);
}

ConvTranspose2d::ConvTranspose2d(ParameterSet& ps, const std::string& name, int cin, int cout,
                                 int k, int stride_, int pad_, Rng& rng, int out_pad_)
    : stride(stride_), pad(pad_), out_pad(out_pad_) {
  const int64_t fan_in = static_cast<int64_t>(cin) * k * k;
  w = ps.create(name + ".w", {cin, cout, k, k},
                [&](std::vector<Scalar>& v) { init_he_normal(v, fan_in, rng); });
  b = ps.create(name + ".b", {cout}, nullptr);
}

DwConv2d::DwConv2d(ParameterSet& ps, const std::string& name, int channels, int k, int pad_,
                   Rng& rng)
    : pad(pad_) {
  w = ps.create(name + ".w", {channels, 1, k, k}, [&](std::vector<Scalar>& v) {
    init_he_normal(v, static_cast<int64_t>(k) * k, rng);
  });
  b = ps.create(name + ".b", {channels}, nullptr);
}

Linear::Linear(ParameterSet& ps, const std::string& name, int in, int out, Rng& rng,
               bool zero_weights, Scalar bias_fill) {
  w = ps.create(name + ".w", {in, out}, [&](std::vector<Scalar>& v) {
    if (!zero_weights) init_he_normal(v, in, rng);
  });
  b = ps.create(name + ".b", {out},
                [&](std::vector<Scalar>& v) { std::fill(v.begin(), v.end(), bias_fill); });
}

Tensor Linear::forward(const Tensor& x) const {
  Tensor y = matmul(x, w);
  return add(y, broadcast_to(b, y.shape()));
}

BatchNorm2d::BatchNorm2d(ParameterSet& ps, BufferStore& bs, const std::string& name,
                         int channels) {
  gamma = ps.create(name + ".gamma",
                    {channels}, [](std::vector<Scalar>& v) { std::fill(v.begin(), v.end(), Scalar(1)); });
  beta = ps.create(name + ".beta", {channels}, nullptr);
  running_mean = &bs.create(name + ".running_mean", channels, Scalar(0));
  running_var = &bs.create(name + ".running_var", channels, Scalar(1));
}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  if (!training) return batch_norm2d_eval(x, gamma, beta, *running_mean, *running_var, eps);
  std::vector<Scalar> bmean, bvar;
  Tensor y = batch_norm2d_train(x, gamma, beta, &bmean, &bvar, eps);
  for (size_t c = 0; c < bmean.size(); ++c) {
    (*running_mean)[c] = static_cast<Scalar>(momentum) * (*running_mean)[c] +
                         static_cast<Scalar>(1.0 - momentum) * bmean[c];
    (*running_var)[c] = static_cast<Scalar>(momentum) * (*running_var)[c] +
                        static_cast<Scalar>(1.0 - momentum) * bvar[c];
  }
  return y;
}

LayerNorm::LayerNorm(ParameterSet& ps, const std::string& name, int dim) {
  gamma = ps.create(name + ".gamma",
                    {dim}, [](std::vector<Scalar>& v) { std::fill(v.begin(), v.end(), Scalar(1)); });
  beta = ps.create(name + ".beta", {dim}, nullptr);
}

Tensor nchw_to_tokens(const Tensor& x) {
  if (x.ndim() != 4) throw ShapeError("nchw_to_tokens: expected NCHW");
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  return reshape(permute(x, {0, 2, 3, 1}), {n, h * w, c});
}

Tensor tokens_to_nchw(const Tensor& t, int64_t c, int64_t h, int64_t w) {
  if (t.ndim() != 3) throw ShapeError("tokens_to_nchw: expected [N,T,C]");
  const int64_t n = t.dim(0);
  return permute(reshape(t, {n, h, w, c}), {0, 3, 1, 2});
}

WindowAttentionBlock::WindowAttentionBlock(ParameterSet& ps, const std::string& name, int dim_,
                                           int heads_, int window_, bool shifted_, int mlp_ratio,
                                           Rng& rng)
    : dim(dim_),
      heads(heads_),
      window(window_),
      shifted(shifted_),
      ln1(ps, name + ".ln1", dim_),
      ln2(ps, name + ".ln2", dim_),
      qkv(ps, name + ".qkv", dim_, 3 * dim_, rng),
      proj(ps, name + ".proj", dim_, dim_, rng),
      mlp1(ps, name + ".mlp1", dim_, mlp_ratio * dim_, rng),
      mlp2(ps, name + ".mlp2", mlp_ratio * dim_, dim_, rng) {
  if (dim_ % heads_ != 0) throw ConfigError("attention width must divide evenly by head count");
}

Tensor WindowAttentionBlock::forward(const Tensor& x) const {
  const int64_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h % window || w % window) throw ShapeError("window size must divide spatial dims");
  const int64_t dh = dim / heads;
  const int shift = window / 2;

  // Attention sublayer, pre-norm.
  Tensor t = ln1.forward(nchw_to_tokens(x));
  Tensor sp = tokens_to_nchw(t, c, h, w);
  if (shifted) sp = roll2d(sp, -shift, -shift);
  Tensor wins = window_partition(sp, window);  // [B, Tw, C]
  const int64_t bw = wins.dim(0), tw = wins.dim(1);

  Tensor qkv_all = qkv.forward(wins);  // [B, Tw, 3C]
  Tensor q = slice(qkv_all, {0, 0, 0}, {bw, tw, dim});
  Tensor k = slice(qkv_all, {0, 0, dim}, {bw, tw, dim});
  Tensor v = slice(qkv_all, {0, 0, 2 * dim}, {bw, tw, dim});
  auto split_heads = [&](const Tensor& m) {
    return reshape(permute(reshape(m, {bw, tw, heads, dh}), {0, 2, 1, 3}), {bw * heads, tw, dh});
  };
  q = split_heads(q);
  k = split_heads(k);
  v = split_heads(v);

  Tensor scores = scalar_mul(matmul(q, k, false, true), Scalar(1.0 / std::sqrt(double(dh))));
  Tensor attn = matmul(softmax_lastdim(scores), v);  // [B*H, Tw, dh]
  Tensor merged =
      reshape(permute(reshape(attn, {bw, heads, tw, dh}), {0, 2, 1, 3}), {bw, tw, dim});
  Tensor out = proj.forward(merged);

  Tensor back = window_merge(out, window, n, c, h, w);
  if (shifted) back = roll2d(back, shift, shift);
  Tensor x1 = add(x, back);

  // MLP sublayer, pre-norm.
  Tensor t2 = ln2.forward(nchw_to_tokens(x1));
  Tensor m = mlp2.forward(gelu(mlp1.forward(t2)));
  return add(x1, tokens_to_nchw(m, c, h, w));
}

}  // namespace saiw
