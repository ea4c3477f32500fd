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

#include "saiw/embedder.hpp"

#include <cmath>

namespace saiw {

void EmbedderConfig::validate() const {
  if (widths.size() != 4) throw ConfigError("embedder: exactly four encoder widths required");
  if (image_size % 16 != 0) throw ConfigError("embedder: image size must be divisible by 16");
  if (logo_size * 4 != image_size) {
    throw ConfigError("embedder: logo size must be image_size/4");
  }
  const int side = bottleneck_side();
  if (side % window != 0) throw ConfigError("embedder: window must divide bottleneck side");
  if (attn_dim % attn_heads != 0) throw ConfigError("embedder: heads must divide attention width");
  if (lambda4_init <= 0) throw ConfigError("embedder: lambda4 init must be positive");
}

Embedder::Embedder(ParameterSet& ps, BufferStore& bs, const EmbedderConfig& cfg, Rng& rng,
                   const JndConstants& jnd)
    : cfg_(cfg), jnd_(jnd) {
  cfg_.validate();
  const auto& w = cfg_.widths;
  logo_enc_ = LogoEncoder(ps, bs, "embedder.logo", rng);
  // Conditioning sites: 4 encoder stages, the bottleneck projection, 4
  // decoder stages, and the pre-refinement features.
  std::vector<int> sites = {w[0], w[1], w[2],  w[3], cfg_.attn_dim,
                            w[2], w[1], w[0],  w[0], w[0]};
  film_gen_ = FilmGenerator(ps, "embedder.film", sites, rng);

  initial_ = Conv2d(ps, "embedder.initial", 3, w[0], 3, 1, 1, rng);
  int cin = w[0];
  for (int i = 0; i < 4; ++i) {
    enc_.emplace_back(ps, "embedder.enc" + std::to_string(i + 1), cin, w[i], 3, 2, 1, rng);
    enc_bn_.emplace_back(ps, bs, "embedder.enc" + std::to_string(i + 1) + ".bn", w[i]);
    cin = w[i];
  }
  bneck_proj_ = Conv2d(ps, "embedder.bneck.proj", w[3], cfg_.attn_dim, 3, 1, 1, rng);
  const int side = cfg_.bottleneck_side();
  pos_embed_ = ps.create("embedder.bneck.pos", {side * side, cfg_.attn_dim}, nullptr);
  for (int i = 0; i < cfg_.attn_layers; ++i) {
    attn_.emplace_back(ps, "embedder.bneck.attn" + std::to_string(i + 1), cfg_.attn_dim,
                       cfg_.attn_heads, cfg_.window, /*shifted=*/i % 2 == 1, cfg_.mlp_ratio, rng);
  }
  bneck_back_ = Conv2d(ps, "embedder.bneck.back", cfg_.attn_dim, w[3], 3, 1, 1, rng);
  bneck_bn_ = BatchNorm2d(ps, bs, "embedder.bneck.bn", w[3]);

  // Decoder fusion convs: concat(upsampled, skip) -> 1x1 -> target width.
  const int fuse_in[4] = {w[3] + w[2], w[2] + w[1], w[1] + w[0], w[0] + w[0]};
  const int fuse_out[4] = {w[2], w[1], w[0], w[0]};
  for (int i = 0; i < 4; ++i) {
    dec_fuse_.emplace_back(ps, "embedder.dec" + std::to_string(4 - i), fuse_in[i], fuse_out[i], 1,
                           1, 0, rng);
    dec_bn_.emplace_back(ps, bs, "embedder.dec" + std::to_string(4 - i) + ".bn", fuse_out[i]);
  }
  refine_ = Conv2d(ps, "embedder.refine", w[0], w[0], 3, 1, 1, rng);
  // Zero-initialized head: the untrained embedder reproduces its input
  // bit-exactly.
  final_ = Conv2d(ps, "embedder.final", w[0], 3, 1, 1, 0, rng, /*zero_init=*/true);

  const double raw = std::log(std::exp(cfg_.lambda4_init) - 1.0);
  lambda4_raw_ = ps.create("embedder.lambda4_raw", {1}, [raw](std::vector<Scalar>& v) {
    v[0] = static_cast<Scalar>(raw);
  });
}

Tensor Embedder::lambda4() const { return softplus(lambda4_raw_); }

double Embedder::lambda4_value() const {
  const double x = static_cast<double>(lambda4_raw_.data()[0]);
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

Tensor Embedder::bottleneck(const Tensor& g_h, const FilmParams& fp, const Tensor& suppression,
                            bool training) {
  const int side = cfg_.bottleneck_side();
  Tensor h1 = gelu(bneck_proj_.forward(g_h));
  Tensor h2 = film(h1, fp.gamma[4], fp.beta[4]);
  // Flattened tokens enriched with learnable positional embeddings.
  Tensor tokens = nchw_to_tokens(h2);
  tokens = add(tokens, broadcast_to(pos_embed_, tokens.shape()));
  Tensor sp = tokens_to_nchw(tokens, cfg_.attn_dim, side, side);
  for (auto& block : attn_) sp = block.forward(sp);
  Tensor h4 = gelu(bneck_bn_.forward(bneck_back_.forward(sp), training));
  Tensor h5 = spatial_scale(h4, suppression);
  return add(g_h, h5);
}

EmbedOutput Embedder::embed_batch(const std::vector<Image>& covers,
                                  const std::vector<Image>& logos, bool training) {
  if (covers.empty() || covers.size() != logos.size()) {
    throw Error("embed_batch: covers and logos must be nonempty and equal-length");
  }
  const int64_t n = static_cast<int64_t>(covers.size());
  std::vector<Scalar> cbuf, lbuf;
  std::vector<RealMap> guidance;
  for (int64_t i = 0; i < n; ++i) {
    if (covers[i].h != cfg_.image_size || covers[i].w != cfg_.image_size || covers[i].c != 3) {
      throw ShapeError("embed_batch: cover size does not match config");
    }
    if (logos[i].h != cfg_.logo_size || logos[i].w != cfg_.logo_size || logos[i].c != 1) {
      throw ShapeError("embed_batch: logo size does not match config");
    }
    Tensor ct = image_to_tensor(covers[i]);
    cbuf.insert(cbuf.end(), ct.values().begin(), ct.values().end());
    Tensor lt = image_to_tensor(logos[i]);
    lbuf.insert(lbuf.end(), lt.values().begin(), lt.values().end());
    guidance.push_back(guidance_map(covers[i], jnd_));
  }
  Tensor covers_t = Tensor::constant({n, 3, cfg_.image_size, cfg_.image_size}, std::move(cbuf));
  Tensor logos_t = Tensor::constant({n, 1, cfg_.logo_size, cfg_.logo_size}, std::move(lbuf));
  return embed_tensors(covers_t, guidance, logos_t, training);
}

EmbedOutput Embedder::embed_tensors(const Tensor& covers, const std::vector<RealMap>& guidance,
                                    const Tensor& logos, bool training) {
  const int64_t n = covers.dim(0);
  if (static_cast<int64_t>(guidance.size()) != n) {
    throw ShapeError("embed_tensors: one guidance map per cover required");
  }
  const int side = cfg_.bottleneck_side();
  // (1 - lambda3 * P_s), resized guidance, constant w.r.t. differentiation.
  std::vector<Scalar> sup(static_cast<size_t>(n) * side * side);
  for (int64_t i = 0; i < n; ++i) {
    for (const double v : guidance[i].v) {
      if (v < 0.0 || v > 3.0) throw Error("embed_tensors: guidance outside [0,3]");
    }
    const RealMap ps = resize_bilinear(guidance[i], side, side);
    for (int j = 0; j < side * side; ++j) {
      sup[i * side * side + j] = static_cast<Scalar>(1.0 - cfg_.lambda3 * ps.v[j]);
    }
  }
  Tensor suppression = Tensor::constant({n, 1, side, side}, std::move(sup));

  Tensor g_l = logo_enc_.forward(logos, training);
  FilmParams fp = film_gen_.forward(g_l);

  Tensor x0 = gelu(initial_.forward(covers));
  std::vector<Tensor> skips{x0};
  Tensor x = x0;
  for (int i = 0; i < 4; ++i) {
    x = gelu(film(enc_bn_[i].forward(enc_[i].forward(x), training), fp.gamma[i], fp.beta[i]));
    if (i < 3) skips.push_back(x);
  }
  Tensor g = bottleneck(x, fp, suppression, training);

  // Decoder mirrors the encoder; skips are the pre-downsample features.
  for (int i = 0; i < 4; ++i) {
    Tensor up = upsample_nearest2x(g);
    Tensor cat = concat({up, skips[3 - i]}, 1);
    g = gelu(film(dec_bn_[i].forward(dec_fuse_[i].forward(cat), training), fp.gamma[5 + i],
                  fp.beta[5 + i]));
  }
  Tensor pre = film(g, fp.gamma[9], fp.beta[9]);
  Tensor r = final_.forward(gelu(refine_.forward(pre)));
  Tensor residual = mul(tanh(r), broadcast_to(lambda4(), r.shape()));
  Tensor watermarked = clip01_ste(add(covers, residual));

  EmbedOutput out;
  out.watermarked = watermarked;
  out.residual = residual;
  out.guidance = guidance;
  return out;
}

}  // namespace saiw
