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
// Embedding network: a U-Net whose encoder/decoder stages are FiLM-
// conditioned on the logo embedding, with a windowed-attention bottleneck
// whose output is suppressed where the perceptual guidance map marks the
// image as visually fragile. The network emits a tanh-bounded residual
// scaled by a learnable strength, added to the cover and clipped.

#ifndef SAIW_EMBEDDER_HPP_
#define SAIW_EMBEDDER_HPP_

#include <memory>
#include <vector>

#include "saiw/film.hpp"
#include "saiw/jnd.hpp"
#include "saiw/nn.hpp"

namespace saiw {

struct EmbedderConfig {
  int image_size = 64;
  int logo_size = 16;
  std::vector<int> widths = {32, 64, 128, 256};  // four encoder stages
  int attn_dim = 128;
  int attn_heads = 4;
  int attn_layers = 4;
  int window = 2;
  int mlp_ratio = 2;
  double lambda3 = 0.5;
  double lambda4_init = 0.05;

  int bottleneck_side() const { return image_size / 16; }
  void validate() const;
};

struct EmbedOutput {
  Tensor watermarked;             // [N,3,H,W], == clip(cover + residual)
  Tensor residual;                // [N,3,H,W], |residual| <= lambda4
  std::vector<RealMap> guidance;  // per-item P_n at full resolution
};

class Embedder {
 public:
  Embedder(ParameterSet& ps, BufferStore& bs, const EmbedderConfig& cfg, Rng& rng,
           const JndConstants& jnd = {});

  // Covers and logos must match the configured sizes.
  EmbedOutput embed_batch(const std::vector<Image>& covers, const std::vector<Image>& logos,
                          bool training);
  // Lower-level entry: covers [N,3,H,W] plus precomputed full-resolution
  // guidance maps (one per item).
  EmbedOutput embed_tensors(const Tensor& covers, const std::vector<RealMap>& guidance,
                            const Tensor& logos, bool training);

  // Current embedding strength softplus(lambda4_raw), as a graph node.
  Tensor lambda4() const;
  double lambda4_value() const;

  // K = 4 encoder + 1 bottleneck + 4 decoder + 1 refinement sites.
  static constexpr int kFilmSites = 10;

  const EmbedderConfig& config() const { return cfg_; }

 private:
  Tensor bottleneck(const Tensor& g_h, const FilmParams& fp, const Tensor& suppression,
                    bool training);

  EmbedderConfig cfg_;
  JndConstants jnd_;
  LogoEncoder logo_enc_;
  FilmGenerator film_gen_;
  Conv2d initial_;
  std::vector<Conv2d> enc_;
  std::vector<BatchNorm2d> enc_bn_;
  Conv2d bneck_proj_;
  Tensor pos_embed_;
  std::vector<WindowAttentionBlock> attn_;
  Conv2d bneck_back_;
  BatchNorm2d bneck_bn_;
  std::vector<Conv2d> dec_fuse_;
  std::vector<BatchNorm2d> dec_bn_;
  Conv2d refine_;
  Conv2d final_;
  Tensor lambda4_raw_;
};

}  // namespace saiw

#endif  // SAIW_EMBEDDER_HPP_
