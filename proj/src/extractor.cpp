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

#include "saiw/extractor.hpp"

#include <cmath>

namespace saiw {

void ExtractorConfig::validate() const {
  if (widths.size() != 4 || depths.size() != 4) {
    throw ConfigError("extractor: four stage widths and depths required");
  }
  if (image_size % 32 != 0) throw ConfigError("extractor: image size must be divisible by 32");
  // Reconstruction ladder: final_side * 2 * 2 * 2 must equal the logo side.
  if (final_side() * 8 != logo_size) {
    throw ConfigError("extractor: logo size must be image_size/4");
  }
  if (num_classes < 2) throw ConfigError("extractor: need at least two classes");
}

Extractor::Extractor(ParameterSet& ps, BufferStore& bs, const ExtractorConfig& cfg, Rng& rng)
    : cfg_(cfg) {
  (void)bs;
  cfg_.validate();
  const auto& w = cfg_.widths;
  stem_ = Conv2d(ps, "extractor.stem", 3, w[0], 7, 4, 3, rng);
  stem_ln_ = LayerNorm(ps, "extractor.stem.ln", w[0]);
  for (int s = 0; s < 4; ++s) {
    std::vector<Block> blocks;
    for (int d = 0; d < cfg_.depths[s]; ++d) {
      const std::string name =
          "extractor.stage" + std::to_string(s + 1) + ".block" + std::to_string(d + 1);
      Block blk;
      blk.dw = DwConv2d(ps, name + ".dw", w[s], 7, 3, rng);
      blk.ln = LayerNorm(ps, name + ".ln", w[s]);
      blk.pw1 = Conv2d(ps, name + ".pw1", w[s], cfg_.expand * w[s], 1, 1, 0, rng);
      blk.pw2 = Conv2d(ps, name + ".pw2", cfg_.expand * w[s], w[s], 1, 1, 0, rng);
      blocks.push_back(std::move(blk));
    }
    stages_.push_back(std::move(blocks));
    if (s < 3) {
      down_ln_.emplace_back(ps, "extractor.down" + std::to_string(s + 1) + ".ln", w[s]);
      downsamples_.emplace_back(ps, "extractor.down" + std::to_string(s + 1), w[s], w[s + 1], 2,
                                2, 0, rng);
    }
  }
  up1_ = ConvTranspose2d(ps, "extractor.recon.up1", w[3], w[2], 4, 2, 1, rng);
  up2_ = ConvTranspose2d(ps, "extractor.recon.up2", w[2], w[1], 4, 2, 1, rng);
  recon_conv_ = Conv2d(ps, "extractor.recon.conv", w[1], w[0], 3, 1, 1, rng);
  recon_out_ = Conv2d(ps, "extractor.recon.out", w[0], 1, 1, 1, 0, rng);
  id_fc_ = Linear(ps, "extractor.id.fc", w[3], cfg_.embedding_dim, rng);
  class_w_ = ps.create("extractor.class_w", {cfg_.num_classes, cfg_.embedding_dim},
                       [&](std::vector<Scalar>& v) {
                         init_he_normal(v, cfg_.embedding_dim, rng);
                         // Unit rows, required by the cosine formulation.
                         for (int r = 0; r < cfg_.num_classes; ++r) {
                           double s = 0;
                           for (int i = 0; i < cfg_.embedding_dim; ++i) {
                             const double x = v[r * cfg_.embedding_dim + i];
                             s += x * x;
                           }
                           const double inv = 1.0 / std::sqrt(s);
                           for (int i = 0; i < cfg_.embedding_dim; ++i) {
                             v[r * cfg_.embedding_dim + i] *= static_cast<Scalar>(inv);
                           }
                         }
                       });
}

Tensor Extractor::ln_channels(const Tensor& x, const LayerNorm& ln) const {
  const int64_t c = x.dim(1), h = x.dim(2), w = x.dim(3);
  return tokens_to_nchw(ln.forward(nchw_to_tokens(x)), c, h, w);
}

Tensor Extractor::backbone(const Tensor& images) {
  if (images.ndim() != 4 || images.dim(1) != 3 || images.dim(2) != cfg_.image_size ||
      images.dim(3) != cfg_.image_size) {
    throw ShapeError("extractor: input must be [N,3," + std::to_string(cfg_.image_size) + "," +
                     std::to_string(cfg_.image_size) + "]");
  }
  Tensor x = ln_channels(stem_.forward(images), stem_ln_);
  for (int s = 0; s < 4; ++s) {
    for (const auto& blk : stages_[s]) {
      Tensor y = blk.dw.forward(x);
      y = ln_channels(y, blk.ln);
      y = blk.pw2.forward(gelu(blk.pw1.forward(y)));
      x = add(x, y);
    }
    if (s < 3) x = downsamples_[s].forward(ln_channels(x, down_ln_[s]));
  }
  return x;  // g_map [N, w3, side, side]
}

ExtractOutput Extractor::forward(const Tensor& images) {
  Tensor g_map = backbone(images);

  // Reconstruction branch.
  Tensor r = gelu(up1_.forward(g_map));
  r = gelu(up2_.forward(r));
  r = upsample_nearest2x(r);
  r = gelu(recon_conv_.forward(r));
  Tensor logo = sigmoid(recon_out_.forward(r));

  // Identification branch.
  Tensor pooled = global_avg_pool(g_map);  // [N, w3]
  Tensor v = id_fc_.forward(pooled);       // [N, 256]
  Tensor vhat = l2_normalize_lastdim(v);

  // Cosine scores require unit class-weight rows.
  const Scalar* cw = class_w_.data();
  for (int r2 = 0; r2 < cfg_.num_classes; ++r2) {
    double s = 0;
    for (int i = 0; i < cfg_.embedding_dim; ++i) {
      const double x = cw[r2 * cfg_.embedding_dim + i];
      s += x * x;
    }
    if (std::abs(std::sqrt(s) - 1.0) > 1e-3) {
      throw Error("extractor: class weight row " + std::to_string(r2) + " is not L2-normalized");
    }
  }
  Tensor scores = matmul(vhat, class_w_, false, true);  // [N, C]

  ExtractOutput out;
  out.logo = logo;
  out.embedding = vhat;
  out.scores = scores;
  return out;
}

SourcePrediction Extractor::prediction_from_scores(const Scalar* row, int num_classes) {
  SourcePrediction pred;
  pred.scores.assign(row, row + num_classes);
  int best = 0;
  for (int j = 1; j < num_classes; ++j) {
    if (pred.scores[j] > pred.scores[best]) best = j;  // strict: ties keep lowest index
  }
  pred.predicted = best;
  return pred;
}

std::pair<Image, SourcePrediction> Extractor::extract(const Image& distorted) {
  ExtractOutput out = forward(image_to_tensor(distorted));
  Image logo = tensor_to_image(out.logo, /*clip_to_unit=*/true);
  SourcePrediction pred = prediction_from_scores(out.scores.data(), cfg_.num_classes);
  return {logo, pred};
}

}  // namespace saiw
