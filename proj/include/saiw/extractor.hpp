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
// Extraction network: a hierarchical depthwise-conv backbone feeding two
// parallel heads, one reconstructing the logo and one producing a 256-d
// source embedding classified by cosine similarity against unit class
// weights.

#ifndef SAIW_EXTRACTOR_HPP_
#define SAIW_EXTRACTOR_HPP_

#include <vector>

#include "saiw/image.hpp"
#include "saiw/nn.hpp"

namespace saiw {

struct ExtractorConfig {
  int image_size = 64;
  int logo_size = 16;
  std::vector<int> widths = {32, 64, 128, 256};
  std::vector<int> depths = {1, 1, 2, 1};
  int embedding_dim = 256;
  int num_classes = 5;  // sources + 1 for "no watermark"
  int expand = 4;       // pointwise expansion inside blocks

  int final_side() const { return image_size / 32; }
  void validate() const;
};

struct SourcePrediction {
  std::vector<double> scores;  // cosine per class, in [-1,1]
  int predicted = 0;           // argmax; ties resolve to the lowest index
};

struct ExtractOutput {
  Tensor logo;       // [N,1,h,w] in (0,1)
  Tensor embedding;  // [N,256], L2-normalized
  Tensor scores;     // [N,C] cosine scores
};

class Extractor {
 public:
  Extractor(ParameterSet& ps, BufferStore& bs, const ExtractorConfig& cfg, Rng& rng);

  ExtractOutput forward(const Tensor& images);
  // Single-image convenience wrapper used by the CLI and evaluation.
  std::pair<Image, SourcePrediction> extract(const Image& distorted);

  static SourcePrediction prediction_from_scores(const Scalar* row, int num_classes);

  Tensor class_weights() const { return class_w_; }
  const ExtractorConfig& config() const { return cfg_; }

 private:
  struct Block {
    DwConv2d dw;
    LayerNorm ln;  // channel-wise
    Conv2d pw1, pw2;
  };

  Tensor backbone(const Tensor& images);
  Tensor ln_channels(const Tensor& x, const LayerNorm& ln) const;

  ExtractorConfig cfg_;
  Conv2d stem_;
  LayerNorm stem_ln_;
  std::vector<std::vector<Block>> stages_;
  std::vector<Conv2d> downsamples_;
  std::vector<LayerNorm> down_ln_;
  ConvTranspose2d up1_, up2_;
  Conv2d recon_conv_, recon_out_;
  Linear id_fc_;
  Tensor class_w_;  // [C, 256], rows unit-norm
};

}  // namespace saiw

#endif  // SAIW_EXTRACTOR_HPP_
