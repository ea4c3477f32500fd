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
// Training objective: imperceptibility (L1 + deep-feature distance),
// robustness (expected L1 + (1-SSIM) + feature distance over sampled
// attacks), and an additive-angular-margin identification loss, combined
// by normalized weights.

#ifndef SAIW_LOSSES_HPP_
#define SAIW_LOSSES_HPP_

#include <vector>

#include "saiw/image.hpp"
#include "saiw/ops.hpp"

namespace saiw {

struct LossWeights {
  double w_imp = 0.4, w_rob = 0.5, w_id = 0.1;  // total objective
  double w1 = 0.8, w_lpips = 0.2;               // inside imperceptibility
  double w2 = 0.6, w_ssim = 0.3, w_lpips2 = 0.1;  // inside robustness
  void validate() const;  // each group sums to 1 within 1e-12; all >= 0
};

struct ArcFaceParams {
  double margin = 0.4;
  double scale = 30.0;  // lambda5
};

// Fixed, seeded 3-layer conv feature extractor with unit channel weights.
// Never trained: a structural stand-in for a pretrained perceptual
// network, deterministic across runs for a given seed.
class FeatureNet {
 public:
  static constexpr uint64_t kDefaultSeed = 0x5A1F0001ull;
  explicit FeatureNet(uint64_t seed = kDefaultSeed);

  // Taps after each activation; single-channel input is replicated to RGB.
  std::vector<Tensor> features(const Tensor& img) const;

 private:
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

// Per layer: channel-unit-normalized activations, squared difference
// summed over channels, averaged over space, summed across layers.
Tensor lpips_distance(const Tensor& a, const Tensor& b, const FeatureNet& net);
double lpips_value(const Image& a, const Image& b, const FeatureNet& net);

// Differentiable Gaussian-window SSIM mean (valid windows), matching the
// metrics implementation within numerical noise.
Tensor ssim_graph(const Tensor& a, const Tensor& b, int window = 11, double sigma = 1.5);

Tensor l1_mean(const Tensor& a, const Tensor& b);

Tensor imperceptibility_loss(const Tensor& cover, const Tensor& watermarked,
                             const LossWeights& w, const FeatureNet& net);

// Mean over sampled attack outcomes of
//   w2*L1 + w_ssim*(1-SSIM) + w_lpips2*lpips.
Tensor robustness_loss(const Tensor& logo, const std::vector<Tensor>& recovered_per_attack,
                       const LossWeights& w, const FeatureNet& net);

// Additive angular margin over cosine scores: the target class logit uses
// cos(theta + m), all logits scaled by lambda5, then softmax cross-entropy.
// Embeddings must be L2-normalized and class weight rows unit-norm.
Tensor arcface_loss(const Tensor& embeddings, const Tensor& class_weights,
                    const std::vector<int>& labels, const ArcFaceParams& p);

Tensor total_loss(const Tensor& imp, const Tensor& rob, const Tensor& id, const LossWeights& w);

}  // namespace saiw

#endif  // SAIW_LOSSES_HPP_
