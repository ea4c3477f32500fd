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
// Perceptual guidance: a just-noticeable-difference style map combining
// luminance adaptation and contrast masking, rescaled and clipped to [0,3].
// Higher values mark regions that tolerate stronger embedding.

#ifndef SAIW_JND_HPP_
#define SAIW_JND_HPP_

#include "saiw/image.hpp"

namespace saiw {

struct JndConstants {
  double p1 = 17.0;   // luminance adaptation amplitude (dark branch)
  double p2 = 127.0;  // branch threshold in the 0..255 luminance domain
  double p3 = 3.0;    // adaptation floor
  double p4 = 1.872;  // contrast masking scale
  double p5 = 8.0;    // contrast masking gradient exponent
  double p6 = 26.0;   // contrast masking stabilizer
  double lambda1 = 0.3;
  double lambda2 = 1.0 / 30.0;
};

// 5x5 uniform mean of the 0..255 luminance plane, replicate border.
RealMap background_luminance(const RealMap& lum255);

// Piecewise adaptation curve:
//   L <= p2:  p1 * (1 - sqrt(L/p2)) + p3
//   L >  p2:  p3 * (L - p2) / (p2 + 1) + p3
RealMap luminance_adaptation(const RealMap& l_bg, const JndConstants& k = {});

// p4 * grad^p5 / (grad^2 + p6^2) with grad from sobel_magnitude.
RealMap contrast_masking(const RealMap& lum255, const JndConstants& k = {});

// P_LA + P_CM - lambda1 * min(P_LA, P_CM), elementwise.
RealMap fuse(const RealMap& p_la, const RealMap& p_cm, double lambda1);

// Full pipeline: luminance*255 -> background -> adaptation + masking ->
// fuse -> ReLU -> *lambda2 -> clip [0,3]. Output is H x W.
RealMap guidance_map(const Image& cover, const JndConstants& k = {});

}  // namespace saiw

#endif  // SAIW_JND_HPP_
