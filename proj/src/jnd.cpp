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

#include "saiw/jnd.hpp"

#include <algorithm>
#include <cmath>

namespace saiw {

RealMap background_luminance(const RealMap& lum255) {
  for (const double v : lum255.v) {
    if (v < 0.0 || v > 255.0) {
      throw Error("background_luminance: input outside [0,255]");
    }
  }
  RealMap kernel(5, 5, 1.0 / 25.0);
  return convolve2d(lum255, kernel);
}

RealMap luminance_adaptation(const RealMap& l_bg, const JndConstants& k) {
  RealMap out(l_bg.h, l_bg.w);
  for (size_t i = 0; i < l_bg.v.size(); ++i) {
    const double l = l_bg.v[i];
    if (l < 0.0) throw Error("luminance_adaptation: negative background luminance");
    if (l <= k.p2) {
      out.v[i] = k.p1 * (1.0 - std::sqrt(l / k.p2)) + k.p3;
    } else {
      out.v[i] = k.p3 * (l - k.p2) / (k.p2 + 1.0) + k.p3;
    }
  }
  return out;
}

RealMap contrast_masking(const RealMap& lum255, const JndConstants& k) {
  const RealMap grad = sobel_magnitude(lum255);
  RealMap out(lum255.h, lum255.w);
  for (size_t i = 0; i < grad.v.size(); ++i) {
    const double g = grad.v[i];
    out.v[i] = k.p4 * std::pow(g, k.p5) / (g * g + k.p6 * k.p6);
  }
  return out;
}

RealMap fuse(const RealMap& p_la, const RealMap& p_cm, double lambda1) {
  if (p_la.h != p_cm.h || p_la.w != p_cm.w) throw ShapeError("fuse: shape mismatch");
  RealMap out(p_la.h, p_la.w);
  for (size_t i = 0; i < out.v.size(); ++i) {
    out.v[i] = p_la.v[i] + p_cm.v[i] - lambda1 * std::min(p_la.v[i], p_cm.v[i]);
  }
  return out;
}

RealMap guidance_map(const Image& cover, const JndConstants& k) {
  RealMap lum = luminance(cover);
  // The adaptation constants presume a 0..255 luminance domain.
  for (auto& v : lum.v) v *= 255.0;
  const RealMap l_bg = background_luminance(lum);
  const RealMap p_la = luminance_adaptation(l_bg, k);
  const RealMap p_cm = contrast_masking(lum, k);
  RealMap p = fuse(p_la, p_cm, k.lambda1);
  // ReLU as printed; inputs here are nonnegative so it is a kept no-op.
  for (auto& v : p.v) v = std::max(0.0, v) * k.lambda2;
  return clip(p, 0.0, 3.0);
}

}  // namespace saiw
