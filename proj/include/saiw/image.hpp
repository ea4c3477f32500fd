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
// Deterministic, differentiation-free image utilities. All public operations
// are pure: identical input gives bit-identical output.

#ifndef SAIW_IMAGE_HPP_
#define SAIW_IMAGE_HPP_

#include <string>
#include <vector>

#include "saiw/tensor.hpp"

namespace saiw {

// Pixels in [0,1], row-major, channel-interleaved (HWC). channels is 1 for
// logos/luminance, 3 for cover images.
struct Image {
  int h = 0, w = 0, c = 0;
  std::vector<double> px;

  Image() = default;
  Image(int height, int width, int channels, double fill = 0.0)
      : h(height), w(width), c(channels),
        px(static_cast<size_t>(height) * width * channels, fill) {}

  double& at(int y, int x, int ch) { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
  double at(int y, int x, int ch) const { return px[(static_cast<size_t>(y) * w + x) * c + ch]; }
  size_t size() const { return px.size(); }
};

// Single-channel real-valued map; unbounded range (convolution responses,
// gradients, guidance maps). Doubles as a kernel container.
struct RealMap {
  int h = 0, w = 0;
  std::vector<double> v;

  RealMap() = default;
  RealMap(int height, int width, double fill = 0.0)
      : h(height), w(width), v(static_cast<size_t>(height) * width, fill) {}

  double& at(int y, int x) { return v[static_cast<size_t>(y) * w + x]; }
  double at(int y, int x) const { return v[static_cast<size_t>(y) * w + x]; }
};

// BT.601 full-range: Y = 0.299 R + 0.587 G + 0.114 B; chroma stored with
// +0.5 offset so all planes stay in [0,1].
Image rgb_to_yuv(const Image& img);
RealMap luminance(const Image& img);  // Y plane in [0,1]

// True 2-D convolution (kernel flipped), replicate border, same output size.
// Kernel sides must be odd. Output is NOT clipped.
RealMap convolve2d(const RealMap& img, const RealMap& kernel);

// sqrt((Ox * I)^2 + (Oy * I)^2) with the standard 3x3 Sobel pair; the input
// is expected in the 0..255 luminance domain.
RealMap sobel_magnitude(const RealMap& lum255);

double clip(double x, double lo, double hi);
RealMap clip(const RealMap& m, double lo, double hi);
Image clip01(const Image& img);

// B(x, tau) = 1[x > tau], strict inequality.
RealMap binarize(const RealMap& m, double tau);
RealMap binarize_image(const Image& img1ch, double tau);

// align_corners=false sampling: src = (dst + 0.5) * size_in / size_out - 0.5,
// clamped, bilinear weights.
Image resize_bilinear(const Image& img, int new_h, int new_w);
RealMap resize_bilinear(const RealMap& m, int new_h, int new_w);

RealMap image_to_map(const Image& img1ch);
Image map_to_image(const RealMap& m, bool clip_to_unit = true);

// PPM (P6) for 3-channel, PGM (P5) for 1-channel, maxval 255, binary payload.
// The writer emits exactly "P6\n<w> <h>\n255\n" + payload.
Image load_image(const std::string& path);
void save_image(const std::string& path, const Image& img);

// Tensor bridging; tensors use [1,C,H,W] (or [C,H,W] squeezed by caller).
Tensor image_to_tensor(const Image& img);
Image tensor_to_image(const Tensor& t, bool clip_to_unit = true);

}  // namespace saiw

#endif  // SAIW_IMAGE_HPP_
