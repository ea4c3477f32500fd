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
// Seedable image distortions used inside training and for robustness
// evaluation. Every attack is bit-reproducible given (spec, seed, image);
// outputs stay in [0,1] at the original dimensions.

#ifndef SAIW_ATTACKS_HPP_
#define SAIW_ATTACKS_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "saiw/image.hpp"

namespace saiw {

enum class AttackKind {
  kIdentity,
  kJpeg,
  kGaussianBlur,
  kGaussianNoise,
  kBrightness,
  kContrast,
  kGrayscale,
  kColorJitter,
  kResizeRoundtrip,
  kCropPad,
  kRotate,
  kFlipH,
  kFilterPreset,
  kOverlay,
  kCompose,
};

// Tagged description of one distortion. Text grammar (CLI and grid files):
//   identity | jpeg:75 | blur:3:1.0 | noise:0.02 | brightness:-0.1
//   contrast:1.2 | grayscale | jitter:0.1:0.2:0.1 | resize:0.5 | crop:0.2
//   rotate:10 | flip | filter:A | overlay:0.1:0.1:0.3:0.12
//   compose:[spec;spec;...]
// Any spec may carry a trailing ":seed=N".
struct AttackSpec {
  AttackKind kind = AttackKind::kIdentity;
  int jpeg_qf = 75;
  int blur_kernel = 3;
  double blur_sigma = 1.0;
  double noise_sigma = 0.02;
  double brightness_delta = 0.0;
  double contrast_factor = 1.0;
  double jitter_brightness = 0.1;
  double jitter_contrast = 0.2;
  double jitter_saturation = 0.1;
  double resize_scale = 0.5;
  double crop_fraction = 0.2;
  double rotate_deg = 10.0;
  char filter_preset = 'A';
  double overlay_x = 0.1, overlay_y = 0.1, overlay_w = 0.3, overlay_h = 0.12;
  std::vector<AttackSpec> parts;  // compose
  uint64_t seed = 0;

  std::string to_string() const;
  static AttackSpec parse(const std::string& text);
};

Image apply_attack(const AttackSpec& spec, const Image& img);

// Internal baseline JPEG: BT.601 YCbCr, 4:2:0 subsampling, 8x8 DCT,
// Annex-K tables under the 5000/QF | 200-2QF quality scaling. Entropy
// coding is skipped; the quantize-dequantize round trip is the distortion.
Image jpeg_roundtrip(const Image& img, int quality);

Image gaussian_blur(const Image& img, int kernel, double sigma);
Image gaussian_noise(const Image& img, double sigma, uint64_t seed);
Image brightness(const Image& img, double delta);
Image contrast(const Image& img, double factor);
Image grayscale(const Image& img);
Image color_jitter(const Image& img, double max_brightness, double max_contrast,
                   double max_saturation, uint64_t seed);
Image resize_roundtrip(const Image& img, double scale);
Image crop_pad(const Image& img, double fraction);
Image rotate(const Image& img, double degrees);
Image flip_horizontal(const Image& img);
// Fixed parametric approximations of the Aden / Brooklyn / Clarendon
// photometric transforms: out = saturate(clip(tint*x + shift)^gamma).
Image filter_preset(const Image& img, char preset);
Image overlay(const Image& img, double fx, double fy, double fw, double fh);

// Sampling policy over attack kinds and parameter ranges.
struct AttackPolicy {
  struct Entry {
    AttackKind kind = AttackKind::kIdentity;
    double weight = 1.0;
    double lo = 0.0, hi = 0.0;        // main scalar parameter range
    std::vector<int> kernel_choices;  // blur kernels
    double sigma_lo = 0.0, sigma_hi = 0.0;
  };
  std::vector<Entry> entries;

  // Uniform over {identity, jpeg QF in [50,95], blur k in {3,5} sigma in
  // [0.5,1.5], noise in [0.01,0.05], brightness in [-0.1,0.1], contrast in
  // [0.8,1.2]}.
  static AttackPolicy default_training();
  // Narrower ranges bracketing the held-out grid: jpeg [65,95], blur 3x3
  // sigma [0.5,1.1], noise [0.005,0.025], brightness +-0.08, contrast
  // [0.85,1.15].
  static AttackPolicy mild_training();
};

AttackSpec sample_attack(Rng& rng, const AttackPolicy& policy);

// Training-time wrapper: forward applies the true distortion on the
// detensorized values, backward is the identity (straight-through
// estimator). Input [1,C,H,W] in [0,1].
Tensor st_apply(const AttackSpec& spec, const Tensor& img);

}  // namespace saiw

#endif  // SAIW_ATTACKS_HPP_
