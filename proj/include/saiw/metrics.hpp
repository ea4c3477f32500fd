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

#ifndef SAIW_METRICS_HPP_
#define SAIW_METRICS_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "saiw/image.hpp"

namespace saiw {

// 10*log10(1/MSE) over all H*W*C entries of [0,1] images; returns +infinity
// when MSE is exactly zero.
double psnr(const Image& a, const Image& b);

// Gaussian-windowed SSIM: 11x11 window, sigma 1.5, c1=(0.01)^2, c2=(0.03)^2
// for unit dynamic range, fully-contained (valid) windows, averaged over
// windows and channels. Throws if the image is smaller than the window.
double ssim(const Image& a, const Image& b, int window = 11, double sigma = 1.5);

// SSIM between logos; the window shrinks to 7x7 below 11 px per side.
double logo_ssim(const Image& logo, const Image& recovered);

// Fraction of pixels whose binarized values agree, threshold tau strict.
double bit_recovery_accuracy(const Image& logo, const Image& recovered, double tau = 0.5);

struct IdentificationResult {
  double a_id = 0.0;
  std::vector<std::vector<int64_t>> confusion;  // confusion[label][pred]
};

IdentificationResult identification_accuracy(const std::vector<int>& predictions,
                                             const std::vector<int>& labels, int num_classes);

struct AttackBreakdown {
  double a_br = 0.0;
  double a_ssim = 0.0;
  double a_id = 0.0;
};

struct MetricReport {
  double psnr_db = 0.0;
  double ssim = 0.0;
  double lpips = 0.0;
  double a_ssim = 0.0;  // pre-attack logo SSIM
  double a_br = 0.0;    // pre-attack bit recovery
  double a_id = 0.0;    // overall identification accuracy (all samples)
  std::vector<std::vector<int64_t>> confusion;
  std::map<std::string, AttackBreakdown> per_attack;

  // psnr_db serialized as the string "inf" when infinite (JSON cannot
  // carry infinities).
  std::string to_json() const;
  // Plain-text table: Imperceptibility | Pre-Attack | Post-Attack columns.
  std::string to_table() const;
};

}  // namespace saiw

#endif  // SAIW_METRICS_HPP_
