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
// Procedural desk-scale dataset: synthetic covers spanning smooth and
// textured content, and one distinct binary logo per source class.

#ifndef SAIW_DATASET_HPP_
#define SAIW_DATASET_HPP_

#include <vector>

#include "saiw/image.hpp"

namespace saiw {

struct DatasetParams {
  int count = 32;
  int image_size = 64;
  int logo_size = 16;
  int num_sources = 4;
  uint64_t seed = 1234;
};

struct Dataset {
  std::vector<Image> covers;
  std::vector<Image> logos;  // one per source class
};

// Deterministic for fixed params. Covers cycle through gradient, blob,
// band-limited-noise, and checker-composite families; logos are rejection-
// sampled to pairwise Hamming distance >= 20% of pixels.
Dataset synthesize_dataset(const DatasetParams& params);

// One fresh glyph-like binary mask (coarse on/off cells); used by the
// random-payload training phase.
Image random_glyph_logo(int size, Rng& rng);

struct BatchItem {
  int cover_index = 0;
  int label = 0;  // label == num_sources means "no watermark"
};

// Each item is a watermarked (cover, class) pair, or a no-watermark item
// with the configured probability.
std::vector<BatchItem> build_batch(const Dataset& data, int batch_size, double no_wm_fraction,
                                   int num_sources, Rng& rng);

}  // namespace saiw

#endif  // SAIW_DATASET_HPP_
