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

#include "saiw/dataset.hpp"

#include <algorithm>
#include <cmath>

#include "saiw/attacks.hpp"

namespace saiw {

namespace {

Image gradient_cover(int size, Rng& rng) {
  Image img(size, size, 3);
  const double angle = rng.uniform(0, 2 * 3.14159265358979323846);
  const double dx = std::cos(angle), dy = std::sin(angle);
  const double base = rng.uniform(0.15, 0.45);
  const double span = rng.uniform(0.25, 0.5);
  double tint[3];
  for (auto& t : tint) t = rng.uniform(0.85, 1.0);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double t = (dx * x + dy * y) / (std::abs(dx) + std::abs(dy)) / size + 0.5;
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = std::clamp(tint[c] * (base + span * t), 0.0, 1.0);
      }
    }
  }
  return img;
}

Image blob_cover(int size, Rng& rng) {
  Image img = gradient_cover(size, rng);
  const int blobs = static_cast<int>(rng.uniform_int(2, 4));
  for (int b = 0; b < blobs; ++b) {
    const double cx = rng.uniform(0.15, 0.85) * size;
    const double cy = rng.uniform(0.15, 0.85) * size;
    const double rad = rng.uniform(0.08, 0.25) * size;
    const double amp = rng.uniform(-0.35, 0.35);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (rad * rad);
        const double add = amp * std::exp(-d2);
        for (int c = 0; c < 3; ++c) {
          img.at(y, x, c) = std::clamp(img.at(y, x, c) + add, 0.0, 1.0);
        }
      }
    }
  }
  return img;
}

Image noise_cover(int size, Rng& rng) {
  Image img(size, size, 3);
  for (auto& v : img.px) v = rng.uniform(0.2, 0.8);
  const double sigma = rng.uniform(0.8, 1.8);
  return gaussian_blur(img, 5, sigma);
}

Image checker_cover(int size, Rng& rng) {
  Image img = gradient_cover(size, rng);
  const int cell = static_cast<int>(rng.uniform_int(3, 8));
  const double amp = rng.uniform(0.15, 0.35);
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const double sign = ((y / cell + x / cell) % 2) ? amp : -amp;
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) = std::clamp(img.at(y, x, c) + sign, 0.0, 1.0);
      }
    }
  }
  return gaussian_blur(img, 3, 0.6);
}

Image glyph_logo(int size, Rng& rng);

}  // namespace

Image random_glyph_logo(int size, Rng& rng) { return glyph_logo(size, rng); }

namespace {

// Glyph-like binary mask: coarse on/off cells, upscaled to the logo
// resolution.
Image glyph_logo(int size, Rng& rng) {
  const int grid = 4;
  Image logo(size, size, 1, 0.0);
  std::vector<int> cells(grid * grid);
  for (auto& c : cells) c = rng.uniform_int(0, 1);
  const int cell_px = size / grid;
  for (int y = 0; y < size; ++y) {
    for (int x = 0; x < size; ++x) {
      const int gy = std::min(y / cell_px, grid - 1);
      const int gx = std::min(x / cell_px, grid - 1);
      logo.at(y, x, 0) = cells[gy * grid + gx] ? 1.0 : 0.0;
    }
  }
  return logo;
}

int hamming(const Image& a, const Image& b) {
  int d = 0;
  for (size_t i = 0; i < a.px.size(); ++i) d += (a.px[i] > 0.5) != (b.px[i] > 0.5);
  return d;
}

}  // namespace

Dataset synthesize_dataset(const DatasetParams& params) {
  if (params.count < 1 || params.num_sources < 1) {
    throw ConfigError("synthesize_dataset: count and num_sources must be positive");
  }
  Dataset data;
  Rng rng(params.seed);
  for (int i = 0; i < params.count; ++i) {
    switch (i % 4) {
      case 0:
        data.covers.push_back(gradient_cover(params.image_size, rng));
        break;
      case 1:
        data.covers.push_back(blob_cover(params.image_size, rng));
        break;
      case 2:
        data.covers.push_back(noise_cover(params.image_size, rng));
        break;
      default:
        data.covers.push_back(checker_cover(params.image_size, rng));
        break;
    }
  }
  // Rejection sampling keeps logos pairwise distinct by >= 20% of pixels.
  const int min_dist = params.logo_size * params.logo_size / 5;
  int guard = 0;
  while (static_cast<int>(data.logos.size()) < params.num_sources) {
    Image cand = glyph_logo(params.logo_size, rng);
    bool ok = true;
    int on = 0;
    for (double v : cand.px) on += v > 0.5;
    // Reject near-empty and near-full masks too.
    if (on < static_cast<int>(cand.px.size()) / 8 ||
        on > static_cast<int>(cand.px.size()) * 7 / 8) {
      ok = false;
    }
    for (const auto& prev : data.logos) {
      if (hamming(cand, prev) < min_dist) ok = false;
    }
    if (ok) data.logos.push_back(std::move(cand));
    if (++guard > 10000) throw Error("synthesize_dataset: logo rejection sampling stalled");
  }
  return data;
}

std::vector<BatchItem> build_batch(const Dataset& data, int batch_size, double no_wm_fraction,
                                   int num_sources, Rng& rng) {
  if (data.covers.empty()) throw Error("build_batch: empty dataset");
  if (static_cast<int>(data.logos.size()) < num_sources) {
    throw Error("build_batch: dataset has fewer logos than sources");
  }
  if (no_wm_fraction < 0 || no_wm_fraction > 0.5) {
    throw ConfigError("build_batch: no-watermark fraction must be in [0, 0.5]");
  }
  std::vector<BatchItem> items;
  for (int i = 0; i < batch_size; ++i) {
    BatchItem item;
    item.cover_index = static_cast<int>(rng.uniform_int(0, data.covers.size() - 1));
    if (rng.uniform() < no_wm_fraction) {
      item.label = num_sources;
    } else {
      item.label = static_cast<int>(rng.uniform_int(0, num_sources - 1));
    }
    items.push_back(item);
  }
  return items;
}

}  // namespace saiw
