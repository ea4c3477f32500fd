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

#include "saiw/film.hpp"

namespace saiw {

namespace {
const int kLogoWidths[5] = {16, 32, 64, 96, 128};
const int kLogoStrides[5] = {2, 2, 2, 1, 1};
}  // namespace

LogoEncoder::LogoEncoder(ParameterSet& ps, BufferStore& bs, const std::string& name, Rng& rng) {
  int cin = 1;
  for (int i = 0; i < 5; ++i) {
    const std::string stage = name + ".conv" + std::to_string(i + 1);
    convs.emplace_back(ps, stage, cin, kLogoWidths[i], 3, kLogoStrides[i], 1, rng);
    norms.emplace_back(ps, bs, name + ".bn" + std::to_string(i + 1), kLogoWidths[i]);
    cin = kLogoWidths[i];
  }
}

Tensor LogoEncoder::forward(const Tensor& logos, bool training) {
  if (logos.ndim() != 4 || logos.dim(1) != 1) {
    throw ShapeError("LogoEncoder: expected [N,1,h,w] logos");
  }
  Tensor x = logos;
  for (size_t i = 0; i < convs.size(); ++i) {
    x = gelu(norms[i].forward(convs[i].forward(x), training));
  }
  return global_avg_pool(x);  // [N,128]
}

FilmGenerator::FilmGenerator(ParameterSet& ps, const std::string& name,
                             std::vector<int> site_channels_, Rng& rng)
    : site_channels(std::move(site_channels_)) {
  if (site_channels.empty()) throw ConfigError("FilmGenerator: site list is empty");
  for (size_t i = 0; i < site_channels.size(); ++i) {
    // Zero weights; bias 1 on the gamma half, 0 on the beta half.
    const int c = site_channels[i];
    heads.emplace_back(ps, name + ".site" + std::to_string(i + 1), kLogoEmbeddingDim, 2 * c, rng,
                       /*zero_weights=*/true);
    Tensor bias = heads.back().b;
    for (int j = 0; j < c; ++j) bias.data()[j] = Scalar(1);
    (void)rng;
  }
}

FilmParams FilmGenerator::forward(const Tensor& logo_embedding) const {
  if (logo_embedding.ndim() != 2 || logo_embedding.dim(1) != kLogoEmbeddingDim) {
    throw ShapeError("FilmGenerator: expected [N,128] embeddings");
  }
  const int64_t n = logo_embedding.dim(0);
  FilmParams out;
  for (size_t i = 0; i < heads.size(); ++i) {
    const int64_t c = site_channels[i];
    Tensor both = heads[i].forward(logo_embedding);  // [N, 2C]
    out.gamma.push_back(slice(both, {0, 0}, {n, c}));
    out.beta.push_back(slice(both, {0, c}, {n, c}));
  }
  return out;
}

}  // namespace saiw
