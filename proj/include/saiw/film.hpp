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
// Source conditioning: the logo is compressed into a 128-d identity
// embedding, and per-site linear heads map that embedding to channel-wise
// (gamma, beta) pairs that modulate the embedding network.

#ifndef SAIW_FILM_HPP_
#define SAIW_FILM_HPP_

#include <string>
#include <vector>

#include "saiw/image.hpp"
#include "saiw/nn.hpp"

namespace saiw {

inline constexpr int kLogoEmbeddingDim = 128;

// Five stacked 3x3 conv stages (stride 2,2,2,1,1; widths 16..128), each with
// batch norm and GELU, then adaptive average pooling to the embedding.
struct LogoEncoder {
  std::vector<Conv2d> convs;
  std::vector<BatchNorm2d> norms;

  LogoEncoder() = default;
  LogoEncoder(ParameterSet& ps, BufferStore& bs, const std::string& name, Rng& rng);

  // logos [N,1,h,w] -> embeddings [N,128]
  Tensor forward(const Tensor& logos, bool training);
};

// Per-site FiLM parameter pairs for one batch.
struct FilmParams {
  std::vector<Tensor> gamma;  // each [N, C_i]
  std::vector<Tensor> beta;   // each [N, C_i]
  size_t sites() const { return gamma.size(); }
};

struct FilmGenerator {
  std::vector<Linear> heads;  // one per site: 128 -> 2*C_i
  std::vector<int> site_channels;

  FilmGenerator() = default;
  // Heads start at the identity: gamma outputs 1, beta outputs 0, so the
  // untrained embedder is a plain U-Net.
  FilmGenerator(ParameterSet& ps, const std::string& name, std::vector<int> site_channels_,
                Rng& rng);

  FilmParams forward(const Tensor& logo_embedding) const;  // [N,128]
};

}  // namespace saiw

#endif  // SAIW_FILM_HPP_
