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

#ifndef SAIW_MODEL_HPP_
#define SAIW_MODEL_HPP_

#include <memory>
#include <string>

#include "saiw/embedder.hpp"
#include "saiw/extractor.hpp"
#include "saiw/losses.hpp"

namespace saiw {

struct ModelConfig {
  int image_size = 64;
  int logo_size = 16;
  int num_sources = 4;  // watermark classes; total classes = num_sources + 1
  uint64_t init_seed = 1;
  uint64_t featurenet_seed = FeatureNet::kDefaultSeed;
  EmbedderConfig embedder;
  ExtractorConfig extractor;
  ArcFaceParams arcface;

  int num_classes() const { return num_sources + 1; }
  int no_watermark_class() const { return num_sources; }
  // Copies the shared sizes into the sub-configs and validates them.
  void finalize();

  std::string to_json() const;
  static ModelConfig from_json(const std::string& text);
};

// Parameter/buffer bundle plus both networks; the single unit that
// checkpoints move around.
struct SaiwModel {
  ModelConfig cfg;
  ParameterSet params;
  BufferStore buffers;
  std::unique_ptr<Embedder> embedder;
  std::unique_ptr<Extractor> extractor;

  explicit SaiwModel(ModelConfig config);
  SaiwModel(const SaiwModel&) = delete;
  SaiwModel& operator=(const SaiwModel&) = delete;
};

// Rejects unknown keys so config typos fail loudly.
void check_json_keys(const void* json_object, const std::vector<std::string>& allowed,
                     const std::string& context);

}  // namespace saiw

#endif  // SAIW_MODEL_HPP_
