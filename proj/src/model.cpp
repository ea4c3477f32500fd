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

#include "saiw/model.hpp"

#include <json.hpp>

namespace saiw {

using nlohmann::json;

void check_json_keys(const void* json_object, const std::vector<std::string>& allowed,
                     const std::string& context) {
  const json& j = *static_cast<const json*>(json_object);
  if (!j.is_object()) throw ConfigError(context + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const auto& k : allowed) ok = ok || (k == it.key());
    if (!ok) throw ConfigError(context + ": unknown key '" + it.key() + "'");
  }
}

void ModelConfig::finalize() {
  embedder.image_size = image_size;
  embedder.logo_size = logo_size;
  extractor.image_size = image_size;
  extractor.logo_size = logo_size;
  extractor.num_classes = num_classes();
  embedder.validate();
  extractor.validate();
  if (num_sources < 1) throw ConfigError("model: at least one watermark source required");
}

std::string ModelConfig::to_json() const {
  json j;
  j["image_size"] = image_size;
  j["logo_size"] = logo_size;
  j["num_sources"] = num_sources;
  j["init_seed"] = init_seed;
  j["featurenet_seed"] = featurenet_seed;
  j["embedder"] = {{"widths", embedder.widths},
                   {"attn_dim", embedder.attn_dim},
                   {"attn_heads", embedder.attn_heads},
                   {"attn_layers", embedder.attn_layers},
                   {"window", embedder.window},
                   {"mlp_ratio", embedder.mlp_ratio},
                   {"lambda3", embedder.lambda3},
                   {"lambda4_init", embedder.lambda4_init}};
  j["extractor"] = {{"widths", extractor.widths},
                    {"depths", extractor.depths},
                    {"embedding_dim", extractor.embedding_dim},
                    {"expand", extractor.expand}};
  j["arcface"] = {{"margin", arcface.margin}, {"scale", arcface.scale}};
  return j.dump(2);
}

ModelConfig ModelConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("model config: invalid JSON: ") + e.what());
  }
  check_json_keys(&j,
                  {"image_size", "logo_size", "num_sources", "init_seed", "featurenet_seed",
                   "embedder", "extractor", "arcface"},
                  "model config");
  ModelConfig cfg;
  cfg.image_size = j.value("image_size", cfg.image_size);
  cfg.logo_size = j.value("logo_size", cfg.logo_size);
  cfg.num_sources = j.value("num_sources", cfg.num_sources);
  cfg.init_seed = j.value("init_seed", cfg.init_seed);
  cfg.featurenet_seed = j.value("featurenet_seed", cfg.featurenet_seed);
  if (j.contains("embedder")) {
    const json& e = j["embedder"];
    check_json_keys(&e,
                    {"widths", "attn_dim", "attn_heads", "attn_layers", "window", "mlp_ratio",
                     "lambda3", "lambda4_init"},
                    "embedder config");
    cfg.embedder.widths = e.value("widths", cfg.embedder.widths);
    cfg.embedder.attn_dim = e.value("attn_dim", cfg.embedder.attn_dim);
    cfg.embedder.attn_heads = e.value("attn_heads", cfg.embedder.attn_heads);
    cfg.embedder.attn_layers = e.value("attn_layers", cfg.embedder.attn_layers);
    cfg.embedder.window = e.value("window", cfg.embedder.window);
    cfg.embedder.mlp_ratio = e.value("mlp_ratio", cfg.embedder.mlp_ratio);
    cfg.embedder.lambda3 = e.value("lambda3", cfg.embedder.lambda3);
    cfg.embedder.lambda4_init = e.value("lambda4_init", cfg.embedder.lambda4_init);
  }
  if (j.contains("extractor")) {
    const json& x = j["extractor"];
    check_json_keys(&x, {"widths", "depths", "embedding_dim", "expand"}, "extractor config");
    cfg.extractor.widths = x.value("widths", cfg.extractor.widths);
    cfg.extractor.depths = x.value("depths", cfg.extractor.depths);
    cfg.extractor.embedding_dim = x.value("embedding_dim", cfg.extractor.embedding_dim);
    cfg.extractor.expand = x.value("expand", cfg.extractor.expand);
  }
  if (j.contains("arcface")) {
    const json& a = j["arcface"];
    check_json_keys(&a, {"margin", "scale"}, "arcface config");
    cfg.arcface.margin = a.value("margin", cfg.arcface.margin);
    cfg.arcface.scale = a.value("scale", cfg.arcface.scale);
  }
  cfg.finalize();
  return cfg;
}

SaiwModel::SaiwModel(ModelConfig config) : cfg(std::move(config)) {
  cfg.finalize();
  Rng rng(cfg.init_seed);
  embedder = std::make_unique<Embedder>(params, buffers, cfg.embedder, rng);
  extractor = std::make_unique<Extractor>(params, buffers, cfg.extractor, rng);
}

}  // namespace saiw
