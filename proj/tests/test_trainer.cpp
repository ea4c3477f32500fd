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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "saiw/evaluate.hpp"
#include "saiw/trainer.hpp"

using namespace saiw;

namespace {

TrainConfig tiny_train_config(uint64_t seed = 7) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.batch = 4;
  cfg.steps = 10;
  cfg.eval_every = 0;
  cfg.eval_covers = 4;
  cfg.attack_samples = 1;
  cfg.data.count = 8;
  cfg.data.seed = 555;
  cfg.model.image_size = 32;
  cfg.model.logo_size = 8;
  cfg.model.num_sources = 3;
  cfg.model.init_seed = seed;
  cfg.model.embedder.widths = {4, 6, 8, 8};
  cfg.model.embedder.attn_dim = 8;
  cfg.model.embedder.attn_heads = 2;
  cfg.model.embedder.attn_layers = 2;
  cfg.model.extractor.widths = {4, 6, 8, 8};
  cfg.model.extractor.depths = {1, 1, 1, 1};
  cfg.model.extractor.embedding_dim = 16;
  cfg.finalize();
  return cfg;
}

std::string temp_dir() {
  const auto dir = std::filesystem::temp_directory_path() / "saiw_trainer_test";
  std::filesystem::create_directories(dir);
  return dir.string();
}

std::vector<Scalar> snapshot(const SaiwModel& model) {
  std::vector<Scalar> all;
  for (const auto& name : model.params.names()) {
    const auto& v = model.params.get(name).values();
    all.insert(all.end(), v.begin(), v.end());
  }
  return all;
}

}  // namespace

TEST_CASE("train config JSON round trip and strict keys") {
  TrainConfig cfg = tiny_train_config();
  const std::string js = cfg.to_json();
  TrainConfig back = TrainConfig::from_json(js);
  CHECK(back.batch == cfg.batch);
  CHECK(back.steps == cfg.steps);
  CHECK(back.model.num_sources == cfg.model.num_sources);
  CHECK(back.model.embedder.widths == cfg.model.embedder.widths);
  CHECK(back.to_json() == js);

  CHECK_THROWS_AS(TrainConfig::from_json("{\"unknown_section\": 1}"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json("{\"train\": {\"batc\": 4}}"), ConfigError);
  CHECK_THROWS_AS(TrainConfig::from_json("not json"), ConfigError);
}

TEST_CASE("two runs from the same seed produce bit-identical parameters") {
  TrainState a(tiny_train_config(11));
  TrainState b(tiny_train_config(11));
  for (int i = 0; i < 10; ++i) {
    train_step(a);
    train_step(b);
  }
  const auto sa = snapshot(*a.model);
  const auto sb = snapshot(*b.model);
  REQUIRE(sa.size() == sb.size());
  CHECK(std::memcmp(sa.data(), sb.data(), sa.size() * sizeof(Scalar)) == 0);
  CHECK(a.rng.state() == b.rng.state());
}

TEST_CASE("zero learning rate leaves parameters untouched") {
  TrainConfig cfg = tiny_train_config(13);
  cfg.lr = 0.0;
  cfg.lr_final = 0.0;
  TrainState state(cfg);
  const auto before = snapshot(*state.model);
  const auto bn_before = state.model->buffers.get("embedder.enc1.bn.running_mean");
  for (int i = 0; i < 3; ++i) train_step(state);
  const auto after = snapshot(*state.model);
  CHECK(std::memcmp(before.data(), after.data(), before.size() * sizeof(Scalar)) == 0);
  // Running statistics do move (they are not optimizer state).
  const auto bn_after = state.model->buffers.get("embedder.enc1.bn.running_mean");
  double moved = 0;
  for (size_t i = 0; i < bn_after.size(); ++i) {
    moved += std::abs(double(bn_after[i]) - bn_before[i]);
  }
  CHECK(moved > 0.0);
}

TEST_CASE("training losses stay finite and class weights stay unit") {
  TrainState state(tiny_train_config(17));
  for (int i = 0; i < 5; ++i) {
    const StepStats s = train_step(state);
    CHECK(std::isfinite(s.total));
    CHECK(std::isfinite(s.imp));
    CHECK(std::isfinite(s.rob));
    CHECK(std::isfinite(s.id));
    CHECK(s.imp >= 0);
    CHECK(s.rob >= 0);
    CHECK(s.id >= 0);
    Tensor cw = state.model->extractor->class_weights();
    const int64_t d = cw.dim(1);
    for (int64_t r = 0; r < cw.dim(0); ++r) {
      double nrm = 0;
      for (int64_t k = 0; k < d; ++k) nrm += double(cw.data()[r * d + k]) * cw.data()[r * d + k];
      CHECK(std::abs(std::sqrt(nrm) - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("checkpoint round trip preserves forward outputs bit-exactly") {
  const std::string path = temp_dir() + "/roundtrip.ckpt";
  TrainState state(tiny_train_config(19));
  for (int i = 0; i < 4; ++i) train_step(state);
  save_checkpoint(state, path);

  // Reference forward on a fixed input.
  Dataset probe = synthesize_dataset(state.cfg.data);
  EmbedOutput before =
      state.model->embedder->embed_batch({probe.covers[0]}, {probe.logos[0]}, false);
  auto [logo_b, pred_b] = state.model->extractor->extract(tensor_to_image(before.watermarked));

  auto loaded = load_checkpoint(path);
  CHECK(loaded->step == state.step);
  EmbedOutput after =
      loaded->model->embedder->embed_batch({probe.covers[0]}, {probe.logos[0]}, false);
  CHECK(std::memcmp(before.watermarked.data(), after.watermarked.data(),
                    before.watermarked.numel() * sizeof(Scalar)) == 0);
  auto [logo_a, pred_a] = loaded->model->extractor->extract(tensor_to_image(after.watermarked));
  CHECK(std::memcmp(logo_b.px.data(), logo_a.px.data(), logo_b.px.size() * sizeof(double)) == 0);
  CHECK(pred_b.predicted == pred_a.predicted);
}

TEST_CASE("resumed training matches uninterrupted training bit-exactly") {
  const std::string path = temp_dir() + "/resume.ckpt";
  TrainState full(tiny_train_config(23));
  for (int i = 0; i < 8; ++i) train_step(full);

  TrainState half(tiny_train_config(23));
  for (int i = 0; i < 4; ++i) train_step(half);
  save_checkpoint(half, path);
  auto resumed = load_checkpoint(path);
  for (int i = 0; i < 4; ++i) train_step(*resumed);

  const auto sf = snapshot(*full.model);
  const auto sr = snapshot(*resumed->model);
  REQUIRE(sf.size() == sr.size());
  CHECK(std::memcmp(sf.data(), sr.data(), sf.size() * sizeof(Scalar)) == 0);
}

TEST_CASE("corrupt checkpoints are rejected with explicit errors") {
  const std::string dir = temp_dir();
  TrainState state(tiny_train_config(29));
  train_step(state);
  const std::string path = dir + "/good.ckpt";
  save_checkpoint(state, path);

  // Truncation.
  {
    std::ifstream in(path, std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::ofstream out(dir + "/trunc.ckpt", std::ios::binary);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size() / 2));
  }
  CHECK_THROWS_AS(load_checkpoint(dir + "/trunc.ckpt"), IoError);

  // Bad magic.
  {
    std::ifstream in(path, std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    blob[0] = 'X';
    std::ofstream out(dir + "/magic.ckpt", std::ios::binary);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  CHECK_THROWS_AS(load_checkpoint(dir + "/magic.ckpt"), IoError);

  // Version mismatch.
  {
    std::ifstream in(path, std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    blob[8] = 99;
    std::ofstream out(dir + "/ver.ckpt", std::ios::binary);
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
  }
  try {
    load_checkpoint(dir + "/ver.ckpt");
    CHECK(false);
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }

  // Shape mismatch against the rebuilt model names the offending record.
  {
    CheckpointData data = read_checkpoint(path);
    for (auto& rec : data.arrays) {
      if (rec.name == "embedder.initial.w") {
        rec.shape[0] += 1;
        rec.values.resize(shape_numel(rec.shape), Scalar(0));
        break;
      }
    }
    write_checkpoint(dir + "/shape.ckpt", data);
  }
  try {
    load_checkpoint(dir + "/shape.ckpt");
    CHECK(false);
  } catch (const IoError& e) {
    CHECK(std::string(e.what()).find("embedder.initial.w") != std::string::npos);
  }
}

TEST_CASE("loss trend decreases over a short run") {
  TrainConfig cfg = tiny_train_config(31);
  cfg.steps = 40;
  TrainState state(cfg);
  double first = 0, last = 0;
  for (int i = 0; i < 40; ++i) {
    const StepStats s = train_step(state);
    if (i < 5) first += s.total / 5;
    if (i >= 35) last += s.total / 5;
  }
  CHECK(last < first);
}

TEST_CASE("evaluation produces a complete report on a tiny model") {
  TrainState state(tiny_train_config(37));
  for (int i = 0; i < 2; ++i) train_step(state);
  DatasetParams eval_params = state.cfg.data;
  eval_params.count = 3;
  eval_params.seed = state.cfg.eval_seed;
  Dataset eval_data = synthesize_dataset(eval_params);
  EvalOptions opts;
  opts.grid = default_eval_grid();
  MetricReport report = evaluate_model(*state.model, *state.featnet, eval_data, opts);
  CHECK(report.per_attack.size() == 4);
  CHECK(report.a_br >= 0.0);
  CHECK(report.a_br <= 1.0);
  CHECK(report.a_ssim <= 1.0);
  CHECK(report.a_id >= 0.0);
  CHECK(std::isfinite(report.lpips));
  // 3 covers * (3 classes + 1 original) rows in the clean confusion.
  int64_t total = 0;
  for (const auto& row : report.confusion)
    for (int64_t v : row) total += v;
  CHECK(total == 3 * 4);
  const std::string js = report.to_json();
  CHECK(js.find("per_attack") != std::string::npos);
  // Deterministic evaluation.
  MetricReport again = evaluate_model(*state.model, *state.featnet, eval_data, opts);
  CHECK(again.to_json() == js);
}
