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
// Command-line surface: train, embed, extract, attack, evaluate, jnd.
// Exit codes: 0 success, 1 internal/numeric failure, 2 usage/input error.

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "saiw/evaluate.hpp"
#include "saiw/jnd.hpp"
#include "saiw/trainer.hpp"

namespace fs = std::filesystem;
using namespace saiw;

namespace {

// All file outputs go through a temp + rename so failures never leave
// partial files behind.
void atomic_save_image(const std::string& path, const Image& img) {
  const std::string tmp = path + ".tmp";
  save_image(tmp, img);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("rename failed for " + path + ": " + ec.message());
  }
}

void atomic_save_text(const std::string& path, const std::string& text) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + tmp);
    f << text;
    if (!f) throw IoError("write failed: " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw IoError("rename failed for " + path + ": " + ec.message());
  }
}

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

uint64_t seed_override(uint64_t fallback) {
  if (const char* env = std::getenv("SAIW_SEED")) {
    return static_cast<uint64_t>(std::strtoull(env, nullptr, 10));
  }
  return fallback;
}

void log_resolved(const nlohmann::json& j) {
  std::cout << "resolved-config: " << j.dump() << "\n";
}

std::string class_name(int cls, int num_sources) {
  return cls == num_sources ? std::string("no-watermark") : "source-" + std::to_string(cls);
}

std::vector<AttackSpec> load_grid(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open grid file: " + path);
  std::vector<AttackSpec> grid;
  std::string line;
  while (std::getline(f, line)) {
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    // trim
    while (!line.empty() && std::isspace(static_cast<unsigned char>(line.back()))) line.pop_back();
    size_t start = 0;
    while (start < line.size() && std::isspace(static_cast<unsigned char>(line[start]))) ++start;
    line = line.substr(start);
    if (!line.empty()) grid.push_back(AttackSpec::parse(line));
  }
  if (grid.empty()) throw Error("grid file has no attack specs: " + path);
  return grid;
}

int cmd_train(const std::string& config_path, const std::string& out_path) {
  nlohmann::json raw = nlohmann::json::parse(read_file(config_path));
  TrainConfig cfg = TrainConfig::from_json(raw.dump());
  cfg.seed = seed_override(cfg.seed);
  cfg.finalize();

  std::string checkpoint_out = out_path;
  if (checkpoint_out.empty() && raw.contains("io") && raw["io"].contains("checkpoint_out")) {
    checkpoint_out = raw["io"]["checkpoint_out"].get<std::string>();
  }
  if (checkpoint_out.empty()) throw Error("train: no checkpoint output path (--out or io.checkpoint_out)");

  log_resolved(nlohmann::json::parse(cfg.to_json()));

  TrainState state(cfg);
  DatasetParams eval_params = cfg.data;
  eval_params.count = cfg.eval_covers;
  eval_params.seed = cfg.eval_seed;
  Dataset eval_data = synthesize_dataset(eval_params);
  eval_data.logos = state.train_data.logos;

  auto on_eval = [&](TrainState& st) {
    EvalOptions opts;
    opts.grid = default_eval_grid();
    opts.seed = cfg.eval_seed;
    const MetricReport r = evaluate_model(*st.model, *st.featnet, eval_data, opts);
    std::cout << "eval step=" << st.step << " psnr=" << r.psnr_db << " a_br=" << r.a_br
              << " a_ssim=" << r.a_ssim << " a_id=" << r.a_id;
    for (const auto& [name, b] : r.per_attack) {
      std::cout << " [" << name << " a_br=" << b.a_br << "]";
    }
    std::cout << std::endl;
  };
  train_run(
      state, [](const std::string& line) { std::cout << line << std::endl; }, on_eval);
  save_checkpoint(state, checkpoint_out);
  std::cout << "checkpoint written: " << checkpoint_out << "\n";
  return 0;
}

int cmd_embed(const std::string& ckpt, const std::string& cover_path,
              const std::string& logo_path, const std::string& out_path,
              const std::string& residual_out) {
  auto state = load_checkpoint(ckpt);
  const Image cover = load_image(cover_path);
  const Image logo = load_image(logo_path);
  log_resolved({{"command", "embed"},
                {"checkpoint", ckpt},
                {"cover", cover_path},
                {"logo", logo_path},
                {"out", out_path},
                {"model", nlohmann::json::parse(state->cfg.model.to_json())}});

  EmbedOutput out = state->model->embedder->embed_batch({cover}, {logo}, /*training=*/false);
  const Image wm = tensor_to_image(out.watermarked);
  atomic_save_image(out_path, wm);
  if (!residual_out.empty()) {
    // Signed residual mapped to [0,1]: r/(2*lambda4) + 0.5.
    const double l4 = state->model->embedder->lambda4_value();
    Image vis(cover.h, cover.w, 1);
    const Scalar* r = out.residual.data();
    for (int y = 0; y < cover.h; ++y) {
      for (int x = 0; x < cover.w; ++x) {
        double mean = 0;
        for (int c = 0; c < 3; ++c) mean += double(r[(c * cover.h + y) * cover.w + x]);
        vis.at(y, x, 0) = clip(mean / 3.0 / (2.0 * l4) + 0.5, 0.0, 1.0);
      }
    }
    atomic_save_image(residual_out, vis);
  }
  std::cout << "psnr_db=" << psnr(cover, wm) << " ssim=" << ssim(cover, wm) << "\n";
  return 0;
}

int cmd_extract(const std::string& ckpt, const std::string& in_path,
                const std::string& logo_out, const std::string& expected_logo) {
  auto state = load_checkpoint(ckpt);
  const Image img = load_image(in_path);
  log_resolved({{"command", "extract"}, {"checkpoint", ckpt}, {"in", in_path}});

  auto [logo, pred] = state->model->extractor->extract(img);
  if (!logo_out.empty()) atomic_save_image(logo_out, logo);
  std::cout << "predicted=" << class_name(pred.predicted, state->cfg.model.num_sources)
            << "\nscores=[";
  for (size_t i = 0; i < pred.scores.size(); ++i) {
    std::cout << (i ? "," : "") << pred.scores[i];
  }
  std::cout << "]\n";
  if (!expected_logo.empty()) {
    const Image expect = load_image(expected_logo);
    if (expect.h != logo.h || expect.w != logo.w || expect.c != 1) {
      throw ShapeError("extract: --expected-logo dimensions do not match the recovered logo");
    }
    std::cout << "a_br=" << bit_recovery_accuracy(expect, logo)
              << " a_ssim=" << logo_ssim(expect, logo) << "\n";
  }
  return 0;
}

int cmd_attack(const std::string& in_path, const std::string& out_path, const std::string& spec) {
  AttackSpec parsed = AttackSpec::parse(spec);
  if (parsed.seed == 0) parsed.seed = seed_override(0);
  log_resolved({{"command", "attack"}, {"in", in_path}, {"spec", parsed.to_string()}});
  const Image img = load_image(in_path);
  atomic_save_image(out_path, apply_attack(parsed, img));
  std::cout << "attack applied: " << parsed.to_string() << "\n";
  return 0;
}

int cmd_evaluate(const std::string& ckpt, const std::string& dataset, const std::string& grid_path,
                 int covers, uint64_t seed, const std::string& report_path) {
  auto state = load_checkpoint(ckpt);
  EvalOptions opts;
  opts.seed = seed_override(seed);
  opts.grid = grid_path.empty() ? default_eval_grid() : load_grid(grid_path);

  Dataset eval_data;
  // The logo set is the trained source identity set, always regenerated
  // from the training data spec.
  eval_data.logos = synthesize_dataset(state->cfg.data).logos;
  if (dataset == "synthetic") {
    DatasetParams p = state->cfg.data;
    p.count = covers;
    p.seed = opts.seed;
    eval_data.covers = synthesize_dataset(p).covers;
  } else {
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dataset)) {
      if (entry.path().extension() == ".ppm") files.push_back(entry.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw IoError("evaluate: no .ppm covers in " + dataset);
    for (const auto& f : files) eval_data.covers.push_back(load_image(f));
  }

  nlohmann::json resolved = {{"command", "evaluate"},
                             {"checkpoint", ckpt},
                             {"dataset", dataset},
                             {"covers", static_cast<int>(eval_data.covers.size())},
                             {"seed", opts.seed},
                             {"grid", nlohmann::json::array()}};
  for (const auto& g : opts.grid) resolved["grid"].push_back(g.to_string());
  log_resolved(resolved);

  const MetricReport report = evaluate_model(*state->model, *state->featnet, eval_data, opts);
  std::cout << report.to_table();
  if (!report_path.empty()) {
    atomic_save_text(report_path, report.to_json() + "\n");
    std::cout << "report written: " << report_path << "\n";
  } else {
    std::cout << report.to_json() << "\n";
  }
  return 0;
}

int cmd_jnd(const std::string& in_path, const std::string& out_path) {
  const Image cover = load_image(in_path);
  log_resolved({{"command", "jnd"}, {"in", in_path}, {"out", out_path}});
  const RealMap pn = guidance_map(cover);
  // P_n in [0,3] scaled into the 8-bit range.
  Image vis(pn.h, pn.w, 1);
  for (size_t i = 0; i < pn.v.size(); ++i) vis.px[i] = pn.v[i] / 3.0;
  atomic_save_image(out_path, vis);
  std::cout << "guidance map written: " << out_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"source-attributable invisible watermarking pipeline"};
  app.require_subcommand(1);

  std::string config_path, out_path;
  auto* train = app.add_subcommand("train", "train a model from a JSON config");
  train->add_option("--config", config_path, "JSON config file")->required();
  train->add_option("--out", out_path, "checkpoint output path");

  std::string ckpt, cover_path, logo_path, embed_out, residual_out;
  auto* embed = app.add_subcommand("embed", "embed a logo into a cover image");
  embed->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  embed->add_option("--cover", cover_path, "cover PPM")->required();
  embed->add_option("--logo", logo_path, "logo PGM")->required();
  embed->add_option("--out", embed_out, "watermarked PPM output")->required();
  embed->add_option("--residual-out", residual_out, "residual visualization PGM");

  std::string extract_in, logo_out, expected_logo;
  auto* extract = app.add_subcommand("extract", "recover logo and source from an image");
  extract->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  extract->add_option("--in", extract_in, "input PPM")->required();
  extract->add_option("--logo-out", logo_out, "recovered logo PGM output");
  extract->add_option("--expected-logo", expected_logo, "reference logo for A_br/A_ssim");

  std::string attack_in, attack_out, attack_spec;
  auto* attack = app.add_subcommand("attack", "apply a distortion spec to an image");
  attack->add_option("--in", attack_in, "input image")->required();
  attack->add_option("--out", attack_out, "output image")->required();
  attack->add_option("--spec", attack_spec, "attack spec, e.g. jpeg:75 or compose:[...]")
      ->required();

  std::string dataset = "synthetic", grid_path, report_path;
  int eval_covers = 20;
  uint64_t eval_seed = 99;
  auto* evaluate = app.add_subcommand("evaluate", "run the metric suite over a dataset");
  evaluate->add_option("--checkpoint", ckpt, "trained checkpoint")->required();
  evaluate->add_option("--dataset", dataset, "'synthetic' or a directory of .ppm covers");
  evaluate->add_option("--grid", grid_path, "attack grid file (one spec per line)");
  evaluate->add_option("--covers", eval_covers, "synthetic cover count");
  evaluate->add_option("--seed", eval_seed, "evaluation seed");
  evaluate->add_option("--report", report_path, "write MetricReport JSON here");

  std::string jnd_in, jnd_out;
  auto* jnd = app.add_subcommand("jnd", "write the perceptual guidance map");
  jnd->add_option("--in", jnd_in, "input PPM")->required();
  jnd->add_option("--out", jnd_out, "output PGM")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n" << app.help() << "\n";
    return 2;
  }

  try {
    if (*train) return cmd_train(config_path, out_path);
    if (*embed) return cmd_embed(ckpt, cover_path, logo_path, embed_out, residual_out);
    if (*extract) return cmd_extract(ckpt, extract_in, logo_out, expected_logo);
    if (*attack) return cmd_attack(attack_in, attack_out, attack_spec);
    if (*evaluate)
      return cmd_evaluate(ckpt, dataset, grid_path, eval_covers, eval_seed, report_path);
    if (*jnd) return cmd_jnd(jnd_in, jnd_out);
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal failure: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
