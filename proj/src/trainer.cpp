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

#include "saiw/trainer.hpp"

#include <cmath>
#include <sstream>

#include <json.hpp>

namespace saiw {

using nlohmann::json;

void TrainConfig::finalize() {
  if (batch < 2) throw ConfigError("train: batch size must be >= 2");
  if (no_wm_fraction < 0 || no_wm_fraction > 0.5) {
    throw ConfigError("train: no-watermark fraction must be in [0, 0.5]");
  }
  if (attack_samples < 1) throw ConfigError("train: need >= 1 attack sample per item");
  weights.validate();
  model.finalize();
  data.image_size = model.image_size;
  data.logo_size = model.logo_size;
  data.num_sources = model.num_sources;
}

std::string TrainConfig::to_json() const {
  json t;
  t["batch"] = batch;
  t["steps"] = steps;
  t["lr"] = lr;
  t["lr_final"] = lr_final;
  t["weight_decay"] = weight_decay;
  t["no_wm_fraction"] = no_wm_fraction;
  t["imp_rampup"] = imp_rampup;
  t["random_logo_steps"] = random_logo_steps;
  t["amp_target"] = amp_target;
  t["amp_weight"] = amp_weight;
  t["amp_steps"] = amp_steps;
  t["bootstrap_noise"] = bootstrap_noise;
  t["eval_every"] = eval_every;
  t["eval_covers"] = eval_covers;
  t["eval_seed"] = eval_seed;
  t["weights"] = {{"w_imp", weights.w_imp},   {"w_rob", weights.w_rob},
                  {"w_id", weights.w_id},     {"w1", weights.w1},
                  {"w_lpips", weights.w_lpips}, {"w2", weights.w2},
                  {"w_ssim", weights.w_ssim}, {"w_lpips2", weights.w_lpips2}};
  t["data"] = {{"count", data.count}, {"seed", data.seed}};
  json j;
  j["seed"] = seed;
  j["model"] = json::parse(model.to_json());
  j["train"] = t;
  j["attacks"] = {{"samples", attack_samples},
                  {"identity_warmup", identity_warmup},
                  {"policy", attack_policy}};
  j["io"] = json::object();
  return j.dump(2);
}

TrainConfig TrainConfig::from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("train config: invalid JSON: ") + e.what());
  }
  check_json_keys(&j, {"seed", "model", "train", "attacks", "io"}, "config");
  TrainConfig cfg;
  cfg.seed = j.value("seed", cfg.seed);
  if (j.contains("model")) cfg.model = ModelConfig::from_json(j["model"].dump());
  if (j.contains("train")) {
    const json& t = j["train"];
    check_json_keys(&t,
                    {"batch", "steps", "lr", "lr_final", "weight_decay", "no_wm_fraction",
                     "imp_rampup", "random_logo_steps", "amp_target", "amp_weight", "amp_steps",
                     "bootstrap_noise",
                     "eval_every", "eval_covers", "eval_seed", "weights", "data"},
                    "train section");
    cfg.batch = t.value("batch", cfg.batch);
    cfg.steps = t.value("steps", cfg.steps);
    cfg.lr = t.value("lr", cfg.lr);
    cfg.lr_final = t.value("lr_final", cfg.lr_final);
    cfg.weight_decay = t.value("weight_decay", cfg.weight_decay);
    cfg.no_wm_fraction = t.value("no_wm_fraction", cfg.no_wm_fraction);
    cfg.imp_rampup = t.value("imp_rampup", cfg.imp_rampup);
    cfg.random_logo_steps = t.value("random_logo_steps", cfg.random_logo_steps);
    cfg.amp_target = t.value("amp_target", cfg.amp_target);
    cfg.amp_weight = t.value("amp_weight", cfg.amp_weight);
    cfg.amp_steps = t.value("amp_steps", cfg.amp_steps);
    cfg.bootstrap_noise = t.value("bootstrap_noise", cfg.bootstrap_noise);
    cfg.eval_every = t.value("eval_every", cfg.eval_every);
    cfg.eval_covers = t.value("eval_covers", cfg.eval_covers);
    cfg.eval_seed = t.value("eval_seed", cfg.eval_seed);
    if (t.contains("weights")) {
      const json& w = t["weights"];
      check_json_keys(&w, {"w_imp", "w_rob", "w_id", "w1", "w_lpips", "w2", "w_ssim", "w_lpips2"},
                      "weights");
      cfg.weights.w_imp = w.value("w_imp", cfg.weights.w_imp);
      cfg.weights.w_rob = w.value("w_rob", cfg.weights.w_rob);
      cfg.weights.w_id = w.value("w_id", cfg.weights.w_id);
      cfg.weights.w1 = w.value("w1", cfg.weights.w1);
      cfg.weights.w_lpips = w.value("w_lpips", cfg.weights.w_lpips);
      cfg.weights.w2 = w.value("w2", cfg.weights.w2);
      cfg.weights.w_ssim = w.value("w_ssim", cfg.weights.w_ssim);
      cfg.weights.w_lpips2 = w.value("w_lpips2", cfg.weights.w_lpips2);
    }
    if (t.contains("data")) {
      const json& d = t["data"];
      check_json_keys(&d, {"count", "seed"}, "data section");
      cfg.data.count = d.value("count", cfg.data.count);
      cfg.data.seed = d.value("seed", cfg.data.seed);
    }
  }
  if (j.contains("attacks")) {
    const json& a = j["attacks"];
    check_json_keys(&a, {"samples", "identity_warmup", "policy"}, "attacks section");
    cfg.attack_samples = a.value("samples", cfg.attack_samples);
    cfg.identity_warmup = a.value("identity_warmup", cfg.identity_warmup);
    cfg.attack_policy = a.value("policy", cfg.attack_policy);
    if (cfg.attack_policy != "default" && cfg.attack_policy != "mild") {
      throw ConfigError("attacks.policy must be \"default\" or \"mild\"");
    }
  }
  if (j.contains("io")) {
    check_json_keys(&j["io"], {"checkpoint_out", "log"}, "io section");
  }
  cfg.finalize();
  return cfg;
}

void AdamW::step(ParameterSet& params, double lr, double weight_decay) {
  const std::vector<Tensor> all = params.all();
  if (m_.empty()) {
    m_.resize(all.size());
    v_.resize(all.size());
    for (size_t i = 0; i < all.size(); ++i) {
      m_[i].assign(all[i].numel(), Scalar(0));
      v_[i].assign(all[i].numel(), Scalar(0));
    }
  }
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t_));
  for (size_t i = 0; i < all.size(); ++i) {
    Tensor p = all[i];
    Scalar* data = p.data();
    const std::vector<Scalar>& g = p.grad();
    for (int64_t k = 0; k < p.numel(); ++k) {
      const double gk = static_cast<double>(g[k]);
      const double m = beta1 * m_[i][k] + (1.0 - beta1) * gk;
      const double v = beta2 * v_[i][k] + (1.0 - beta2) * gk * gk;
      m_[i][k] = static_cast<Scalar>(m);
      v_[i][k] = static_cast<Scalar>(v);
      const double update = (m / bc1) / (std::sqrt(v / bc2) + eps) +
                            weight_decay * static_cast<double>(data[k]);
      data[k] -= static_cast<Scalar>(lr * update);
    }
  }
}

TrainState::TrainState(TrainConfig config) : cfg(std::move(config)), rng(0) {
  cfg.finalize();
  model = std::make_unique<SaiwModel>(cfg.model);
  featnet = std::make_unique<FeatureNet>(cfg.model.featurenet_seed);
  rng = Rng(cfg.seed);
  train_data = synthesize_dataset(cfg.data);
  if (cfg.attack_policy == "mild") policy = AttackPolicy::mild_training();
  if (cfg.bootstrap_noise > 0) {
    Rng nudge(hash_combine(cfg.seed, 0xB007B007ull));
    Tensor fw = model->params.get("embedder.final.w");
    for (int64_t i = 0; i < fw.numel(); ++i) {
      fw.data()[i] += static_cast<Scalar>(cfg.bootstrap_noise * nudge.normal());
    }
    for (int site = 1; site <= Embedder::kFilmSites; ++site) {
      Tensor w = model->params.get("embedder.film.site" + std::to_string(site) + ".w");
      for (int64_t i = 0; i < w.numel(); ++i) {
        w.data()[i] += static_cast<Scalar>(0.5 * cfg.bootstrap_noise * nudge.normal());
      }
    }
  }
}

namespace {

Tensor batch_images(const std::vector<Image>& images) {
  std::vector<Scalar> buf;
  const Image& first = images.front();
  buf.reserve(images.size() * first.size());
  for (const Image& img : images) {
    Tensor t = image_to_tensor(img);
    buf.insert(buf.end(), t.values().begin(), t.values().end());
  }
  return Tensor::constant(
      {static_cast<int64_t>(images.size()), first.c, first.h, first.w}, std::move(buf));
}

double cosine_lr(const TrainConfig& cfg, int64_t step) {
  if (cfg.steps <= 1) return cfg.lr;
  const double t = static_cast<double>(step) / static_cast<double>(cfg.steps - 1);
  return cfg.lr_final +
         0.5 * (cfg.lr - cfg.lr_final) * (1.0 + std::cos(3.14159265358979323846 * t));
}

}  // namespace

StepStats train_step(TrainState& state) {
  const TrainConfig& cfg = state.cfg;
  SaiwModel& model = *state.model;
  const int num_sources = cfg.model.num_sources;
  const int no_wm_class = cfg.model.no_watermark_class();
  const int h = cfg.model.image_size, lh = cfg.model.logo_size;

  std::vector<BatchItem> items =
      build_batch(state.train_data, cfg.batch, cfg.no_wm_fraction, num_sources, state.rng);
  // Batch statistics in the embedder need at least one watermarked item.
  bool any_wm = false;
  for (const auto& it : items) any_wm = any_wm || it.label < num_sources;
  if (!any_wm) items[0].label = 0;

  std::vector<int> wm_rows, nw_rows;
  for (size_t i = 0; i < items.size(); ++i) {
    (items[i].label < num_sources ? wm_rows : nw_rows).push_back(static_cast<int>(i));
  }
  const int64_t n_wm = static_cast<int64_t>(wm_rows.size());

  const bool random_payload = state.step < cfg.random_logo_steps;
  std::vector<Image> covers_wm, logos_wm;
  for (int i : wm_rows) {
    covers_wm.push_back(state.train_data.covers[items[i].cover_index]);
    if (random_payload) {
      logos_wm.push_back(random_glyph_logo(cfg.model.logo_size, state.rng));
    } else {
      logos_wm.push_back(state.train_data.logos[items[i].label]);
    }
  }
  EmbedOutput emb = model.embedder->embed_batch(covers_wm, logos_wm, /*training=*/true);
  Tensor covers_t = batch_images(covers_wm);
  Tensor logos_t = batch_images(logos_wm);

  // Attack layer: every item is distorted attack_samples times; watermarked
  // rows come first, grouped by sample index.
  // Early steps run attack-free so the embed/extract pair can couple on
  // clean images before distortions add gradient noise.
  const bool warmup = state.step < state.cfg.identity_warmup;
  std::vector<Tensor> rows;
  std::vector<int> labels;
  for (int s = 0; s < cfg.attack_samples; ++s) {
    for (int64_t k = 0; k < n_wm; ++k) {
      const AttackSpec spec = warmup ? AttackSpec{} : sample_attack(state.rng, state.policy);
      Tensor item = slice(emb.watermarked, {k, 0, 0, 0}, {1, 3, h, h});
      rows.push_back(st_apply(spec, item));
      labels.push_back(items[wm_rows[k]].label);
    }
  }
  for (int s = 0; s < cfg.attack_samples; ++s) {
    for (int idx : nw_rows) {
      const AttackSpec spec = warmup ? AttackSpec{} : sample_attack(state.rng, state.policy);
      Tensor original = image_to_tensor(state.train_data.covers[items[idx].cover_index]);
      rows.push_back(st_apply(spec, original));
      labels.push_back(no_wm_class);
    }
  }
  Tensor extractor_in = concat(rows, 0);
  ExtractOutput ext = model.extractor->forward(extractor_in);

  // Reconstruction supervision only on watermarked rows.
  std::vector<Tensor> recovered;
  for (int s = 0; s < cfg.attack_samples; ++s) {
    recovered.push_back(slice(ext.logo, {s * n_wm, 0, 0, 0}, {n_wm, 1, lh, lh}));
  }

  // Robustness-first schedule: while ramping, the imperceptibility share
  // moves onto the robustness term so the total stays a normalized convex
  // combination.
  LossWeights eff = cfg.weights;
  if (cfg.imp_rampup > 0 && state.step < cfg.imp_rampup) {
    const double ramp = static_cast<double>(state.step) / cfg.imp_rampup;
    const double cut = cfg.weights.w_imp * (1.0 - ramp);
    eff.w_imp = cfg.weights.w_imp - cut;
    eff.w_rob = cfg.weights.w_rob + cut;
  }
  if (random_payload) {
    eff.w_rob += eff.w_id;
    eff.w_id = 0.0;
  }

  StepStats stats;
  Tensor l_imp, l_rob, l_id, total;
  const char* phase = "imperceptibility (Eq.3)";
  try {
    l_imp = imperceptibility_loss(covers_t, emb.watermarked, eff, *state.featnet);
    phase = "robustness (Eq.4)";
    l_rob = robustness_loss(logos_t, recovered, eff, *state.featnet);
    phase = "identification (Eq.5)";
    l_id = random_payload ? Tensor::scalar(0)
                          : arcface_loss(ext.embedding, model.extractor->class_weights(),
                                         labels, cfg.model.arcface);
    phase = "total (Eq.2)";
    total = total_loss(l_imp, l_rob, l_id, eff);
    if (cfg.amp_steps > 0 && state.step < cfg.amp_steps && cfg.amp_target > 0) {
      // Bootstrap hinge: pulls mean|residual| up to amp_target, then expires.
      Tensor deficit = relu(scalar_add(neg(mean_all(abs(emb.residual))), cfg.amp_target));
      total = add(total, scalar_mul(deficit, cfg.amp_weight));
    }
    phase = "backward";
    model.params.zero_grad();
    backward(total);
  } catch (const NumericError& e) {
    throw NumericError("train step " + std::to_string(state.step) + " aborted in " + phase +
                       ": " + e.what() + " [imp=" +
                       (l_imp.defined() ? std::to_string(double(l_imp.item())) : "n/a") +
                       " rob=" + (l_rob.defined() ? std::to_string(double(l_rob.item())) : "n/a") +
                       " id=" + (l_id.defined() ? std::to_string(double(l_id.item())) : "n/a") +
                       "]");
  }

  stats.lr = cosine_lr(cfg, state.step);
  state.opt.step(model.params, stats.lr, cfg.weight_decay);

  // The cosine classifier requires unit rows after every update. Rows
  // already unit to within roundoff are left untouched so a zero learning
  // rate leaves parameters bit-identical.
  Tensor cw = model.extractor->class_weights();
  const int64_t classes = cw.dim(0), dim = cw.dim(1);
  for (int64_t r = 0; r < classes; ++r) {
    double s = 0;
    for (int64_t i = 0; i < dim; ++i) s += double(cw.data()[r * dim + i]) * cw.data()[r * dim + i];
    if (std::abs(s - 1.0) < 1e-12) continue;
    const double inv = 1.0 / std::sqrt(s);
    for (int64_t i = 0; i < dim; ++i) cw.data()[r * dim + i] *= static_cast<Scalar>(inv);
  }

  ++state.step;
  stats.total = static_cast<double>(total.item());
  stats.imp = static_cast<double>(l_imp.item());
  stats.rob = static_cast<double>(l_rob.item());
  stats.id = static_cast<double>(l_id.item());
  stats.lambda4 = model.embedder->lambda4_value();
  return stats;
}

void train_run(TrainState& state, const std::function<void(const std::string&)>& log,
               const std::function<void(TrainState&)>& on_eval) {
  while (state.step < state.cfg.steps) {
    const StepStats s = train_step(state);
    if (log && (state.step % 25 == 0 || state.step == state.cfg.steps)) {
      std::ostringstream os;
      os << "step " << state.step << "/" << state.cfg.steps << " total=" << s.total
         << " imp=" << s.imp << " rob=" << s.rob << " id=" << s.id << " lr=" << s.lr
         << " lambda4=" << s.lambda4;
      log(os.str());
    }
    if (on_eval && state.cfg.eval_every > 0 &&
        (state.step % state.cfg.eval_every == 0 || state.step == state.cfg.steps)) {
      on_eval(state);
    }
  }
}

void save_checkpoint(const TrainState& state, const std::string& path) {
  CheckpointData data;
  data.config_json = state.cfg.to_json();
  data.step = static_cast<uint64_t>(state.step);
  data.rng_state = state.rng.state();
  data.opt_steps = const_cast<AdamW&>(state.opt).steps_taken();

  const SaiwModel& model = *state.model;
  for (const std::string& name : model.params.names()) {
    Tensor t = model.params.get(name);
    data.arrays.push_back({name, t.shape(), t.values(), "", false});
  }
  for (const std::string& name : model.buffers.names()) {
    const auto& buf = model.buffers.get(name);
    data.arrays.push_back({"buffer/" + name,
                           {static_cast<int64_t>(buf.size())},
                           buf,
                           "",
                           false});
  }
  AdamW& opt = const_cast<AdamW&>(state.opt);
  if (!opt.first_moments().empty()) {
    const auto& names = model.params.names();
    for (size_t i = 0; i < names.size(); ++i) {
      data.arrays.push_back({"adam_m/" + names[i],
                             {static_cast<int64_t>(opt.first_moments()[i].size())},
                             opt.first_moments()[i],
                             "",
                             false});
      data.arrays.push_back({"adam_v/" + names[i],
                             {static_cast<int64_t>(opt.second_moments()[i].size())},
                             opt.second_moments()[i],
                             "",
                             false});
    }
  }
  write_checkpoint(path, data);
}

std::unique_ptr<TrainState> load_checkpoint(const std::string& path) {
  CheckpointData data = read_checkpoint(path);
  if (data.config_json.empty()) throw IoError("checkpoint missing config record: " + path);
  TrainConfig cfg = TrainConfig::from_json(data.config_json);
  auto state = std::make_unique<TrainState>(cfg);
  state->step = static_cast<int64_t>(data.step);
  state->rng.set_state(data.rng_state);
  state->opt.set_steps_taken(data.opt_steps);

  SaiwModel& model = *state->model;
  const auto& names = model.params.names();
  bool has_moments = false;
  for (const auto& rec : data.arrays) {
    if (rec.name.rfind("adam_m/", 0) == 0) has_moments = true;
  }
  if (has_moments) {
    state->opt.first_moments().resize(names.size());
    state->opt.second_moments().resize(names.size());
    for (size_t i = 0; i < names.size(); ++i) {
      state->opt.first_moments()[i].assign(model.params.get(names[i]).numel(), Scalar(0));
      state->opt.second_moments()[i].assign(model.params.get(names[i]).numel(), Scalar(0));
    }
  }
  auto param_index = [&](const std::string& nm) -> size_t {
    for (size_t i = 0; i < names.size(); ++i) {
      if (names[i] == nm) return i;
    }
    throw IoError("checkpoint record references unknown parameter '" + nm + "'");
  };

  for (const auto& rec : data.arrays) {
    if (rec.name.rfind("buffer/", 0) == 0) {
      const std::string nm = rec.name.substr(7);
      auto& buf = model.buffers.get(nm);
      if (buf.size() != rec.values.size()) {
        throw IoError("checkpoint shape mismatch for buffer '" + nm + "': file has " +
                      std::to_string(rec.values.size()) + " values, model expects " +
                      std::to_string(buf.size()));
      }
      buf = rec.values;
    } else if (rec.name.rfind("adam_m/", 0) == 0) {
      state->opt.first_moments()[param_index(rec.name.substr(7))] = rec.values;
    } else if (rec.name.rfind("adam_v/", 0) == 0) {
      state->opt.second_moments()[param_index(rec.name.substr(7))] = rec.values;
    } else {
      if (!model.params.contains(rec.name)) {
        throw IoError("checkpoint record references unknown parameter '" + rec.name + "'");
      }
      Tensor t = model.params.get(rec.name);
      if (t.shape() != rec.shape) {
        throw IoError("checkpoint shape mismatch for '" + rec.name + "': file has " +
                      shape_str(rec.shape) + ", model expects " + shape_str(t.shape()));
      }
      t.values() = rec.values;
    }
  }
  return state;
}

}  // namespace saiw
