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
// Training loop: batches mix watermarked items with distorted originals,
// samples attacks per item, pushes everything through embed -> straight-
// through attack -> extract, and optimizes the weighted objective with
// AdamW under a cosine learning-rate schedule.

#ifndef SAIW_TRAINER_HPP_
#define SAIW_TRAINER_HPP_

#include <functional>
#include <memory>
#include <string>

#include "saiw/attacks.hpp"
#include "saiw/checkpoint.hpp"
#include "saiw/dataset.hpp"
#include "saiw/model.hpp"

namespace saiw {

struct TrainConfig {
  uint64_t seed = 7;
  int batch = 8;
  int steps = 1500;
  double lr = 1e-3;
  double lr_final = 1e-4;
  double weight_decay = 0.01;
  double no_wm_fraction = 0.25;
  int attack_samples = 2;  // sampled attacks per item per step
  int identity_warmup = 0;  // steps before the attack policy engages
  std::string attack_policy = "default";  // "default" | "mild"
  // Steps over which the imperceptibility weight ramps from 0 to w_imp;
  // the deficit shifts onto w_rob so the weights stay normalized.
  int imp_rampup = 0;
  // Steps during which watermarked items carry fresh random logos and the
  // identification loss is paused (its weight shifts onto robustness).
  // Makes the payload unmemorizable so the extractor must read the image.
  int random_logo_steps = 0;
  // Bootstrap amplitude hinge: for the first amp_steps the objective adds
  // amp_weight * max(0, amp_target - mean|residual|). The exact-identity
  // initialization provides zero coupling gradient; the hinge opens a
  // readable channel, then expires.
  double amp_target = 0.0;
  double amp_weight = 5.0;
  int amp_steps = 0;
  // Seeded perturbation of the residual head and FiLM heads applied once at
  // trainer construction. The freshly constructed model keeps its exact
  // identity/zero-residual initialization; this moves the optimizer's
  // starting point off the zero-Jacobian saddle where neither the payload
  // pathway nor the residual pathway receives gradient.
  double bootstrap_noise = 0.0;
  int eval_every = 250;
  int eval_covers = 20;
  uint64_t eval_seed = 99;
  LossWeights weights;
  DatasetParams data;
  ModelConfig model;

  void finalize();
  std::string to_json() const;
  // Accepts the CLI layout with sections {model, train, attacks, io, seed};
  // unknown keys are rejected.
  static TrainConfig from_json(const std::string& text);
};

class AdamW {
 public:
  void step(ParameterSet& params, double lr, double weight_decay);
  uint64_t steps_taken() const { return t_; }
  void set_steps_taken(uint64_t t) { t_ = t; }
  std::vector<std::vector<Scalar>>& first_moments() { return m_; }
  std::vector<std::vector<Scalar>>& second_moments() { return v_; }

  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

 private:
  std::vector<std::vector<Scalar>> m_, v_;
  uint64_t t_ = 0;
};

struct StepStats {
  double total = 0, imp = 0, rob = 0, id = 0;
  double lr = 0;
  double lambda4 = 0;
};

struct TrainState {
  TrainConfig cfg;
  std::unique_ptr<SaiwModel> model;
  std::unique_ptr<FeatureNet> featnet;
  AdamW opt;
  Rng rng;
  Dataset train_data;
  AttackPolicy policy = AttackPolicy::default_training();
  int64_t step = 0;

  explicit TrainState(TrainConfig config);
};

StepStats train_step(TrainState& state);

// Runs steps until cfg.steps, logging through `log` (may be null); invokes
// `on_eval` at the configured cadence and at the end.
void train_run(TrainState& state, const std::function<void(const std::string&)>& log,
               const std::function<void(TrainState&)>& on_eval = nullptr);

void save_checkpoint(const TrainState& state, const std::string& path);
// Rebuilds the model from the embedded config and restores every buffer
// bit-exactly; shape mismatches name the first offending record.
std::unique_ptr<TrainState> load_checkpoint(const std::string& path);

}  // namespace saiw

#endif  // SAIW_TRAINER_HPP_
