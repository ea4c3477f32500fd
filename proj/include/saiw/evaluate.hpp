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

#ifndef SAIW_EVALUATE_HPP_
#define SAIW_EVALUATE_HPP_

#include <vector>

#include "saiw/attacks.hpp"
#include "saiw/dataset.hpp"
#include "saiw/metrics.hpp"
#include "saiw/model.hpp"

namespace saiw {

struct EvalOptions {
  std::vector<AttackSpec> grid;  // post-attack entries
  uint64_t seed = 1;             // derives per-sample attack seeds
  double tau = 0.5;              // binarization threshold for A_br
};

// Protocol: every (cover, class) pair is embedded and measured against the
// cover (PSNR/SSIM/feature distance), extracted clean (pre-attack A_br,
// A_ssim, prediction), and extracted after each grid attack. Unwatermarked
// originals run through the extractor as the no-watermark class. The
// confusion matrix and A_id cover the clean pass; per-attack breakdowns
// carry their own A_br / A_ssim / A_id.
MetricReport evaluate_model(SaiwModel& model, const FeatureNet& featnet,
                            const Dataset& eval_data, const EvalOptions& opts);

// The fixed held-out grid used during training: identity, jpeg:75,
// blur:3:1.0, noise:0.02.
std::vector<AttackSpec> default_eval_grid();

}  // namespace saiw

#endif  // SAIW_EVALUATE_HPP_
