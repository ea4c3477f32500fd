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

#include "saiw/evaluate.hpp"

#include <cmath>

#include "saiw/losses.hpp"

namespace saiw {

std::vector<AttackSpec> default_eval_grid() {
  return {AttackSpec::parse("identity"), AttackSpec::parse("jpeg:75"),
          AttackSpec::parse("blur:3:1.0"), AttackSpec::parse("noise:0.02")};
}

MetricReport evaluate_model(SaiwModel& model, const FeatureNet& featnet,
                            const Dataset& eval_data, const EvalOptions& opts) {
  const int num_sources = model.cfg.num_sources;
  const int no_wm_class = model.cfg.no_watermark_class();
  const int num_classes = model.cfg.num_classes();

  MetricReport report;
  double psnr_sum = 0, ssim_sum = 0, lpips_sum = 0, abr_sum = 0, assim_sum = 0;
  int64_t wm_count = 0;
  std::vector<int> clean_preds, clean_labels;
  struct Acc {
    double abr = 0, assim = 0;
    int64_t n = 0;
    std::vector<int> preds, labels;
  };
  std::vector<Acc> attack_acc(opts.grid.size());

  for (size_t ci = 0; ci < eval_data.covers.size(); ++ci) {
    const Image& cover = eval_data.covers[ci];
    for (int c = 0; c < num_sources; ++c) {
      const Image& logo = eval_data.logos[c];
      EmbedOutput out = model.embedder->embed_batch({cover}, {logo}, /*training=*/false);
      const Image wm = tensor_to_image(out.watermarked);

      psnr_sum += std::isinf(psnr(cover, wm)) ? 100.0 : psnr(cover, wm);
      ssim_sum += ssim(cover, wm);
      lpips_sum += lpips_value(cover, wm, featnet);

      auto [rec, pred] = model.extractor->extract(wm);
      abr_sum += bit_recovery_accuracy(logo, rec, opts.tau);
      assim_sum += logo_ssim(logo, rec);
      clean_preds.push_back(pred.predicted);
      clean_labels.push_back(c);
      ++wm_count;

      for (size_t ai = 0; ai < opts.grid.size(); ++ai) {
        AttackSpec spec = opts.grid[ai];
        if (spec.seed == 0) {
          spec.seed = hash_combine(opts.seed, (ci * num_sources + c) * opts.grid.size() + ai);
        }
        const Image attacked = apply_attack(spec, wm);
        auto [rec_a, pred_a] = model.extractor->extract(attacked);
        attack_acc[ai].abr += bit_recovery_accuracy(logo, rec_a, opts.tau);
        attack_acc[ai].assim += logo_ssim(logo, rec_a);
        attack_acc[ai].preds.push_back(pred_a.predicted);
        attack_acc[ai].labels.push_back(c);
        attack_acc[ai].n += 1;
      }
    }

    // Unwatermarked originals must land in the dedicated class.
    auto [rec_o, pred_o] = model.extractor->extract(cover);
    (void)rec_o;
    clean_preds.push_back(pred_o.predicted);
    clean_labels.push_back(no_wm_class);
    for (size_t ai = 0; ai < opts.grid.size(); ++ai) {
      AttackSpec spec = opts.grid[ai];
      if (spec.seed == 0) {
        spec.seed = hash_combine(opts.seed ^ 0x517AFFull, ci * opts.grid.size() + ai);
      }
      const Image attacked = apply_attack(spec, cover);
      auto [rec_ao, pred_ao] = model.extractor->extract(attacked);
      (void)rec_ao;
      attack_acc[ai].preds.push_back(pred_ao.predicted);
      attack_acc[ai].labels.push_back(no_wm_class);
    }
  }

  report.psnr_db = psnr_sum / static_cast<double>(wm_count);
  report.ssim = ssim_sum / static_cast<double>(wm_count);
  report.lpips = lpips_sum / static_cast<double>(wm_count);
  report.a_br = abr_sum / static_cast<double>(wm_count);
  report.a_ssim = assim_sum / static_cast<double>(wm_count);
  const IdentificationResult clean = identification_accuracy(clean_preds, clean_labels, num_classes);
  report.a_id = clean.a_id;
  report.confusion = clean.confusion;
  for (size_t ai = 0; ai < opts.grid.size(); ++ai) {
    AttackBreakdown b;
    b.a_br = attack_acc[ai].abr / std::max<int64_t>(1, attack_acc[ai].n);
    b.a_ssim = attack_acc[ai].assim / std::max<int64_t>(1, attack_acc[ai].n);
    b.a_id =
        identification_accuracy(attack_acc[ai].preds, attack_acc[ai].labels, num_classes).a_id;
    report.per_attack[opts.grid[ai].to_string()] = b;
  }
  return report;
}

}  // namespace saiw
