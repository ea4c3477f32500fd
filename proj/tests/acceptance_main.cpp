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
// Acceptance suite. Runs every release criterion end to end and prints one
// pass/fail line per criterion. Usage:
//   acceptance --cli <saiw binary> --config <reference config json>
//              [--checkpoint <pretrained reference checkpoint>]
//              [--scratch <dir>]
// Without --checkpoint the reference training runs from scratch.

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "saiw/evaluate.hpp"
#include "saiw/gradcheck.hpp"
#include "saiw/trainer.hpp"

namespace fs = std::filesystem;
using namespace saiw;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& desc, const std::string& detail) {
  std::cout << (pass ? "[PASS]" : "[FAIL]") << " criterion " << criterion << ": " << desc << " ("
            << detail << ")" << std::endl;
  if (!pass) ++g_failures;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo, double hi) {
  const int64_t n = shape_numel(shape);
  std::vector<Scalar> data(n);
  for (auto& v : data) v = static_cast<Scalar>(rng.uniform(lo, hi));
  Tensor t = Tensor::constant(std::move(shape), std::move(data));
  t.set_requires_grad(true);
  return t;
}

// ---- criterion 1: gradient integrity ----

double primitive_sweep(uint64_t seed) {
  Rng rng(seed);
  double worst = 0;
  auto up = [&](double v) { worst = std::max(worst, v); };
  const double eps = 1e-4;
  {
    auto a = random_tensor({2, 3}, rng, -1, 1);
    auto b = random_tensor({2, 3}, rng, 0.5, 2.0);
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          return sum_all(div(mul(add(p[0], p[1]), sub(p[0], p[1])), p[1]));
        },
        {a, b}, eps));
  }
  {
    auto x = random_tensor({3, 4}, rng, -1, 1);
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          return mean_all(mul(softmax_lastdim(p[0]), gelu(p[0])));
        },
        {x}, eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          return sum_all(mul(l2_normalize_lastdim(p[0]), sigmoid(p[0])));
        },
        {x}, eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) { return sum_all(tanh(scalar_mul(p[0], 1.3))); }, {x},
        eps));
  }
  {
    auto x = random_tensor({3, 3}, rng, 0.2, 0.9);
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          return sum_all(mul(acos(clamp(p[0], -0.999, 0.999)), sqrt(p[0])));
        },
        {x}, eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) { return sum_all(mul(log(p[0]), exp(p[0]))); }, {x},
        eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) { return sum_all(mul(abs(p[0]), relu(p[0]))); }, {x},
        eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) { return sum_all(mul(cos(p[0]), softplus(p[0]))); },
        {x}, eps));
  }
  {
    auto x = random_tensor({2, 3, 4, 4}, rng, -1, 1);
    auto w = random_tensor({2, 3, 3, 3}, rng, -0.5, 0.5);
    auto b = random_tensor({2}, rng, -0.2, 0.2);
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          auto y = conv2d(p[0], p[1], p[2], 1, 1);
          return sum_all(mul(y, y));
        },
        {x, w, b}, eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          return sum_all(conv2d(p[0], p[1], p[2], 2, 1));
        },
        {x, w, b}, eps));
    auto dw = random_tensor({3, 1, 3, 3}, rng, -0.5, 0.5);
    auto db = random_tensor({3}, rng, -0.1, 0.1);
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          auto y = dwconv2d(p[0], p[1], p[2], 1);
          return sum_all(mul(y, y));
        },
        {x, dw, db}, eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          auto y = avg_pool2d(p[0], 2, 2);
          return sum_all(mul(y, y));
        },
        {x}, eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          auto y = upsample_nearest2x(p[0]);
          return sum_all(mul(y, y));
        },
        {x}, eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) { return sum_all(global_avg_pool(p[0])); }, {x}, eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          auto y = l2_normalize_channels(p[0]);
          return sum_all(mul(y, p[0]));
        },
        {x}, eps));
    auto m = random_tensor({2, 1, 4, 4}, rng, 0, 1);
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          auto y = spatial_scale(p[0], p[1]);
          return sum_all(mul(y, y));
        },
        {x, m}, eps));
    auto gm = random_tensor({3}, rng, 0.5, 1.5);
    auto bt = random_tensor({3}, rng, -0.5, 0.5);
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          auto y = film(p[0], p[1], p[2]);
          return sum_all(mul(y, y));
        },
        {x, gm, bt}, eps));
    auto q = random_tensor({2, 3, 4, 4}, rng, -1, 1);
    q.set_requires_grad(false);
    up(gradient_check(
        [&q](const std::vector<Tensor>& p) {
          auto y = batch_norm2d_train(p[0], p[1], p[2], nullptr, nullptr);
          return sum_all(mul(y, q));
        },
        {x, gm, bt}, eps));
  }
  {
    auto xt = random_tensor({1, 2, 3, 3}, rng, -1, 1);
    auto wt = random_tensor({2, 3, 4, 4}, rng, -0.5, 0.5);
    auto bt2 = random_tensor({3}, rng, -0.2, 0.2);
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          auto y = conv_transpose2d(p[0], p[1], p[2], 2, 1);
          return sum_all(mul(y, y));
        },
        {xt, wt, bt2}, eps));
  }
  {
    auto a = random_tensor({2, 3, 4}, rng, -1, 1);
    auto bm = random_tensor({2, 4, 2}, rng, -1, 1);
    up(gradient_check(
        [](const std::vector<Tensor>& p) { return sum_all(matmul(p[0], p[1])); }, {a, bm}, eps));
    auto g = random_tensor({4}, rng, 0.5, 1.5);
    auto b2 = random_tensor({4}, rng, -0.5, 0.5);
    auto q = random_tensor({2, 3, 4}, rng, -1, 1);
    q.set_requires_grad(false);
    up(gradient_check(
        [&q](const std::vector<Tensor>& p) {
          return sum_all(mul(layer_norm_lastdim(p[0], p[1], p[2]), q));
        },
        {a, g, b2}, eps));
  }
  {
    auto x = random_tensor({1, 3, 4, 4}, rng, -1, 1);
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          auto wp = window_partition(p[0], 2);
          auto back = window_merge(wp, 2, 1, 3, 4, 4);
          return sum_all(mul(back, roll2d(p[0], 1, -1)));
        },
        {x}, eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          auto r = reshape(permute(p[0], {0, 2, 3, 1}), {4, 12});
          auto s = sum_lastdim(r);
          auto bc = broadcast_to(s, {4, 12});
          return sum_all(mul(bc, r));
        },
        {x}, eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          auto parts = concat({p[0], p[0]}, 1);
          auto sl = slice(parts, {0, 2, 1, 1}, {1, 3, 2, 2});
          return sum_all(mul(sl, sl));
        },
        {x}, eps));
    up(gradient_check(
        [](const std::vector<Tensor>& p) {
          return sum_all(mul(sum_channels(p[0]), sum_channels(p[0])));
        },
        {x}, eps));
  }
  return worst;
}

ModelConfig tiny_model(uint64_t seed) {
  ModelConfig cfg;
  cfg.image_size = 32;
  cfg.logo_size = 8;
  cfg.num_sources = 2;
  cfg.init_seed = seed;
  cfg.embedder.widths = {4, 6, 8, 8};
  cfg.embedder.attn_dim = 8;
  cfg.embedder.attn_heads = 2;
  cfg.embedder.attn_layers = 2;
  cfg.extractor.widths = {4, 6, 8, 8};
  cfg.extractor.depths = {1, 1, 1, 1};
  cfg.extractor.embedding_dim = 16;
  cfg.finalize();
  return cfg;
}

void criterion1() {
  const auto t0 = Clock::now();
  double worst_prim = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    worst_prim = std::max(worst_prim, primitive_sweep(seed));
  }
  double worst_net = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    SaiwModel model(tiny_model(seed));
    Rng wr(seed * 31 + 7);
    Tensor fw = model.params.get("embedder.final.w");
    for (int64_t i = 0; i < fw.numel(); ++i) fw.data()[i] = Scalar(0.3 * wr.normal());
    for (int s = 1; s <= 10; ++s) {
      Tensor w = model.params.get("embedder.film.site" + std::to_string(s) + ".w");
      for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = Scalar(0.02 * wr.normal());
    }
    Image cover(32, 32, 3);
    for (auto& v : cover.px) v = wr.uniform(0.25, 0.75);
    Image logo(8, 8, 1);
    for (auto& v : logo.px) v = wr.uniform() > 0.5 ? 1.0 : 0.0;
    Tensor covers = image_to_tensor(cover);
    Tensor logos = image_to_tensor(logo);
    std::vector<RealMap> guidance = {guidance_map(cover)};
    auto efn = [&](const std::vector<Tensor>&) {
      EmbedOutput out = model.embedder->embed_tensors(covers, guidance, logos, true);
      return mean_all(mul(out.watermarked, out.watermarked));
    };
    Rng pick(seed * 17 + 3);
    worst_net = std::max(worst_net,
                         gradient_check_sampled(efn, model.params.all(), 1e-4, 1, pick));
    auto xfn = [&](const std::vector<Tensor>&) {
      ExtractOutput out = model.extractor->forward(covers);
      return add(mean_all(mul(out.logo, out.logo)), mean_all(out.scores));
    };
    worst_net = std::max(worst_net,
                         gradient_check_sampled(xfn, model.params.all(), 1e-4, 1, pick));
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  std::ostringstream detail;
  detail << "primitive max rel err " << worst_prim << ", composed nets " << worst_net << ", "
         << secs << " s";
  report(1, worst_prim < 1e-3 && worst_net < 1e-3 && secs < 300, "gradient integrity",
         detail.str());
}

// ---- criterion 2: perceptual map golden values ----

RealMap guidance_oracle(const Image& cover) {
  const int h = cover.h, w = cover.w;
  auto clampi = [](int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); };
  std::vector<double> lum(static_cast<size_t>(h) * w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      lum[y * w + x] = 255.0 * (0.299 * cover.at(y, x, 0) + 0.587 * cover.at(y, x, 1) +
                                0.114 * cover.at(y, x, 2));
  RealMap out(h, w);
  const double ox[3][3] = {{-1, 0, 1}, {-2, 0, 2}, {-1, 0, 1}};
  const double oy[3][3] = {{-1, -2, -1}, {0, 0, 0}, {1, 2, 1}};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double bg = 0;
      for (int u = -2; u <= 2; ++u)
        for (int v = -2; v <= 2; ++v)
          bg += lum[clampi(y + u, 0, h - 1) * w + clampi(x + v, 0, w - 1)] / 25.0;
      const double pla = bg <= 127.0 ? 17.0 * (1.0 - std::sqrt(bg / 127.0)) + 3.0
                                     : 3.0 * (bg - 127.0) / 128.0 + 3.0;
      double gx = 0, gy = 0;
      for (int u = -1; u <= 1; ++u)
        for (int v = -1; v <= 1; ++v) {
          const double s = lum[clampi(y - u, 0, h - 1) * w + clampi(x - v, 0, w - 1)];
          gx += ox[u + 1][v + 1] * s;
          gy += oy[u + 1][v + 1] * s;
        }
      const double grad = std::sqrt(gx * gx + gy * gy);
      const double pcm = 1.872 * std::pow(grad, 8.0) / (grad * grad + 676.0);
      const double fused = pla + pcm - 0.3 * std::min(pla, pcm);
      out.at(y, x) = std::min(3.0, std::max(0.0, std::max(0.0, fused) / 30.0));
    }
  }
  return out;
}

void criterion2() {
  bool pass = true;
  std::ostringstream detail;
  RealMap probe(1, 3);
  probe.v = {0.0, 127.0, 255.0};
  const RealMap pla = luminance_adaptation(probe);
  pass = pass && std::abs(pla.v[0] - 20.0) < 1e-9 && std::abs(pla.v[1] - 3.0) < 1e-9 &&
         std::abs(pla.v[2] - 6.0) < 1e-9;
  detail << "P_LA(0,127,255)=(" << pla.v[0] << "," << pla.v[1] << "," << pla.v[2] << ")";

  RealMap flat(8, 8, 100.0);
  for (double v : contrast_masking(flat).v) pass = pass && v == 0.0;

  Image gray(16, 16, 3, 0.5);
  const RealMap pn = guidance_map(gray);
  for (double v : pn.v) pass = pass && std::abs(v - 0.1004) < 1e-3;
  detail << ", P_n(0.5)=" << pn.v[0];

  double worst = 0;
  for (uint64_t seed = 1; seed <= 20; ++seed) {
    Rng rng(seed);
    Image img(16, 16, 3);
    for (auto& v : img.px) v = rng.uniform();
    const RealMap got = guidance_map(img);
    const RealMap want = guidance_oracle(img);
    for (size_t i = 0; i < got.v.size(); ++i) {
      worst = std::max(worst, std::abs(got.v[i] - want.v[i]));
    }
  }
  pass = pass && worst < 1e-9;
  detail << ", oracle max dev " << worst;
  report(2, pass, "perceptual-map golden values", detail.str());
}

// ---- criterion 3: metric oracle equivalence ----

void criterion3() {
  Rng rng(41);
  double worst = 0;
  for (int t = 0; t < 50; ++t) {
    Image a(16, 16, (t % 2) ? 3 : 1), b(16, 16, (t % 2) ? 3 : 1);
    for (auto& v : a.px) v = rng.uniform();
    for (auto& v : b.px) v = rng.uniform();
    // PSNR oracle
    double mse = 0;
    for (size_t i = 0; i < a.px.size(); ++i) mse += (a.px[i] - b.px[i]) * (a.px[i] - b.px[i]);
    mse /= a.px.size();
    worst = std::max(worst, std::abs(psnr(a, b) - 10.0 * std::log10(1.0 / mse)));
    // SSIM oracle (naive windows)
    const int win = 11;
    double wgt[11][11], wsum = 0;
    for (int y = 0; y < win; ++y)
      for (int x = 0; x < win; ++x) {
        wgt[y][x] = std::exp(-((y - 5.0) * (y - 5.0) + (x - 5.0) * (x - 5.0)) / 4.5);
        wsum += wgt[y][x];
      }
    for (int y = 0; y < win; ++y)
      for (int x = 0; x < win; ++x) wgt[y][x] /= wsum;
    double total = 0;
    int64_t count = 0;
    for (int ch = 0; ch < a.c; ++ch) {
      for (int y = 0; y + win <= a.h; ++y) {
        for (int x = 0; x + win <= a.w; ++x) {
          double ma = 0, mb = 0, va = 0, vb = 0, cov = 0;
          for (int u = 0; u < win; ++u)
            for (int v = 0; v < win; ++v) {
              ma += wgt[u][v] * a.at(y + u, x + v, ch);
              mb += wgt[u][v] * b.at(y + u, x + v, ch);
            }
          for (int u = 0; u < win; ++u)
            for (int v = 0; v < win; ++v) {
              const double da = a.at(y + u, x + v, ch) - ma;
              const double db = b.at(y + u, x + v, ch) - mb;
              va += wgt[u][v] * (da * da);
              vb += wgt[u][v] * (db * db);
              cov += wgt[u][v] * (da * db);
            }
          total += ((2 * ma * mb + 1e-4) * (2 * cov + 9e-4)) /
                   ((ma * ma + mb * mb + 1e-4) * (va + vb + 9e-4));
          ++count;
        }
      }
    }
    worst = std::max(worst, std::abs(ssim(a, b) - total / count));
    // A_br oracle
    int64_t agree = 0;
    for (size_t i = 0; i < a.px.size(); ++i) agree += (a.px[i] > 0.5) == (b.px[i] > 0.5);
    Image a1(16, 16, 1), b1(16, 16, 1);
    for (int i = 0; i < 256; ++i) {
      a1.px[i] = a.px[i % a.px.size()];
      b1.px[i] = b.px[i % b.px.size()];
    }
    int64_t agree1 = 0;
    for (int i = 0; i < 256; ++i) agree1 += (a1.px[i] > 0.5) == (b1.px[i] > 0.5);
    worst = std::max(worst, std::abs(bit_recovery_accuracy(a1, b1) - agree1 / 256.0));
    (void)agree;
  }
  Image u1(4, 4, 3, 0.2), u2(4, 4, 3, 0.3);
  const double p20 = psnr(u1, u2);
  const bool pass = worst < 1e-9 && std::abs(p20 - 20.0) < 1e-9;
  std::ostringstream detail;
  detail << "max dev " << worst << ", uniform-0.1 PSNR " << p20;
  report(3, pass, "metric oracle equivalence", detail.str());
}

// ---- criterion 4: loss reductions ----

void criterion4() {
  bool pass = true;
  std::ostringstream detail;
  // arcface m=0 equals scaled-cosine cross-entropy
  Rng rng(43);
  Tensor emb = Tensor::constant({4, 8}, [&] {
    std::vector<Scalar> v(32);
    for (auto& e : v) e = static_cast<Scalar>(rng.uniform(-1, 1));
    return v;
  }());
  {
    Scalar* p = emb.data();
    for (int r = 0; r < 4; ++r) {
      double s = 0;
      for (int i = 0; i < 8; ++i) s += double(p[r * 8 + i]) * p[r * 8 + i];
      for (int i = 0; i < 8; ++i) p[r * 8 + i] /= static_cast<Scalar>(std::sqrt(s));
    }
  }
  Tensor cw = Tensor::constant({3, 8}, [&] {
    std::vector<Scalar> v(24);
    for (auto& e : v) e = static_cast<Scalar>(rng.uniform(-1, 1));
    return v;
  }());
  {
    Scalar* p = cw.data();
    for (int r = 0; r < 3; ++r) {
      double s = 0;
      for (int i = 0; i < 8; ++i) s += double(p[r * 8 + i]) * p[r * 8 + i];
      for (int i = 0; i < 8; ++i) p[r * 8 + i] /= static_cast<Scalar>(std::sqrt(s));
    }
  }
  std::vector<int> labels = {0, 1, 2, 1};
  const double got = arcface_loss(emb, cw, labels, {0.0, 30.0}).item();
  double want = 0;
  for (int i = 0; i < 4; ++i) {
    double logits[3], mx = -1e30;
    for (int j = 0; j < 3; ++j) {
      double dot = 0;
      for (int k = 0; k < 8; ++k) dot += double(emb.data()[i * 8 + k]) * cw.data()[j * 8 + k];
      logits[j] = 30.0 * dot;
      mx = std::max(mx, logits[j]);
    }
    double denom = 0;
    for (double l : logits) denom += std::exp(l - mx);
    want += -(logits[labels[i]] - mx - std::log(denom));
  }
  want /= 4.0;
  pass = pass && std::abs(got - want) < 1e-9;
  detail << "m=0 reduction dev " << std::abs(got - want);

  // Hand-computed Eq. 5 cases.
  Tensor e1 = Tensor::constant({1, 2}, {1.0, 0.0});
  Tensor w2 = Tensor::constant({2, 2}, {1.0, 0.0, 0.0, 1.0});
  const double l0 = arcface_loss(e1, w2, {0}, {0.0, 30.0}).item();
  const double l4 = arcface_loss(e1, w2, {0}, {0.4, 30.0}).item();
  pass = pass && std::abs(l0 - std::log(1.0 + std::exp(-30.0))) < 1e-9;
  pass = pass && std::abs(l4 - std::log(1.0 + std::exp(-30.0 * std::cos(0.4)))) < 1e-9;
  detail << ", hand cases (" << l0 << ", " << l4 << ")";

  // Weighted sums vs hand arithmetic.
  LossWeights w;
  w.w_imp = 0.4;
  w.w_rob = 0.5;
  w.w_id = 0.1;
  const double tot =
      total_loss(Tensor::scalar(0.3), Tensor::scalar(0.6), Tensor::scalar(0.9), w).item();
  pass = pass && std::abs(tot - 0.51) < 1e-12;

  FeatureNet net;
  Tensor img_a = Tensor::constant({1, 3, 16, 16}, std::vector<Scalar>(768, 0.25));
  Tensor img_b = Tensor::constant({1, 3, 16, 16}, std::vector<Scalar>(768, 0.35));
  LossWeights l1_only = w;
  l1_only.w1 = 1.0;
  l1_only.w_lpips = 0.0;
  const double imp = imperceptibility_loss(img_a, img_b, l1_only, net).item();
  pass = pass && std::abs(imp - 0.1) < 1e-12;
  LossWeights mix = w;
  const double lp = lpips_distance(img_a, img_b, net).item();
  const double imp_mix = imperceptibility_loss(img_a, img_b, mix, net).item();
  pass = pass && std::abs(imp_mix - (0.8 * 0.1 + 0.2 * lp)) < 1e-12;

  Tensor logo = Tensor::constant({1, 1, 16, 16}, std::vector<Scalar>(256, 1.0));
  Tensor rec = Tensor::constant({1, 1, 16, 16}, std::vector<Scalar>(256, 0.8));
  const double rl1 = l1_mean(rec, logo).item();
  const double rss = 1.0 - ssim_graph(rec, logo, 11).item();
  const double rlp = lpips_distance(rec, logo, net).item();
  const double rob = robustness_loss(logo, {rec}, mix, net).item();
  pass = pass && std::abs(rob - (0.6 * rl1 + 0.3 * rss + 0.1 * rlp)) < 1e-12;
  detail << ", Eq.2/3/4 arithmetic ok";
  report(4, pass, "loss reductions", detail.str());
}

// ---- criterion 5: film and zero-residual contracts ----

void criterion5() {
  bool pass = true;
  Rng rng(47);
  Tensor x = Tensor::constant({2, 5, 4, 4}, [&] {
    std::vector<Scalar> v(160);
    for (auto& e : v) e = static_cast<Scalar>(rng.uniform(-2, 2));
    return v;
  }());
  Tensor y = film(x, Tensor::full({5}, 1.0), Tensor::zeros({5}));
  pass = pass && std::memcmp(x.data(), y.data(), x.numel() * sizeof(Scalar)) == 0;

  SaiwModel model(tiny_model(53));
  std::vector<Image> covers, logos;
  for (int i = 0; i < 10; ++i) {
    Image cover(32, 32, 3), logo(8, 8, 1);
    for (auto& v : cover.px) v = rng.uniform();
    for (auto& v : logo.px) v = rng.uniform() > 0.5 ? 1.0 : 0.0;
    covers.push_back(cover);
    logos.push_back(logo);
  }
  EmbedOutput out = model.embedder->embed_batch(covers, logos, false);
  for (int i = 0; i < 10 && pass; ++i) {
    Tensor ct = image_to_tensor(covers[i]);
    pass = pass && std::memcmp(out.watermarked.data() + i * ct.numel(), ct.data(),
                               ct.numel() * sizeof(Scalar)) == 0;
  }
  report(5, pass, "FiLM identity and zero-residual initialization bit-exact",
         pass ? "10/10 covers reproduced" : "mismatch found");
}

// ---- criterion 6: distortion determinism and JPEG sanity ----

Image natural_texture(int size, uint64_t seed) {
  Rng rng(seed);
  Image img(size, size, 3);
  const double cx = rng.uniform(0.2, 0.8) * size, cy = rng.uniform(0.2, 0.8) * size;
  const double rad = rng.uniform(0.15, 0.35) * size;
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double g = 0.2 + 0.6 * (x + y) / (2.0 * size);
      const double d2 = ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (rad * rad);
      for (int c = 0; c < 3; ++c) {
        img.at(y, x, c) =
            std::clamp(g + 0.3 * std::exp(-d2) + 0.08 * rng.normal() - 0.04 * c, 0.0, 1.0);
      }
    }
  return gaussian_blur(img, 3, 0.8);
}

void criterion6() {
  bool pass = true;
  std::ostringstream detail;
  Image img = natural_texture(48, 3);
  for (const char* s : {"jpeg:50", "blur:5:1.2", "noise:0.03:seed=9", "brightness:0.07",
                        "contrast:1.15", "filter:A", "rotate:10", "crop:0.2", "resize:0.5",
                        "compose:[blur:3:0.8;jpeg:80;noise:0.01:seed=4]"}) {
    const AttackSpec spec = AttackSpec::parse(s);
    const Image o1 = apply_attack(spec, img);
    const Image o2 = apply_attack(spec, img);
    pass = pass &&
           std::memcmp(o1.px.data(), o2.px.data(), o1.px.size() * sizeof(double)) == 0;
  }
  detail << "determinism ok";
  auto mse = [](const Image& a, const Image& b) {
    double s = 0;
    for (size_t i = 0; i < a.px.size(); ++i) s += (a.px[i] - b.px[i]) * (a.px[i] - b.px[i]);
    return s / a.px.size();
  };
  for (uint64_t seed = 1; seed <= 3; ++seed) {
    Image tex = natural_texture(48, seed * 11);
    const double m50 = mse(tex, jpeg_roundtrip(tex, 50));
    const double m75 = mse(tex, jpeg_roundtrip(tex, 75));
    const double m95 = mse(tex, jpeg_roundtrip(tex, 95));
    pass = pass && m50 >= m75 && m75 >= m95;
    if (seed == 1) detail << ", MSE(50/75/95)=" << m50 << "/" << m75 << "/" << m95;
  }
  Image solid(24, 24, 3, 0.42);
  const Image q100 = jpeg_roundtrip(solid, 100);
  double worst = 0;
  for (size_t i = 0; i < solid.px.size(); ++i) {
    worst = std::max(worst, std::abs(q100.px[i] - solid.px[i]));
  }
  pass = pass && worst <= 2.0 / 255.0;
  detail << ", QF100 constant err " << worst;
  report(6, pass, "distortion determinism and JPEG sanity", detail.str());
}

// ---- criteria 7-9 share the trained reference model ----

struct RunResult {
  int exit_code = -1;
  std::string out;
};

RunResult run_cmd(const std::string& cmd) {
  const std::string out_file = "/tmp/saiw_accept_out.txt";
  const int status = std::system((cmd + " > " + out_file + " 2>&1").c_str());
  RunResult r;
  if (WIFEXITED(status)) r.exit_code = WEXITSTATUS(status);
  std::ifstream f(out_file);
  r.out.assign((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  std::string cli_path, config_path, checkpoint_path, scratch = "/tmp/saiw_acceptance";
  for (int i = 1; i + 1 < argc; i += 2) {
    const std::string flag = argv[i];
    if (flag == "--cli") cli_path = argv[i + 1];
    else if (flag == "--config") config_path = argv[i + 1];
    else if (flag == "--checkpoint") checkpoint_path = argv[i + 1];
    else if (flag == "--scratch") scratch = argv[i + 1];
  }
  if (cli_path.empty() || config_path.empty()) {
    std::cerr << "usage: acceptance --cli <saiw> --config <reference.json> [--checkpoint ckpt]\n";
    return 2;
  }
  fs::create_directories(scratch);

  criterion1();
  criterion2();
  criterion3();
  criterion4();
  criterion5();
  criterion6();

  // ---- criterion 7: desk-scale end-to-end ----
  std::ifstream cf(config_path);
  std::string config_text((std::istreambuf_iterator<char>(cf)), std::istreambuf_iterator<char>());
  TrainConfig ref_cfg = TrainConfig::from_json(config_text);

  std::unique_ptr<TrainState> state;
  double train_minutes = 0;
  if (!checkpoint_path.empty() && fs::exists(checkpoint_path)) {
    state = load_checkpoint(checkpoint_path);
    std::cout << "(criterion 7 reuses checkpoint " << checkpoint_path << ", step "
              << state->step << ")" << std::endl;
  } else {
    const auto t0 = Clock::now();
    state = std::make_unique<TrainState>(ref_cfg);
    train_run(*state, nullptr, nullptr);
    train_minutes = std::chrono::duration<double>(Clock::now() - t0).count() / 60.0;
    checkpoint_path = scratch + "/reference.ckpt";
    save_checkpoint(*state, checkpoint_path);
  }

  DatasetParams eval_params = state->cfg.data;
  eval_params.count = state->cfg.eval_covers;
  eval_params.seed = state->cfg.eval_seed;
  Dataset eval_data = synthesize_dataset(eval_params);
  eval_data.logos = state->train_data.logos;
  EvalOptions opts;
  opts.grid = {AttackSpec::parse("jpeg:75"), AttackSpec::parse("blur:3:1.0"),
               AttackSpec::parse("noise:0.02")};
  opts.seed = state->cfg.eval_seed;
  const MetricReport rep = evaluate_model(*state->model, *state->featnet, eval_data, opts);
  double post_min = 1.0;
  for (const auto& [name, b] : rep.per_attack) post_min = std::min(post_min, b.a_br);
  {
    const bool pass = rep.a_br >= 0.95 && rep.a_ssim >= 0.90 && rep.psnr_db >= 30.0 &&
                      rep.a_id >= 0.90 && post_min >= 0.85 &&
                      state->cfg.steps <= 2000 && state->cfg.batch == 8;
    std::ostringstream detail;
    detail << "clean A_br=" << rep.a_br << " A_ssim=" << rep.a_ssim << " PSNR=" << rep.psnr_db
           << " A_id=" << rep.a_id << " post-attack min A_br=" << post_min << " steps="
           << state->step;
    if (train_minutes > 0) detail << " train=" << train_minutes << " min";
    report(7, pass, "desk-scale end-to-end thresholds", detail.str());
  }

  // ---- criterion 8: determinism ----
  {
    TrainConfig det_cfg = ref_cfg;
    det_cfg.steps = 40;
    det_cfg.eval_every = 0;
    TrainState a(det_cfg), b(det_cfg);
    train_run(a, nullptr, nullptr);
    train_run(b, nullptr, nullptr);
    const std::string pa = scratch + "/det_a.ckpt", pb = scratch + "/det_b.ckpt";
    save_checkpoint(a, pa);
    save_checkpoint(b, pb);
    std::ifstream fa(pa, std::ios::binary), fb(pb, std::ios::binary);
    std::string ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::string bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    const bool identical = ba == bb;

    // Save/load round trip preserves forward outputs bit-exactly (on the
    // fully trained reference model).
    EmbedOutput before =
        state->model->embedder->embed_batch({eval_data.covers[0]}, {eval_data.logos[0]}, false);
    auto reloaded = load_checkpoint(checkpoint_path);
    EmbedOutput after = reloaded->model->embedder->embed_batch({eval_data.covers[0]},
                                                               {eval_data.logos[0]}, false);
    const bool roundtrip =
        std::memcmp(before.watermarked.data(), after.watermarked.data(),
                    before.watermarked.numel() * sizeof(Scalar)) == 0;
    std::ostringstream detail;
    detail << (identical ? "twin runs bit-identical" : "twin runs DIFFER") << " (40-step pair), "
           << (roundtrip ? "save/load forward bit-exact" : "save/load forward DIFFERS");
    report(8, identical && roundtrip, "training determinism and checkpoint round trip",
           detail.str());
  }

  // ---- criterion 9: CLI round trip ----
  {
    const std::string dir = scratch + "/cli9";
    fs::create_directories(dir);
    const int covers = std::min<int>(20, static_cast<int>(eval_data.covers.size()));
    int good = 0;
    for (int i = 0; i < covers; ++i) {
      const int cls = i % state->cfg.model.num_sources;
      const std::string cover = dir + "/c" + std::to_string(i) + ".ppm";
      const std::string logo = dir + "/l" + std::to_string(i) + ".pgm";
      save_image(cover, eval_data.covers[i]);
      save_image(logo, eval_data.logos[cls]);
      const std::string wm = dir + "/wm" + std::to_string(i) + ".ppm";
      const std::string att = dir + "/att" + std::to_string(i) + ".ppm";
      RunResult r1 = run_cmd(cli_path + " embed --checkpoint " + checkpoint_path + " --cover " +
                             cover + " --logo " + logo + " --out " + wm);
      RunResult r2 = run_cmd(cli_path + " attack --in " + wm + " --out " + att + " --spec jpeg:75");
      RunResult r3 = run_cmd(cli_path + " extract --checkpoint " + checkpoint_path + " --in " +
                             att + " --expected-logo " + logo);
      if (r1.exit_code || r2.exit_code || r3.exit_code) continue;
      double a_br = -1;
      const auto pos = r3.out.find("a_br=");
      if (pos != std::string::npos) a_br = std::atof(r3.out.c_str() + pos + 5);
      const bool correct_class =
          r3.out.find("predicted=source-" + std::to_string(cls) + "\n") != std::string::npos;
      if (a_br >= 0.85 && correct_class) ++good;
    }
    std::ostringstream detail;
    detail << good << "/" << covers << " covers with A_br >= 0.85 and correct class";
    report(9, good >= static_cast<int>(std::ceil(0.9 * covers)), "CLI embed/attack/extract round trip",
           detail.str());
  }

  if (g_failures == 0) {
    std::cout << "acceptance: all criteria passed" << std::endl;
    return 0;
  }
  std::cout << "acceptance: " << g_failures << " criterion/criteria FAILED" << std::endl;
  return 1;
}
