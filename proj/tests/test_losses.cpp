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

#include "saiw/gradcheck.hpp"
#include "saiw/losses.hpp"
#include "saiw/metrics.hpp"

using namespace saiw;

namespace {

Image random_image(int h, int w, int c, Rng& rng) {
  Image img(h, w, c);
  for (auto& v : img.px) v = rng.uniform();
  return img;
}

Tensor random_tensor(Shape shape, Rng& rng, double lo = 0.0, double hi = 1.0) {
  const int64_t n = shape_numel(shape);
  std::vector<Scalar> data(n);
  for (auto& v : data) v = static_cast<Scalar>(rng.uniform(lo, hi));
  return Tensor::constant(std::move(shape), std::move(data));
}

Tensor unit_rows(Shape shape, Rng& rng) {
  Tensor t = random_tensor(shape, rng, -1.0, 1.0);
  const int64_t rows = shape[0], d = shape[1];
  for (int64_t r = 0; r < rows; ++r) {
    double s = 0;
    for (int64_t i = 0; i < d; ++i) s += double(t.data()[r * d + i]) * t.data()[r * d + i];
    const double inv = 1.0 / std::sqrt(s);
    for (int64_t i = 0; i < d; ++i) t.data()[r * d + i] *= static_cast<Scalar>(inv);
  }
  return t;
}

}  // namespace

TEST_CASE("loss weight normalization is enforced") {
  LossWeights ok;
  ok.validate();
  LossWeights bad = ok;
  bad.w_imp = 0.5;  // sum now 1.1
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  LossWeights neg = ok;
  neg.w1 = -0.1;
  neg.w_lpips = 1.1;
  CHECK_THROWS_AS(neg.validate(), ConfigError);
}

TEST_CASE("lpips distance: zero on identical inputs, symmetric, positive") {
  FeatureNet net;
  Rng rng(3);
  for (int t = 0; t < 100; ++t) {
    Image a = random_image(16, 16, 3, rng);
    CHECK(lpips_value(a, a, net) == 0.0);
    Image b = random_image(16, 16, 3, rng);
    const double dab = lpips_value(a, b, net);
    const double dba = lpips_value(b, a, net);
    CHECK(dab == doctest::Approx(dba).epsilon(1e-12));
    CHECK(dab > 0.0);
  }
}

TEST_CASE("lpips matches a scalar-loop evaluation of the feature formula") {
  FeatureNet net;
  Rng rng(5);
  Tensor a = random_tensor({1, 3, 8, 8}, rng);
  Tensor b = random_tensor({1, 3, 8, 8}, rng);
  const double got = lpips_distance(a, b, net).item();

  // Oracle: take the taps, unit-normalize across channels at each location,
  // accumulate squared differences with plain loops.
  double want = 0;
  auto fa = net.features(a);
  auto fb = net.features(b);
  for (size_t l = 0; l < fa.size(); ++l) {
    const int64_t c = fa[l].dim(1), h = fa[l].dim(2), w = fa[l].dim(3);
    double layer = 0;
    for (int64_t p = 0; p < h * w; ++p) {
      double na = 0, nb = 0;
      for (int64_t k = 0; k < c; ++k) {
        na += double(fa[l].data()[k * h * w + p]) * fa[l].data()[k * h * w + p];
        nb += double(fb[l].data()[k * h * w + p]) * fb[l].data()[k * h * w + p];
      }
      na = std::max(std::sqrt(na), 1e-30);
      nb = std::max(std::sqrt(nb), 1e-30);
      for (int64_t k = 0; k < c; ++k) {
        const double d = fa[l].data()[k * h * w + p] / na - fb[l].data()[k * h * w + p] / nb;
        layer += d * d;
      }
    }
    want += layer / static_cast<double>(h * w);
  }
  CHECK(got == doctest::Approx(want).epsilon(1e-9));
}

TEST_CASE("graph SSIM agrees with the metrics implementation") {
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    Image a = random_image(16, 16, 1, rng);
    Image b = random_image(16, 16, 1, rng);
    const double graph = ssim_graph(image_to_tensor(a), image_to_tensor(b)).item();
    CHECK(std::abs(graph - ssim(a, b)) < 1e-9);
  }
}

TEST_CASE("imperceptibility loss: zero at identity, reduces to MAE, monotone") {
  FeatureNet net;
  Rng rng(11);
  Tensor cover = random_tensor({2, 3, 16, 16}, rng);
  LossWeights w;
  CHECK(imperceptibility_loss(cover, cover, w, net).item() == 0.0);

  LossWeights l1_only = w;
  l1_only.w1 = 1.0;
  l1_only.w_lpips = 0.0;
  Tensor other = random_tensor({2, 3, 16, 16}, rng);
  double mae = 0;
  for (int64_t i = 0; i < cover.numel(); ++i) {
    mae += std::abs(double(cover.data()[i]) - other.data()[i]);
  }
  mae /= cover.numel();
  CHECK(imperceptibility_loss(cover, other, l1_only, net).item() ==
        doctest::Approx(mae).epsilon(1e-12));

  // Uniform +0.1 strictly increases the L1 term (values stay in range).
  Tensor base = random_tensor({1, 3, 16, 16}, rng, 0.1, 0.5);
  Tensor lifted = scalar_add(base, 0.1);
  CHECK(imperceptibility_loss(base, lifted, l1_only, net).item() >
        imperceptibility_loss(base, base, l1_only, net).item());
}

TEST_CASE("robustness loss: zero on perfect recovery, mean over samples") {
  FeatureNet net;
  Rng rng(13);
  Tensor logo = random_tensor({2, 1, 16, 16}, rng);
  LossWeights w;
  CHECK(robustness_loss(logo, {logo, logo}, w, net).item() ==
        doctest::Approx(0.0).epsilon(1e-15));

  Tensor r1 = random_tensor({2, 1, 16, 16}, rng);
  Tensor r2 = random_tensor({2, 1, 16, 16}, rng);
  const double single1 = robustness_loss(logo, {r1}, w, net).item();
  const double single2 = robustness_loss(logo, {r2}, w, net).item();
  const double both = robustness_loss(logo, {r1, r2}, w, net).item();
  CHECK(both == doctest::Approx(0.5 * (single1 + single2)).epsilon(1e-12));

  // Hand-computed components for a single sample.
  const double l1 = l1_mean(r1, logo).item();
  const double ds = 1.0 - ssim_graph(r1, logo, 11).item();
  const double lp = lpips_distance(r1, logo, net).item();
  CHECK(single1 == doctest::Approx(w.w2 * l1 + w.w_ssim * ds + w.w_lpips2 * lp).epsilon(1e-12));

  CHECK_THROWS_AS(robustness_loss(logo, {}, w, net), Error);
}

TEST_CASE("arcface hand-computed cases") {
  // v aligned with class 0, orthogonal to class 1.
  Tensor emb = Tensor::constant({1, 2}, {1.0, 0.0});
  Tensor cw = Tensor::constant({2, 2}, {1.0, 0.0, 0.0, 1.0});
  ArcFaceParams m0{0.0, 30.0};
  const double loss0 = arcface_loss(emb, cw, {0}, m0).item();
  CHECK(loss0 == doctest::Approx(std::log(1.0 + std::exp(-30.0))).epsilon(1e-6));
  CHECK(std::abs(loss0 - 9.36e-14) < 1e-9);

  ArcFaceParams m04{0.4, 30.0};
  const double loss04 = arcface_loss(emb, cw, {0}, m04).item();
  const double expect = std::log(1.0 + std::exp(-30.0 * std::cos(0.4)));
  CHECK(std::abs(loss04 - expect) < 1e-9);
  CHECK(std::abs(loss04 - 1.0e-12) < 1e-9);
}

TEST_CASE("arcface with zero margin equals scaled-cosine cross-entropy") {
  Rng rng(17);
  Tensor emb = unit_rows({6, 8}, rng);
  Tensor cw = unit_rows({4, 8}, rng);
  std::vector<int> labels = {0, 1, 2, 3, 1, 2};
  ArcFaceParams p{0.0, 30.0};
  const double got = arcface_loss(emb, cw, labels, p).item();

  // Direct softmax cross-entropy over 30*cos logits.
  double want = 0;
  for (int i = 0; i < 6; ++i) {
    std::vector<double> logits(4);
    double mx = -1e30;
    for (int j = 0; j < 4; ++j) {
      double dot = 0;
      for (int k = 0; k < 8; ++k) dot += double(emb.data()[i * 8 + k]) * cw.data()[j * 8 + k];
      logits[j] = 30.0 * dot;
      mx = std::max(mx, logits[j]);
    }
    double denom = 0;
    for (double l : logits) denom += std::exp(l - mx);
    want += -(logits[labels[i]] - mx - std::log(denom));
  }
  want /= 6.0;
  CHECK(std::abs(got - want) < 1e-9);
}

TEST_CASE("arcface loss never decreases as the margin grows") {
  Rng rng(19);
  Tensor emb = unit_rows({5, 16}, rng);
  Tensor cw = unit_rows({3, 16}, rng);
  std::vector<int> labels = {0, 1, 2, 0, 1};
  double prev = -1;
  for (double m : {0.0, 0.1, 0.2, 0.3, 0.4, 0.6}) {
    ArcFaceParams p{m, 30.0};
    const double loss = arcface_loss(emb, cw, labels, p).item();
    CHECK(loss >= prev - 1e-12);
    prev = loss;
  }
}

TEST_CASE("arcface gradient matches finite differences away from the boundary") {
  Rng rng(23);
  Tensor raw = random_tensor({4, 8}, rng, -1.0, 1.0);
  raw.set_requires_grad(true);
  Tensor cw = unit_rows({3, 8}, rng);
  std::vector<int> labels = {0, 1, 2, 1};
  ArcFaceParams p{0.4, 30.0};
  // Normalize inside the graph so the FD perturbation stays on-sphere.
  auto fn = [&](const std::vector<Tensor>& ps) {
    return arcface_loss(l2_normalize_lastdim(ps[0]), cw, labels, p);
  };
  CHECK(gradient_check(fn, {raw}, 1e-4) < 1e-3);
}

TEST_CASE("arcface validates inputs") {
  Rng rng(29);
  Tensor emb = unit_rows({2, 4}, rng);
  Tensor cw = unit_rows({3, 4}, rng);
  ArcFaceParams p;
  CHECK_THROWS_AS(arcface_loss(emb, cw, {0, 5}, p), Error);     // label range
  Tensor bad = random_tensor({2, 4}, rng, 0.5, 1.5);            // not normalized
  CHECK_THROWS_AS(arcface_loss(bad, cw, {0, 1}, p), Error);
}

TEST_CASE("total loss weighted sum matches hand arithmetic") {
  LossWeights w;
  w.w_imp = 0.4;
  w.w_rob = 0.5;
  w.w_id = 0.1;
  Tensor imp = Tensor::scalar(0.3);
  Tensor rob = Tensor::scalar(0.6);
  Tensor id = Tensor::scalar(0.9);
  CHECK(total_loss(imp, rob, id, w).item() == doctest::Approx(0.51).epsilon(1e-12));
  Tensor zero = Tensor::scalar(0.0);
  CHECK(total_loss(zero, zero, zero, w).item() == 0.0);
  LossWeights only_imp = w;
  only_imp.w_imp = 1.0;
  only_imp.w_rob = 0.0;
  only_imp.w_id = 0.0;
  CHECK(total_loss(imp, rob, id, only_imp).item() == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("feature net is frozen and reproducible for a fixed seed") {
  FeatureNet n1(FeatureNet::kDefaultSeed), n2(FeatureNet::kDefaultSeed);
  Rng rng(31);
  Image a = random_image(16, 16, 3, rng);
  Image b = random_image(16, 16, 3, rng);
  CHECK(lpips_value(a, b, n1) == lpips_value(a, b, n2));
  FeatureNet other(12345);
  CHECK(lpips_value(a, b, n1) != lpips_value(a, b, other));
}
