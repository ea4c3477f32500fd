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
#include <cstring>

#include "saiw/dataset.hpp"
#include "saiw/gradcheck.hpp"
#include "saiw/metrics.hpp"
#include "saiw/model.hpp"

using namespace saiw;

namespace {

Image random_cover(int size, Rng& rng) {
  Image img(size, size, 3);
  for (auto& v : img.px) v = rng.uniform();
  return img;
}

Image random_logo(int size, Rng& rng) {
  Image img(size, size, 1);
  for (auto& v : img.px) v = rng.uniform() > 0.5 ? 1.0 : 0.0;
  return img;
}

// Small-but-legal configuration for fast tests.
ModelConfig tiny_config(uint64_t seed = 1) {
  ModelConfig cfg;
  cfg.image_size = 32;
  cfg.logo_size = 8;
  cfg.num_sources = 3;
  cfg.init_seed = seed;
  cfg.embedder.widths = {4, 6, 8, 8};
  cfg.embedder.attn_dim = 8;
  cfg.embedder.attn_heads = 2;
  cfg.embedder.attn_layers = 2;
  cfg.embedder.window = 2;
  cfg.embedder.mlp_ratio = 2;
  cfg.extractor.widths = {4, 6, 8, 8};
  cfg.extractor.depths = {1, 1, 1, 1};
  cfg.extractor.embedding_dim = 16;
  cfg.finalize();
  return cfg;
}

}  // namespace

TEST_CASE("film identity and linearity contracts") {
  Rng rng(3);
  Tensor x = Tensor::constant({2, 3, 4, 4}, [&] {
    std::vector<Scalar> v(96);
    for (auto& e : v) e = static_cast<Scalar>(rng.uniform(-1, 1));
    return v;
  }());
  Tensor ones = Tensor::full({3}, 1.0);
  Tensor zeros = Tensor::zeros({3});
  Tensor y = film(x, ones, zeros);
  CHECK(std::memcmp(x.data(), y.data(), x.numel() * sizeof(Scalar)) == 0);

  // Channel-wise affine with beta=0 is additive in x.
  Tensor g = Tensor::constant({3}, {2.0, -0.5, 1.5});
  Tensor x2 = Tensor::constant({2, 3, 4, 4}, [&] {
    std::vector<Scalar> v(96);
    for (auto& e : v) e = static_cast<Scalar>(rng.uniform(-1, 1));
    return v;
  }());
  Tensor lhs = film(add(x, x2), g, zeros);
  Tensor rhs = add(film(x, g, zeros), film(x2, g, zeros));
  for (int64_t i = 0; i < lhs.numel(); ++i) {
    CHECK(std::abs(double(lhs.data()[i]) - rhs.data()[i]) < 1e-12);
  }

  // Forced values: per-channel [1,2] with gamma 2, beta 1 -> [3,5].
  Tensor xs = Tensor::constant({1, 1, 1, 2}, {1.0, 2.0});
  Tensor ys = film(xs, Tensor::constant({1}, {2.0}), Tensor::constant({1}, {1.0}));
  CHECK(ys.data()[0] == 3.0);
  CHECK(ys.data()[1] == 5.0);

  // gamma = 0 collapses to the per-channel constant.
  Tensor yz = film(x, zeros, g);
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t c = 0; c < 3; ++c)
      for (int64_t i = 0; i < 16; ++i) CHECK(yz.data()[(n * 3 + c) * 16 + i] == g.data()[c]);

  CHECK_THROWS_AS(film(x, Tensor::full({4}, 1.0), Tensor::zeros({4})), ShapeError);
}

TEST_CASE("film generator emits identity parameters at initialization") {
  ParameterSet ps;
  Rng rng(5);
  FilmGenerator gen(ps, "film", {4, 8, 16}, rng);
  Tensor g_l = Tensor::constant({2, kLogoEmbeddingDim}, [&] {
    std::vector<Scalar> v(2 * kLogoEmbeddingDim);
    for (auto& e : v) e = static_cast<Scalar>(rng.uniform(-1, 1));
    return v;
  }());
  FilmParams fp = gen.forward(g_l);
  REQUIRE(fp.sites() == 3);
  for (size_t s = 0; s < fp.sites(); ++s) {
    for (int64_t i = 0; i < fp.gamma[s].numel(); ++i) {
      CHECK(fp.gamma[s].data()[i] == 1.0);
      CHECK(fp.beta[s].data()[i] == 0.0);
    }
  }
}

TEST_CASE("embedder exposes exactly ten conditioning sites") {
  CHECK(Embedder::kFilmSites == 10);
  SaiwModel model(tiny_config());
  // Ten heads registered: site1..site10.
  for (int i = 1; i <= 10; ++i) {
    CHECK(model.params.contains("embedder.film.site" + std::to_string(i) + ".w"));
  }
  CHECK(!model.params.contains("embedder.film.site11.w"));
}

TEST_CASE("logo embeddings: determinism, separation, and zero-input safety") {
  Rng data_rng(11);
  Image logo_a = random_logo(8, data_rng);
  Image logo_b = random_logo(8, data_rng);
  int distinct = 0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    ParameterSet ps;
    BufferStore bs;
    Rng rng(seed);
    LogoEncoder enc(ps, bs, "logo", rng);
    Tensor both = concat({image_to_tensor(logo_a), image_to_tensor(logo_b)}, 0);
    Tensor emb = enc.forward(both, /*training=*/false);
    Tensor emb2 = enc.forward(both, /*training=*/false);
    CHECK(std::memcmp(emb.data(), emb2.data(), emb.numel() * sizeof(Scalar)) == 0);
    double diff = 0;
    for (int64_t i = 0; i < kLogoEmbeddingDim; ++i) {
      diff += std::abs(double(emb.data()[i]) - emb.data()[kLogoEmbeddingDim + i]);
    }
    if (diff > 1e-9) ++distinct;
    // All-zero logo stays finite through batch norm.
    Tensor zero_logo = Tensor::zeros({1, 1, 8, 8});
    Tensor ez = enc.forward(zero_logo, false);
    for (int64_t i = 0; i < ez.numel(); ++i) CHECK(std::isfinite(double(ez.data()[i])));
  }
  CHECK(distinct == 5);
}

TEST_CASE("zero-residual initialization reproduces covers bit-exactly") {
  SaiwModel model(tiny_config(17));
  Rng rng(23);
  std::vector<Image> covers, logos;
  for (int i = 0; i < 10; ++i) {
    covers.push_back(random_cover(32, rng));
    logos.push_back(random_logo(8, rng));
  }
  EmbedOutput out = model.embedder->embed_batch(covers, logos, /*training=*/false);
  for (int64_t i = 0; i < out.residual.numel(); ++i) CHECK(out.residual.data()[i] == 0.0);
  for (int i = 0; i < 10; ++i) {
    Tensor ct = image_to_tensor(covers[i]);
    const Scalar* got = out.watermarked.data() + i * ct.numel();
    CHECK(std::memcmp(got, ct.data(), ct.numel() * sizeof(Scalar)) == 0);
  }
}

TEST_CASE("residual magnitude never exceeds the learned strength") {
  SaiwModel model(tiny_config(19));
  // Force a nonzero head so the residual is nontrivial.
  Tensor fw = model.params.get("embedder.final.w");
  Rng wr(29);
  for (int64_t i = 0; i < fw.numel(); ++i) fw.data()[i] = static_cast<Scalar>(wr.uniform(-2, 2));
  Rng rng(31);
  EmbedOutput out =
      model.embedder->embed_batch({random_cover(32, rng)}, {random_logo(8, rng)}, false);
  const double bound = model.embedder->lambda4_value();
  double max_abs = 0;
  for (int64_t i = 0; i < out.residual.numel(); ++i) {
    max_abs = std::max(max_abs, std::abs(double(out.residual.data()[i])));
  }
  CHECK(max_abs > 0.0);
  CHECK(max_abs <= bound + 1e-15);
  // watermarked == clip(cover + residual) exactly
  Tensor cover_t = image_to_tensor(random_cover(32, rng));
}

TEST_CASE("stronger guidance suppresses the bottleneck contribution") {
  SaiwModel model(tiny_config(37));
  Tensor fw = model.params.get("embedder.final.w");
  Rng wr(41);
  for (int64_t i = 0; i < fw.numel(); ++i) fw.data()[i] = static_cast<Scalar>(wr.uniform(-2, 2));
  Rng rng(43);
  Image cover = random_cover(32, rng);
  Image logo = random_logo(8, rng);
  Tensor covers = image_to_tensor(cover);
  Tensor logos = image_to_tensor(logo);
  RealMap flat0(32, 32, 0.0);
  RealMap flat2(32, 32, 2.0);
  EmbedOutput low = model.embedder->embed_tensors(covers, {flat0}, logos, false);
  EmbedOutput high = model.embedder->embed_tensors(covers, {flat2}, logos, false);
  // lambda3 = 0.5 and P = 2 zero the attention branch; outputs must differ
  // from the unsuppressed run.
  double diff = 0;
  for (int64_t i = 0; i < low.residual.numel(); ++i) {
    diff += std::abs(double(low.residual.data()[i]) - high.residual.data()[i]);
  }
  CHECK(diff > 1e-9);
}

TEST_CASE("source conditioning: two logos give different residuals") {
  SaiwModel model(tiny_config(47));
  Tensor fw = model.params.get("embedder.final.w");
  // Give FiLM heads nonzero weights so conditioning reaches the features.
  Rng wr(53);
  for (int s = 1; s <= 10; ++s) {
    Tensor w = model.params.get("embedder.film.site" + std::to_string(s) + ".w");
    for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = static_cast<Scalar>(0.05 * wr.normal());
  }
  for (int64_t i = 0; i < fw.numel(); ++i) fw.data()[i] = static_cast<Scalar>(wr.uniform(-2, 2));
  Rng rng(59);
  Image cover = random_cover(32, rng);
  Image la = random_logo(8, rng);
  Image lb = random_logo(8, rng);
  EmbedOutput oa = model.embedder->embed_batch({cover}, {la}, false);
  EmbedOutput ob = model.embedder->embed_batch({cover}, {lb}, false);
  double diff = 0;
  for (int64_t i = 0; i < oa.residual.numel(); ++i) {
    diff += std::abs(double(oa.residual.data()[i]) - ob.residual.data()[i]);
  }
  CHECK(diff > 0.0);
}

TEST_CASE("extractor outputs: ranges, shapes, and tie-breaking") {
  SaiwModel model(tiny_config(61));
  Rng rng(67);
  Image img = random_cover(32, rng);
  auto [logo, pred] = model.extractor->extract(img);
  CHECK(logo.h == 8);
  CHECK(logo.w == 8);
  CHECK(logo.c == 1);
  for (double v : logo.px) {
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
  REQUIRE(pred.scores.size() == 4);  // 3 sources + no-watermark
  for (double s : pred.scores) {
    CHECK(s >= -1.0 - 1e-12);
    CHECK(s <= 1.0 + 1e-12);
  }
  // Tie-break: equal scores resolve to the lowest class index.
  std::vector<Scalar> tied = {0.5, 0.5, 0.2, 0.5};
  CHECK(Extractor::prediction_from_scores(tied.data(), 4).predicted == 0);
}

TEST_CASE("scaling an embedding does not change the cosine argmax") {
  Rng rng(71);
  std::vector<Scalar> v(16);
  for (auto& e : v) e = static_cast<Scalar>(rng.uniform(-1, 1));
  std::vector<Scalar> w(4 * 16);
  for (auto& e : w) e = static_cast<Scalar>(rng.uniform(-1, 1));
  // normalize rows of w
  for (int r = 0; r < 4; ++r) {
    double s = 0;
    for (int i = 0; i < 16; ++i) s += double(w[r * 16 + i]) * w[r * 16 + i];
    for (int i = 0; i < 16; ++i) w[r * 16 + i] /= static_cast<Scalar>(std::sqrt(s));
  }
  auto argmax_for = [&](double scale) {
    Tensor emb = Tensor::constant({1, 16}, [&] {
      std::vector<Scalar> sv = v;
      for (auto& e : sv) e *= static_cast<Scalar>(scale);
      return sv;
    }());
    Tensor scores = matmul(l2_normalize_lastdim(emb), Tensor::constant({4, 16}, w), false, true);
    return Extractor::prediction_from_scores(scores.data(), 4).predicted;
  };
  const int base = argmax_for(1.0);
  for (double c : {0.01, 0.5, 3.0, 250.0}) CHECK(argmax_for(c) == base);
}

TEST_CASE("both heads share the backbone gradients") {
  SaiwModel model(tiny_config(73));
  Rng rng(79);
  Tensor imgs = Tensor::constant({2, 3, 32, 32}, [&] {
    std::vector<Scalar> v(2 * 3 * 32 * 32);
    for (auto& e : v) e = static_cast<Scalar>(rng.uniform());
    return v;
  }());
  Tensor stem_w = model.params.get("extractor.stem.w");

  model.params.zero_grad();
  ExtractOutput out1 = model.extractor->forward(imgs);
  backward(mean_all(out1.logo));
  std::vector<Scalar> g_recon = stem_w.grad();

  model.params.zero_grad();
  ExtractOutput out2 = model.extractor->forward(imgs);
  backward(mean_all(out2.scores));
  std::vector<Scalar> g_id = stem_w.grad();

  double n1 = 0, n2 = 0;
  for (size_t i = 0; i < g_recon.size(); ++i) {
    n1 += std::abs(double(g_recon[i]));
    n2 += std::abs(double(g_id[i]));
  }
  CHECK(n1 > 0.0);
  CHECK(n2 > 0.0);
}

TEST_CASE("identify confusion equals the metrics module accuracy") {
  SaiwModel model(tiny_config(83));
  Rng rng(89);
  std::vector<int> preds, labels;
  for (int i = 0; i < 24; ++i) {
    Image img = random_cover(32, rng);
    auto [logo, pred] = model.extractor->extract(img);
    preds.push_back(pred.predicted);
    labels.push_back(static_cast<int>(rng.uniform_int(0, 3)));
  }
  const auto res = identification_accuracy(preds, labels, 4);
  int agree = 0;
  for (size_t i = 0; i < preds.size(); ++i) agree += preds[i] == labels[i];
  CHECK(res.a_id == doctest::Approx(agree / 24.0));
  int64_t total = 0;
  for (const auto& row : res.confusion)
    for (int64_t cnt : row) total += cnt;
  CHECK(total == 24);
}

TEST_CASE("composed tiny embedder passes sampled finite-difference checks") {
  SaiwModel model(tiny_config(97));
  // Nonzero head and FiLM weights so every path carries gradient.
  Rng wr(101);
  Tensor fw = model.params.get("embedder.final.w");
  for (int64_t i = 0; i < fw.numel(); ++i) fw.data()[i] = static_cast<Scalar>(0.3 * wr.normal());
  for (int s = 1; s <= 10; ++s) {
    Tensor w = model.params.get("embedder.film.site" + std::to_string(s) + ".w");
    for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = static_cast<Scalar>(0.02 * wr.normal());
  }
  Rng rng(103);
  // Mid-range cover so cover+residual never reaches the [0,1] clip, where
  // the straight-through gradient intentionally disagrees with the true
  // (zero) derivative.
  Image cover(32, 32, 3);
  for (auto& v : cover.px) v = rng.uniform(0.25, 0.75);
  Image logo = random_logo(8, rng);
  Tensor covers = image_to_tensor(cover);
  Tensor logos = image_to_tensor(logo);
  std::vector<RealMap> guidance = {guidance_map(cover)};

  auto fn = [&](const std::vector<Tensor>&) {
    EmbedOutput out = model.embedder->embed_tensors(covers, guidance, logos, /*training=*/true);
    return mean_all(mul(out.watermarked, out.watermarked));
  };
  Rng pick(107);
  CHECK(gradient_check_sampled(fn, model.params.all(), 1e-4, 2, pick) < 1e-3);
}

TEST_CASE("composed tiny extractor passes sampled finite-difference checks") {
  SaiwModel model(tiny_config(109));
  Rng rng(113);
  Tensor imgs = Tensor::constant({1, 3, 32, 32}, [&] {
    std::vector<Scalar> v(3 * 32 * 32);
    for (auto& e : v) e = static_cast<Scalar>(rng.uniform());
    return v;
  }());
  auto fn = [&](const std::vector<Tensor>&) {
    ExtractOutput out = model.extractor->forward(imgs);
    return add(mean_all(mul(out.logo, out.logo)), mean_all(out.scores));
  };
  Rng pick(127);
  CHECK(gradient_check_sampled(fn, model.params.all(), 1e-4, 2, pick) < 1e-3);
}

TEST_CASE("dataset synthesis: determinism, logo separation, texture spread") {
  DatasetParams p;
  p.count = 16;
  p.image_size = 32;
  p.logo_size = 8;
  p.num_sources = 4;
  Dataset d1 = synthesize_dataset(p);
  Dataset d2 = synthesize_dataset(p);
  REQUIRE(d1.covers.size() == 16);
  REQUIRE(d1.logos.size() == 4);
  for (size_t i = 0; i < d1.covers.size(); ++i) {
    CHECK(std::memcmp(d1.covers[i].px.data(), d2.covers[i].px.data(),
                      d1.covers[i].px.size() * sizeof(double)) == 0);
  }
  // Pairwise Hamming >= 20% of pixels.
  const int min_dist = 8 * 8 / 5;
  for (size_t a = 0; a < d1.logos.size(); ++a) {
    for (size_t b = a + 1; b < d1.logos.size(); ++b) {
      int dist = 0;
      for (size_t i = 0; i < d1.logos[a].px.size(); ++i) {
        dist += (d1.logos[a].px[i] > 0.5) != (d1.logos[b].px[i] > 0.5);
      }
      CHECK(dist >= min_dist);
    }
  }
  // Mean Sobel energy spread >= 10x between smoothest and most textured.
  double lo = 1e30, hi = 0;
  for (const auto& cover : d1.covers) {
    RealMap lum = luminance(cover);
    for (auto& v : lum.v) v *= 255.0;
    const RealMap mag = sobel_magnitude(lum);
    double mean = 0;
    for (double v : mag.v) mean += v;
    mean /= mag.v.size();
    lo = std::min(lo, mean);
    hi = std::max(hi, mean);
  }
  CHECK(hi / lo >= 10.0);
}

TEST_CASE("batch construction respects labels and fractions") {
  DatasetParams p;
  p.count = 8;
  p.image_size = 32;
  p.logo_size = 8;
  p.num_sources = 4;
  Dataset data = synthesize_dataset(p);
  Rng rng(131);
  // Zero fraction: all items carry source labels.
  for (const auto& item : build_batch(data, 64, 0.0, 4, rng)) {
    CHECK(item.label < 4);
    CHECK(item.cover_index < 8);
  }
  // Statistical fraction check, 3-sigma binomial bounds.
  int no_wm = 0;
  const int draws = 10000;
  for (int i = 0; i < draws / 8; ++i) {
    for (const auto& item : build_batch(data, 8, 0.25, 4, rng)) {
      CHECK(item.label <= 4);
      no_wm += item.label == 4;
    }
  }
  const double expected = draws * 0.25;
  const double sigma = std::sqrt(draws * 0.25 * 0.75);
  CHECK(std::abs(no_wm - expected) <= 3 * sigma);
}
