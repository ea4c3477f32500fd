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

#include "saiw/losses.hpp"

#include <cmath>

#include "saiw/nn.hpp"

namespace saiw {

void LossWeights::validate() const {
  for (double v : {w_imp, w_rob, w_id, w1, w_lpips, w2, w_ssim, w_lpips2}) {
    if (v < 0) throw ConfigError("loss weights must be nonnegative");
  }
  if (std::abs(w_imp + w_rob + w_id - 1.0) > 1e-12) {
    throw ConfigError("w_imp + w_rob + w_id must equal 1");
  }
  if (std::abs(w1 + w_lpips - 1.0) > 1e-12) {
    throw ConfigError("w1 + w_lpips must equal 1");
  }
  if (std::abs(w2 + w_ssim + w_lpips2 - 1.0) > 1e-12) {
    throw ConfigError("w2 + w_ssim + w_lpips2 must equal 1");
  }
}

FeatureNet::FeatureNet(uint64_t seed) {
  Rng rng(seed);
  const int cins[3] = {3, 8, 16};
  const int couts[3] = {8, 16, 32};
  for (int l = 0; l < 3; ++l) {
    std::vector<Scalar> w(static_cast<size_t>(couts[l]) * cins[l] * 9);
    init_he_normal(w, static_cast<int64_t>(cins[l]) * 9, rng);
    weights_.push_back(Tensor::constant({couts[l], cins[l], 3, 3}, std::move(w)));
    biases_.push_back(Tensor::zeros({couts[l]}));
  }
}

std::vector<Tensor> FeatureNet::features(const Tensor& img) const {
  if (img.ndim() != 4) throw ShapeError("FeatureNet: expected NCHW");
  Tensor x = img;
  if (x.dim(1) == 1) x = concat({x, x, x}, 1);
  if (x.dim(1) != 3) throw ShapeError("FeatureNet: 1 or 3 channels");
  std::vector<Tensor> taps;
  const int strides[3] = {1, 2, 2};
  for (int l = 0; l < 3; ++l) {
    x = gelu(conv2d(x, weights_[l], biases_[l], strides[l], 1));
    taps.push_back(x);
  }
  return taps;
}

Tensor lpips_distance(const Tensor& a, const Tensor& b, const FeatureNet& net) {
  if (a.shape() != b.shape()) throw ShapeError("lpips_distance: dimension mismatch");
  const std::vector<Tensor> fa = net.features(a);
  const std::vector<Tensor> fb = net.features(b);
  Tensor total;
  for (size_t l = 0; l < fa.size(); ++l) {
    Tensor d = sub(l2_normalize_channels(fa[l]), l2_normalize_channels(fb[l]));
    // Unit channel weights: plain channel sum of squared differences,
    // averaged over space (and batch).
    Tensor term = mean_all(sum_channels(mul(d, d)));
    total = total.defined() ? add(total, term) : term;
  }
  return total;
}

double lpips_value(const Image& a, const Image& b, const FeatureNet& net) {
  return static_cast<double>(
      lpips_distance(image_to_tensor(a), image_to_tensor(b), net).item());
}

Tensor ssim_graph(const Tensor& a, const Tensor& b, int window, double sigma) {
  if (a.shape() != b.shape()) throw ShapeError("ssim_graph: shape mismatch");
  if (a.ndim() != 4) throw ShapeError("ssim_graph: expected NCHW");
  const int64_t c = a.dim(1);
  if (a.dim(2) < window || a.dim(3) < window) {
    throw ShapeError("ssim_graph: image smaller than the window");
  }
  const double c1 = 1e-4, c2 = 9e-4;
  // Shared Gaussian kernel for every channel, as a depthwise weight.
  std::vector<Scalar> k(static_cast<size_t>(window) * window);
  const int r = window / 2;
  double total = 0;
  for (int y = 0; y < window; ++y) {
    for (int x = 0; x < window; ++x) {
      const double dy = y - r, dx = x - r;
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      k[y * window + x] = static_cast<Scalar>(v);
      total += v;
    }
  }
  for (auto& v : k) v = static_cast<Scalar>(v / total);
  std::vector<Scalar> kc;
  for (int64_t i = 0; i < c; ++i) kc.insert(kc.end(), k.begin(), k.end());
  Tensor win = Tensor::constant({c, 1, window, window}, std::move(kc));
  const Tensor none;

  Tensor mu_a = dwconv2d(a, win, none, 0);
  Tensor mu_b = dwconv2d(b, win, none, 0);
  Tensor ea2 = dwconv2d(mul(a, a), win, none, 0);
  Tensor eb2 = dwconv2d(mul(b, b), win, none, 0);
  Tensor eab = dwconv2d(mul(a, b), win, none, 0);
  Tensor va = sub(ea2, mul(mu_a, mu_a));
  Tensor vb = sub(eb2, mul(mu_b, mu_b));
  Tensor cov = sub(eab, mul(mu_a, mu_b));

  Tensor num = mul(scalar_add(scalar_mul(mul(mu_a, mu_b), 2), c1),
                   scalar_add(scalar_mul(cov, 2), c2));
  Tensor den = mul(scalar_add(add(mul(mu_a, mu_a), mul(mu_b, mu_b)), c1),
                   scalar_add(add(va, vb), c2));
  return mean_all(div(num, den));
}

Tensor l1_mean(const Tensor& a, const Tensor& b) { return mean_all(abs(sub(a, b))); }

Tensor imperceptibility_loss(const Tensor& cover, const Tensor& watermarked,
                             const LossWeights& w, const FeatureNet& net) {
  w.validate();
  if (cover.shape() != watermarked.shape()) {
    throw ShapeError("imperceptibility_loss: dimension mismatch");
  }
  Tensor loss = scalar_mul(l1_mean(cover, watermarked), w.w1);
  if (w.w_lpips > 0) {
    loss = add(loss, scalar_mul(lpips_distance(cover, watermarked, net), w.w_lpips));
  }
  return loss;
}

Tensor robustness_loss(const Tensor& logo, const std::vector<Tensor>& recovered_per_attack,
                       const LossWeights& w, const FeatureNet& net) {
  w.validate();
  if (recovered_per_attack.empty()) {
    throw Error("robustness_loss: at least one sampled attack outcome required");
  }
  const int win = logo.dim(2) >= 11 ? 11 : 7;
  Tensor total;
  for (const Tensor& rec : recovered_per_attack) {
    Tensor term = scalar_mul(l1_mean(rec, logo), w.w2);
    if (w.w_ssim > 0) {
      Tensor dssim = scalar_add(neg(ssim_graph(rec, logo, win)), 1.0);
      term = add(term, scalar_mul(dssim, w.w_ssim));
    }
    if (w.w_lpips2 > 0) {
      term = add(term, scalar_mul(lpips_distance(rec, logo, net), w.w_lpips2));
    }
    total = total.defined() ? add(total, term) : term;
  }
  return scalar_mul(total, 1.0 / static_cast<double>(recovered_per_attack.size()));
}

Tensor arcface_loss(const Tensor& embeddings, const Tensor& class_weights,
                    const std::vector<int>& labels, const ArcFaceParams& p) {
  if (embeddings.ndim() != 2 || class_weights.ndim() != 2 ||
      embeddings.dim(1) != class_weights.dim(1)) {
    throw ShapeError("arcface_loss: embeddings [N,D] and class weights [C,D] required");
  }
  const int64_t n = embeddings.dim(0), c = class_weights.dim(0), d = embeddings.dim(1);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw Error("arcface_loss: one label per embedding required");
  }
  for (int lab : labels) {
    if (lab < 0 || lab >= c) throw Error("arcface_loss: label out of range");
  }
  // Inputs must already be on the hypersphere. The class-weight tolerance
  // admits finite-difference probes without admitting optimizer drift.
  auto check_rows = [d](const Tensor& t, const char* what, double tol) {
    const Scalar* ptr = t.data();
    for (int64_t r = 0; r < t.dim(0); ++r) {
      double s = 0;
      for (int64_t i = 0; i < d; ++i) s += double(ptr[r * d + i]) * double(ptr[r * d + i]);
      if (std::abs(std::sqrt(s) - 1.0) > tol) {
        throw Error(std::string("arcface_loss: ") + what + " row " + std::to_string(r) +
                    " is not L2-normalized");
      }
    }
  };
  check_rows(embeddings, "embedding", 1e-6);
  check_rows(class_weights, "class weight", 1e-3);

  constexpr double kEps = 1e-7;
  Tensor cosines = matmul(embeddings, class_weights, false, true);  // [N,C]
  Tensor theta = acos(clamp(cosines, Scalar(-1.0 + kEps), Scalar(1.0 - kEps)));
  Tensor cos_plain = cos(theta);
  Tensor cos_margin = cos(scalar_add(theta, p.margin));

  std::vector<Scalar> onehot(static_cast<size_t>(n) * c, Scalar(0));
  for (int64_t i = 0; i < n; ++i) onehot[i * c + labels[i]] = Scalar(1);
  Tensor mask = Tensor::constant({n, c}, onehot);
  Tensor inv_mask = scalar_add(neg(mask), 1.0);

  Tensor logits =
      scalar_mul(add(mul(mask, cos_margin), mul(inv_mask, cos_plain)), p.scale);
  Tensor probs = softmax_lastdim(logits);
  Tensor target_prob = sum_lastdim(mul(probs, mask));  // [N,1]
  return neg(mean_all(log(target_prob)));
}

Tensor total_loss(const Tensor& imp, const Tensor& rob, const Tensor& id, const LossWeights& w) {
  w.validate();
  return add(add(scalar_mul(imp, w.w_imp), scalar_mul(rob, w.w_rob)), scalar_mul(id, w.w_id));
}

}  // namespace saiw
