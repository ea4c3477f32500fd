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

#include "saiw/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <json.hpp>

namespace saiw {

namespace {

void check_dims(const char* op, const Image& a, const Image& b) {
  if (a.h != b.h || a.w != b.w || a.c != b.c) {
    throw ShapeError(std::string(op) + ": dimension mismatch");
  }
}

std::vector<double> gaussian_window(int side, double sigma) {
  std::vector<double> w(static_cast<size_t>(side) * side);
  const int r = side / 2;
  double total = 0.0;
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      const double dy = y - r, dx = x - r;
      const double v = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
      w[y * side + x] = v;
      total += v;
    }
  }
  for (auto& v : w) v /= total;
  return w;
}

}  // namespace

double psnr(const Image& a, const Image& b) {
  check_dims("psnr", a, b);
  double mse = 0.0;
  for (size_t i = 0; i < a.px.size(); ++i) {
    const double d = a.px[i] - b.px[i];
    mse += d * d;
  }
  mse /= static_cast<double>(a.px.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b, int window, double sigma) {
  check_dims("ssim", a, b);
  if (a.h < window || a.w < window) {
    throw ShapeError("ssim: image smaller than the " + std::to_string(window) + "px window");
  }
  const double c1 = 0.01 * 0.01;
  const double c2 = 0.03 * 0.03;
  const std::vector<double> win = gaussian_window(window, sigma);
  double total = 0.0;
  int64_t count = 0;
  for (int ch = 0; ch < a.c; ++ch) {
    for (int y = 0; y + window <= a.h; ++y) {
      for (int x = 0; x + window <= a.w; ++x) {
        double ma = 0, mb = 0;
        for (int u = 0; u < window; ++u) {
          for (int v = 0; v < window; ++v) {
            const double wgt = win[u * window + v];
            ma += wgt * a.at(y + u, x + v, ch);
            mb += wgt * b.at(y + u, x + v, ch);
          }
        }
        double va = 0, vb = 0, cov = 0;
        for (int u = 0; u < window; ++u) {
          for (int v = 0; v < window; ++v) {
            const double wgt = win[u * window + v];
            const double da = a.at(y + u, x + v, ch) - ma;
            const double db = b.at(y + u, x + v, ch) - mb;
            va += wgt * (da * da);
            vb += wgt * (db * db);
            cov += wgt * (da * db);  // argument-order invariant
          }
        }
        const double num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        total += num / den;
        ++count;
      }
    }
  }
  return total / static_cast<double>(count);
}

double logo_ssim(const Image& logo, const Image& recovered) {
  check_dims("logo_ssim", logo, recovered);
  const int side = std::min(logo.h, logo.w);
  if (side >= 11) return ssim(logo, recovered);
  return ssim(logo, recovered, 7, 1.5);
}

double bit_recovery_accuracy(const Image& logo, const Image& recovered, double tau) {
  check_dims("bit_recovery_accuracy", logo, recovered);
  int64_t agree = 0;
  for (size_t i = 0; i < logo.px.size(); ++i) {
    const bool ba = logo.px[i] > tau;
    const bool bb = recovered.px[i] > tau;
    agree += (ba == bb);
  }
  return static_cast<double>(agree) / static_cast<double>(logo.px.size());
}

IdentificationResult identification_accuracy(const std::vector<int>& predictions,
                                             const std::vector<int>& labels, int num_classes) {
  if (predictions.size() != labels.size()) {
    throw Error("identification_accuracy: prediction/label count mismatch");
  }
  IdentificationResult res;
  res.confusion.assign(num_classes, std::vector<int64_t>(num_classes, 0));
  for (size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= num_classes || predictions[i] < 0 ||
        predictions[i] >= num_classes) {
      throw Error("identification_accuracy: class index out of range");
    }
    res.confusion[labels[i]][predictions[i]] += 1;
  }
  int64_t correct = 0, total = 0;
  for (int i = 0; i < num_classes; ++i) {
    correct += res.confusion[i][i];
    for (int j = 0; j < num_classes; ++j) total += res.confusion[i][j];
  }
  res.a_id = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
  return res;
}

std::string MetricReport::to_json() const {
  nlohmann::json j;
  if (std::isinf(psnr_db)) {
    j["psnr_db"] = "inf";
  } else {
    j["psnr_db"] = psnr_db;
  }
  j["ssim"] = ssim;
  j["lpips"] = lpips;
  j["a_ssim"] = a_ssim;
  j["a_br"] = a_br;
  j["a_id"] = a_id;
  j["confusion"] = confusion;
  nlohmann::json pa = nlohmann::json::object();
  for (const auto& [name, m] : per_attack) {
    pa[name] = {{"a_br", m.a_br}, {"a_ssim", m.a_ssim}, {"a_id", m.a_id}};
  }
  j["per_attack"] = pa;
  return j.dump(2);
}

std::string MetricReport::to_table() const {
  std::ostringstream os;
  os << "Imperceptibility            | Pre-Attack          | Post-Attack (A_br / A_ssim / A_id)\n";
  os << "PSNR     SSIM     LPIPS     | A_br     A_ssim     |\n";
  char line[256];
  if (std::isinf(psnr_db)) {
    std::snprintf(line, sizeof(line), "%-8s %-8.4f %-9.4f | %-8.4f %-10.4f |\n", "inf", ssim,
                  lpips, a_br, a_ssim);
  } else {
    std::snprintf(line, sizeof(line), "%-8.2f %-8.4f %-9.4f | %-8.4f %-10.4f |\n", psnr_db, ssim,
                  lpips, a_br, a_ssim);
  }
  os << line;
  for (const auto& [name, m] : per_attack) {
    std::snprintf(line, sizeof(line), "%-27s |                     | %-8.4f %-8.4f %-8.4f\n",
                  name.c_str(), m.a_br, m.a_ssim, m.a_id);
    os << line;
  }
  std::snprintf(line, sizeof(line), "overall A_id: %.4f\n", a_id);
  os << line;
  return os.str();
}

}  // namespace saiw
