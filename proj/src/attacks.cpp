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

#include "saiw/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace saiw {

namespace {

constexpr double kPi = 3.14159265358979323846;

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

// ---- internal baseline JPEG ----

// ITU-T T.81 Annex K reference quantization tables.
const int kLumaQ[64] = {16, 11, 10, 16, 24,  40,  51,  61,  12, 12, 14, 19, 26,  58,  60,  55,
                        14, 13, 16, 24, 40,  57,  69,  56,  14, 17, 22, 29, 51,  87,  80,  62,
                        18, 22, 37, 56, 68,  109, 103, 77,  24, 35, 55, 64, 81,  104, 113, 92,
                        49, 64, 78, 87, 103, 121, 120, 101, 72, 92, 95, 98, 112, 100, 103, 99};
const int kChromaQ[64] = {17, 18, 24, 47, 99, 99, 99, 99, 18, 21, 26, 66, 99, 99, 99, 99,
                          24, 26, 56, 99, 99, 99, 99, 99, 47, 66, 99, 99, 99, 99, 99, 99,
                          99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99,
                          99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99, 99};

struct DctTables {
  double cosine[8][8];  // cosine[x][u] = cos((2x+1) u pi / 16)
  double c[8];          // normalization: c[0] = 1/sqrt(2), else 1
  DctTables() {
    for (int x = 0; x < 8; ++x)
      for (int u = 0; u < 8; ++u) cosine[x][u] = std::cos((2 * x + 1) * u * kPi / 16.0);
    c[0] = 1.0 / std::sqrt(2.0);
    for (int u = 1; u < 8; ++u) c[u] = 1.0;
  }
};

const DctTables& dct_tables() {
  static const DctTables t;
  return t;
}

void dct8x8(const double in[64], double out[64]) {
  const auto& t = dct_tables();
  for (int u = 0; u < 8; ++u) {
    for (int v = 0; v < 8; ++v) {
      double acc = 0;
      for (int x = 0; x < 8; ++x) {
        for (int y = 0; y < 8; ++y) {
          acc += in[x * 8 + y] * t.cosine[x][u] * t.cosine[y][v];
        }
      }
      out[u * 8 + v] = 0.25 * t.c[u] * t.c[v] * acc;
    }
  }
}

void idct8x8(const double in[64], double out[64]) {
  const auto& t = dct_tables();
  for (int x = 0; x < 8; ++x) {
    for (int y = 0; y < 8; ++y) {
      double acc = 0;
      for (int u = 0; u < 8; ++u) {
        for (int v = 0; v < 8; ++v) {
          acc += t.c[u] * t.c[v] * in[u * 8 + v] * t.cosine[x][u] * t.cosine[y][v];
        }
      }
      out[x * 8 + y] = 0.25 * acc;
    }
  }
}

// IJG quality scaling: s = QF<50 ? 5000/QF : 200-2*QF; q' = clamp((q*s+50)/100, 1, 255).
void scaled_table(const int base[64], int quality, int out[64]) {
  const int s = quality < 50 ? 5000 / quality : 200 - 2 * quality;
  for (int i = 0; i < 64; ++i) {
    const int q = (base[i] * s + 50) / 100;
    out[i] = std::min(255, std::max(1, q));
  }
}

// Quantize/dequantize every 8x8 block of a padded plane in place.
void jpeg_plane(std::vector<double>& plane, int h, int w, const int qtab[64]) {
  double block[64], coef[64];
  for (int by = 0; by < h; by += 8) {
    for (int bx = 0; bx < w; bx += 8) {
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) block[i * 8 + j] = plane[(by + i) * w + bx + j] - 128.0;
      dct8x8(block, coef);
      for (int i = 0; i < 64; ++i) {
        coef[i] = std::round(coef[i] / qtab[i]) * qtab[i];
      }
      idct8x8(coef, block);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j) plane[(by + i) * w + bx + j] = block[i * 8 + j] + 128.0;
    }
  }
}

}  // namespace

Image jpeg_roundtrip(const Image& img, int quality) {
  if (quality < 1 || quality > 100) throw Error("jpeg_roundtrip: QF must be in [1,100]");
  if (img.c != 3 && img.c != 1) throw ShapeError("jpeg_roundtrip: 1 or 3 channels");

  // Pad to a multiple of 16 (4:2:0 MCU) with edge replication.
  const int ph = (img.h + 15) / 16 * 16;
  const int pw = (img.w + 15) / 16 * 16;
  std::vector<double> ych(static_cast<size_t>(ph) * pw);
  std::vector<double> cb(static_cast<size_t>(ph) * pw, 128.0);
  std::vector<double> cr(static_cast<size_t>(ph) * pw, 128.0);
  for (int y = 0; y < ph; ++y) {
    const int sy = std::min(y, img.h - 1);
    for (int x = 0; x < pw; ++x) {
      const int sx = std::min(x, img.w - 1);
      if (img.c == 3) {
        const double r = 255.0 * img.at(sy, sx, 0);
        const double g = 255.0 * img.at(sy, sx, 1);
        const double b = 255.0 * img.at(sy, sx, 2);
        ych[y * pw + x] = 0.299 * r + 0.587 * g + 0.114 * b;
        cb[y * pw + x] = -0.168736 * r - 0.331264 * g + 0.5 * b + 128.0;
        cr[y * pw + x] = 0.5 * r - 0.418688 * g - 0.081312 * b + 128.0;
      } else {
        ych[y * pw + x] = 255.0 * img.at(sy, sx, 0);
      }
    }
  }

  int luma_q[64], chroma_q[64];
  scaled_table(kLumaQ, quality, luma_q);
  scaled_table(kChromaQ, quality, chroma_q);

  jpeg_plane(ych, ph, pw, luma_q);

  Image out(img.h, img.w, img.c);
  if (img.c == 3) {
    // 4:2:0 subsample by 2x2 mean, code, then replicate back up.
    const int sh = ph / 2, sw = pw / 2;
    std::vector<double> scb(static_cast<size_t>(sh) * sw), scr(scb.size());
    for (int y = 0; y < sh; ++y) {
      for (int x = 0; x < sw; ++x) {
        double acb = 0, acr = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            acb += cb[(2 * y + dy) * pw + 2 * x + dx];
            acr += cr[(2 * y + dy) * pw + 2 * x + dx];
          }
        }
        scb[y * sw + x] = acb / 4.0;
        scr[y * sw + x] = acr / 4.0;
      }
    }
    jpeg_plane(scb, sh, sw, chroma_q);
    jpeg_plane(scr, sh, sw, chroma_q);
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        const double Y = ych[y * pw + x];
        const double Cb = scb[(y / 2) * sw + x / 2] - 128.0;
        const double Cr = scr[(y / 2) * sw + x / 2] - 128.0;
        out.at(y, x, 0) = clamp01((Y + 1.402 * Cr) / 255.0);
        out.at(y, x, 1) = clamp01((Y - 0.344136 * Cb - 0.714136 * Cr) / 255.0);
        out.at(y, x, 2) = clamp01((Y + 1.772 * Cb) / 255.0);
      }
    }
  } else {
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        out.at(y, x, 0) = clamp01(ych[y * pw + x] / 255.0);
      }
    }
  }
  return out;
}

Image gaussian_blur(const Image& img, int kernel, double sigma) {
  if (kernel < 1 || kernel % 2 == 0) throw Error("gaussian_blur: kernel must be odd");
  if (sigma <= 0) throw Error("gaussian_blur: sigma must be positive");
  const int r = kernel / 2;
  std::vector<double> k(kernel);
  double total = 0;
  for (int i = -r; i <= r; ++i) {
    k[i + r] = std::exp(-(i * i) / (2.0 * sigma * sigma));
    total += k[i + r];
  }
  for (auto& v : k) v /= total;

  // Separable pass, replicate border.
  Image tmp(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      for (int c = 0; c < img.c; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          acc += k[i + r] * img.at(y, std::clamp(x + i, 0, img.w - 1), c);
        }
        tmp.at(y, x, c) = acc;
      }
    }
  }
  Image out(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      for (int c = 0; c < img.c; ++c) {
        double acc = 0;
        for (int i = -r; i <= r; ++i) {
          acc += k[i + r] * tmp.at(std::clamp(y + i, 0, img.h - 1), x, c);
        }
        out.at(y, x, c) = clamp01(acc);
      }
    }
  }
  return out;
}

Image gaussian_noise(const Image& img, double sigma, uint64_t seed) {
  if (sigma < 0) throw Error("gaussian_noise: sigma must be nonnegative");
  Image out = img;
  if (sigma == 0) return out;
  Rng rng(seed);
  for (auto& v : out.px) v = clamp01(v + sigma * rng.normal());
  return out;
}

Image brightness(const Image& img, double delta) {
  Image out = img;
  for (auto& v : out.px) v = clamp01(v + delta);
  return out;
}

Image contrast(const Image& img, double factor) {
  if (factor <= 0) throw Error("contrast: factor must be positive");
  if (factor == 1.0) return img;  // exact identity, no rounding detour
  Image out = img;
  for (auto& v : out.px) v = clamp01((v - 0.5) * factor + 0.5);
  return out;
}

Image grayscale(const Image& img) {
  if (img.c != 3) return img;
  Image out(img.h, img.w, 3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const double l =
          0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = clamp01(l);
    }
  }
  return out;
}

namespace {

Image saturate_mix(const Image& img, double sat) {
  Image out(img.h, img.w, img.c);
  if (img.c != 3) {
    out = img;
    return out;
  }
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const double l =
          0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = clamp01(l + sat * (img.at(y, x, c) - l));
    }
  }
  return out;
}

}  // namespace

Image color_jitter(const Image& img, double max_brightness, double max_contrast,
                   double max_saturation, uint64_t seed) {
  Rng rng(seed);
  const double delta = rng.uniform(-max_brightness, max_brightness);
  const double cf = rng.uniform(1.0 - max_contrast, 1.0 + max_contrast);
  const double sf = rng.uniform(1.0 - max_saturation, 1.0 + max_saturation);
  return saturate_mix(contrast(brightness(img, delta), cf), sf);
}

Image resize_roundtrip(const Image& img, double scale) {
  if (scale <= 0) throw Error("resize_roundtrip: scale must be positive");
  const int nh = std::max(1, static_cast<int>(std::lround(img.h * scale)));
  const int nw = std::max(1, static_cast<int>(std::lround(img.w * scale)));
  return clip01(resize_bilinear(resize_bilinear(img, nh, nw), img.h, img.w));
}

Image crop_pad(const Image& img, double fraction) {
  if (fraction < 0 || fraction >= 1) throw Error("crop_pad: fraction must be in [0,1)");
  const int ch = std::max(1, static_cast<int>(std::lround(img.h * (1.0 - fraction))));
  const int cw = std::max(1, static_cast<int>(std::lround(img.w * (1.0 - fraction))));
  const int oy = (img.h - ch) / 2, ox = (img.w - cw) / 2;
  Image out(img.h, img.w, img.c, 0.0);  // removed area becomes black
  for (int y = 0; y < ch; ++y) {
    for (int x = 0; x < cw; ++x) {
      for (int c = 0; c < img.c; ++c) out.at(oy + y, ox + x, c) = img.at(oy + y, ox + x, c);
    }
  }
  return out;
}

Image rotate(const Image& img, double degrees) {
  const double th = degrees * kPi / 180.0;
  const double ct = std::cos(th), st = std::sin(th);
  const double cy = (img.h - 1) / 2.0, cx = (img.w - 1) / 2.0;
  Image out(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      // Inverse mapping with bilinear resampling, replicate border.
      const double dy = y - cy, dx = x - cx;
      double sy = ct * dy + st * dx + cy;
      double sx = -st * dy + ct * dx + cx;
      sy = std::min(std::max(sy, 0.0), static_cast<double>(img.h - 1));
      sx = std::min(std::max(sx, 0.0), static_cast<double>(img.w - 1));
      const int y0 = static_cast<int>(sy), x0 = static_cast<int>(sx);
      const int y1 = std::min(y0 + 1, img.h - 1), x1 = std::min(x0 + 1, img.w - 1);
      const double wy = sy - y0, wx = sx - x0;
      for (int c = 0; c < img.c; ++c) {
        const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = clamp01(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y)
    for (int x = 0; x < img.w; ++x)
      for (int c = 0; c < img.c; ++c) out.at(y, x, c) = img.at(y, img.w - 1 - x, c);
  return out;
}

Image filter_preset(const Image& img, char preset) {
  double tint[3], shift, gamma, sat;
  switch (preset) {
    case 'A':  // Aden-like: warm lift, soft gamma, desaturated
      tint[0] = 1.00, tint[1] = 0.95, tint[2] = 0.90;
      shift = 0.04, gamma = 0.95, sat = 0.85;
      break;
    case 'B':  // Brooklyn-like: cool cast, slight contrast lift
      tint[0] = 0.95, tint[1] = 1.00, tint[2] = 1.05;
      shift = 0.02, gamma = 1.05, sat = 1.0;
      break;
    case 'C':  // Clarendon-like: warm highlights, punchy saturation
      tint[0] = 1.05, tint[1] = 1.02, tint[2] = 1.00;
      shift = 0.00, gamma = 0.90, sat = 1.15;
      break;
    default:
      throw Error(std::string("filter_preset: unknown preset '") + preset + "'");
  }
  Image out(img.h, img.w, img.c);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      for (int c = 0; c < img.c; ++c) {
        const double t = img.c == 3 ? tint[c] : tint[1];
        const double lifted = clamp01(t * img.at(y, x, c) + shift);
        out.at(y, x, c) = std::pow(lifted, gamma);
      }
    }
  }
  return saturate_mix(out, sat);
}

Image overlay(const Image& img, double fx, double fy, double fw, double fh) {
  Image out = img;
  const int x0 = std::clamp(static_cast<int>(std::lround(fx * img.w)), 0, img.w - 1);
  const int y0 = std::clamp(static_cast<int>(std::lround(fy * img.h)), 0, img.h - 1);
  const int x1 = std::clamp(static_cast<int>(std::lround((fx + fw) * img.w)), x0 + 1, img.w);
  const int y1 = std::clamp(static_cast<int>(std::lround((fy + fh) * img.h)), y0 + 1, img.h);
  for (int y = y0; y < y1; ++y) {
    for (int x = x0; x < x1; ++x) {
      // Opaque dark box with a high-contrast bar pattern standing in for
      // glyphs.
      const bool bar = ((x - x0) / 2) % 2 == 0 && y > y0 && y + 1 < y1;
      for (int c = 0; c < img.c; ++c) out.at(y, x, c) = bar ? 0.95 : 0.08;
    }
  }
  return out;
}

Image apply_attack(const AttackSpec& spec, const Image& img) {
  switch (spec.kind) {
    case AttackKind::kIdentity:
      return img;
    case AttackKind::kJpeg:
      return jpeg_roundtrip(img, spec.jpeg_qf);
    case AttackKind::kGaussianBlur:
      return gaussian_blur(img, spec.blur_kernel, spec.blur_sigma);
    case AttackKind::kGaussianNoise:
      return gaussian_noise(img, spec.noise_sigma, spec.seed);
    case AttackKind::kBrightness:
      return brightness(img, spec.brightness_delta);
    case AttackKind::kContrast:
      return contrast(img, spec.contrast_factor);
    case AttackKind::kGrayscale:
      return grayscale(img);
    case AttackKind::kColorJitter:
      return color_jitter(img, spec.jitter_brightness, spec.jitter_contrast,
                          spec.jitter_saturation, spec.seed);
    case AttackKind::kResizeRoundtrip:
      return resize_roundtrip(img, spec.resize_scale);
    case AttackKind::kCropPad:
      return crop_pad(img, spec.crop_fraction);
    case AttackKind::kRotate:
      return rotate(img, spec.rotate_deg);
    case AttackKind::kFlipH:
      return flip_horizontal(img);
    case AttackKind::kFilterPreset:
      return filter_preset(img, spec.filter_preset);
    case AttackKind::kOverlay:
      return overlay(img, spec.overlay_x, spec.overlay_y, spec.overlay_w, spec.overlay_h);
    case AttackKind::kCompose: {
      Image cur = img;
      for (const auto& part : spec.parts) cur = apply_attack(part, cur);
      return cur;
    }
  }
  throw Error("apply_attack: unreachable kind");
}

// ---- spec grammar ----

namespace {

std::vector<std::string> split_top(const std::string& s, char sep) {
  std::vector<std::string> out;
  int depth = 0;
  std::string cur;
  for (char ch : s) {
    if (ch == '[') ++depth;
    if (ch == ']') --depth;
    if (ch == sep && depth == 0) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_num(const std::string& s, const std::string& ctx) {
  try {
    size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error("attack spec: bad number '" + s + "' in " + ctx);
  }
}

std::string format_num(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string AttackSpec::to_string() const {
  std::string body;
  switch (kind) {
    case AttackKind::kIdentity:
      body = "identity";
      break;
    case AttackKind::kJpeg:
      body = "jpeg:" + std::to_string(jpeg_qf);
      break;
    case AttackKind::kGaussianBlur:
      body = "blur:" + std::to_string(blur_kernel) + ":" + format_num(blur_sigma);
      break;
    case AttackKind::kGaussianNoise:
      body = "noise:" + format_num(noise_sigma);
      break;
    case AttackKind::kBrightness:
      body = "brightness:" + format_num(brightness_delta);
      break;
    case AttackKind::kContrast:
      body = "contrast:" + format_num(contrast_factor);
      break;
    case AttackKind::kGrayscale:
      body = "grayscale";
      break;
    case AttackKind::kColorJitter:
      body = "jitter:" + format_num(jitter_brightness) + ":" + format_num(jitter_contrast) +
             ":" + format_num(jitter_saturation);
      break;
    case AttackKind::kResizeRoundtrip:
      body = "resize:" + format_num(resize_scale);
      break;
    case AttackKind::kCropPad:
      body = "crop:" + format_num(crop_fraction);
      break;
    case AttackKind::kRotate:
      body = "rotate:" + format_num(rotate_deg);
      break;
    case AttackKind::kFlipH:
      body = "flip";
      break;
    case AttackKind::kFilterPreset:
      body = std::string("filter:") + filter_preset;
      break;
    case AttackKind::kOverlay:
      body = "overlay:" + format_num(overlay_x) + ":" + format_num(overlay_y) + ":" +
             format_num(overlay_w) + ":" + format_num(overlay_h);
      break;
    case AttackKind::kCompose: {
      body = "compose:[";
      for (size_t i = 0; i < parts.size(); ++i) {
        if (i) body += ";";
        body += parts[i].to_string();
      }
      body += "]";
      break;
    }
  }
  if (seed != 0) body += ":seed=" + std::to_string(seed);
  return body;
}

AttackSpec AttackSpec::parse(const std::string& text) {
  std::vector<std::string> tok = split_top(text, ':');
  if (tok.empty() || tok[0].empty()) throw Error("attack spec: empty");
  AttackSpec spec;
  // Trailing seed suffix.
  if (tok.size() > 1 && tok.back().rfind("seed=", 0) == 0) {
    spec.seed = static_cast<uint64_t>(std::stoull(tok.back().substr(5)));
    tok.pop_back();
  }
  const std::string& k = tok[0];
  const size_t n = tok.size() - 1;
  auto need = [&](size_t count) {
    if (n != count) {
      throw Error("attack spec '" + k + "': expected " + std::to_string(count) +
                  " parameter(s), got " + std::to_string(n));
    }
  };
  if (k == "identity") {
    need(0);
    spec.kind = AttackKind::kIdentity;
  } else if (k == "jpeg") {
    need(1);
    spec.kind = AttackKind::kJpeg;
    spec.jpeg_qf = static_cast<int>(parse_num(tok[1], k));
    if (spec.jpeg_qf < 1 || spec.jpeg_qf > 100) throw Error("attack spec: jpeg QF out of [1,100]");
  } else if (k == "blur") {
    need(2);
    spec.kind = AttackKind::kGaussianBlur;
    spec.blur_kernel = static_cast<int>(parse_num(tok[1], k));
    spec.blur_sigma = parse_num(tok[2], k);
    if (spec.blur_kernel % 2 == 0 || spec.blur_kernel < 1) {
      throw Error("attack spec: blur kernel must be odd");
    }
  } else if (k == "noise") {
    need(1);
    spec.kind = AttackKind::kGaussianNoise;
    spec.noise_sigma = parse_num(tok[1], k);
  } else if (k == "brightness") {
    need(1);
    spec.kind = AttackKind::kBrightness;
    spec.brightness_delta = parse_num(tok[1], k);
  } else if (k == "contrast") {
    need(1);
    spec.kind = AttackKind::kContrast;
    spec.contrast_factor = parse_num(tok[1], k);
  } else if (k == "grayscale") {
    need(0);
    spec.kind = AttackKind::kGrayscale;
  } else if (k == "jitter") {
    need(3);
    spec.kind = AttackKind::kColorJitter;
    spec.jitter_brightness = parse_num(tok[1], k);
    spec.jitter_contrast = parse_num(tok[2], k);
    spec.jitter_saturation = parse_num(tok[3], k);
  } else if (k == "resize") {
    need(1);
    spec.kind = AttackKind::kResizeRoundtrip;
    spec.resize_scale = parse_num(tok[1], k);
  } else if (k == "crop") {
    need(1);
    spec.kind = AttackKind::kCropPad;
    spec.crop_fraction = parse_num(tok[1], k);
  } else if (k == "rotate") {
    need(1);
    spec.kind = AttackKind::kRotate;
    spec.rotate_deg = parse_num(tok[1], k);
  } else if (k == "flip") {
    need(0);
    spec.kind = AttackKind::kFlipH;
  } else if (k == "filter") {
    need(1);
    spec.kind = AttackKind::kFilterPreset;
    if (tok[1].size() != 1 || (tok[1][0] != 'A' && tok[1][0] != 'B' && tok[1][0] != 'C')) {
      throw Error("attack spec: filter preset must be A, B, or C");
    }
    spec.filter_preset = tok[1][0];
  } else if (k == "overlay") {
    need(4);
    spec.kind = AttackKind::kOverlay;
    spec.overlay_x = parse_num(tok[1], k);
    spec.overlay_y = parse_num(tok[2], k);
    spec.overlay_w = parse_num(tok[3], k);
    spec.overlay_h = parse_num(tok[4], k);
  } else if (k == "compose") {
    need(1);
    spec.kind = AttackKind::kCompose;
    std::string inner = tok[1];
    if (inner.size() < 2 || inner.front() != '[' || inner.back() != ']') {
      throw Error("attack spec: compose expects [a;b;...]");
    }
    inner = inner.substr(1, inner.size() - 2);
    for (const auto& part : split_top(inner, ';')) {
      if (!part.empty()) spec.parts.push_back(AttackSpec::parse(part));
    }
  } else {
    throw Error("attack spec: unknown kind '" + k + "'");
  }
  return spec;
}

AttackPolicy AttackPolicy::default_training() {
  AttackPolicy p;
  p.entries.push_back({AttackKind::kIdentity, 1.0, 0, 0, {}, 0, 0});
  p.entries.push_back({AttackKind::kJpeg, 1.0, 50, 95, {}, 0, 0});
  p.entries.push_back({AttackKind::kGaussianBlur, 1.0, 0, 0, {3, 5}, 0.5, 1.5});
  p.entries.push_back({AttackKind::kGaussianNoise, 1.0, 0.01, 0.05, {}, 0, 0});
  p.entries.push_back({AttackKind::kBrightness, 1.0, -0.1, 0.1, {}, 0, 0});
  p.entries.push_back({AttackKind::kContrast, 1.0, 0.8, 1.2, {}, 0, 0});
  return p;
}

AttackPolicy AttackPolicy::mild_training() {
  AttackPolicy p;
  p.entries.push_back({AttackKind::kIdentity, 1.0, 0, 0, {}, 0, 0});
  p.entries.push_back({AttackKind::kJpeg, 1.0, 65, 95, {}, 0, 0});
  p.entries.push_back({AttackKind::kGaussianBlur, 1.0, 0, 0, {3}, 0.5, 1.1});
  p.entries.push_back({AttackKind::kGaussianNoise, 1.0, 0.005, 0.025, {}, 0, 0});
  p.entries.push_back({AttackKind::kBrightness, 1.0, -0.08, 0.08, {}, 0, 0});
  p.entries.push_back({AttackKind::kContrast, 1.0, 0.85, 1.15, {}, 0, 0});
  return p;
}

AttackSpec sample_attack(Rng& rng, const AttackPolicy& policy) {
  if (policy.entries.empty()) throw Error("sample_attack: empty policy");
  double total = 0;
  for (const auto& e : policy.entries) total += e.weight;
  if (total <= 0) throw Error("sample_attack: policy has no mass");
  double pick = rng.uniform() * total;
  const AttackPolicy::Entry* chosen = &policy.entries.back();
  for (const auto& e : policy.entries) {
    if (pick < e.weight) {
      chosen = &e;
      break;
    }
    pick -= e.weight;
  }
  AttackSpec spec;
  spec.kind = chosen->kind;
  switch (chosen->kind) {
    case AttackKind::kJpeg:
      spec.jpeg_qf = static_cast<int>(
          rng.uniform_int(static_cast<int64_t>(chosen->lo), static_cast<int64_t>(chosen->hi)));
      break;
    case AttackKind::kGaussianBlur: {
      const auto& ks = chosen->kernel_choices;
      spec.blur_kernel = ks.empty() ? 3 : ks[rng.uniform_int(0, static_cast<int64_t>(ks.size()) - 1)];
      spec.blur_sigma = rng.uniform(chosen->sigma_lo, chosen->sigma_hi);
      break;
    }
    case AttackKind::kGaussianNoise:
      spec.noise_sigma = rng.uniform(chosen->lo, chosen->hi);
      spec.seed = rng.next_u64();
      break;
    case AttackKind::kBrightness:
      spec.brightness_delta = rng.uniform(chosen->lo, chosen->hi);
      break;
    case AttackKind::kContrast:
      spec.contrast_factor = rng.uniform(chosen->lo, chosen->hi);
      break;
    case AttackKind::kColorJitter:
      spec.seed = rng.next_u64();
      break;
    default:
      break;
  }
  return spec;
}

Tensor st_apply(const AttackSpec& spec, const Tensor& img) {
  if (img.ndim() != 4 || img.dim(0) != 1) throw ShapeError("st_apply: expected [1,C,H,W]");
  const Image in = tensor_to_image(img, /*clip_to_unit=*/true);
  const Image distorted = apply_attack(spec, in);
  Tensor forward = image_to_tensor(distorted);
  auto in_node = img.node();
  return make_op("st_apply", img.shape(), forward.values(), {img}, [in_node](TensorNode& self) {
    if (!in_node->requires_grad) return;
    const int64_t n = static_cast<int64_t>(self.value.size());
    for (int64_t i = 0; i < n; ++i) in_node->grad[i] += self.grad[i];
  });
}

}  // namespace saiw
