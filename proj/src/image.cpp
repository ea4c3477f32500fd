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

#include "saiw/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace saiw {

Image rgb_to_yuv(const Image& img) {
  if (img.c != 3) throw ShapeError("rgb_to_yuv: expected 3 channels, got " + std::to_string(img.c));
  Image out(img.h, img.w, 3);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      const double r = img.at(y, x, 0), g = img.at(y, x, 1), b = img.at(y, x, 2);
      out.at(y, x, 0) = 0.299 * r + 0.587 * g + 0.114 * b;
      out.at(y, x, 1) = -0.168736 * r - 0.331264 * g + 0.5 * b + 0.5;
      out.at(y, x, 2) = 0.5 * r - 0.418688 * g - 0.081312 * b + 0.5;
    }
  }
  return out;
}

RealMap luminance(const Image& img) {
  if (img.c != 3) throw ShapeError("luminance: expected 3 channels");
  RealMap out(img.h, img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      out.at(y, x) =
          0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
    }
  }
  return out;
}

RealMap convolve2d(const RealMap& img, const RealMap& kernel) {
  if (kernel.h % 2 == 0 || kernel.w % 2 == 0) {
    throw ShapeError("convolve2d: kernel sides must be odd");
  }
  const int rh = kernel.h / 2, rw = kernel.w / 2;
  RealMap out(img.h, img.w);
  for (int y = 0; y < img.h; ++y) {
    for (int x = 0; x < img.w; ++x) {
      double acc = 0.0;
      for (int u = -rh; u <= rh; ++u) {
        // Replicate border; true convolution flips the kernel.
        const int sy = std::clamp(y - u, 0, img.h - 1);
        for (int v = -rw; v <= rw; ++v) {
          const int sx = std::clamp(x - v, 0, img.w - 1);
          acc += img.at(sy, sx) * kernel.at(u + rh, v + rw);
        }
      }
      out.at(y, x) = acc;
    }
  }
  return out;
}

RealMap sobel_magnitude(const RealMap& lum255) {
  RealMap ox(3, 3), oy(3, 3);
  ox.v = {-1, 0, 1, -2, 0, 2, -1, 0, 1};
  oy.v = {-1, -2, -1, 0, 0, 0, 1, 2, 1};
  const RealMap gx = convolve2d(lum255, ox);
  const RealMap gy = convolve2d(lum255, oy);
  RealMap out(lum255.h, lum255.w);
  for (size_t i = 0; i < out.v.size(); ++i) {
    out.v[i] = std::sqrt(gx.v[i] * gx.v[i] + gy.v[i] * gy.v[i]);
  }
  return out;
}

double clip(double x, double lo, double hi) {
  if (lo > hi) throw Error("clip: lo > hi");
  return std::min(hi, std::max(lo, x));
}

RealMap clip(const RealMap& m, double lo, double hi) {
  if (lo > hi) throw Error("clip: lo > hi");
  RealMap out = m;
  for (auto& v : out.v) v = std::min(hi, std::max(lo, v));
  return out;
}

Image clip01(const Image& img) {
  Image out = img;
  for (auto& v : out.px) v = std::min(1.0, std::max(0.0, v));
  return out;
}

RealMap binarize(const RealMap& m, double tau) {
  RealMap out(m.h, m.w);
  for (size_t i = 0; i < m.v.size(); ++i) out.v[i] = m.v[i] > tau ? 1.0 : 0.0;
  return out;
}

RealMap binarize_image(const Image& img1ch, double tau) {
  if (img1ch.c != 1) throw ShapeError("binarize_image: expected 1 channel");
  RealMap out(img1ch.h, img1ch.w);
  for (size_t i = 0; i < img1ch.px.size(); ++i) out.v[i] = img1ch.px[i] > tau ? 1.0 : 0.0;
  return out;
}

namespace {

// Shared bilinear sampler; fn consumes corner indices and fractional
// weights for each output pixel.
template <typename Fn>
void bilinear_grid(int in_h, int in_w, int out_h, int out_w, Fn&& fn) {
  if (out_h < 1 || out_w < 1) throw ShapeError("resize_bilinear: target dims must be >= 1");
  const double sy_scale = static_cast<double>(in_h) / out_h;
  const double sx_scale = static_cast<double>(in_w) / out_w;
  for (int y = 0; y < out_h; ++y) {
    double sy = (y + 0.5) * sy_scale - 0.5;
    sy = std::min(std::max(sy, 0.0), static_cast<double>(in_h - 1));
    const int y0 = static_cast<int>(sy);
    const int y1 = std::min(y0 + 1, in_h - 1);
    const double wy = sy - y0;
    for (int x = 0; x < out_w; ++x) {
      double sx = (x + 0.5) * sx_scale - 0.5;
      sx = std::min(std::max(sx, 0.0), static_cast<double>(in_w - 1));
      const int x0 = static_cast<int>(sx);
      const int x1 = std::min(x0 + 1, in_w - 1);
      const double wx = sx - x0;
      fn(y, x, y0, x0, y1, x1, wy, wx);
    }
  }
}

}  // namespace

Image resize_bilinear(const Image& img, int new_h, int new_w) {
  Image out(new_h, new_w, img.c);
  bilinear_grid(img.h, img.w, new_h, new_w,
                [&](int y, int x, int y0, int x0, int y1, int x1, double wy, double wx) {
                  for (int ch = 0; ch < img.c; ++ch) {
                    const double top = img.at(y0, x0, ch) * (1 - wx) + img.at(y0, x1, ch) * wx;
                    const double bot = img.at(y1, x0, ch) * (1 - wx) + img.at(y1, x1, ch) * wx;
                    out.at(y, x, ch) = top * (1 - wy) + bot * wy;
                  }
                });
  return out;
}

RealMap resize_bilinear(const RealMap& m, int new_h, int new_w) {
  RealMap out(new_h, new_w);
  bilinear_grid(m.h, m.w, new_h, new_w,
                [&](int y, int x, int y0, int x0, int y1, int x1, double wy, double wx) {
                  const double top = m.at(y0, x0) * (1 - wx) + m.at(y0, x1) * wx;
                  const double bot = m.at(y1, x0) * (1 - wx) + m.at(y1, x1) * wx;
                  out.at(y, x) = top * (1 - wy) + bot * wy;
                });
  return out;
}

RealMap image_to_map(const Image& img1ch) {
  if (img1ch.c != 1) throw ShapeError("image_to_map: expected 1 channel");
  RealMap out(img1ch.h, img1ch.w);
  out.v = img1ch.px;
  return out;
}

Image map_to_image(const RealMap& m, bool clip_to_unit) {
  Image out(m.h, m.w, 1);
  out.px = m.v;
  if (clip_to_unit) {
    for (auto& v : out.px) v = std::min(1.0, std::max(0.0, v));
  }
  return out;
}

namespace {

// Reads one PNM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (!std::isspace(ch)) {
      tok.push_back(static_cast<char>(ch));
      break;
    }
  }
  while ((ch = in.get()) != EOF && !std::isspace(ch)) tok.push_back(static_cast<char>(ch));
  return tok;
}

}  // namespace

Image load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open image file: " + path);
  const std::string magic = next_token(in);
  int channels = 0;
  if (magic == "P6") {
    channels = 3;
  } else if (magic == "P5") {
    channels = 1;
  } else {
    throw IoError("unsupported or malformed magic number '" + magic + "' in " + path);
  }
  const std::string ws = next_token(in), hs = next_token(in), ms = next_token(in);
  int w = 0, h = 0, maxval = 0;
  try {
    w = std::stoi(ws);
    h = std::stoi(hs);
    maxval = std::stoi(ms);
  } catch (const std::exception&) {
    throw IoError("malformed PNM header in " + path);
  }
  if (w <= 0 || h <= 0) throw IoError("invalid dimensions in " + path);
  if (maxval != 255) throw IoError("unsupported maxval " + std::to_string(maxval) + " in " + path);
  // next_token consumed exactly one whitespace byte after the maxval.
  const size_t count = static_cast<size_t>(w) * h * channels;
  std::vector<unsigned char> bytes(count);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(count));
  if (static_cast<size_t>(in.gcount()) != count) {
    throw IoError("truncated payload in " + path);
  }
  Image img(h, w, channels);
  for (size_t i = 0; i < count; ++i) img.px[i] = bytes[i] / 255.0;
  return img;
}

void save_image(const std::string& path, const Image& img) {
  if (img.c != 1 && img.c != 3) throw ShapeError("save_image: channels must be 1 or 3");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << (img.c == 3 ? "P6" : "P5") << "\n" << img.w << " " << img.h << "\n255\n";
  std::vector<unsigned char> bytes(img.px.size());
  for (size_t i = 0; i < img.px.size(); ++i) {
    const double v = std::min(1.0, std::max(0.0, img.px[i]));
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

Tensor image_to_tensor(const Image& img) {
  std::vector<Scalar> data(img.size());
  // HWC -> CHW
  for (int ch = 0; ch < img.c; ++ch) {
    for (int y = 0; y < img.h; ++y) {
      for (int x = 0; x < img.w; ++x) {
        data[(static_cast<size_t>(ch) * img.h + y) * img.w + x] =
            static_cast<Scalar>(img.at(y, x, ch));
      }
    }
  }
  return Tensor::constant({1, img.c, img.h, img.w}, std::move(data));
}

Image tensor_to_image(const Tensor& t, bool clip_to_unit) {
  if (t.ndim() != 4 || t.dim(0) != 1) throw ShapeError("tensor_to_image: expected [1,C,H,W]");
  const int c = static_cast<int>(t.dim(1)), h = static_cast<int>(t.dim(2)),
            w = static_cast<int>(t.dim(3));
  Image img(h, w, c);
  const Scalar* p = t.data();
  for (int ch = 0; ch < c; ++ch) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double v = static_cast<double>(p[(static_cast<size_t>(ch) * h + y) * w + x]);
        if (clip_to_unit) v = std::min(1.0, std::max(0.0, v));
        img.at(y, x, ch) = v;
      }
    }
  }
  return img;
}

}  // namespace saiw
