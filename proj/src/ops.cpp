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

#include "saiw/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace saiw {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

std::vector<int64_t> strides_of(const Shape& s) {
  std::vector<int64_t> st(s.size(), 1);
  for (int i = static_cast<int>(s.size()) - 2; i >= 0; --i) st[i] = st[i + 1] * s[i + 1];
  return st;
}

// Elementwise binary helper: y = f(a,b), da += fa(a,b)*gy, db += fb(a,b)*gy.
template <typename F, typename Fa, typename Fb>
Tensor ew_binary(const char* op, const Tensor& a, const Tensor& b, F f, Fa fa, Fb fb) {
  check_same_shape(op, a, b);
  const int64_t n = a.numel();
  std::vector<Scalar> y(n);
  const Scalar* pa = a.data();
  const Scalar* pb = b.data();
  for (int64_t i = 0; i < n; ++i) y[i] = f(pa[i], pb[i]);
  auto an = a.node();
  auto bn = b.node();
  return make_op(op, a.shape(), std::move(y), {a, b}, [an, bn, fa, fb](TensorNode& self) {
    const int64_t n = static_cast<int64_t>(self.value.size());
    if (an->requires_grad) {
      for (int64_t i = 0; i < n; ++i)
        an->grad[i] += fa(an->value[i], bn->value[i]) * self.grad[i];
    }
    if (bn->requires_grad) {
      for (int64_t i = 0; i < n; ++i)
        bn->grad[i] += fb(an->value[i], bn->value[i]) * self.grad[i];
    }
  });
}

// Elementwise unary helper: y = f(x); dx += df(x, y)*gy.
template <typename F, typename Df>
Tensor ew_unary(const char* op, const Tensor& a, F f, Df df) {
  const int64_t n = a.numel();
  std::vector<Scalar> y(n);
  const Scalar* pa = a.data();
  for (int64_t i = 0; i < n; ++i) y[i] = f(pa[i]);
  auto an = a.node();
  return make_op(op, a.shape(), std::move(y), {a}, [an, df](TensorNode& self) {
    if (!an->requires_grad) return;
    const int64_t n = static_cast<int64_t>(self.value.size());
    for (int64_t i = 0; i < n; ++i) an->grad[i] += df(an->value[i], self.value[i]) * self.grad[i];
  });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "add", a, b, [](Scalar x, Scalar y) { return x + y; },
      [](Scalar, Scalar) { return Scalar(1); }, [](Scalar, Scalar) { return Scalar(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "sub", a, b, [](Scalar x, Scalar y) { return x - y; },
      [](Scalar, Scalar) { return Scalar(1); }, [](Scalar, Scalar) { return Scalar(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "mul", a, b, [](Scalar x, Scalar y) { return x * y; },
      [](Scalar, Scalar y) { return y; }, [](Scalar x, Scalar) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return ew_binary(
      "div", a, b, [](Scalar x, Scalar y) { return x / y; },
      [](Scalar, Scalar y) { return Scalar(1) / y; },
      [](Scalar x, Scalar y) { return -x / (y * y); });
}

Tensor scalar_mul(const Tensor& a, Scalar s) {
  return ew_unary(
      "scalar_mul", a, [s](Scalar x) { return x * s; }, [s](Scalar, Scalar) { return s; });
}

Tensor scalar_add(const Tensor& a, Scalar s) {
  return ew_unary(
      "scalar_add", a, [s](Scalar x) { return x + s; }, [](Scalar, Scalar) { return Scalar(1); });
}

Tensor neg(const Tensor& a) {
  return ew_unary(
      "neg", a, [](Scalar x) { return -x; }, [](Scalar, Scalar) { return Scalar(-1); });
}

Tensor abs(const Tensor& a) {
  return ew_unary(
      "abs", a, [](Scalar x) { return std::abs(x); },
      [](Scalar x, Scalar) { return x > 0 ? Scalar(1) : (x < 0 ? Scalar(-1) : Scalar(0)); });
}

Tensor sqrt(const Tensor& a) {
  return ew_unary(
      "sqrt", a, [](Scalar x) { return std::sqrt(x); },
      [](Scalar, Scalar y) { return Scalar(0.5) / y; });
}

Tensor exp(const Tensor& a) {
  return ew_unary(
      "exp", a, [](Scalar x) { return std::exp(x); }, [](Scalar, Scalar y) { return y; });
}

Tensor log(const Tensor& a) {
  return ew_unary(
      "log", a, [](Scalar x) { return std::log(x); },
      [](Scalar x, Scalar) { return Scalar(1) / x; });
}

Tensor cos(const Tensor& a) {
  return ew_unary(
      "cos", a, [](Scalar x) { return std::cos(x); },
      [](Scalar x, Scalar) { return -std::sin(x); });
}

Tensor acos(const Tensor& a) {
  return ew_unary(
      "acos", a, [](Scalar x) { return std::acos(x); },
      [](Scalar x, Scalar) { return Scalar(-1) / std::sqrt(Scalar(1) - x * x); });
}

Tensor relu(const Tensor& a) {
  return ew_unary(
      "relu", a, [](Scalar x) { return x > 0 ? x : Scalar(0); },
      [](Scalar x, Scalar) { return x > 0 ? Scalar(1) : Scalar(0); });
}

Tensor gelu(const Tensor& a) {
  return ew_unary(
      "gelu", a,
      [](Scalar x) {
        return Scalar(0.5) * x * (Scalar(1) + std::erf(x * Scalar(kInvSqrt2)));
      },
      [](Scalar x, Scalar) {
        const Scalar phi = Scalar(0.5) * (Scalar(1) + std::erf(x * Scalar(kInvSqrt2)));
        const Scalar pdf = Scalar(kInvSqrt2Pi) * std::exp(Scalar(-0.5) * x * x);
        return phi + x * pdf;
      });
}

Tensor tanh(const Tensor& a) {
  return ew_unary(
      "tanh", a, [](Scalar x) { return std::tanh(x); },
      [](Scalar, Scalar y) { return Scalar(1) - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return ew_unary(
      "sigmoid", a,
      [](Scalar x) {
        if (x >= 0) {
          const Scalar e = std::exp(-x);
          return Scalar(1) / (Scalar(1) + e);
        }
        const Scalar e = std::exp(x);
        return e / (Scalar(1) + e);
      },
      [](Scalar, Scalar y) { return y * (Scalar(1) - y); });
}

Tensor softplus(const Tensor& a) {
  return ew_unary(
      "softplus", a,
      [](Scalar x) {
        if (x > 0) return x + std::log1p(std::exp(-x));
        return std::log1p(std::exp(x));
      },
      [](Scalar x, Scalar) {
        if (x >= 0) return Scalar(1) / (Scalar(1) + std::exp(-x));
        const Scalar e = std::exp(x);
        return e / (Scalar(1) + e);
      });
}

Tensor clamp(const Tensor& a, Scalar lo, Scalar hi) {
  if (lo > hi) throw Error("clamp: lo > hi");
  return ew_unary(
      "clamp", a, [lo, hi](Scalar x) { return std::min(hi, std::max(lo, x)); },
      [lo, hi](Scalar x, Scalar) { return (x > lo && x < hi) ? Scalar(1) : Scalar(0); });
}

Tensor clip01_ste(const Tensor& a) {
  return ew_unary(
      "clip01_ste", a,
      [](Scalar x) { return std::min(Scalar(1), std::max(Scalar(0), x)); },
      [](Scalar, Scalar) { return Scalar(1); });
}

// ---- shape ----

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("reshape: numel mismatch " + shape_str(a.shape()) + " -> " +
                     shape_str(shape));
  }
  auto an = a.node();
  return make_op("reshape", std::move(shape), a.values(), {a}, [an](TensorNode& self) {
    if (!an->requires_grad) return;
    const int64_t n = static_cast<int64_t>(self.value.size());
    for (int64_t i = 0; i < n; ++i) an->grad[i] += self.grad[i];
  });
}

Tensor permute(const Tensor& a, const std::vector<int>& axes) {
  const int nd = a.ndim();
  if (static_cast<int>(axes.size()) != nd) throw ShapeError("permute: axes rank mismatch");
  std::vector<bool> used(nd, false);
  Shape out_shape(nd);
  for (int i = 0; i < nd; ++i) {
    if (axes[i] < 0 || axes[i] >= nd || used[axes[i]]) throw ShapeError("permute: bad axes");
    used[axes[i]] = true;
    out_shape[i] = a.shape()[axes[i]];
  }
  const auto in_st = strides_of(a.shape());
  const auto out_st = strides_of(out_shape);
  const int64_t n = a.numel();
  std::vector<Scalar> y(n);
  const Scalar* pa = a.data();
  // out[idx] = in[map(idx)]
  std::vector<int64_t> src_stride_for_out(nd);
  for (int i = 0; i < nd; ++i) src_stride_for_out[i] = in_st[axes[i]];
  for (int64_t o = 0; o < n; ++o) {
    int64_t rem = o, src = 0;
    for (int i = 0; i < nd; ++i) {
      const int64_t q = rem / out_st[i];
      rem -= q * out_st[i];
      src += q * src_stride_for_out[i];
    }
    y[o] = pa[src];
  }
  auto an = a.node();
  return make_op("permute", out_shape, std::move(y), {a},
                 [an, out_st, src_stride_for_out, nd](TensorNode& self) {
                   if (!an->requires_grad) return;
                   const int64_t n = static_cast<int64_t>(self.value.size());
                   for (int64_t o = 0; o < n; ++o) {
                     int64_t rem = o, src = 0;
                     for (int i = 0; i < nd; ++i) {
                       const int64_t q = rem / out_st[i];
                       rem -= q * out_st[i];
                       src += q * src_stride_for_out[i];
                     }
                     an->grad[src] += self.grad[o];
                   }
                 });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw ShapeError("concat: no inputs");
  const int nd = parts[0].ndim();
  if (axis < 0 || axis >= nd) throw ShapeError("concat: bad axis");
  Shape out_shape = parts[0].shape();
  int64_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.ndim() != nd) throw ShapeError("concat: rank mismatch");
    for (int i = 0; i < nd; ++i) {
      if (i != axis && p.shape()[i] != out_shape[i]) {
        throw ShapeError("concat: shape mismatch on non-axis dim");
      }
    }
    axis_total += p.shape()[axis];
  }
  out_shape[axis] = axis_total;

  // outer = product of dims before axis, inner = product after.
  int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= out_shape[i];
  for (int i = axis + 1; i < nd; ++i) inner *= out_shape[i];

  std::vector<Scalar> y(shape_numel(out_shape));
  std::vector<int64_t> offsets(parts.size());
  {
    int64_t off = 0;
    for (size_t k = 0; k < parts.size(); ++k) {
      offsets[k] = off;
      off += parts[k].shape()[axis];
    }
  }
  for (size_t k = 0; k < parts.size(); ++k) {
    const int64_t ak = parts[k].shape()[axis];
    const Scalar* src = parts[k].data();
    for (int64_t o = 0; o < outer; ++o) {
      Scalar* dst = y.data() + (o * axis_total + offsets[k]) * inner;
      std::copy(src + o * ak * inner, src + (o + 1) * ak * inner, dst);
    }
  }
  std::vector<std::shared_ptr<TensorNode>> pnodes;
  for (const auto& p : parts) pnodes.push_back(p.node());
  return make_op("concat", out_shape, std::move(y), parts,
                 [pnodes, outer, inner, axis_total, offsets, axis](TensorNode& self) {
                   for (size_t k = 0; k < pnodes.size(); ++k) {
                     auto& pn = *pnodes[k];
                     if (!pn.requires_grad) continue;
                     const int64_t ak = pn.shape[axis];
                     for (int64_t o = 0; o < outer; ++o) {
                       const Scalar* g = self.grad.data() + (o * axis_total + offsets[k]) * inner;
                       Scalar* dst = pn.grad.data() + o * ak * inner;
                       for (int64_t i = 0; i < ak * inner; ++i) dst[i] += g[i];
                     }
                   }
                 });
}

Tensor slice(const Tensor& a, const std::vector<int64_t>& starts,
             const std::vector<int64_t>& sizes) {
  const int nd = a.ndim();
  if (static_cast<int>(starts.size()) != nd || static_cast<int>(sizes.size()) != nd) {
    throw ShapeError("slice: starts/sizes rank mismatch");
  }
  Shape out_shape(nd);
  for (int i = 0; i < nd; ++i) {
    if (starts[i] < 0 || sizes[i] <= 0 || starts[i] + sizes[i] > a.shape()[i]) {
      throw ShapeError("slice: out of range");
    }
    out_shape[i] = sizes[i];
  }
  const auto in_st = strides_of(a.shape());
  const auto out_st = strides_of(out_shape);
  const int64_t n = shape_numel(out_shape);
  std::vector<Scalar> y(n);
  const Scalar* pa = a.data();
  for (int64_t o = 0; o < n; ++o) {
    int64_t rem = o, src = 0;
    for (int i = 0; i < nd; ++i) {
      const int64_t q = rem / out_st[i];
      rem -= q * out_st[i];
      src += (q + starts[i]) * in_st[i];
    }
    y[o] = pa[src];
  }
  auto an = a.node();
  return make_op("slice", out_shape, std::move(y), {a},
                 [an, in_st, out_st, starts, nd](TensorNode& self) {
                   if (!an->requires_grad) return;
                   const int64_t n = static_cast<int64_t>(self.value.size());
                   for (int64_t o = 0; o < n; ++o) {
                     int64_t rem = o, src = 0;
                     for (int i = 0; i < nd; ++i) {
                       const int64_t q = rem / out_st[i];
                       rem -= q * out_st[i];
                       src += (q + starts[i]) * in_st[i];
                     }
                     an->grad[src] += self.grad[o];
                   }
                 });
}

Tensor broadcast_to(const Tensor& a, Shape target) {
  const int nd_out = static_cast<int>(target.size());
  const int nd_in = a.ndim();
  if (nd_in > nd_out) throw ShapeError("broadcast_to: source rank exceeds target");
  // Source dims align to the trailing dims of the target.
  std::vector<int64_t> src_dims(nd_out, 1);
  for (int i = 0; i < nd_in; ++i) src_dims[nd_out - nd_in + i] = a.shape()[i];
  for (int i = 0; i < nd_out; ++i) {
    if (src_dims[i] != 1 && src_dims[i] != target[i]) {
      throw ShapeError("broadcast_to: incompatible " + shape_str(a.shape()) + " -> " +
                       shape_str(target));
    }
  }
  Shape padded(src_dims.begin(), src_dims.end());
  const auto src_st_full = strides_of(padded);
  std::vector<int64_t> src_st(nd_out);
  for (int i = 0; i < nd_out; ++i) src_st[i] = (src_dims[i] == 1) ? 0 : src_st_full[i];
  const auto out_st = strides_of(target);
  const int64_t n = shape_numel(target);
  std::vector<Scalar> y(n);
  const Scalar* pa = a.data();
  for (int64_t o = 0; o < n; ++o) {
    int64_t rem = o, src = 0;
    for (int i = 0; i < nd_out; ++i) {
      const int64_t q = rem / out_st[i];
      rem -= q * out_st[i];
      src += q * src_st[i];
    }
    y[o] = pa[src];
  }
  auto an = a.node();
  return make_op("broadcast", target, std::move(y), {a},
                 [an, out_st, src_st, nd_out](TensorNode& self) {
                   if (!an->requires_grad) return;
                   const int64_t n = static_cast<int64_t>(self.value.size());
                   for (int64_t o = 0; o < n; ++o) {
                     int64_t rem = o, src = 0;
                     for (int i = 0; i < nd_out; ++i) {
                       const int64_t q = rem / out_st[i];
                       rem -= q * out_st[i];
                       src += q * src_st[i];
                     }
                     an->grad[src] += self.grad[o];
                   }
                 });
}

// ---- reductions ----

Tensor sum_all(const Tensor& a) {
  Scalar s = 0;
  const Scalar* pa = a.data();
  const int64_t n = a.numel();
  for (int64_t i = 0; i < n; ++i) s += pa[i];
  auto an = a.node();
  return make_op("sum", {1}, {s}, {a}, [an](TensorNode& self) {
    if (!an->requires_grad) return;
    const Scalar g = self.grad[0];
    for (auto& gi : an->grad) gi += g;
  });
}

Tensor mean_all(const Tensor& a) {
  const int64_t n = a.numel();
  Scalar s = 0;
  const Scalar* pa = a.data();
  for (int64_t i = 0; i < n; ++i) s += pa[i];
  s /= static_cast<Scalar>(n);
  auto an = a.node();
  return make_op("mean", {1}, {s}, {a}, [an, n](TensorNode& self) {
    if (!an->requires_grad) return;
    const Scalar g = self.grad[0] / static_cast<Scalar>(n);
    for (auto& gi : an->grad) gi += g;
  });
}

Tensor sum_lastdim(const Tensor& a) {
  const int nd = a.ndim();
  const int64_t d = a.shape()[nd - 1];
  const int64_t rows = a.numel() / d;
  Shape out_shape = a.shape();
  out_shape[nd - 1] = 1;
  std::vector<Scalar> y(rows);
  const Scalar* pa = a.data();
  for (int64_t r = 0; r < rows; ++r) {
    Scalar s = 0;
    for (int64_t i = 0; i < d; ++i) s += pa[r * d + i];
    y[r] = s;
  }
  auto an = a.node();
  return make_op("sum_lastdim", out_shape, std::move(y), {a}, [an, rows, d](TensorNode& self) {
    if (!an->requires_grad) return;
    for (int64_t r = 0; r < rows; ++r) {
      const Scalar g = self.grad[r];
      for (int64_t i = 0; i < d; ++i) an->grad[r * d + i] += g;
    }
  });
}

Tensor sum_channels(const Tensor& a) {
  if (a.ndim() != 4) throw ShapeError("sum_channels: expected NCHW");
  const int64_t N = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  const int64_t hw = H * W;
  std::vector<Scalar> y(N * hw, Scalar(0));
  const Scalar* pa = a.data();
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const Scalar* src = pa + (n * C + c) * hw;
      Scalar* dst = y.data() + n * hw;
      for (int64_t i = 0; i < hw; ++i) dst[i] += src[i];
    }
  }
  auto an = a.node();
  return make_op("sum_channels", {N, 1, H, W}, std::move(y), {a},
                 [an, N, C, hw](TensorNode& self) {
                   if (!an->requires_grad) return;
                   for (int64_t n = 0; n < N; ++n) {
                     const Scalar* g = self.grad.data() + n * hw;
                     for (int64_t c = 0; c < C; ++c) {
                       Scalar* dst = an->grad.data() + (n * C + c) * hw;
                       for (int64_t i = 0; i < hw; ++i) dst[i] += g[i];
                     }
                   }
                 });
}

// ---- matmul ----

namespace {

struct MatView {
  int64_t batch;    // number of matrices (1 if broadcast)
  int64_t rows, cols;
  bool trans;
  // Logical (M,K) after transposition.
  int64_t m() const { return trans ? cols : rows; }
  int64_t k() const { return trans ? rows : cols; }
};

inline Scalar mat_get(const Scalar* base, const MatView& v, int64_t b, int64_t i, int64_t j) {
  const int64_t bb = v.batch == 1 ? 0 : b;
  const Scalar* p = base + bb * v.rows * v.cols;
  return v.trans ? p[j * v.cols + i] : p[i * v.cols + j];
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  if (a.ndim() < 2 || b.ndim() < 2) throw ShapeError("matmul: operands must be >= 2-D");
  auto leading = [](const Tensor& t) {
    int64_t l = 1;
    for (int i = 0; i + 2 < t.ndim(); ++i) l *= t.shape()[i];
    return l;
  };
  const int64_t la = leading(a), lb = leading(b);
  if (la != lb && la != 1 && lb != 1) {
    throw ShapeError("matmul: batch mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const int64_t batch = std::max(la, lb);
  MatView va{la, a.shape()[a.ndim() - 2], a.shape()[a.ndim() - 1], trans_a};
  MatView vb{lb, b.shape()[b.ndim() - 2], b.shape()[b.ndim() - 1], trans_b};
  const int64_t M = va.m(), K = va.k(), N = vb.k();
  if (vb.m() != K) {
    throw ShapeError("matmul: inner dimension mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  Shape out_shape;
  const Tensor& batched = (la >= lb) ? a : b;
  for (int i = 0; i + 2 < batched.ndim(); ++i) out_shape.push_back(batched.shape()[i]);
  out_shape.push_back(M);
  out_shape.push_back(N);

  std::vector<Scalar> y(batch * M * N);
  const Scalar* pa = a.data();
  const Scalar* pb = b.data();
  parallel_for(batch * M, [&](int64_t lo, int64_t hi) {
    for (int64_t idx = lo; idx < hi; ++idx) {
      const int64_t bi = idx / M, i = idx % M;
      Scalar* row = y.data() + (bi * M + i) * N;
      for (int64_t j = 0; j < N; ++j) {
        Scalar acc = 0;
        for (int64_t k = 0; k < K; ++k) {
          acc += mat_get(pa, va, bi, i, k) * mat_get(pb, vb, bi, k, j);
        }
        row[j] = acc;
      }
    }
  });

  auto an = a.node();
  auto bn = b.node();
  return make_op(
      "matmul", out_shape, std::move(y), {a, b},
      [an, bn, va, vb, batch, M, N, K](TensorNode& self) {
        const Scalar* g = self.grad.data();
        const Scalar* pa = an->value.data();
        const Scalar* pb = bn->value.data();
        // dA[b,i,k] += sum_j g[b,i,j] * B[b,k,j-as-logical]; handle transposes by
        // writing into the stored layout.
        if (an->requires_grad) {
          Scalar* ga = an->grad.data();
          const int64_t astride = va.rows * va.cols;
          for (int64_t bi = 0; bi < batch; ++bi) {
            const int64_t ab = va.batch == 1 ? 0 : bi;
            for (int64_t i = 0; i < M; ++i) {
              for (int64_t k = 0; k < K; ++k) {
                Scalar acc = 0;
                const Scalar* grow = g + (bi * M + i) * N;
                for (int64_t j = 0; j < N; ++j) acc += grow[j] * mat_get(pb, vb, bi, k, j);
                const int64_t off =
                    va.trans ? (k * va.cols + i) : (i * va.cols + k);
                ga[ab * astride + off] += acc;
              }
            }
          }
        }
        if (bn->requires_grad) {
          Scalar* gb = bn->grad.data();
          const int64_t bstride = vb.rows * vb.cols;
          for (int64_t bi = 0; bi < batch; ++bi) {
            const int64_t bb = vb.batch == 1 ? 0 : bi;
            for (int64_t k = 0; k < K; ++k) {
              for (int64_t j = 0; j < N; ++j) {
                Scalar acc = 0;
                for (int64_t i = 0; i < M; ++i) {
                  acc += mat_get(pa, va, bi, i, k) * g[(bi * M + i) * N + j];
                }
                const int64_t off =
                    vb.trans ? (j * vb.cols + k) : (k * vb.cols + j);
                gb[bb * bstride + off] += acc;
              }
            }
          }
        }
      });
}

// ---- convolutions ----

namespace {

// Shared row kernels for conv2d. Each output row is split into left-edge,
// interior, and right-edge segments so the interior runs without per-pixel
// bounds arithmetic; 3-tap kernels get an unrolled fast path.

// y[wo] += sum_v x[wo*stride - pad + v] * w[v] over the valid v range.
inline void conv_row_acc(Scalar* orow, const Scalar* xrow, const Scalar* wrow, int64_t Wo,
                         int64_t W, int64_t kw, int64_t stride, int64_t pad) {
  const int64_t wo_lo = std::min(Wo, (pad + stride - 1) / stride);
  const int64_t wo_hi = std::min<int64_t>(Wo - 1, (W - kw + pad) / stride);
  auto edge = [&](int64_t from, int64_t to) {
    for (int64_t wo = from; wo < to; ++wo) {
      const int64_t wb = wo * stride - pad;
      const int64_t v_lo = std::max<int64_t>(0, -wb);
      const int64_t v_hi = std::min<int64_t>(kw - 1, W - 1 - wb);
      Scalar acc = 0;
      for (int64_t v = v_lo; v <= v_hi; ++v) acc += xrow[wb + v] * wrow[v];
      orow[wo] += acc;
    }
  };
  edge(0, wo_lo);
  if (wo_hi >= wo_lo) {
    const Scalar* xr = xrow + wo_lo * stride - pad;
    if (kw == 3) {
      const Scalar w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
      if (stride == 1) {
        for (int64_t wo = wo_lo; wo <= wo_hi; ++wo, ++xr) {
          orow[wo] += xr[0] * w0 + xr[1] * w1 + xr[2] * w2;
        }
      } else {
        for (int64_t wo = wo_lo; wo <= wo_hi; ++wo, xr += stride) {
          orow[wo] += xr[0] * w0 + xr[1] * w1 + xr[2] * w2;
        }
      }
    } else if (kw == 1) {
      const Scalar w0 = wrow[0];
      for (int64_t wo = wo_lo; wo <= wo_hi; ++wo, xr += stride) orow[wo] += xr[0] * w0;
    } else {
      for (int64_t wo = wo_lo; wo <= wo_hi; ++wo, xr += stride) {
        Scalar acc = 0;
        for (int64_t v = 0; v < kw; ++v) acc += xr[v] * wrow[v];
        orow[wo] += acc;
      }
    }
  }
  edge(std::max(wo_lo, wo_hi + 1), Wo);
}

// gx[wo*stride - pad + v] += g[wo] * w[v]: the scatter transpose of the row
// accumulation above.
inline void conv_row_scatter(Scalar* gxrow, const Scalar* grow, const Scalar* wrow, int64_t Wo,
                             int64_t W, int64_t kw, int64_t stride, int64_t pad) {
  const int64_t wo_lo = std::min(Wo, (pad + stride - 1) / stride);
  const int64_t wo_hi = std::min<int64_t>(Wo - 1, (W - kw + pad) / stride);
  auto edge = [&](int64_t from, int64_t to) {
    for (int64_t wo = from; wo < to; ++wo) {
      const int64_t wb = wo * stride - pad;
      const int64_t v_lo = std::max<int64_t>(0, -wb);
      const int64_t v_hi = std::min<int64_t>(kw - 1, W - 1 - wb);
      const Scalar gv = grow[wo];
      for (int64_t v = v_lo; v <= v_hi; ++v) gxrow[wb + v] += gv * wrow[v];
    }
  };
  edge(0, wo_lo);
  if (wo_hi >= wo_lo) {
    Scalar* gxr = gxrow + wo_lo * stride - pad;
    if (kw == 3) {
      const Scalar w0 = wrow[0], w1 = wrow[1], w2 = wrow[2];
      for (int64_t wo = wo_lo; wo <= wo_hi; ++wo, gxr += stride) {
        const Scalar gv = grow[wo];
        gxr[0] += gv * w0;
        gxr[1] += gv * w1;
        gxr[2] += gv * w2;
      }
    } else if (kw == 1) {
      const Scalar w0 = wrow[0];
      for (int64_t wo = wo_lo; wo <= wo_hi; ++wo, gxr += stride) gxr[0] += grow[wo] * w0;
    } else {
      for (int64_t wo = wo_lo; wo <= wo_hi; ++wo, gxr += stride) {
        const Scalar gv = grow[wo];
        for (int64_t v = 0; v < kw; ++v) gxr[v] += gv * wrow[v];
      }
    }
  }
  edge(std::max(wo_lo, wo_hi + 1), Wo);
}

// gw[v] += sum_wo g[wo] * x[wo*stride - pad + v].
inline void conv_row_wgrad(Scalar* gwrow, const Scalar* grow, const Scalar* xrow, int64_t Wo,
                           int64_t W, int64_t kw, int64_t stride, int64_t pad) {
  const int64_t wo_lo = std::min(Wo, (pad + stride - 1) / stride);
  const int64_t wo_hi = std::min<int64_t>(Wo - 1, (W - kw + pad) / stride);
  auto edge = [&](int64_t from, int64_t to) {
    for (int64_t wo = from; wo < to; ++wo) {
      const int64_t wb = wo * stride - pad;
      const int64_t v_lo = std::max<int64_t>(0, -wb);
      const int64_t v_hi = std::min<int64_t>(kw - 1, W - 1 - wb);
      const Scalar gv = grow[wo];
      for (int64_t v = v_lo; v <= v_hi; ++v) gwrow[v] += gv * xrow[wb + v];
    }
  };
  edge(0, wo_lo);
  if (wo_hi >= wo_lo) {
    const Scalar* xr = xrow + wo_lo * stride - pad;
    if (kw == 3) {
      Scalar s0 = 0, s1 = 0, s2 = 0;
      for (int64_t wo = wo_lo; wo <= wo_hi; ++wo, xr += stride) {
        const Scalar gv = grow[wo];
        s0 += gv * xr[0];
        s1 += gv * xr[1];
        s2 += gv * xr[2];
      }
      gwrow[0] += s0;
      gwrow[1] += s1;
      gwrow[2] += s2;
    } else if (kw == 1) {
      Scalar s0 = 0;
      for (int64_t wo = wo_lo; wo <= wo_hi; ++wo, xr += stride) s0 += grow[wo] * xr[0];
      gwrow[0] += s0;
    } else {
      for (int64_t wo = wo_lo; wo <= wo_hi; ++wo, xr += stride) {
        const Scalar gv = grow[wo];
        for (int64_t v = 0; v < kw; ++v) gwrow[v] += gv * xr[v];
      }
    }
  }
  edge(std::max(wo_lo, wo_hi + 1), Wo);
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int pad) {
  if (x.ndim() != 4 || w.ndim() != 4) throw ShapeError("conv2d: expected 4-D x and w");
  const int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  if (w.dim(1) != Ci) throw ShapeError("conv2d: channel mismatch");
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != Co)) throw ShapeError("conv2d: bad bias");
  const int64_t Ho = (H + 2 * pad - kh) / stride + 1;
  const int64_t Wo = (W + 2 * pad - kw) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv2d: empty output");

  std::vector<Scalar> y(N * Co * Ho * Wo);
  const Scalar* px = x.data();
  const Scalar* pw = w.data();
  const Scalar* pb = b.defined() ? b.data() : nullptr;
  parallel_for(N * Co, [&](int64_t lo, int64_t hi) {
    for (int64_t idx = lo; idx < hi; ++idx) {
      const int64_t n = idx / Co, co = idx % Co;
      Scalar* out = y.data() + idx * Ho * Wo;
      const Scalar bias = pb ? pb[co] : Scalar(0);
      for (int64_t i = 0; i < Ho * Wo; ++i) out[i] = bias;
      for (int64_t ho = 0; ho < Ho; ++ho) {
        const int64_t hbase = ho * stride - pad;
        const int64_t u_lo = std::max<int64_t>(0, -hbase);
        const int64_t u_hi = std::min<int64_t>(kh - 1, H - 1 - hbase);
        Scalar* orow = out + ho * Wo;
        for (int64_t ci = 0; ci < Ci; ++ci) {
          const Scalar* xplane = px + (n * Ci + ci) * H * W;
          const Scalar* wbase = pw + (co * Ci + ci) * kh * kw;
          for (int64_t u = u_lo; u <= u_hi; ++u) {
            conv_row_acc(orow, xplane + (hbase + u) * W, wbase + u * kw, Wo, W, kw, stride, pad);
          }
        }
      }
    }
  });

  auto xn = x.node();
  auto wn = w.node();
  std::vector<Tensor> parents{x, w};
  if (b.defined()) parents.push_back(b);
  auto bnode = b.defined() ? b.node() : nullptr;
  return make_op(
      "conv2d", {N, Co, Ho, Wo}, std::move(y), parents,
      [xn, wn, bnode, N, Ci, H, W, Co, kh, kw, Ho, Wo, stride, pad](TensorNode& self) {
        const Scalar* g = self.grad.data();
        const Scalar* px = xn->value.data();
        const Scalar* pw = wn->value.data();
        if (xn->requires_grad) {
          Scalar* gx = xn->grad.data();
          parallel_for(N * Ci, [&](int64_t lo, int64_t hi) {
            for (int64_t idx = lo; idx < hi; ++idx) {
              const int64_t n = idx / Ci, ci = idx % Ci;
              Scalar* gxp = gx + idx * H * W;
              for (int64_t co = 0; co < Co; ++co) {
                const Scalar* gp = g + (n * Co + co) * Ho * Wo;
                const Scalar* wbase = pw + (co * Ci + ci) * kh * kw;
                for (int64_t ho = 0; ho < Ho; ++ho) {
                  const int64_t hbase = ho * stride - pad;
                  const int64_t u_lo = std::max<int64_t>(0, -hbase);
                  const int64_t u_hi = std::min<int64_t>(kh - 1, H - 1 - hbase);
                  const Scalar* grow = gp + ho * Wo;
                  for (int64_t u = u_lo; u <= u_hi; ++u) {
                    conv_row_scatter(gxp + (hbase + u) * W, grow, wbase + u * kw, Wo, W, kw,
                                     stride, pad);
                  }
                }
              }
            }
          });
        }
        if (wn->requires_grad) {
          Scalar* gw = wn->grad.data();
          parallel_for(Co * Ci, [&](int64_t lo, int64_t hi) {
            for (int64_t idx = lo; idx < hi; ++idx) {
              const int64_t co = idx / Ci, ci = idx % Ci;
              Scalar* gwp = gw + idx * kh * kw;
              for (int64_t n = 0; n < N; ++n) {
                const Scalar* gp = g + (n * Co + co) * Ho * Wo;
                const Scalar* xplane = px + (n * Ci + ci) * H * W;
                for (int64_t ho = 0; ho < Ho; ++ho) {
                  const int64_t hbase = ho * stride - pad;
                  const int64_t u_lo = std::max<int64_t>(0, -hbase);
                  const int64_t u_hi = std::min<int64_t>(kh - 1, H - 1 - hbase);
                  const Scalar* grow = gp + ho * Wo;
                  for (int64_t u = u_lo; u <= u_hi; ++u) {
                    conv_row_wgrad(gwp + u * kw, grow, xplane + (hbase + u) * W, Wo, W, kw,
                                   stride, pad);
                  }
                }
              }
            }
          });
        }
        if (bnode && bnode->requires_grad) {
          Scalar* gb = bnode->grad.data();
          for (int64_t n = 0; n < N; ++n) {
            for (int64_t co = 0; co < Co; ++co) {
              const Scalar* gp = g + (n * Co + co) * Ho * Wo;
              Scalar acc = 0;
              for (int64_t i = 0; i < Ho * Wo; ++i) acc += gp[i];
              gb[co] += acc;
            }
          }
        }
      });
}

Tensor conv_transpose2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                        int pad, int out_pad) {
  if (x.ndim() != 4 || w.ndim() != 4) throw ShapeError("conv_transpose2d: expected 4-D");
  const int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (w.dim(0) != Ci) throw ShapeError("conv_transpose2d: channel mismatch");
  const int64_t Co = w.dim(1), kh = w.dim(2), kw = w.dim(3);
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != Co)) {
    throw ShapeError("conv_transpose2d: bad bias");
  }
  const int64_t Ho = (H - 1) * stride - 2 * pad + kh + out_pad;
  const int64_t Wo = (W - 1) * stride - 2 * pad + kw + out_pad;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("conv_transpose2d: empty output");

  // Gather form: out[ho,wo] sums x[hi,wi]*w[u,v] where hi = (ho+pad-u)/stride.
  // The valid u (and v) form a stride-spaced arithmetic progression.
  auto tap_range = [](int64_t o, int64_t pad_, int64_t stride_, int64_t k, int64_t in,
                      int64_t* first, int64_t* last) {
    const int64_t s = o + pad_;
    int64_t lo_ = s % stride_;
    const int64_t min_u = s - (in - 1) * stride_;
    if (lo_ < min_u) lo_ += ((min_u - lo_ + stride_ - 1) / stride_) * stride_;
    int64_t hi_ = std::min<int64_t>(k - 1, s);
    hi_ -= (hi_ - lo_) % stride_ < 0 ? 0 : (hi_ - lo_) % stride_;
    *first = lo_;
    *last = hi_;
  };
  std::vector<Scalar> y(N * Co * Ho * Wo);
  const Scalar* px = x.data();
  const Scalar* pw = w.data();
  const Scalar* pb = b.defined() ? b.data() : nullptr;
  parallel_for(N * Co, [&](int64_t lo, int64_t hi) {
    for (int64_t idx = lo; idx < hi; ++idx) {
      const int64_t n = idx / Co, co = idx % Co;
      Scalar* out = y.data() + idx * Ho * Wo;
      for (int64_t ho = 0; ho < Ho; ++ho) {
        int64_t u_lo, u_hi;
        tap_range(ho, pad, stride, kh, H, &u_lo, &u_hi);
        for (int64_t wo = 0; wo < Wo; ++wo) {
          int64_t v_lo, v_hi;
          tap_range(wo, pad, stride, kw, W, &v_lo, &v_hi);
          Scalar acc = pb ? pb[co] : Scalar(0);
          for (int64_t u = u_lo; u <= u_hi; u += stride) {
            const int64_t hs = (ho + pad - u) / stride;
            for (int64_t v = v_lo; v <= v_hi; v += stride) {
              const int64_t ws = (wo + pad - v) / stride;
              for (int64_t ci = 0; ci < Ci; ++ci) {
                acc += px[((n * Ci + ci) * H + hs) * W + ws] *
                       pw[((ci * Co + co) * kh + u) * kw + v];
              }
            }
          }
          out[ho * Wo + wo] = acc;
        }
      }
    }
  });

  auto xn = x.node();
  auto wn = w.node();
  std::vector<Tensor> parents{x, w};
  if (b.defined()) parents.push_back(b);
  auto bnode = b.defined() ? b.node() : nullptr;
  return make_op(
      "conv_transpose2d", {N, Co, Ho, Wo}, std::move(y), parents,
      [xn, wn, bnode, N, Ci, H, W, Co, kh, kw, Ho, Wo, stride, pad](TensorNode& self) {
        const Scalar* g = self.grad.data();
        const Scalar* px = xn->value.data();
        const Scalar* pw = wn->value.data();
        // grad wrt x is an ordinary strided convolution of g with w.
        if (xn->requires_grad) {
          Scalar* gx = xn->grad.data();
          parallel_for(N * Ci, [&](int64_t lo, int64_t hi) {
            for (int64_t idx = lo; idx < hi; ++idx) {
              const int64_t n = idx / Ci, ci = idx % Ci;
              Scalar* gxp = gx + idx * H * W;
              for (int64_t co = 0; co < Co; ++co) {
                const Scalar* gp = g + (n * Co + co) * Ho * Wo;
                const Scalar* wbase = pw + (ci * Co + co) * kh * kw;
                for (int64_t hs = 0; hs < H; ++hs) {
                  const int64_t hbase = hs * stride - pad;
                  const int64_t u_lo = std::max<int64_t>(0, -hbase);
                  const int64_t u_hi = std::min<int64_t>(kh - 1, Ho - 1 - hbase);
                  Scalar* gxrow = gxp + hs * W;
                  for (int64_t u = u_lo; u <= u_hi; ++u) {
                    const Scalar* grow = gp + (hbase + u) * Wo;
                    const Scalar* wrow = wbase + u * kw;
                    for (int64_t ws = 0; ws < W; ++ws) {
                      const int64_t wb = ws * stride - pad;
                      const int64_t v_lo = std::max<int64_t>(0, -wb);
                      const int64_t v_hi = std::min<int64_t>(kw - 1, Wo - 1 - wb);
                      Scalar acc = 0;
                      for (int64_t v = v_lo; v <= v_hi; ++v) acc += grow[wb + v] * wrow[v];
                      gxrow[ws] += acc;
                    }
                  }
                }
              }
            }
          });
        }
        if (wn->requires_grad) {
          Scalar* gw = wn->grad.data();
          parallel_for(Ci * Co, [&](int64_t lo, int64_t hi) {
            for (int64_t idx = lo; idx < hi; ++idx) {
              const int64_t ci = idx / Co, co = idx % Co;
              Scalar* gwp = gw + idx * kh * kw;
              for (int64_t n = 0; n < N; ++n) {
                const Scalar* gp = g + (n * Co + co) * Ho * Wo;
                const Scalar* xp = px + (n * Ci + ci) * H * W;
                for (int64_t hs = 0; hs < H; ++hs) {
                  const int64_t hbase = hs * stride - pad;
                  const int64_t u_lo = std::max<int64_t>(0, -hbase);
                  const int64_t u_hi = std::min<int64_t>(kh - 1, Ho - 1 - hbase);
                  const Scalar* xrow = xp + hs * W;
                  for (int64_t u = u_lo; u <= u_hi; ++u) {
                    const Scalar* grow = gp + (hbase + u) * Wo;
                    Scalar* gwrow = gwp + u * kw;
                    for (int64_t ws = 0; ws < W; ++ws) {
                      const int64_t wb = ws * stride - pad;
                      const int64_t v_lo = std::max<int64_t>(0, -wb);
                      const int64_t v_hi = std::min<int64_t>(kw - 1, Wo - 1 - wb);
                      const Scalar xv = xrow[ws];
                      for (int64_t v = v_lo; v <= v_hi; ++v) gwrow[v] += xv * grow[wb + v];
                    }
                  }
                }
              }
            }
          });
        }
        if (bnode && bnode->requires_grad) {
          Scalar* gb = bnode->grad.data();
          for (int64_t n = 0; n < N; ++n) {
            for (int64_t co = 0; co < Co; ++co) {
              const Scalar* gp = g + (n * Co + co) * Ho * Wo;
              Scalar acc = 0;
              for (int64_t i = 0; i < Ho * Wo; ++i) acc += gp[i];
              gb[co] += acc;
            }
          }
        }
      });
}

Tensor dwconv2d(const Tensor& x, const Tensor& w, const Tensor& b, int pad) {
  if (x.ndim() != 4 || w.ndim() != 4) throw ShapeError("dwconv2d: expected 4-D");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (w.dim(0) != C || w.dim(1) != 1) throw ShapeError("dwconv2d: weight must be [C,1,kh,kw]");
  const int64_t kh = w.dim(2), kw = w.dim(3);
  if (b.defined() && (b.ndim() != 1 || b.dim(0) != C)) throw ShapeError("dwconv2d: bad bias");
  const int64_t Ho = H + 2 * pad - kh + 1;
  const int64_t Wo = W + 2 * pad - kw + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("dwconv2d: empty output");

  std::vector<Scalar> y(N * C * Ho * Wo);
  const Scalar* px = x.data();
  const Scalar* pw = w.data();
  const Scalar* pb = b.defined() ? b.data() : nullptr;
  parallel_for(N * C, [&](int64_t lo, int64_t hi) {
    for (int64_t idx = lo; idx < hi; ++idx) {
      const int64_t c = idx % C;
      const Scalar* xp = px + idx * H * W;
      const Scalar* wp = pw + c * kh * kw;
      Scalar* out = y.data() + idx * Ho * Wo;
      const Scalar bias = pb ? pb[c] : Scalar(0);
      for (int64_t i = 0; i < Ho * Wo; ++i) out[i] = bias;
      for (int64_t ho = 0; ho < Ho; ++ho) {
        const int64_t hbase = ho - pad;
        const int64_t u_lo = std::max<int64_t>(0, -hbase);
        const int64_t u_hi = std::min<int64_t>(kh - 1, H - 1 - hbase);
        Scalar* orow = out + ho * Wo;
        for (int64_t u = u_lo; u <= u_hi; ++u) {
          const Scalar* xrow = xp + (hbase + u) * W;
          const Scalar* wrow = wp + u * kw;
          for (int64_t wo = 0; wo < Wo; ++wo) {
            const int64_t wb = wo - pad;
            const int64_t v_lo = std::max<int64_t>(0, -wb);
            const int64_t v_hi = std::min<int64_t>(kw - 1, W - 1 - wb);
            Scalar acc = 0;
            for (int64_t v = v_lo; v <= v_hi; ++v) acc += xrow[wb + v] * wrow[v];
            orow[wo] += acc;
          }
        }
      }
    }
  });

  auto xn = x.node();
  auto wn = w.node();
  std::vector<Tensor> parents{x, w};
  if (b.defined()) parents.push_back(b);
  auto bnode = b.defined() ? b.node() : nullptr;
  return make_op(
      "dwconv2d", {N, C, Ho, Wo}, std::move(y), parents,
      [xn, wn, bnode, N, C, H, W, kh, kw, Ho, Wo, pad](TensorNode& self) {
        const Scalar* g = self.grad.data();
        const Scalar* px = xn->value.data();
        const Scalar* pw = wn->value.data();
        if (xn->requires_grad) {
          Scalar* gx = xn->grad.data();
          parallel_for(N * C, [&](int64_t lo, int64_t hi) {
            for (int64_t idx = lo; idx < hi; ++idx) {
              const int64_t c = idx % C;
              const Scalar* gp = g + idx * Ho * Wo;
              const Scalar* wp = pw + c * kh * kw;
              Scalar* gxp = gx + idx * H * W;
              for (int64_t ho = 0; ho < Ho; ++ho) {
                const int64_t hbase = ho - pad;
                const int64_t u_lo = std::max<int64_t>(0, -hbase);
                const int64_t u_hi = std::min<int64_t>(kh - 1, H - 1 - hbase);
                const Scalar* grow = gp + ho * Wo;
                for (int64_t u = u_lo; u <= u_hi; ++u) {
                  Scalar* gxrow = gxp + (hbase + u) * W;
                  const Scalar* wrow = wp + u * kw;
                  for (int64_t wo = 0; wo < Wo; ++wo) {
                    const int64_t wb = wo - pad;
                    const int64_t v_lo = std::max<int64_t>(0, -wb);
                    const int64_t v_hi = std::min<int64_t>(kw - 1, W - 1 - wb);
                    const Scalar gv = grow[wo];
                    for (int64_t v = v_lo; v <= v_hi; ++v) gxrow[wb + v] += gv * wrow[v];
                  }
                }
              }
            }
          });
        }
        if (wn->requires_grad) {
          Scalar* gw = wn->grad.data();
          for (int64_t n = 0; n < N; ++n) {
            for (int64_t c = 0; c < C; ++c) {
              const Scalar* gp = g + (n * C + c) * Ho * Wo;
              const Scalar* xp = px + (n * C + c) * H * W;
              Scalar* gwp = gw + c * kh * kw;
              for (int64_t ho = 0; ho < Ho; ++ho) {
                const int64_t hbase = ho - pad;
                const int64_t u_lo = std::max<int64_t>(0, -hbase);
                const int64_t u_hi = std::min<int64_t>(kh - 1, H - 1 - hbase);
                const Scalar* grow = gp + ho * Wo;
                for (int64_t u = u_lo; u <= u_hi; ++u) {
                  const Scalar* xrow = xp + (hbase + u) * W;
                  Scalar* gwrow = gwp + u * kw;
                  for (int64_t wo = 0; wo < Wo; ++wo) {
                    const int64_t wb = wo - pad;
                    const int64_t v_lo = std::max<int64_t>(0, -wb);
                    const int64_t v_hi = std::min<int64_t>(kw - 1, W - 1 - wb);
                    const Scalar gv = grow[wo];
                    for (int64_t v = v_lo; v <= v_hi; ++v) gwrow[v] += gv * xrow[wb + v];
                  }
                }
              }
            }
          }
        }
        if (bnode && bnode->requires_grad) {
          Scalar* gb = bnode->grad.data();
          for (int64_t n = 0; n < N; ++n) {
            for (int64_t c = 0; c < C; ++c) {
              const Scalar* gp = g + (n * C + c) * Ho * Wo;
              Scalar acc = 0;
              for (int64_t i = 0; i < Ho * Wo; ++i) acc += gp[i];
              gb[c] += acc;
            }
          }
        }
      });
}

Tensor avg_pool2d(const Tensor& x, int k, int stride) {
  if (x.ndim() != 4) throw ShapeError("avg_pool2d: expected NCHW");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t Ho = (H - k) / stride + 1;
  const int64_t Wo = (W - k) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ShapeError("avg_pool2d: empty output");
  const Scalar inv = Scalar(1) / static_cast<Scalar>(k * k);
  std::vector<Scalar> y(N * C * Ho * Wo);
  const Scalar* px = x.data();
  for (int64_t idx = 0; idx < N * C; ++idx) {
    const Scalar* xp = px + idx * H * W;
    Scalar* out = y.data() + idx * Ho * Wo;
    for (int64_t ho = 0; ho < Ho; ++ho) {
      for (int64_t wo = 0; wo < Wo; ++wo) {
        Scalar acc = 0;
        for (int64_t u = 0; u < k; ++u)
          for (int64_t v = 0; v < k; ++v) acc += xp[(ho * stride + u) * W + wo * stride + v];
        out[ho * Wo + wo] = acc * inv;
      }
    }
  }
  auto xn = x.node();
  return make_op("avg_pool2d", {N, C, Ho, Wo}, std::move(y), {x},
                 [xn, N, C, H, W, Ho, Wo, k, stride, inv](TensorNode& self) {
                   if (!xn->requires_grad) return;
                   Scalar* gx = xn->grad.data();
                   const Scalar* g = self.grad.data();
                   for (int64_t idx = 0; idx < N * C; ++idx) {
                     const Scalar* gp = g + idx * Ho * Wo;
                     Scalar* gxp = gx + idx * H * W;
                     for (int64_t ho = 0; ho < Ho; ++ho) {
                       for (int64_t wo = 0; wo < Wo; ++wo) {
                         const Scalar gv = gp[ho * Wo + wo] * inv;
                         for (int64_t u = 0; u < k; ++u)
                           for (int64_t v = 0; v < k; ++v)
                             gxp[(ho * stride + u) * W + wo * stride + v] += gv;
                       }
                     }
                   }
                 });
}

Tensor global_avg_pool(const Tensor& x) {
  if (x.ndim() != 4) throw ShapeError("global_avg_pool: expected NCHW");
  const int64_t N = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
  const Scalar inv = Scalar(1) / static_cast<Scalar>(hw);
  std::vector<Scalar> y(N * C);
  const Scalar* px = x.data();
  for (int64_t i = 0; i < N * C; ++i) {
    Scalar acc = 0;
    for (int64_t j = 0; j < hw; ++j) acc += px[i * hw + j];
    y[i] = acc * inv;
  }
  auto xn = x.node();
  return make_op("global_avg_pool", {N, C}, std::move(y), {x}, [xn, hw, inv](TensorNode& self) {
    if (!xn->requires_grad) return;
    const int64_t nc = static_cast<int64_t>(self.value.size());
    for (int64_t i = 0; i < nc; ++i) {
      const Scalar gv = self.grad[i] * inv;
      for (int64_t j = 0; j < hw; ++j) xn->grad[i * hw + j] += gv;
    }
  });
}

Tensor upsample_nearest2x(const Tensor& x) {
  if (x.ndim() != 4) throw ShapeError("upsample_nearest2x: expected NCHW");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<Scalar> y(N * C * 4 * H * W);
  const Scalar* px = x.data();
  const int64_t Ho = 2 * H, Wo = 2 * W;
  for (int64_t idx = 0; idx < N * C; ++idx) {
    const Scalar* xp = px + idx * H * W;
    Scalar* out = y.data() + idx * Ho * Wo;
    for (int64_t h = 0; h < H; ++h) {
      for (int64_t w = 0; w < W; ++w) {
        const Scalar v = xp[h * W + w];
        out[(2 * h) * Wo + 2 * w] = v;
        out[(2 * h) * Wo + 2 * w + 1] = v;
        out[(2 * h + 1) * Wo + 2 * w] = v;
        out[(2 * h + 1) * Wo + 2 * w + 1] = v;
      }
    }
  }
  auto xn = x.node();
  return make_op("upsample_nearest2x", {N, C, Ho, Wo}, std::move(y), {x},
                 [xn, N, C, H, W, Ho, Wo](TensorNode& self) {
                   if (!xn->requires_grad) return;
                   const Scalar* g = self.grad.data();
                   for (int64_t idx = 0; idx < N * C; ++idx) {
                     const Scalar* gp = g + idx * Ho * Wo;
                     Scalar* gxp = xn->grad.data() + idx * H * W;
                     for (int64_t h = 0; h < H; ++h) {
                       for (int64_t w = 0; w < W; ++w) {
                         gxp[h * W + w] += gp[(2 * h) * Wo + 2 * w] +
                                           gp[(2 * h) * Wo + 2 * w + 1] +
                                           gp[(2 * h + 1) * Wo + 2 * w] +
                                           gp[(2 * h + 1) * Wo + 2 * w + 1];
                       }
                     }
                   }
                 });
}

// ---- normalization ----

Tensor softmax_lastdim(const Tensor& x) {
  const int64_t d = x.shape()[x.ndim() - 1];
  const int64_t rows = x.numel() / d;
  std::vector<Scalar> y(x.numel());
  const Scalar* px = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    const Scalar* row = px + r * d;
    Scalar mx = row[0];
    for (int64_t i = 1; i < d; ++i) mx = std::max(mx, row[i]);
    Scalar denom = 0;
    for (int64_t i = 0; i < d; ++i) {
      const Scalar e = std::exp(row[i] - mx);
      y[r * d + i] = e;
      denom += e;
    }
    const Scalar inv = Scalar(1) / denom;
    for (int64_t i = 0; i < d; ++i) y[r * d + i] *= inv;
  }
  auto xn = x.node();
  return make_op("softmax", x.shape(), std::move(y), {x}, [xn, rows, d](TensorNode& self) {
    if (!xn->requires_grad) return;
    for (int64_t r = 0; r < rows; ++r) {
      const Scalar* yv = self.value.data() + r * d;
      const Scalar* gy = self.grad.data() + r * d;
      Scalar dot = 0;
      for (int64_t i = 0; i < d; ++i) dot += yv[i] * gy[i];
      Scalar* gx = xn->grad.data() + r * d;
      for (int64_t i = 0; i < d; ++i) gx[i] += yv[i] * (gy[i] - dot);
    }
  });
}

Tensor layer_norm_lastdim(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  const int64_t d = x.shape()[x.ndim() - 1];
  if (gamma.numel() != d || beta.numel() != d) throw ShapeError("layer_norm: affine size mismatch");
  const int64_t rows = x.numel() / d;
  std::vector<Scalar> y(x.numel());
  std::vector<Scalar> mean(rows), istd(rows);
  const Scalar* px = x.data();
  const Scalar* pg = gamma.data();
  const Scalar* pbeta = beta.data();
  for (int64_t r = 0; r < rows; ++r) {
    const Scalar* row = px + r * d;
    Scalar m = 0;
    for (int64_t i = 0; i < d; ++i) m += row[i];
    m /= static_cast<Scalar>(d);
    Scalar v = 0;
    for (int64_t i = 0; i < d; ++i) v += (row[i] - m) * (row[i] - m);
    v /= static_cast<Scalar>(d);
    const Scalar is = Scalar(1) / std::sqrt(v + static_cast<Scalar>(eps));
    mean[r] = m;
    istd[r] = is;
    for (int64_t i = 0; i < d; ++i) y[r * d + i] = (row[i] - m) * is * pg[i] + pbeta[i];
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return make_op(
      "layer_norm", x.shape(), std::move(y), {x, gamma, beta},
      [xn, gn, bn, rows, d, mean, istd](TensorNode& self) {
        const Scalar* g = self.grad.data();
        const Scalar* px = xn->value.data();
        const Scalar* pg = gn->value.data();
        for (int64_t r = 0; r < rows; ++r) {
          const Scalar m = mean[r], is = istd[r];
          const Scalar* row = px + r * d;
          const Scalar* gy = g + r * d;
          // dxhat, plus reductions for the mean/var terms
          Scalar sum_dxhat = 0, sum_dxhat_xhat = 0;
          for (int64_t i = 0; i < d; ++i) {
            const Scalar xhat = (row[i] - m) * is;
            const Scalar dxhat = gy[i] * pg[i];
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
          }
          if (xn->requires_grad) {
            Scalar* gx = xn->grad.data() + r * d;
            const Scalar invd = Scalar(1) / static_cast<Scalar>(d);
            for (int64_t i = 0; i < d; ++i) {
              const Scalar xhat = (row[i] - m) * is;
              const Scalar dxhat = gy[i] * pg[i];
              gx[i] += is * (dxhat - invd * sum_dxhat - xhat * invd * sum_dxhat_xhat);
            }
          }
          if (gn->requires_grad || bn->requires_grad) {
            for (int64_t i = 0; i < d; ++i) {
              const Scalar xhat = (row[i] - m) * is;
              if (gn->requires_grad) gn->grad[i] += gy[i] * xhat;
              if (bn->requires_grad) bn->grad[i] += gy[i];
            }
          }
        }
      });
}

Tensor batch_norm2d_train(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                          std::vector<Scalar>* batch_mean, std::vector<Scalar>* batch_var,
                          double eps) {
  if (x.ndim() != 4) throw ShapeError("batch_norm: expected NCHW");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.numel() != C || beta.numel() != C) throw ShapeError("batch_norm: affine mismatch");
  const int64_t hw = H * W;
  const int64_t M = N * hw;
  std::vector<Scalar> mean(C, 0), var(C, 0);
  const Scalar* px = x.data();
  for (int64_t c = 0; c < C; ++c) {
    Scalar m = 0;
    for (int64_t n = 0; n < N; ++n) {
      const Scalar* xp = px + (n * C + c) * hw;
      for (int64_t i = 0; i < hw; ++i) m += xp[i];
    }
    m /= static_cast<Scalar>(M);
    Scalar v = 0;
    for (int64_t n = 0; n < N; ++n) {
      const Scalar* xp = px + (n * C + c) * hw;
      for (int64_t i = 0; i < hw; ++i) v += (xp[i] - m) * (xp[i] - m);
    }
    v /= static_cast<Scalar>(M);
    mean[c] = m;
    var[c] = v;
  }
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;

  std::vector<Scalar> istd(C);
  for (int64_t c = 0; c < C; ++c) istd[c] = Scalar(1) / std::sqrt(var[c] + static_cast<Scalar>(eps));
  std::vector<Scalar> y(x.numel());
  const Scalar* pg = gamma.data();
  const Scalar* pbeta = beta.data();
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const Scalar* xp = px + (n * C + c) * hw;
      Scalar* yp = y.data() + (n * C + c) * hw;
      const Scalar m = mean[c], is = istd[c], gm = pg[c], bt = pbeta[c];
      for (int64_t i = 0; i < hw; ++i) yp[i] = (xp[i] - m) * is * gm + bt;
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return make_op(
      "batch_norm", x.shape(), std::move(y), {x, gamma, beta},
      [xn, gn, bn, N, C, hw, M, mean, istd](TensorNode& self) {
        const Scalar* g = self.grad.data();
        const Scalar* px = xn->value.data();
        const Scalar* pg = gn->value.data();
        for (int64_t c = 0; c < C; ++c) {
          const Scalar m = mean[c], is = istd[c];
          Scalar sum_dxhat = 0, sum_dxhat_xhat = 0, sum_gy = 0;
          for (int64_t n = 0; n < N; ++n) {
            const Scalar* xp = px + (n * C + c) * hw;
            const Scalar* gy = g + (n * C + c) * hw;
            for (int64_t i = 0; i < hw; ++i) {
              const Scalar xhat = (xp[i] - m) * is;
              const Scalar dxhat = gy[i] * pg[c];
              sum_dxhat += dxhat;
              sum_dxhat_xhat += dxhat * xhat;
              sum_gy += gy[i];
            }
          }
          if (xn->requires_grad) {
            const Scalar invm = Scalar(1) / static_cast<Scalar>(M);
            for (int64_t n = 0; n < N; ++n) {
              const Scalar* xp = px + (n * C + c) * hw;
              const Scalar* gy = g + (n * C + c) * hw;
              Scalar* gx = xn->grad.data() + (n * C + c) * hw;
              for (int64_t i = 0; i < hw; ++i) {
                const Scalar xhat = (xp[i] - m) * is;
                const Scalar dxhat = gy[i] * pg[c];
                gx[i] += is * (dxhat - invm * sum_dxhat - xhat * invm * sum_dxhat_xhat);
              }
            }
          }
          if (gn->requires_grad) {
            Scalar acc = 0;
            for (int64_t n = 0; n < N; ++n) {
              const Scalar* xp = px + (n * C + c) * hw;
              const Scalar* gy = g + (n * C + c) * hw;
              for (int64_t i = 0; i < hw; ++i) acc += gy[i] * (xp[i] - m) * is;
            }
            gn->grad[c] += acc;
          }
          if (bn->requires_grad) bn->grad[c] += sum_gy;
        }
      });
}

Tensor batch_norm2d_eval(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                         const std::vector<Scalar>& running_mean,
                         const std::vector<Scalar>& running_var, double eps) {
  if (x.ndim() != 4) throw ShapeError("batch_norm_eval: expected NCHW");
  const int64_t N = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
  if (static_cast<int64_t>(running_mean.size()) != C ||
      static_cast<int64_t>(running_var.size()) != C) {
    throw ShapeError("batch_norm_eval: running stats size mismatch");
  }
  std::vector<Scalar> istd(C);
  for (int64_t c = 0; c < C; ++c) {
    istd[c] = Scalar(1) / std::sqrt(running_var[c] + static_cast<Scalar>(eps));
  }
  std::vector<Scalar> y(x.numel());
  const Scalar* px = x.data();
  const Scalar* pg = gamma.data();
  const Scalar* pbeta = beta.data();
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const Scalar* xp = px + (n * C + c) * hw;
      Scalar* yp = y.data() + (n * C + c) * hw;
      const Scalar m = running_mean[c], is = istd[c], gm = pg[c], bt = pbeta[c];
      for (int64_t i = 0; i < hw; ++i) yp[i] = (xp[i] - m) * is * gm + bt;
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  auto rmean = running_mean;
  return make_op("batch_norm_eval", x.shape(), std::move(y), {x, gamma, beta},
                 [xn, gn, bn, N, C, hw, rmean, istd](TensorNode& self) {
                   const Scalar* g = self.grad.data();
                   const Scalar* px = xn->value.data();
                   const Scalar* pg = gn->value.data();
                   for (int64_t n = 0; n < N; ++n) {
                     for (int64_t c = 0; c < C; ++c) {
                       const Scalar* gy = g + (n * C + c) * hw;
                       const Scalar* xp = px + (n * C + c) * hw;
                       if (xn->requires_grad) {
                         Scalar* gx = xn->grad.data() + (n * C + c) * hw;
                         const Scalar k = pg[c] * istd[c];
                         for (int64_t i = 0; i < hw; ++i) gx[i] += gy[i] * k;
                       }
                       if (gn->requires_grad) {
                         Scalar acc = 0;
                         for (int64_t i = 0; i < hw; ++i)
                           acc += gy[i] * (xp[i] - rmean[c]) * istd[c];
                         gn->grad[c] += acc;
                       }
                       if (bn->requires_grad) {
                         Scalar acc = 0;
                         for (int64_t i = 0; i < hw; ++i) acc += gy[i];
                         bn->grad[c] += acc;
                       }
                     }
                   }
                 });
}

namespace {

Tensor l2_normalize_rows(const char* op, const Tensor& x, int64_t rows, int64_t d,
                         int64_t row_stride, int64_t elem_stride) {
  // Generic row normalizer over a strided view; exact unit norm for nonzero rows.
  std::vector<Scalar> y(x.numel());
  std::vector<Scalar> norms(rows);
  const Scalar* px = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    Scalar s = 0;
    for (int64_t i = 0; i < d; ++i) {
      const Scalar v = px[r * row_stride + i * elem_stride];
      s += v * v;
    }
    Scalar nrm = std::sqrt(s);
    if (nrm < Scalar(1e-30)) nrm = Scalar(1e-30);
    norms[r] = nrm;
    for (int64_t i = 0; i < d; ++i) {
      const int64_t off = r * row_stride + i * elem_stride;
      y[off] = px[off] / nrm;
    }
  }
  auto xn = x.node();
  return make_op(op, x.shape(), std::move(y), {x},
                 [xn, rows, d, row_stride, elem_stride, norms](TensorNode& self) {
                   if (!xn->requires_grad) return;
                   const Scalar* px = xn->value.data();
                   const Scalar* g = self.grad.data();
                   for (int64_t r = 0; r < rows; ++r) {
                     const Scalar nrm = norms[r];
                     Scalar dot = 0;
                     for (int64_t i = 0; i < d; ++i) {
                       const int64_t off = r * row_stride + i * elem_stride;
                       dot += px[off] * g[off];
                     }
                     const Scalar inv = Scalar(1) / nrm;
                     const Scalar inv3 = inv * inv * inv;
                     for (int64_t i = 0; i < d; ++i) {
                       const int64_t off = r * row_stride + i * elem_stride;
                       xn->grad[off] += g[off] * inv - px[off] * dot * inv3;
                     }
                   }
                 });
}

}  // namespace

Tensor l2_normalize_lastdim(const Tensor& x) {
  const int64_t d = x.shape()[x.ndim() - 1];
  const int64_t rows = x.numel() / d;
  return l2_normalize_rows("l2_normalize", x, rows, d, d, 1);
}

Tensor l2_normalize_channels(const Tensor& x) {
  if (x.ndim() != 4) throw ShapeError("l2_normalize_channels: expected NCHW");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t hw = H * W;
  // Rows are (n,h,w) triples; elements stride across channels.
  // Flattened view: offset = n*C*hw + c*hw + p  with p in [0,hw).
  // Treat r = n*hw + p, row base = n*C*hw + p, element stride = hw.
  std::vector<Scalar> y(x.numel());
  std::vector<Scalar> norms(N * hw);
  const Scalar* px = x.data();
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t p = 0; p < hw; ++p) {
      Scalar s = 0;
      for (int64_t c = 0; c < C; ++c) {
        const Scalar v = px[(n * C + c) * hw + p];
        s += v * v;
      }
      Scalar nrm = std::sqrt(s);
      if (nrm < Scalar(1e-30)) nrm = Scalar(1e-30);
      norms[n * hw + p] = nrm;
      for (int64_t c = 0; c < C; ++c) {
        const int64_t off = (n * C + c) * hw + p;
        y[off] = px[off] / nrm;
      }
    }
  }
  auto xn = x.node();
  return make_op("l2_normalize_channels", x.shape(), std::move(y), {x},
                 [xn, N, C, hw, norms](TensorNode& self) {
                   if (!xn->requires_grad) return;
                   const Scalar* px = xn->value.data();
                   const Scalar* g = self.grad.data();
                   for (int64_t n = 0; n < N; ++n) {
                     for (int64_t p = 0; p < hw; ++p) {
                       const Scalar nrm = norms[n * hw + p];
                       Scalar dot = 0;
                       for (int64_t c = 0; c < C; ++c) {
                         const int64_t off = (n * C + c) * hw + p;
                         dot += px[off] * g[off];
                       }
                       const Scalar inv = Scalar(1) / nrm;
                       const Scalar inv3 = inv * inv * inv;
                       for (int64_t c = 0; c < C; ++c) {
                         const int64_t off = (n * C + c) * hw + p;
                         xn->grad[off] += g[off] * inv - px[off] * dot * inv3;
                       }
                     }
                   }
                 });
}

// ---- attention plumbing ----

Tensor window_partition(const Tensor& x, int win) {
  if (x.ndim() != 4) throw ShapeError("window_partition: expected NCHW");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % win || W % win) throw ShapeError("window_partition: window must divide spatial dims");
  const int64_t nh = H / win, nw = W / win;
  const int64_t B = N * nh * nw, T = static_cast<int64_t>(win) * win;
  std::vector<Scalar> y(B * T * C);
  const Scalar* px = x.data();
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t wy = 0; wy < nh; ++wy) {
      for (int64_t wx = 0; wx < nw; ++wx) {
        const int64_t bi = (n * nh + wy) * nw + wx;
        for (int64_t ty = 0; ty < win; ++ty) {
          for (int64_t tx = 0; tx < win; ++tx) {
            const int64_t t = ty * win + tx;
            const int64_t hh = wy * win + ty, ww = wx * win + tx;
            for (int64_t c = 0; c < C; ++c) {
              y[(bi * T + t) * C + c] = px[((n * C + c) * H + hh) * W + ww];
            }
          }
        }
      }
    }
  }
  auto xn = x.node();
  return make_op("window_partition", {B, T, C}, std::move(y), {x},
                 [xn, N, C, H, W, win, nh, nw, T](TensorNode& self) {
                   if (!xn->requires_grad) return;
                   const Scalar* g = self.grad.data();
                   for (int64_t n = 0; n < N; ++n) {
                     for (int64_t wy = 0; wy < nh; ++wy) {
                       for (int64_t wx = 0; wx < nw; ++wx) {
                         const int64_t bi = (n * nh + wy) * nw + wx;
                         for (int64_t ty = 0; ty < win; ++ty) {
                           for (int64_t tx = 0; tx < win; ++tx) {
                             const int64_t t = ty * win + tx;
                             const int64_t hh = wy * win + ty, ww = wx * win + tx;
                             for (int64_t c = 0; c < C; ++c) {
                               xn->grad[((n * C + c) * H + hh) * W + ww] +=
                                   g[(bi * T + t) * C + c];
                             }
                           }
                         }
                       }
                     }
                   }
                 });
}

Tensor window_merge(const Tensor& t, int win, int64_t n, int64_t c, int64_t h, int64_t w) {
  if (t.ndim() != 3) throw ShapeError("window_merge: expected [B,T,C]");
  const int64_t nh = h / win, nw = w / win;
  const int64_t B = n * nh * nw, T = static_cast<int64_t>(win) * win;
  if (t.dim(0) != B || t.dim(1) != T || t.dim(2) != c) {
    throw ShapeError("window_merge: shape mismatch");
  }
  std::vector<Scalar> y(n * c * h * w);
  const Scalar* pt = t.data();
  for (int64_t ni = 0; ni < n; ++ni) {
    for (int64_t wy = 0; wy < nh; ++wy) {
      for (int64_t wx = 0; wx < nw; ++wx) {
        const int64_t bi = (ni * nh + wy) * nw + wx;
        for (int64_t ty = 0; ty < win; ++ty) {
          for (int64_t tx = 0; tx < win; ++tx) {
            const int64_t ti = ty * win + tx;
            const int64_t hh = wy * win + ty, ww = wx * win + tx;
            for (int64_t ci = 0; ci < c; ++ci) {
              y[((ni * c + ci) * h + hh) * w + ww] = pt[(bi * T + ti) * c + ci];
            }
          }
        }
      }
    }
  }
  auto tn = t.node();
  return make_op("window_merge", {n, c, h, w}, std::move(y), {t},
                 [tn, n, c, h, w, win, nh, nw, T](TensorNode& self) {
                   if (!tn->requires_grad) return;
                   const Scalar* g = self.grad.data();
                   for (int64_t ni = 0; ni < n; ++ni) {
                     for (int64_t wy = 0; wy < nh; ++wy) {
                       for (int64_t wx = 0; wx < nw; ++wx) {
                         const int64_t bi = (ni * nh + wy) * nw + wx;
                         for (int64_t ty = 0; ty < win; ++ty) {
                           for (int64_t tx = 0; tx < win; ++tx) {
                             const int64_t ti = ty * win + tx;
                             const int64_t hh = wy * win + ty, ww = wx * win + tx;
                             for (int64_t ci = 0; ci < c; ++ci) {
                               tn->grad[(bi * T + ti) * c + ci] +=
                                   g[((ni * c + ci) * h + hh) * w + ww];
                             }
                           }
                         }
                       }
                     }
                   }
                 });
}

Tensor roll2d(const Tensor& x, int dy, int dx) {
  if (x.ndim() != 4) throw ShapeError("roll2d: expected NCHW");
  const int64_t NC = x.dim(0) * x.dim(1), H = x.dim(2), W = x.dim(3);
  auto wrap = [](int64_t v, int64_t m) { return ((v % m) + m) % m; };
  std::vector<Scalar> y(x.numel());
  const Scalar* px = x.data();
  for (int64_t p = 0; p < NC; ++p) {
    for (int64_t h = 0; h < H; ++h) {
      const int64_t hs = wrap(h - dy, H);
      for (int64_t w = 0; w < W; ++w) {
        y[(p * H + h) * W + w] = px[(p * H + hs) * W + wrap(w - dx, W)];
      }
    }
  }
  auto xn = x.node();
  return make_op("roll2d", x.shape(), std::move(y), {x},
                 [xn, NC, H, W, dy, dx, wrap](TensorNode& self) {
                   if (!xn->requires_grad) return;
                   const Scalar* g = self.grad.data();
                   for (int64_t p = 0; p < NC; ++p) {
                     for (int64_t h = 0; h < H; ++h) {
                       const int64_t hs = wrap(h - dy, H);
                       for (int64_t w = 0; w < W; ++w) {
                         xn->grad[(p * H + hs) * W + wrap(w - dx, W)] += g[(p * H + h) * W + w];
                       }
                     }
                   }
                 });
}

Tensor spatial_scale(const Tensor& x, const Tensor& map) {
  if (x.ndim() != 4 || map.ndim() != 4) throw ShapeError("spatial_scale: expected NCHW");
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (map.dim(1) != 1 || map.dim(2) != H || map.dim(3) != W ||
      (map.dim(0) != 1 && map.dim(0) != N)) {
    throw ShapeError("spatial_scale: map must be [1|N,1,H,W]");
  }
  const bool per_n = map.dim(0) == N;
  const int64_t hw = H * W;
  std::vector<Scalar> y(x.numel());
  const Scalar* px = x.data();
  const Scalar* pm = map.data();
  for (int64_t n = 0; n < N; ++n) {
    const Scalar* mp = pm + (per_n ? n * hw : 0);
    for (int64_t c = 0; c < C; ++c) {
      const Scalar* xp = px + (n * C + c) * hw;
      Scalar* yp = y.data() + (n * C + c) * hw;
      for (int64_t i = 0; i < hw; ++i) yp[i] = xp[i] * mp[i];
    }
  }
  auto xn = x.node();
  auto mn = map.node();
  return make_op("spatial_scale", x.shape(), std::move(y), {x, map},
                 [xn, mn, N, C, hw, per_n](TensorNode& self) {
                   const Scalar* g = self.grad.data();
                   const Scalar* px = xn->value.data();
                   const Scalar* pm = mn->value.data();
                   for (int64_t n = 0; n < N; ++n) {
                     const Scalar* mp = pm + (per_n ? n * hw : 0);
                     for (int64_t c = 0; c < C; ++c) {
                       const int64_t base = (n * C + c) * hw;
                       if (xn->requires_grad) {
                         for (int64_t i = 0; i < hw; ++i) xn->grad[base + i] += g[base + i] * mp[i];
                       }
                       if (mn->requires_grad) {
                         Scalar* gm = mn->grad.data() + (per_n ? n * hw : 0);
                         for (int64_t i = 0; i < hw; ++i) gm[i] += g[base + i] * px[base + i];
                       }
                     }
                   }
                 });
}

Tensor film(const Tensor& x, const Tensor& gamma, const Tensor& beta) {
  if (x.ndim() != 4) throw ShapeError("film: expected NCHW");
  const int64_t N = x.dim(0), C = x.dim(1), hw = x.dim(2) * x.dim(3);
  // gamma/beta are either shared [C] vectors or per-sample [N,C].
  const bool per_sample = gamma.ndim() == 2;
  if (per_sample) {
    if (gamma.dim(0) != N || gamma.dim(1) != C || beta.shape() != gamma.shape()) {
      throw ShapeError("film: per-sample gamma/beta must be [N,C]");
    }
  } else if (gamma.numel() != C || beta.numel() != C) {
    throw ShapeError("film: gamma/beta length " + std::to_string(gamma.numel()) +
                     " does not match channels " + std::to_string(C));
  }
  std::vector<Scalar> y(x.numel());
  const Scalar* px = x.data();
  const Scalar* pg = gamma.data();
  const Scalar* pb = beta.data();
  for (int64_t n = 0; n < N; ++n) {
    for (int64_t c = 0; c < C; ++c) {
      const int64_t pi = per_sample ? n * C + c : c;
      const Scalar* xp = px + (n * C + c) * hw;
      Scalar* yp = y.data() + (n * C + c) * hw;
      const Scalar gm = pg[pi], bt = pb[pi];
      for (int64_t i = 0; i < hw; ++i) yp[i] = gm * xp[i] + bt;
    }
  }
  auto xn = x.node();
  auto gn = gamma.node();
  auto bn = beta.node();
  return make_op("film", x.shape(), std::move(y), {x, gamma, beta},
                 [xn, gn, bn, N, C, hw, per_sample](TensorNode& self) {
                   const Scalar* g = self.grad.data();
                   const Scalar* px = xn->value.data();
                   const Scalar* pg = gn->value.data();
                   for (int64_t n = 0; n < N; ++n) {
                     for (int64_t c = 0; c < C; ++c) {
                       const int64_t base = (n * C + c) * hw;
                       const int64_t pi = per_sample ? n * C + c : c;
                       if (xn->requires_grad) {
                         const Scalar gm = pg[pi];
                         for (int64_t i = 0; i < hw; ++i) xn->grad[base + i] += g[base + i] * gm;
                       }
                       if (gn->requires_grad) {
                         Scalar acc = 0;
                         for (int64_t i = 0; i < hw; ++i) acc += g[base + i] * px[base + i];
                         gn->grad[pi] += acc;
                       }
                       if (bn->requires_grad) {
                         Scalar acc = 0;
                         for (int64_t i = 0; i < hw; ++i) acc += g[base + i];
                         bn->grad[pi] += acc;
                       }
                     }
                   }
                 });
}

}  // namespace saiw
