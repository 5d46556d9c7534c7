// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <memory>
#include <string>

#include "cfnet/errors.hpp"
#include "cfnet/parallel.hpp"

namespace cfnet {
namespace {

using RowMat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

struct Geometry {
  std::size_t channels, height, width;  // image being unfolded
  std::size_t k, stride, pad;
  std::size_t out_h, out_w;             // window grid
};

// Window columns ow whose source x = ow*s + kw - pad lies inside [0, width).
struct ColRange {
  std::size_t begin, end;
};

ColRange valid_cols(const Geometry& g, std::size_t kw) {
  const long s = static_cast<long>(g.stride);
  const long off = static_cast<long>(kw) - static_cast<long>(g.pad);
  const long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  const long last = static_cast<long>(g.width) - 1 - off;
  const long hi = last < 0 ? 0 : last / s + 1;  // exclusive
  const long out_w = static_cast<long>(g.out_w);
  const long b = std::clamp(lo, 0L, out_w);
  return {static_cast<std::size_t>(b), static_cast<std::size_t>(std::clamp(hi, b, out_w))};
}

// cols[(c, kh, kw), (oh, ow)] = image[c, oh*s + kh - pad, ow*s + kw - pad]
void im2col(const Real* image, const Geometry& g, Real* cols) {
  const std::size_t grid = g.out_h * g.out_w;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const Real* src = image + c * g.height * g.width;
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        Real* dst = cols + ((c * g.k + kh) * g.k + kw) * grid;
        const auto [x0, x1] = valid_cols(g, kw);
        const long xoff = static_cast<long>(kw) - static_cast<long>(g.pad);
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long y = static_cast<long>(oh * g.stride + kh) - static_cast<long>(g.pad);
          Real* row = dst + oh * g.out_w;
          if (y < 0 || y >= static_cast<long>(g.height)) {
            std::fill_n(row, g.out_w, 0.0);
            continue;
          }
          const Real* line = src + static_cast<std::size_t>(y) * g.width + xoff;
          std::fill_n(row, x0, 0.0);
          if (g.stride == 1) {
            std::copy(line + x0, line + x1, row + x0);
          } else {
            for (std::size_t ow = x0; ow < x1; ++ow) row[ow] = line[ow * g.stride];
          }
          std::fill(row + x1, row + g.out_w, 0.0);
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds columns back into a zeroed image.
void col2im(const Real* cols, const Geometry& g, Real* image) {
  const std::size_t grid = g.out_h * g.out_w;
  std::fill_n(image, g.channels * g.height * g.width, 0.0);
  for (std::size_t c = 0; c < g.channels; ++c) {
    Real* dst = image + c * g.height * g.width;
    for (std::size_t kh = 0; kh < g.k; ++kh) {
      for (std::size_t kw = 0; kw < g.k; ++kw) {
        const Real* src = cols + ((c * g.k + kh) * g.k + kw) * grid;
        const auto [x0, x1] = valid_cols(g, kw);
        const long xoff = static_cast<long>(kw) - static_cast<long>(g.pad);
        for (std::size_t oh = 0; oh < g.out_h; ++oh) {
          const long y = static_cast<long>(oh * g.stride + kh) - static_cast<long>(g.pad);
          if (y < 0 || y >= static_cast<long>(g.height)) continue;
          Real* line = dst + static_cast<std::size_t>(y) * g.width + xoff;
          const Real* row = src + oh * g.out_w;
          for (std::size_t ow = x0; ow < x1; ++ow) line[ow * g.stride] += row[ow];
        }
      }
    }
  }
}

// Scratch buffer without value-initialisation; im2col writes every entry.
std::unique_ptr<Real[]> scratch(std::size_t n) { return std::make_unique_for_overwrite<Real[]>(n); }

bool is_pointwise(const ConvSpec& s) {
  return s.kernel_size == 1 && s.stride == 1 && s.padding == 0 && !s.transposed;
}

// (O, I, k, k) <-> (I, O, k, k)
Tensor4 swap_io(const Tensor4& w) {
  const std::size_t kk = w.h() * w.w();
  Tensor4 out(w.c(), w.n(), w.h(), w.w());
  for (std::size_t o = 0; o < w.n(); ++o) {
    for (std::size_t i = 0; i < w.c(); ++i) {
      std::copy_n(w.plane(o, i), kk, out.plane(i, o));
    }
  }
  return out;
}

void check_conv_operands(const Tensor4& input, const Tensor4& weight, std::size_t bias_len,
                         const ConvSpec& spec) {
  spec.validate();
  if (input.c() != spec.in_channels) {
    throw ShapeError("conv input: expected " + std::to_string(spec.in_channels) +
                     " channels, got " + std::to_string(input.c()) + " (" +
                     to_string(input.shape()) + ")");
  }
  require_shape(weight.shape(), spec.weight_shape(), "conv weight");
  if (bias_len != 0 && bias_len != spec.out_channels) {
    throw ShapeError("conv bias: expected " + std::to_string(spec.out_channels) +
                     " entries, got " + std::to_string(bias_len));
  }
}

}  // namespace

void ConvSpec::validate() const {
  if (in_channels == 0 || out_channels == 0) throw ConfigError("conv: zero channel count");
  if (transposed) {
    if (kernel_size != 3 || stride != 2 || padding != 1) {
      throw ConfigError("transposed conv must be 3x3, stride 2, padding 1");
    }
    return;
  }
  if (kernel_size != 1 && kernel_size != 3) throw ConfigError("conv: kernel size must be 1 or 3");
  if (stride != 1 && stride != 2) throw ConfigError("conv: stride must be 1 or 2");
  if (kernel_size == 1 && padding != 0) throw ConfigError("conv: 1x1 kernels take padding 0");
  if (kernel_size == 3 && stride == 1 && padding != 1) {
    throw ConfigError("conv: 3x3 stride-1 kernels take padding 1");
  }
}

Shape4 ConvSpec::output_shape(const Shape4& in) const {
  if (transposed) return {in.n, out_channels, 2 * in.h, 2 * in.w};
  if (in.h + 2 * padding < kernel_size || in.w + 2 * padding < kernel_size) {
    throw ShapeError("conv input " + to_string(in) + " smaller than kernel");
  }
  return {in.n, out_channels, (in.h + 2 * padding - kernel_size) / stride + 1,
          (in.w + 2 * padding - kernel_size) / stride + 1};
}

Tensor4 conv2d_forward(const Tensor4& input, const Tensor4& weight, std::span<const Real> bias,
                       const ConvSpec& spec) {
  check_conv_operands(input, weight, bias.size(), spec);
  const Shape4 out_shape = spec.output_shape(input.shape());
  Tensor4 out(out_shape);
  const std::size_t in_grid = input.h() * input.w();
  const std::size_t out_grid = out_shape.h * out_shape.w;
  const std::size_t k = spec.kernel_size;
  const std::size_t I = spec.in_channels;
  const std::size_t O = spec.out_channels;

  if (!spec.transposed) {
    const ConstMatMap wmat(weight.data(), O, I * k * k);
    const Geometry g{I, input.h(), input.w(), k, spec.stride, spec.padding, out_shape.h,
                     out_shape.w};
    parallel_for(input.n(), [&](std::size_t b) {
      MatMap y(out.sample(b), O, out_grid);
      if (is_pointwise(spec)) {
        y.noalias() = wmat * ConstMatMap(input.sample(b), I, in_grid);
      } else {
        const auto cols = scratch(I * k * k * out_grid);
        im2col(input.sample(b), g, cols.get());
        y.noalias() = wmat * ConstMatMap(cols.get(), I * k * k, out_grid);
      }
      if (!bias.empty()) {
        for (std::size_t o = 0; o < O; ++o) y.row(o).array() += bias[o];
      }
    });
    return out;
  }

  // Transposed: scatter W^T x through the stride-2 window grid of the output.
  const Tensor4 w_io = swap_io(weight);  // (I, O, k, k)
  const ConstMatMap wt(w_io.data(), I, O * k * k);
  const Geometry g{O, out_shape.h, out_shape.w, k, 2, 1, input.h(), input.w()};
  parallel_for(input.n(), [&](std::size_t b) {
    RowMat cols = wt.transpose() * ConstMatMap(input.sample(b), I, in_grid);
    col2im(cols.data(), g, out.sample(b));
    if (!bias.empty()) {
      for (std::size_t o = 0; o < O; ++o) {
        Real* p = out.plane(b, o);
        for (std::size_t i = 0; i < out_grid; ++i) p[i] += bias[o];
      }
    }
  });
  return out;
}

ConvGrads conv2d_backward(const Tensor4& grad_out, const Tensor4& saved_input,
                          const Tensor4& weight, const ConvSpec& spec, bool need_input_grad) {
  check_conv_operands(saved_input, weight, 0, spec);
  require_shape(grad_out.shape(), spec.output_shape(saved_input.shape()), "conv grad_out");
  const std::size_t B = saved_input.n();
  const std::size_t I = spec.in_channels;
  const std::size_t O = spec.out_channels;
  const std::size_t k = spec.kernel_size;
  const std::size_t in_grid = saved_input.h() * saved_input.w();
  const std::size_t out_grid = grad_out.h() * grad_out.w();

  ConvGrads grads;
  grads.weight = Tensor4(spec.weight_shape());
  grads.bias.assign(O, 0.0);
  if (need_input_grad) grads.input = Tensor4(saved_input.shape());

  // Per-sample partial weight gradients, reduced in sample order below.
  std::vector<RowMat> partial(B);

  if (!spec.transposed) {
    const ConstMatMap wmat(weight.data(), O, I * k * k);
    const Geometry g{I, saved_input.h(), saved_input.w(), k, spec.stride, spec.padding,
                     grad_out.h(), grad_out.w()};
    parallel_for(B, [&](std::size_t b) {
      const ConstMatMap gy(grad_out.sample(b), O, out_grid);
      std::unique_ptr<Real[]> cols;
      const Real* cols_ptr = saved_input.sample(b);
      if (!is_pointwise(spec)) {
        cols = scratch(I * k * k * out_grid);
        im2col(saved_input.sample(b), g, cols.get());
        cols_ptr = cols.get();
      }
      const ConstMatMap cmat(cols_ptr, I * k * k, out_grid);
      partial[b] = gy * cmat.transpose();
      if (need_input_grad) {
        if (is_pointwise(spec)) {
          MatMap(grads.input.sample(b), I, in_grid).noalias() = wmat.transpose() * gy;
        } else {
          RowMat gcols = wmat.transpose() * gy;
          col2im(gcols.data(), g, grads.input.sample(b));
        }
      }
    });
    MatMap gw(grads.weight.data(), O, I * k * k);
    for (std::size_t b = 0; b < B; ++b) gw += partial[b];
  } else {
    const Tensor4 w_io = swap_io(weight);
    const ConstMatMap wt(w_io.data(), I, O * k * k);
    const Geometry g{O, grad_out.h(), grad_out.w(), k, 2, 1, saved_input.h(), saved_input.w()};
    parallel_for(B, [&](std::size_t b) {
      const auto gcols = scratch(O * k * k * in_grid);
      im2col(grad_out.sample(b), g, gcols.get());
      const ConstMatMap gc(gcols.get(), O * k * k, in_grid);
      const ConstMatMap x(saved_input.sample(b), I, in_grid);
      partial[b] = x * gc.transpose();
      if (need_input_grad) MatMap(grads.input.sample(b), I, in_grid).noalias() = wt * gc;
    });
    Tensor4 gw_io(Shape4{I, O, k, k});
    MatMap gw(gw_io.data(), I, O * k * k);
    for (std::size_t b = 0; b < B; ++b) gw += partial[b];
    grads.weight = swap_io(gw_io);
  }

  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t o = 0; o < O; ++o) {
      const Real* p = grad_out.plane(b, o);
      Real acc = 0.0;
      for (std::size_t i = 0; i < out_grid; ++i) acc += p[i];
      grads.bias[o] += acc;
    }
  }
  return grads;
}

Tensor4 avg_pool2(const Tensor4& input) {
  if (input.h() % 2 != 0 || input.w() % 2 != 0) {
    throw ShapeError("avg_pool2: spatial dims must be even, got " + to_string(input.shape()));
  }
  Tensor4 out(input.n(), input.c(), input.h() / 2, input.w() / 2);
  for (std::size_t b = 0; b < input.n(); ++b) {
    for (std::size_t c = 0; c < input.c(); ++c) {
      for (std::size_t y = 0; y < out.h(); ++y) {
        for (std::size_t x = 0; x < out.w(); ++x) {
          out(b, c, y, x) = 0.25 * (input(b, c, 2 * y, 2 * x) + input(b, c, 2 * y, 2 * x + 1) +
                                    input(b, c, 2 * y + 1, 2 * x) +
                                    input(b, c, 2 * y + 1, 2 * x + 1));
        }
      }
    }
  }
  return out;
}

Tensor4 avg_pool2_backward(const Tensor4& grad_out) {
  Tensor4 g = upsample_nearest2(grad_out);
  g *= 0.25;
  return g;
}

Tensor4 upsample_nearest2(const Tensor4& input) {
  Tensor4 out(input.n(), input.c(), 2 * input.h(), 2 * input.w());
  for (std::size_t b = 0; b < out.n(); ++b) {
    for (std::size_t c = 0; c < out.c(); ++c) {
      for (std::size_t y = 0; y < out.h(); ++y) {
        for (std::size_t x = 0; x < out.w(); ++x) out(b, c, y, x) = input(b, c, y / 2, x / 2);
      }
    }
  }
  return out;
}

Tensor4 prelu(const Tensor4& input, std::span<const Real> slope) {
  if (slope.size() != input.c()) {
    throw ShapeError("prelu: slope has " + std::to_string(slope.size()) + " entries for " +
                     std::to_string(input.c()) + " channels");
  }
  Tensor4 out(input.shape());
  const std::size_t grid = input.h() * input.w();
  for (std::size_t b = 0; b < input.n(); ++b) {
    for (std::size_t c = 0; c < input.c(); ++c) {
      const Real* x = input.plane(b, c);
      Real* y = out.plane(b, c);
      const Real a = slope[c];
      for (std::size_t i = 0; i < grid; ++i) y[i] = x[i] >= 0.0 ? x[i] : a * x[i];
    }
  }
  return out;
}

PreluGrads prelu_backward(const Tensor4& grad_out, const Tensor4& saved_input,
                          std::span<const Real> slope) {
  require_shape(grad_out.shape(), saved_input.shape(), "prelu grad_out");
  if (slope.size() != saved_input.c()) throw ShapeError("prelu: slope length mismatch");
  PreluGrads g{Tensor4(saved_input.shape()), std::vector<Real>(slope.size(), 0.0)};
  const std::size_t grid = saved_input.h() * saved_input.w();
  for (std::size_t b = 0; b < saved_input.n(); ++b) {
    for (std::size_t c = 0; c < saved_input.c(); ++c) {
      const Real* x = saved_input.plane(b, c);
      const Real* gy = grad_out.plane(b, c);
      Real* gx = g.input.plane(b, c);
      Real acc = 0.0;
      for (std::size_t i = 0; i < grid; ++i) {
        if (x[i] >= 0.0) {
          gx[i] = gy[i];
        } else {
          gx[i] = slope[c] * gy[i];
          acc += x[i] * gy[i];
        }
      }
      g.slope[c] += acc;
    }
  }
  return g;
}

Tensor4 sigmoid(const Tensor4& input) {
  Tensor4 out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const Real x = input[i];
    // Split by sign so exp never overflows.
    if (x >= 0.0) {
      out[i] = 1.0 / (1.0 + std::exp(-x));
    } else {
      const Real e = std::exp(x);
      out[i] = e / (1.0 + e);
    }
  }
  return out;
}

Tensor4 sigmoid_backward(const Tensor4& grad_out, const Tensor4& saved_output) {
  require_shape(grad_out.shape(), saved_output.shape(), "sigmoid grad_out");
  Tensor4 g(grad_out.shape());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const Real s = saved_output[i];
    g[i] = grad_out[i] * s * (1.0 - s);
  }
  return g;
}

Tensor4 softplus(const Tensor4& input) {
  Tensor4 out(input.shape());
  for (std::size_t i = 0; i < input.size(); ++i) {
    const Real x = input[i];
    out[i] = std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
  }
  return out;
}

Tensor4 softplus_backward(const Tensor4& grad_out, const Tensor4& saved_input) {
  require_shape(grad_out.shape(), saved_input.shape(), "softplus grad_out");
  return mul(grad_out, sigmoid(saved_input));
}

Tensor4 add(const Tensor4& a, const Tensor4& b) {
  require_shape(b.shape(), a.shape(), "add operand");
  Tensor4 out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + b[i];
  return out;
}

Tensor4 sub(const Tensor4& a, const Tensor4& b) {
  require_shape(b.shape(), a.shape(), "sub operand");
  Tensor4 out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

Tensor4 mul(const Tensor4& a, const Tensor4& b) {
  require_shape(b.shape(), a.shape(), "mul operand");
  Tensor4 out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] * b[i];
  return out;
}

std::pair<Tensor4, Tensor4> mul_backward(const Tensor4& grad_out, const Tensor4& a,
                                         const Tensor4& b) {
  require_shape(grad_out.shape(), a.shape(), "mul grad_out");
  return {mul(grad_out, b), mul(grad_out, a)};
}

Tensor4 concat_channels(const Tensor4& a, const Tensor4& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw ShapeError("concat_channels: " + to_string(a.shape()) + " vs " + to_string(b.shape()));
  }
  Tensor4 out(a.n(), a.c() + b.c(), a.h(), a.w());
  const std::size_t la = a.c() * a.h() * a.w();
  const std::size_t lb = b.c() * b.h() * b.w();
  for (std::size_t s = 0; s < a.n(); ++s) {
    std::copy_n(a.sample(s), la, out.sample(s));
    std::copy_n(b.sample(s), lb, out.sample(s) + la);
  }
  return out;
}

std::pair<Tensor4, Tensor4> split_channels(const Tensor4& t, std::size_t channels_a) {
  if (channels_a > t.c()) throw ShapeError("split_channels: split point beyond channel count");
  Tensor4 a(t.n(), channels_a, t.h(), t.w());
  Tensor4 b(t.n(), t.c() - channels_a, t.h(), t.w());
  const std::size_t la = a.c() * t.h() * t.w();
  const std::size_t lb = b.c() * t.h() * t.w();
  for (std::size_t s = 0; s < t.n(); ++s) {
    std::copy_n(t.sample(s), la, a.sample(s));
    std::copy_n(t.sample(s) + la, lb, b.sample(s));
  }
  return {std::move(a), std::move(b)};
}

}  // namespace cfnet
