// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cfnet {

using Real = double;

/// Dimensions of a rank-4 tensor in (batch, channel, height, width) order.
struct Shape4 {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t size() const { return n * c * h * w; }
  std::size_t plane() const { return h * w; }
  bool operator==(const Shape4&) const = default;
};

std::string to_string(const Shape4& s);
std::ostream& operator<<(std::ostream& os, const Shape4& s);

/// Dense NCHW array of reals. Storage is contiguous, row-major over
/// (n, c, h, w).
class Tensor4 {
 public:
  Tensor4() = default;
  explicit Tensor4(Shape4 shape, Real fill = 0.0);
  Tensor4(std::size_t n, std::size_t c, std::size_t h, std::size_t w,
          Real fill = 0.0)
      : Tensor4(Shape4{n, c, h, w}, fill) {}
  Tensor4(Shape4 shape, std::vector<Real> values);

  const Shape4& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t index(std::size_t b, std::size_t ch, std::size_t y,
                    std::size_t x) const {
    return ((b * shape_.c + ch) * shape_.h + y) * shape_.w + x;
  }
  Real& operator()(std::size_t b, std::size_t ch, std::size_t y,
                   std::size_t x) {
    return data_[index(b, ch, y, x)];
  }
  Real operator()(std::size_t b, std::size_t ch, std::size_t y,
                  std::size_t x) const {
    return data_[index(b, ch, y, x)];
  }
  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::span<Real> values() { return data_; }
  std::span<const Real> values() const { return data_; }

  /// Pointer to the (h, w) plane of sample b, channel ch.
  Real* plane(std::size_t b, std::size_t ch) {
    return data_.data() + (b * shape_.c + ch) * shape_.plane();
  }
  const Real* plane(std::size_t b, std::size_t ch) const {
    return data_.data() + (b * shape_.c + ch) * shape_.plane();
  }
  /// Pointer to the (c, h, w) block of sample b.
  Real* sample(std::size_t b) {
    return data_.data() + b * shape_.c * shape_.plane();
  }
  const Real* sample(std::size_t b) const {
    return data_.data() + b * shape_.c * shape_.plane();
  }

  void fill(Real v);
  Tensor4& operator+=(const Tensor4& other);
  Tensor4& operator*=(Real s);

  Real sum() const;
  bool all_finite() const;

  /// Copies sample b into a new 1×C×H×W tensor.
  Tensor4 slice_batch(std::size_t b) const;

 private:
  Shape4 shape_;
  std::vector<Real> data_;
};

/// Throws ShapeError naming `what` when `got` differs from `want`.
void require_shape(const Shape4& got, const Shape4& want, const char* what);

}  // namespace cfnet
