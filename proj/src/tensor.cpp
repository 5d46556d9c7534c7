// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <sstream>

#include "cfnet/errors.hpp"

namespace cfnet {

std::string to_string(const Shape4& s) {
  std::ostringstream os;
  os << s;
  return os.str();
}

std::ostream& operator<<(std::ostream& os, const Shape4& s) {
  return os << s.n << "x" << s.c << "x" << s.h << "x" << s.w;
}

Tensor4::Tensor4(Shape4 shape, Real fill)
    : shape_(shape), data_(shape.size(), fill) {}

Tensor4::Tensor4(Shape4 shape, std::vector<Real> values)
    : shape_(shape), data_(std::move(values)) {
  if (data_.size() != shape_.size()) {
    throw ShapeError("tensor: " + std::to_string(data_.size()) +
                     " values do not fill shape " + to_string(shape_));
  }
}

void Tensor4::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

Tensor4& Tensor4::operator+=(const Tensor4& other) {
  require_shape(other.shape(), shape_, "accumulate operand");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Tensor4& Tensor4::operator*=(Real s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Real Tensor4::sum() const {
  Real acc = 0.0;
  for (Real v : data_) acc += v;
  return acc;
}

bool Tensor4::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](Real v) { return std::isfinite(v); });
}

Tensor4 Tensor4::slice_batch(std::size_t b) const {
  Tensor4 out(1, shape_.c, shape_.h, shape_.w);
  const std::size_t len = shape_.c * shape_.plane();
  std::copy_n(sample(b), len, out.data());
  return out;
}

void require_shape(const Shape4& got, const Shape4& want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected " + to_string(want) +
                     ", got " + to_string(got));
  }
}

}  // namespace cfnet
