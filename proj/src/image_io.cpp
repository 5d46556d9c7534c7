// Copyright 2026 The CFNet Authors
// SPDX-License-Identifier: Apache-2.0

#include "cfnet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <vector>

#include "cfnet/errors.hpp"

namespace cfnet {
namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string header_token(std::istream& is) {
  std::string tok;
  int ch;
  while ((ch = is.get()) != EOF) {
    if (ch == '#') {
      while ((ch = is.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

}  // namespace

Tensor4 read_pnm(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open image " + path);
  const std::string magic = header_token(is);
  std::size_t channels = 0;
  if (magic == "P5") channels = 1;
  if (magic == "P6") channels = 3;
  if (!channels) throw DataError(path + ": not a binary PGM/PPM (magic '" + magic + "')");
  std::size_t w = 0, h = 0;
  unsigned long maxval = 0;
  try {
    w = std::stoul(header_token(is));
    h = std::stoul(header_token(is));
    maxval = std::stoul(header_token(is));
  } catch (const std::exception&) {
    throw DataError(path + ": malformed header");
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) {
    throw DataError(path + ": unsupported dimensions or maxval");
  }
  const std::size_t bytes = maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(w * h * channels * bytes);
  if (!is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw DataError(path + ": truncated pixel data");
  }
  Tensor4 img(1, channels, h, w);
  const Real scale = 1.0 / static_cast<Real>(maxval);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < channels; ++c) {
        const std::size_t i = (y * w + x) * channels + c;
        const unsigned v = bytes == 2 ? (unsigned(raw[2 * i]) << 8) | raw[2 * i + 1] : raw[i];
        img(0, c, y, x) = static_cast<Real>(v) * scale;
      }
    }
  }
  return img;
}

void write_pnm(const std::string& path, const Tensor4& image, int bits) {
  if (image.c() != 1 && image.c() != 3) {
    throw ShapeError("write_pnm: need 1 or 3 channels, got " + to_string(image.shape()));
  }
  if (bits != 8 && bits != 16) throw ParameterError("write_pnm: bits must be 8 or 16");
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw DataError("cannot write image " + path);
  const unsigned maxval = bits == 16 ? 65535u : 255u;
  os << (image.c() == 1 ? "P5" : "P6") << "\n" << image.w() << " " << image.h() << "\n"
     << maxval << "\n";
  std::vector<unsigned char> raw;
  raw.reserve(image.h() * image.w() * image.c() * (bits / 8));
  for (std::size_t y = 0; y < image.h(); ++y) {
    for (std::size_t x = 0; x < image.w(); ++x) {
      for (std::size_t c = 0; c < image.c(); ++c) {
        const Real v = std::clamp(image(0, c, y, x), 0.0, 1.0);
        const auto q = static_cast<unsigned>(std::lround(v * maxval));
        if (bits == 16) raw.push_back(static_cast<unsigned char>(q >> 8));
        raw.push_back(static_cast<unsigned char>(q & 0xFF));
      }
    }
  }
  os.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!os) throw DataError("write failed: " + path);
}

}  // namespace cfnet
