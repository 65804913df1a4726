#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "rarunet/error.hpp"

namespace rarunet {

/// Row-major H x W foreground mask, one byte per pixel (0 or 1).
struct BinaryMask {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> bits;

  BinaryMask() = default;
  BinaryMask(int h, int w) : height(h), width(w), bits(static_cast<std::size_t>(h) * w, 0) {
    RARUNET_CHECK(h > 0 && w > 0, ErrorCode::kInvalidArgument, "mask dimensions must be positive");
  }

  bool at(int y, int x) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int y, int x, bool v) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  bool inside(int y, int x) const { return y >= 0 && y < height && x >= 0 && x < width; }
  std::size_t size() const { return bits.size(); }
  std::size_t area() const {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
  bool empty() const { return area() == 0; }
  bool same_shape(const BinaryMask& o) const { return height == o.height && width == o.width; }

  bool operator==(const BinaryMask&) const = default;
};

/// 8-bit grayscale image, row-major.
struct GrayImage {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;

  GrayImage() = default;
  GrayImage(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, 0) {}

  std::uint8_t at(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  bool operator==(const GrayImage&) const = default;
};

inline bool is_subset(const BinaryMask& a, const BinaryMask& b) {
  if (!a.same_shape(b)) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a.bits[i] && !b.bits[i]) return false;
  }
  return true;
}

inline BinaryMask complement(const BinaryMask& m) {
  BinaryMask out = m;
  for (auto& b : out.bits) b = b ? 0 : 1;
  return out;
}

}  // namespace rarunet
