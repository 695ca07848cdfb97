#pragma once

#include "objmap/geometry.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace objmap {

/// Binary image, row-major, one byte per pixel (0 or 1). Pixel (u, v) covers
/// the image coordinate (u, v) used by project().
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), 0) {}

  std::uint8_t at(int u, int v) const { return data[static_cast<std::size_t>(v) * width + u]; }
  void set(int u, int v) { data[static_cast<std::size_t>(v) * width + u] = 1; }
  std::size_t count() const;
  void merge(const Mask& other);  // union
};

/// Fills every pixel whose coordinate lies inside the convex hull of `pts`.
void fill_convex_hull(Mask& mask, std::span<const Pixel> pts);

void fill_disc(Mask& mask, const Pixel& center, double radius);

/// Max filter with a square kernel of side `kernel` (anchored like an
/// OpenCV kernel: kernel/2 pixels up-left, the rest down-right). Sides 0 and
/// 1 leave the mask unchanged.
Mask dilate(const Mask& mask, int kernel);

}  // namespace objmap
