#include "objmap/image.hpp"

#include "objmap/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace objmap {

std::size_t Mask::count() const { return static_cast<std::size_t>(std::count(data.begin(), data.end(), 1)); }

void Mask::merge(const Mask& other) {
  if (other.width != width || other.height != height) {
    throw Error(ErrorCode::DimensionMismatch, "mask union of different sizes");
  }
  for (std::size_t i = 0; i < data.size(); ++i) data[i] = static_cast<std::uint8_t>(data[i] | other.data[i]);
}

namespace {

double cross(const Pixel& o, const Pixel& a, const Pixel& b) {
  return (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u);
}

// Andrew's monotone chain, counter-clockwise, no repeated end point.
std::vector<Pixel> convex_hull(std::span<const Pixel> input) {
  std::vector<Pixel> p(input.begin(), input.end());
  std::sort(p.begin(), p.end(), [](const Pixel& a, const Pixel& b) { return a.u < b.u || (a.u == b.u && a.v < b.v); });
  if (p.size() < 3) return p;
  std::vector<Pixel> h(2 * p.size());
  std::size_t k = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    while (k >= 2 && cross(h[k - 2], h[k - 1], p[i]) <= 0.0) --k;
    h[k++] = p[i];
  }
  for (std::size_t i = p.size() - 1, t = k + 1; i > 0; --i) {
    while (k >= t && cross(h[k - 2], h[k - 1], p[i - 1]) <= 0.0) --k;
    h[k++] = p[i - 1];
  }
  h.resize(k - 1);
  return h;
}

}  // namespace

void fill_convex_hull(Mask& mask, std::span<const Pixel> pts) {
  const std::vector<Pixel> hull = convex_hull(pts);
  if (hull.size() < 3) return;
  double vmin = hull[0].v;
  double vmax = hull[0].v;
  for (const auto& p : hull) {
    vmin = std::min(vmin, p.v);
    vmax = std::max(vmax, p.v);
  }
  const int row_lo = std::max(0, static_cast<int>(std::ceil(vmin)));
  const int row_hi = std::min(mask.height - 1, static_cast<int>(std::floor(vmax)));
  for (int row = row_lo; row <= row_hi; ++row) {
    const double y = row;
    double xl = INFINITY;
    double xr = -INFINITY;
    for (std::size_t i = 0; i < hull.size(); ++i) {
      const Pixel& a = hull[i];
      const Pixel& b = hull[(i + 1) % hull.size()];
      if ((a.v <= y && b.v >= y) || (b.v <= y && a.v >= y)) {
        if (a.v == b.v) {
          xl = std::min({xl, a.u, b.u});
          xr = std::max({xr, a.u, b.u});
        } else {
          const double x = a.u + (y - a.v) * (b.u - a.u) / (b.v - a.v);
          xl = std::min(xl, x);
          xr = std::max(xr, x);
        }
      }
    }
    if (!(xl <= xr)) continue;
    const int c0 = std::max(0, static_cast<int>(std::ceil(xl)));
    const int c1 = std::min(mask.width - 1, static_cast<int>(std::floor(xr)));
    for (int col = c0; col <= c1; ++col) mask.set(col, row);
  }
}

void fill_disc(Mask& mask, const Pixel& c, double radius) {
  const int r0 = std::max(0, static_cast<int>(std::ceil(c.v - radius)));
  const int r1 = std::min(mask.height - 1, static_cast<int>(std::floor(c.v + radius)));
  const double r2 = radius * radius;
  for (int row = r0; row <= r1; ++row) {
    const double dy = row - c.v;
    const double half = std::sqrt(std::max(0.0, r2 - dy * dy));
    const int c0 = std::max(0, static_cast<int>(std::ceil(c.u - half)));
    const int c1 = std::min(mask.width - 1, static_cast<int>(std::floor(c.u + half)));
    for (int col = c0; col <= c1; ++col) mask.set(col, row);
  }
}

Mask dilate(const Mask& mask, int kernel) {
  if (kernel <= 1) return mask;
  const int before = kernel / 2;
  const int after = kernel - 1 - before;
  // Separable: rows, then columns.
  Mask tmp(mask.width, mask.height);
  for (int v = 0; v < mask.height; ++v) {
    for (int u = 0; u < mask.width; ++u) {
      if (!mask.at(u, v)) continue;
      const int lo = std::max(0, u - after);
      const int hi = std::min(mask.width - 1, u + before);
      for (int x = lo; x <= hi; ++x) tmp.set(x, v);
    }
  }
  Mask out(mask.width, mask.height);
  for (int v = 0; v < mask.height; ++v) {
    for (int u = 0; u < mask.width; ++u) {
      if (!tmp.at(u, v)) continue;
      const int lo = std::max(0, v - after);
      const int hi = std::min(mask.height - 1, v + before);
      for (int y = lo; y <= hi; ++y) out.set(u, y);
    }
  }
  return out;
}

}  // namespace objmap
