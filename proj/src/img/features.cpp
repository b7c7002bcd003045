#include "lungpipe/img/features.hpp"

#include <cmath>
#include <utility>
#include <vector>

#include "lungpipe/core/error.hpp"

namespace lp::img {
namespace {

// Contour length contributed by one marching-squares cell, midpoint rule:
// each crossed cell edge contributes its midpoint as a contour vertex. Cells
// with one corner inside (or one outside) cut a corner, adjacent pairs cross
// straight through, diagonal pairs cut two corners.
double cell_length(int tl, int tr, int bl, int br, double sy, double sx) {
  const int inside = tl + tr + bl + br;
  if (inside == 0 || inside == 4) return 0.0;
  const double corner = 0.5 * std::hypot(sy, sx);
  if (inside == 1 || inside == 3) return corner;
  // Two inside: adjacent pair -> straight segment, diagonal pair -> two cuts.
  if ((tl && tr) || (bl && br)) return sx;
  if ((tl && bl) || (tr && br)) return sy;
  return 2.0 * corner;
}

}  // namespace

GeometricFeatures geometric_features(const Mask2D& m, const Slice& raw_hu) {
  if (m.h != raw_hu.h || m.w != raw_hu.w)
    throw ValueError("geometric_features: mask and slice dims differ");

  GeometricFeatures f;
  if (m.area() == 0) {
    f.empty = true;
    return f;
  }

  const double sy = raw_hu.sy, sx = raw_hu.sx;

  // Boundary pixels: set pixels with a cleared 4-neighbor or on the frame.
  std::vector<std::pair<int64_t, int64_t>> boundary;
  double hu_sum = 0.0;
  int64_t n = 0;
  for (int64_t y = 0; y < m.h; ++y)
    for (int64_t x = 0; x < m.w; ++x) {
      if (!m.at(y, x)) continue;
      hu_sum += double(raw_hu.at(y, x));
      ++n;
      const bool edge = y == 0 || y == m.h - 1 || x == 0 || x == m.w - 1;
      if (edge || !m.at(y - 1, x) || !m.at(y + 1, x) || !m.at(y, x - 1) ||
          !m.at(y, x + 1))
        boundary.emplace_back(y, x);
    }
  f.mean_attenuation_hu = hu_sum / double(n);

  double best_sq = 0.0;
  for (size_t i = 0; i < boundary.size(); ++i)
    for (size_t j = i + 1; j < boundary.size(); ++j) {
      const double dy = double(boundary[i].first - boundary[j].first) * sy;
      const double dx = double(boundary[i].second - boundary[j].second) * sx;
      best_sq = std::max(best_sq, dy * dy + dx * dx);
    }
  f.diameter_mm = std::sqrt(best_sq);

  // Marching squares over the cell grid; corners outside the image are 0,
  // so contours around pixels touching the frame still close.
  auto at = [&](int64_t y, int64_t x) -> int {
    if (y < 0 || y >= m.h || x < 0 || x >= m.w) return 0;
    return m.at(y, x) ? 1 : 0;
  };
  double perim = 0.0;
  for (int64_t y = -1; y < m.h; ++y)
    for (int64_t x = -1; x < m.w; ++x)
      perim += cell_length(at(y, x), at(y, x + 1), at(y + 1, x),
                           at(y + 1, x + 1), sy, sx);
  f.perimeter_mm = perim;
  return f;
}

}  // namespace lp::img
