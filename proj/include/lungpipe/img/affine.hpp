#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "lungpipe/core/error.hpp"

namespace lp::img {

// 2x2 linear map on centered pixel coordinates (y down, x right). Warps
// compose the forward transform, invert it once, and sample the source at
// inv * (dst - center) + center.
struct Affine2 {
  double yy = 1.0, yx = 0.0;
  double xy = 0.0, xx = 1.0;

  static Affine2 identity() { return {}; }
  static Affine2 rotation_deg(double deg) {
    const double r = deg * M_PI / 180.0;
    const double c = std::cos(r), s = std::sin(r);
    return {c, -s, s, c};
  }
  // x' = x + tan(deg) * y
  static Affine2 shear_x_deg(double deg) {
    return {1.0, 0.0, std::tan(deg * M_PI / 180.0), 1.0};
  }
  static Affine2 zoom(double s) { return {s, 0.0, 0.0, s}; }
  static Affine2 flip_x() { return {1.0, 0.0, 0.0, -1.0}; }

  Affine2 operator*(const Affine2& o) const {
    return {yy * o.yy + yx * o.xy, yy * o.yx + yx * o.xx,
            xy * o.yy + xx * o.xy, xy * o.yx + xx * o.xx};
  }

  Affine2 inverse() const {
    const double det = yy * xx - yx * xy;
    if (det == 0.0) throw ValueError("Affine2: singular transform");
    return {xx / det, -yx / det, -xy / det, yy / det};
  }

  bool is_identity() const {
    return yy == 1.0 && yx == 0.0 && xy == 0.0 && xx == 1.0;
  }
};

// Bilinear resample of an h*w float plane through the inverse map `inv`
// (output -> source, about the image center). Out-of-image samples read 0.
std::vector<float> warp_bilinear(const float* src, int64_t h, int64_t w,
                                 const Affine2& inv);

// Same geometry with nearest-neighbor lookup for label planes.
std::vector<uint8_t> warp_nearest(const uint8_t* src, int64_t h, int64_t w,
                                  const Affine2& inv);

}  // namespace lp::img
