#include "lungpipe/img/affine.hpp"

#include <algorithm>

namespace lp::img {

std::vector<float> warp_bilinear(const float* src, int64_t h, int64_t w,
                                 const Affine2& inv) {
  std::vector<float> out(size_t(h) * size_t(w), 0.0f);
  const double cy = double(h - 1) / 2.0, cx = double(w - 1) / 2.0;
  for (int64_t y = 0; y < h; ++y) {
    const double dy = double(y) - cy;
    for (int64_t x = 0; x < w; ++x) {
      const double dx = double(x) - cx;
      const double sy = inv.yy * dy + inv.yx * dx + cy;
      const double sx = inv.xy * dy + inv.xx * dx + cx;
      const double fy = std::floor(sy), fx = std::floor(sx);
      const int64_t y0 = int64_t(fy), x0 = int64_t(fx);
      const double ty = sy - fy, tx = sx - fx;
      auto at = [&](int64_t yy, int64_t xx) -> double {
        if (yy < 0 || yy >= h || xx < 0 || xx >= w) return 0.0;
        return double(src[yy * w + xx]);
      };
      const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
      const double bot = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
      out[size_t(y * w + x)] = float(top * (1 - ty) + bot * ty);
    }
  }
  return out;
}

std::vector<uint8_t> warp_nearest(const uint8_t* src, int64_t h, int64_t w,
                                  const Affine2& inv) {
  std::vector<uint8_t> out(size_t(h) * size_t(w), 0);
  const double cy = double(h - 1) / 2.0, cx = double(w - 1) / 2.0;
  for (int64_t y = 0; y < h; ++y) {
    const double dy = double(y) - cy;
    for (int64_t x = 0; x < w; ++x) {
      const double dx = double(x) - cx;
      const int64_t sy = std::llround(inv.yy * dy + inv.yx * dx + cy);
      const int64_t sx = std::llround(inv.xy * dy + inv.xx * dx + cx);
      if (sy >= 0 && sy < h && sx >= 0 && sx < w)
        out[size_t(y * w + x)] = src[sy * w + sx];
    }
  }
  return out;
}

}  // namespace lp::img
