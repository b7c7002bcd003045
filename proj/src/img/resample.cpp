#include "lungpipe/img/resample.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "lungpipe/core/error.hpp"

namespace lp::img {
namespace {

struct Grid {
  std::array<int64_t, 3> dims_out;
  std::array<double, 3> origin_out;
  // src voxel coordinate of output index j along axis a:
  //   (origin_out[a] - origin_in[a] + j) / spacing_in[a]
  std::array<double, 3> base;   // (origin_out - origin_in) / spacing_in
  std::array<double, 3> step;   // 1 / spacing_in
};

Grid plan(const std::array<int64_t, 3>& dims, const std::array<double, 3>& sp,
          const std::array<double, 3>& origin) {
  Grid g;
  for (int a = 0; a < 3; ++a) {
    if (sp[a] <= 0.0) throw ValueError("resample: nonpositive spacing");
    g.dims_out[a] = std::max<int64_t>(1, std::llround(double(dims[a]) * sp[a]));
    // Keep the center of the voxel lattice fixed in world space.
    g.origin_out[a] =
        origin[a] +
        (double(dims[a] - 1) * sp[a] - double(g.dims_out[a] - 1)) / 2.0;
    g.base[a] = (g.origin_out[a] - origin[a]) / sp[a];
    g.step[a] = 1.0 / sp[a];
  }
  return g;
}

}  // namespace

ingest::CtVolume resample_isotropic(const ingest::CtVolume& v) {
  const Grid g = plan(v.header.dims, v.header.spacing_mm, v.header.origin_mm);
  ingest::CtVolume out;
  out.header.dims = g.dims_out;
  out.header.spacing_mm = {1.0, 1.0, 1.0};
  out.header.origin_mm = g.origin_out;
  out.header.value_kind = ingest::ValueKind::hounsfield_int16;
  out.voxels.assign(size_t(g.dims_out[0]) * size_t(g.dims_out[1]) *
                        size_t(g.dims_out[2]),
                    0.0f);

  const int64_t dz = v.header.dims[0], dy = v.header.dims[1],
                dx = v.header.dims[2];
  const int64_t oz = g.dims_out[0], oy = g.dims_out[1], ox = g.dims_out[2];
  const float* src = v.voxels.data();
  float* dst = out.voxels.data();

#pragma omp parallel for schedule(static)
  for (int64_t z = 0; z < oz; ++z) {
    const double fz = g.base[0] + double(z) * g.step[0];
    const double cz = std::clamp(fz, 0.0, double(dz - 1));
    const int64_t z0 = std::min<int64_t>(int64_t(cz), dz - 2 >= 0 ? dz - 2 : 0);
    const double tz = cz - double(z0);
    for (int64_t y = 0; y < oy; ++y) {
      const double fy = g.base[1] + double(y) * g.step[1];
      const double cy = std::clamp(fy, 0.0, double(dy - 1));
      const int64_t y0 =
          std::min<int64_t>(int64_t(cy), dy - 2 >= 0 ? dy - 2 : 0);
      const double ty = cy - double(y0);
      float* row = dst + (z * oy + y) * ox;
      for (int64_t x = 0; x < ox; ++x) {
        const double fx = g.base[2] + double(x) * g.step[2];
        const double cx = std::clamp(fx, 0.0, double(dx - 1));
        const int64_t x0 =
            std::min<int64_t>(int64_t(cx), dx - 2 >= 0 ? dx - 2 : 0);
        const double tx = cx - double(x0);

        const int64_t z1 = std::min(z0 + 1, dz - 1);
        const int64_t y1 = std::min(y0 + 1, dy - 1);
        const int64_t x1 = std::min(x0 + 1, dx - 1);
        auto at = [&](int64_t zz, int64_t yy, int64_t xx) {
          return double(src[(zz * dy + yy) * dx + xx]);
        };
        const double c00 = at(z0, y0, x0) * (1 - tx) + at(z0, y0, x1) * tx;
        const double c01 = at(z0, y1, x0) * (1 - tx) + at(z0, y1, x1) * tx;
        const double c10 = at(z1, y0, x0) * (1 - tx) + at(z1, y0, x1) * tx;
        const double c11 = at(z1, y1, x0) * (1 - tx) + at(z1, y1, x1) * tx;
        const double c0 = c00 * (1 - ty) + c01 * ty;
        const double c1 = c10 * (1 - ty) + c11 * ty;
        row[x] = float(c0 * (1 - tz) + c1 * tz);
      }
    }
  }
  return out;
}

ingest::MaskVolume resample_mask(const ingest::MaskVolume& m) {
  const Grid g = plan(m.header.dims, m.header.spacing_mm, m.header.origin_mm);
  ingest::MaskVolume out;
  out.header.dims = g.dims_out;
  out.header.spacing_mm = {1.0, 1.0, 1.0};
  out.header.origin_mm = g.origin_out;
  out.header.value_kind = ingest::ValueKind::mask_uint8;
  out.voxels.assign(size_t(g.dims_out[0]) * size_t(g.dims_out[1]) *
                        size_t(g.dims_out[2]),
                    0);

  const int64_t dz = m.header.dims[0], dy = m.header.dims[1],
                dx = m.header.dims[2];
  const int64_t oz = g.dims_out[0], oy = g.dims_out[1], ox = g.dims_out[2];
  const uint8_t* src = m.voxels.data();
  uint8_t* dst = out.voxels.data();

#pragma omp parallel for schedule(static)
  for (int64_t z = 0; z < oz; ++z) {
    const int64_t sz =
        std::clamp<int64_t>(std::llround(g.base[0] + double(z) * g.step[0]), 0,
                            dz - 1);
    for (int64_t y = 0; y < oy; ++y) {
      const int64_t sy =
          std::clamp<int64_t>(std::llround(g.base[1] + double(y) * g.step[1]),
                              0, dy - 1);
      uint8_t* row = dst + (z * oy + y) * ox;
      const uint8_t* srow = src + (sz * dy + sy) * dx;
      for (int64_t x = 0; x < ox; ++x) {
        const int64_t sx = std::clamp<int64_t>(
            std::llround(g.base[2] + double(x) * g.step[2]), 0, dx - 1);
        row[x] = srow[sx];
      }
    }
  }
  return out;
}

}  // namespace lp::img
