#include "lungpipe/img/roi.hpp"

#include <algorithm>
#include <cmath>

#include "lungpipe/core/error.hpp"

namespace lp::img {
namespace {

// Shift the window [lo, lo+50) inside [0, dim) as far as possible. When the
// volume is shorter than the window this leaves lo negative (or the tail
// hanging past the end) and the caller pads the uncovered part.
int64_t shift_inward(int64_t lo, int64_t dim) {
  const int64_t min_lo = std::min<int64_t>(0, dim - kRoiSize);
  const int64_t max_lo = std::max<int64_t>(0, dim - kRoiSize);
  return std::clamp(lo, min_lo, max_lo);
}

}  // namespace

Roi3D extract_roi(const ingest::CtVolume& v, const ingest::MaskVolume& m,
                  double hu_low, double hu_high) {
  if (v.header.dims != m.header.dims)
    throw ValueError("extract_roi: volume and mask dims differ");
  if (v.header.spacing_mm != m.header.spacing_mm)
    throw ValueError("extract_roi: volume and mask spacing differ");
  if (!(hu_low < hu_high)) throw ValueError("extract_roi: degenerate HU window");

  const int64_t dz = v.header.dims[0], dy = v.header.dims[1],
                dx = v.header.dims[2];

  // Centroid of the mask and the slice carrying the most mask area.
  double sum_z = 0.0, sum_y = 0.0, sum_x = 0.0;
  int64_t count = 0;
  int64_t main_z = -1, main_area = 0;
  for (int64_t z = 0; z < dz; ++z) {
    int64_t slice_area = 0;
    const uint8_t* plane = m.voxels.data() + z * dy * dx;
    for (int64_t y = 0; y < dy; ++y)
      for (int64_t x = 0; x < dx; ++x)
        if (plane[y * dx + x]) {
          ++slice_area;
          sum_y += double(y);
          sum_x += double(x);
        }
    if (slice_area > main_area) {
      main_area = slice_area;
      main_z = z;
    }
    sum_z += double(z) * double(slice_area);
    count += slice_area;
  }
  if (count == 0)
    throw ValueError("extract_roi: empty mask (segmentation found no nodule)");

  const double cz = sum_z / double(count);
  const double cy = sum_y / double(count);
  const double cx = sum_x / double(count);
  (void)cz;

  const int64_t lo_z = shift_inward(main_z - 24, dz);
  const int64_t lo_y = shift_inward(std::llround(cy) - 25, dy);
  const int64_t lo_x = shift_inward(std::llround(cx) - 25, dx);

  Roi3D roi;
  roi.voxels = Tensor({kRoiSize, kRoiSize, kRoiSize});
  const double scale = 1.0 / (hu_high - hu_low);
  const float pad = float(std::clamp((kRoiPadHu - hu_low) * scale, 0.0, 1.0));

  int64_t copied = 0;
  float* out = roi.voxels.data();
  for (int64_t i = 0; i < kRoiSize; ++i) {
    const int64_t z = lo_z + i;
    for (int64_t j = 0; j < kRoiSize; ++j) {
      const int64_t y = lo_y + j;
      float* row = out + (i * kRoiSize + j) * kRoiSize;
      for (int64_t k = 0; k < kRoiSize; ++k) {
        const int64_t x = lo_x + k;
        if (z >= 0 && z < dz && y >= 0 && y < dy && x >= 0 && x < dx) {
          const double hu = double(v.voxels[(z * dy + y) * dx + x]);
          row[k] = float(std::clamp((hu - hu_low) * scale, 0.0, 1.0));
          ++copied;
        } else {
          row[k] = pad;
        }
      }
    }
  }
  roi.fill_fraction =
      double(copied) / double(kRoiSize * kRoiSize * kRoiSize);

  const double half = double(kRoiSize - 1) / 2.0;
  const auto& og = v.header.origin_mm;
  const auto& sp = v.header.spacing_mm;
  roi.source_center_mm = {og[0] + (double(lo_z) + half) * sp[0],
                          og[1] + (double(lo_y) + half) * sp[1],
                          og[2] + (double(lo_x) + half) * sp[2]};
  return roi;
}

}  // namespace lp::img
