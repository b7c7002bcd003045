#pragma once

#include <array>

#include "lungpipe/core/tensor.hpp"
#include "lungpipe/ingest/volume.hpp"

namespace lp::img {

struct Roi3D {
  Tensor voxels;                        // {50,50,50}, values in [0,1]
  std::array<double, 3> source_center_mm{};  // window center, world z-y-x
  double fill_fraction = 0.0;           // copied voxels / 125000
};

inline constexpr int64_t kRoiSize = 50;
inline constexpr double kRoiPadHu = -1000.0;

// Cuts a 50x50x50 window out of an isotropic volume around a nodule mask.
// The z range is anchored on the main slice (largest mask area): that slice
// plus 25 after and 24 before it; x-y windows center on the mask centroid.
// Windows that would cross the volume boundary are shifted inward first;
// only if the volume itself is smaller than 50 along an axis do we pad, with
// air HU. Voxels are normalized with the given HU window.
Roi3D extract_roi(const ingest::CtVolume& v, const ingest::MaskVolume& m,
                  double hu_low = -1000.0, double hu_high = 400.0);

}  // namespace lp::img
