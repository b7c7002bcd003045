#pragma once

#include "lungpipe/ingest/volume.hpp"

namespace lp::img {

// Trilinear resample onto a 1x1x1 mm grid. Output dims = round(dims *
// spacing) per axis; the volume's world center is preserved, so the extent
// stays within half a voxel per axis.
ingest::CtVolume resample_isotropic(const ingest::CtVolume& v);

// Same grid arithmetic with nearest-neighbor lookup, so masks stay binary.
ingest::MaskVolume resample_mask(const ingest::MaskVolume& m);

}  // namespace lp::img
