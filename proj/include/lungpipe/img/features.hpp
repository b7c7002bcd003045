#pragma once

#include "lungpipe/img/slice.hpp"

namespace lp::img {

struct GeometricFeatures {
  double diameter_mm = 0.0;          // max Feret: widest boundary pixel pair
  double perimeter_mm = 0.0;         // marching-squares contour length
  double mean_attenuation_hu = 0.0;  // mean raw HU under the mask
  bool empty = false;
};

// Shape descriptors of a 2D nodule mask, measured in mm using the raw HU
// slice's pixel spacing. An empty mask yields zeroed features with the empty
// flag set instead of an error.
GeometricFeatures geometric_features(const Mask2D& m, const Slice& raw_hu);

}  // namespace lp::img
