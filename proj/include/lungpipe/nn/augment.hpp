#pragma once

#include "lungpipe/core/rng.hpp"
#include "lungpipe/core/tensor.hpp"
#include "lungpipe/img/affine.hpp"
#include "lungpipe/img/slice.hpp"

namespace lp::nn {

struct AugmentationConfig {
  double brightness = 0.10;  // multiplicative factor in [1-b, 1+b]
  double rotate_deg = 10.0;  // angle in [-r, r]
  double shear_deg = 5.0;    // x-shear angle in [-s, s]
  double zoom_lo = 0.9;
  double zoom_hi = 1.1;
  double flip_prob = 0.5;    // horizontal mirror

  static AugmentationConfig identity() {
    return {0.0, 0.0, 0.0, 1.0, 1.0, 0.0};
  }
};

// One sampled transform. Draw order is fixed (brightness, rotation, shear,
// zoom, flip) so the rng stream stays aligned regardless of config values.
struct AugmentDraw {
  double brightness = 1.0;
  img::Affine2 inverse_map;  // output -> source, already inverted
  bool flipped = false;
};

AugmentDraw draw_augment(const AugmentationConfig& cfg, Rng& rng);

// In-place augmentation of a [0,1] slice and its aligned mask (nullptr when
// there is none): shared affine, bilinear for the image / nearest for the
// mask, brightness on the image only, then clamp back to [0,1].
void augment_slice(img::Slice& image, img::Mask2D* mask,
                   const AugmentationConfig& cfg, Rng& rng);

// Same recipe for a {50,50,50} ROI: one draw, the 2D transform applied to
// every z slice so the nodule deforms coherently.
Tensor augment_roi(const Tensor& roi, const AugmentationConfig& cfg, Rng& rng);

}  // namespace lp::nn
