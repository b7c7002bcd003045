#include "lungpipe/nn/augment.hpp"

#include <algorithm>

#include "lungpipe/core/error.hpp"

namespace lp::nn {
namespace {

void brighten_clamp(float* px, size_t n, double factor) {
  for (size_t i = 0; i < n; ++i)
    px[i] = std::clamp(float(double(px[i]) * factor), 0.0f, 1.0f);
}

}  // namespace

AugmentDraw draw_augment(const AugmentationConfig& cfg, Rng& rng) {
  AugmentDraw d;
  d.brightness = rng.uniform(1.0 - cfg.brightness, 1.0 + cfg.brightness);
  const double rot = rng.uniform(-cfg.rotate_deg, cfg.rotate_deg);
  const double shear = rng.uniform(-cfg.shear_deg, cfg.shear_deg);
  const double zoom = rng.uniform(cfg.zoom_lo, cfg.zoom_hi);
  d.flipped = rng.bernoulli(cfg.flip_prob);

  img::Affine2 fwd = img::Affine2::zoom(zoom) *
                     img::Affine2::shear_x_deg(shear) *
                     img::Affine2::rotation_deg(rot);
  if (d.flipped) fwd = img::Affine2::flip_x() * fwd;
  // Skip the inversion arithmetic when nothing moved, so an identity config
  // reproduces the input bit for bit.
  d.inverse_map = fwd.is_identity() ? fwd : fwd.inverse();
  return d;
}

void augment_slice(img::Slice& image, img::Mask2D* mask,
                   const AugmentationConfig& cfg, Rng& rng) {
  if (mask && (mask->h != image.h || mask->w != image.w))
    throw ValueError("augment_slice: mask and image dims differ");
  const AugmentDraw d = draw_augment(cfg, rng);
  if (!d.inverse_map.is_identity()) {
    image.px = img::warp_bilinear(image.px.data(), image.h, image.w,
                                  d.inverse_map);
    if (mask)
      mask->px = img::warp_nearest(mask->px.data(), mask->h, mask->w,
                                   d.inverse_map);
  }
  brighten_clamp(image.px.data(), image.px.size(), d.brightness);
}

Tensor augment_roi(const Tensor& roi, const AugmentationConfig& cfg,
                   Rng& rng) {
  if (roi.shape.size() != 3)
    throw ValueError("augment_roi: expected a rank-3 volume, got shape " +
                     roi.shape_str());
  const int64_t dz = roi.dim(0), dy = roi.dim(1), dx = roi.dim(2);
  const AugmentDraw d = draw_augment(cfg, rng);

  Tensor out = roi;
  if (!d.inverse_map.is_identity()) {
    for (int64_t z = 0; z < dz; ++z) {
      const std::vector<float> plane = img::warp_bilinear(
          roi.data() + z * dy * dx, dy, dx, d.inverse_map);
      std::copy(plane.begin(), plane.end(), out.data() + z * dy * dx);
    }
  }
  brighten_clamp(out.data(), out.v.size(), d.brightness);
  return out;
}

}  // namespace lp::nn
