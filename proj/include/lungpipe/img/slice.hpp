#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lungpipe/core/error.hpp"

namespace lp::img {

struct Slice {
    int64_t h = 0, w = 0;
    std::vector<float> px;     // [y][x]
    double sy = 1.0, sx = 1.0; // mm per pixel
    std::string series;
    int64_t z = -1;
    bool lung_empty = false;

    float at(int64_t y, int64_t x) const { return px[static_cast<size_t>(y * w + x)]; }
    float& at(int64_t y, int64_t x) { return px[static_cast<size_t>(y * w + x)]; }

    static Slice zeros(int64_t h, int64_t w) {
        Slice s;
        s.h = h;
        s.w = w;
        s.px.assign(static_cast<size_t>(h * w), 0.0f);
        return s;
    }
};

struct Mask2D {
    int64_t h = 0, w = 0;
    std::vector<uint8_t> px;  // {0,1}

    uint8_t at(int64_t y, int64_t x) const { return px[static_cast<size_t>(y * w + x)]; }
    uint8_t& at(int64_t y, int64_t x) { return px[static_cast<size_t>(y * w + x)]; }
    int64_t area() const {
        int64_t n = 0;
        for (uint8_t v : px) n += v;
        return n;
    }

    static Mask2D zeros(int64_t h, int64_t w) {
        Mask2D m;
        m.h = h;
        m.w = w;
        m.px.assign(static_cast<size_t>(h * w), 0);
        return m;
    }
};

// clamp((v - low) / (high - low), 0, 1) per pixel
Slice normalize_hu(const Slice& raw, double low, double high);

// Keeps only the lung fields: dark-range candidates (0 < v < 0.35), closed
// with a radius-3 disk, components touching the border dropped, holes filled.
// Everything outside the surviving region becomes exactly 0. A slice with no
// detected lung comes back all-zero with lung_empty set.
Slice isolate_lung_fields(const Slice& s);

// Histogram equalization restricted to lung pixels (v > 0): each lung pixel
// maps to its empirical CDF value. Background stays 0.
Slice enhance_contrast(const Slice& s);

// Bilinear resize; target extents must be >= 8 and divisible by 8.
Slice resize_slice(const Slice& s, int64_t target_h, int64_t target_w);

// 1 where the preprocessed pixel is > 0
Mask2D ceiling_mask(const Slice& s);

// out = s where mask, else 0
Slice apply_mask(const Slice& s, const Mask2D& m);

}  // namespace lp::img
