#include "lungpipe/img/slice.hpp"

#include <algorithm>
#include <cmath>
#include <queue>

namespace lp::img {

Slice normalize_hu(const Slice& raw, double low, double high) {
    if (!(low < high))
        throw ValueError("normalize_hu: degenerate window [" + std::to_string(low) + ", " +
                         std::to_string(high) + "]");
    Slice out = raw;
    const double scale = 1.0 / (high - low);
    for (auto& v : out.px) {
        const double t = (static_cast<double>(v) - low) * scale;
        v = static_cast<float>(std::clamp(t, 0.0, 1.0));
    }
    return out;
}

namespace {

// offsets of a radius-3 disk
const std::vector<std::pair<int, int>>& disk3() {
    static const std::vector<std::pair<int, int>> d = [] {
        std::vector<std::pair<int, int>> v;
        for (int dy = -3; dy <= 3; ++dy)
            for (int dx = -3; dx <= 3; ++dx)
                if (dy * dy + dx * dx <= 9) v.emplace_back(dy, dx);
        return v;
    }();
    return d;
}

Mask2D dilate(const Mask2D& m) {
    Mask2D out = Mask2D::zeros(m.h, m.w);
    for (int64_t y = 0; y < m.h; ++y)
        for (int64_t x = 0; x < m.w; ++x) {
            if (!m.at(y, x)) continue;
            for (auto [dy, dx] : disk3()) {
                const int64_t ny = y + dy, nx = x + dx;
                if (ny >= 0 && ny < m.h && nx >= 0 && nx < m.w) out.at(ny, nx) = 1;
            }
        }
    return out;
}

Mask2D erode(const Mask2D& m) {
    Mask2D out = Mask2D::zeros(m.h, m.w);
    for (int64_t y = 0; y < m.h; ++y)
        for (int64_t x = 0; x < m.w; ++x) {
            bool all = true;
            for (auto [dy, dx] : disk3()) {
                const int64_t ny = y + dy, nx = x + dx;
                if (ny < 0 || ny >= m.h || nx < 0 || nx >= m.w || !m.at(ny, nx)) {
                    all = false;
                    break;
                }
            }
            if (all) out.at(y, x) = 1;
        }
    return out;
}

// drop 8-connected components that touch the image border
void remove_border_components(Mask2D& m) {
    std::vector<uint8_t> doomed(m.px.size(), 0);
    std::queue<int64_t> q;
    auto push = [&](int64_t y, int64_t x) {
        const int64_t i = y * m.w + x;
        if (m.px[static_cast<size_t>(i)] && !doomed[static_cast<size_t>(i)]) {
            doomed[static_cast<size_t>(i)] = 1;
            q.push(i);
        }
    };
    for (int64_t x = 0; x < m.w; ++x) {
        push(0, x);
        push(m.h - 1, x);
    }
    for (int64_t y = 0; y < m.h; ++y) {
        push(y, 0);
        push(y, m.w - 1);
    }
    while (!q.empty()) {
        const int64_t i = q.front();
        q.pop();
        const int64_t y = i / m.w, x = i % m.w;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int64_t ny = y + dy, nx = x + dx;
                if (ny >= 0 && ny < m.h && nx >= 0 && nx < m.w) push(ny, nx);
            }
    }
    for (size_t i = 0; i < m.px.size(); ++i)
        if (doomed[i]) m.px[i] = 0;
}

// fill complement regions not reachable from the border (4-connectivity)
void fill_holes(Mask2D& m) {
    std::vector<uint8_t> outside(m.px.size(), 0);
    std::queue<int64_t> q;
    auto push = [&](int64_t y, int64_t x) {
        const int64_t i = y * m.w + x;
        if (!m.px[static_cast<size_t>(i)] && !outside[static_cast<size_t>(i)]) {
            outside[static_cast<size_t>(i)] = 1;
            q.push(i);
        }
    };
    for (int64_t x = 0; x < m.w; ++x) {
        push(0, x);
        push(m.h - 1, x);
    }
    for (int64_t y = 0; y < m.h; ++y) {
        push(y, 0);
        push(y, m.w - 1);
    }
    while (!q.empty()) {
        const int64_t i = q.front();
        q.pop();
        const int64_t y = i / m.w, x = i % m.w;
        if (y > 0) push(y - 1, x);
        if (y < m.h - 1) push(y + 1, x);
        if (x > 0) push(y, x - 1);
        if (x < m.w - 1) push(y, x + 1);
    }
    for (size_t i = 0; i < m.px.size(); ++i)
        if (!m.px[i] && !outside[i]) m.px[i] = 1;
}

}  // namespace

Slice isolate_lung_fields(const Slice& s) {
    // exactly-0 pixels are already background (outside-body air normalizes to
    // 0), so they are not lung candidates; this also makes a second pass a
    // no-op on the gated result
    Mask2D cand = Mask2D::zeros(s.h, s.w);
    for (int64_t i = 0; i < s.h * s.w; ++i) {
        const float v = s.px[static_cast<size_t>(i)];
        cand.px[static_cast<size_t>(i)] = (v > 0.0f && v < 0.35f) ? 1 : 0;
    }
    Mask2D lung = erode(dilate(cand));
    remove_border_components(lung);
    fill_holes(lung);

    Slice out = apply_mask(s, lung);
    out.lung_empty = true;
    for (uint8_t v : lung.px)
        if (v) {
            out.lung_empty = false;
            break;
        }
    return out;
}

Slice enhance_contrast(const Slice& s) {
    std::vector<float> lung;
    lung.reserve(s.px.size());
    for (float v : s.px)
        if (v > 0.0f) lung.push_back(v);
    if (lung.empty()) return s;
    std::sort(lung.begin(), lung.end());
    const double n = static_cast<double>(lung.size());

    Slice out = s;
    for (auto& v : out.px) {
        if (v <= 0.0f) continue;
        const auto le = std::upper_bound(lung.begin(), lung.end(), v) - lung.begin();
        v = static_cast<float>(static_cast<double>(le) / n);
    }
    return out;
}

Slice resize_slice(const Slice& s, int64_t target_h, int64_t target_w) {
    if (target_h < 8 || target_w < 8 || target_h % 8 != 0 || target_w % 8 != 0)
        throw ValueError("resize_slice: target " + std::to_string(target_h) + "x" +
                         std::to_string(target_w) + " must be >= 8 and divisible by 8");
    Slice out;
    out.h = target_h;
    out.w = target_w;
    out.px.resize(static_cast<size_t>(target_h * target_w));
    out.sy = s.sy * static_cast<double>(s.h) / static_cast<double>(target_h);
    out.sx = s.sx * static_cast<double>(s.w) / static_cast<double>(target_w);
    out.series = s.series;
    out.z = s.z;
    out.lung_empty = s.lung_empty;

    const double ry = static_cast<double>(s.h) / static_cast<double>(target_h);
    const double rx = static_cast<double>(s.w) / static_cast<double>(target_w);
    for (int64_t y = 0; y < target_h; ++y) {
        // half-pixel convention: dst center maps onto src center grid
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * ry - 0.5, 0.0,
                                     static_cast<double>(s.h - 1));
        const int64_t y0 = static_cast<int64_t>(fy);
        const int64_t y1 = std::min(y0 + 1, s.h - 1);
        const double wy = fy - static_cast<double>(y0);
        for (int64_t x = 0; x < target_w; ++x) {
            const double fx = std::clamp((static_cast<double>(x) + 0.5) * rx - 0.5, 0.0,
                                         static_cast<double>(s.w - 1));
            const int64_t x0 = static_cast<int64_t>(fx);
            const int64_t x1 = std::min(x0 + 1, s.w - 1);
            const double wx = fx - static_cast<double>(x0);
            const double v = (1 - wy) * ((1 - wx) * s.at(y0, x0) + wx * s.at(y0, x1)) +
                             wy * ((1 - wx) * s.at(y1, x0) + wx * s.at(y1, x1));
            out.at(y, x) = static_cast<float>(v);
        }
    }
    return out;
}

Mask2D ceiling_mask(const Slice& s) {
    Mask2D m = Mask2D::zeros(s.h, s.w);
    for (size_t i = 0; i < s.px.size(); ++i) m.px[i] = s.px[i] > 0.0f ? 1 : 0;
    return m;
}

Slice apply_mask(const Slice& s, const Mask2D& m) {
    if (s.h != m.h || s.w != m.w)
        throw ValueError("apply_mask: slice " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                         " vs mask " + std::to_string(m.h) + "x" + std::to_string(m.w));
    Slice out = s;
    for (size_t i = 0; i < out.px.size(); ++i)
        if (!m.px[i]) out.px[i] = 0.0f;
    return out;
}

}  // namespace lp::img
