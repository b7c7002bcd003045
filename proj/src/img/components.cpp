#include "lungpipe/img/components.hpp"

#include <queue>

namespace lp::img {

std::vector<Component> connected_components(const Mask2D& m) {
    std::vector<Component> out;
    std::vector<uint8_t> seen(m.px.size(), 0);
    for (int64_t start = 0; start < m.h * m.w; ++start) {
        if (!m.px[static_cast<size_t>(start)] || seen[static_cast<size_t>(start)]) continue;
        Component comp;
        std::queue<int64_t> q;
        seen[static_cast<size_t>(start)] = 1;
        q.push(start);
        double sy = 0, sx = 0;
        while (!q.empty()) {
            const int64_t i = q.front();
            q.pop();
            const int64_t y = i / m.w, x = i % m.w;
            comp.pixels.emplace_back(y, x);
            sy += static_cast<double>(y);
            sx += static_cast<double>(x);
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const int64_t ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= m.h || nx < 0 || nx >= m.w) continue;
                    const int64_t ni = ny * m.w + nx;
                    if (m.px[static_cast<size_t>(ni)] && !seen[static_cast<size_t>(ni)]) {
                        seen[static_cast<size_t>(ni)] = 1;
                        q.push(ni);
                    }
                }
        }
        comp.area = static_cast<int64_t>(comp.pixels.size());
        comp.cy = sy / static_cast<double>(comp.area);
        comp.cx = sx / static_cast<double>(comp.area);
        out.push_back(std::move(comp));
    }
    return out;
}

Mask2D select_densest_region(const Slice& prob, double threshold) {
    Mask2D over = Mask2D::zeros(prob.h, prob.w);
    for (size_t i = 0; i < prob.px.size(); ++i)
        over.px[i] = prob.px[i] >= static_cast<float>(threshold) ? 1 : 0;

    auto comps = connected_components(over);
    Mask2D out = Mask2D::zeros(prob.h, prob.w);
    if (comps.empty()) return out;

    for (auto& c : comps) {
        double s = 0;
        for (auto [y, x] : c.pixels) s += prob.at(y, x);
        c.mean_activation = s / static_cast<double>(c.area);
    }
    size_t best = 0;
    for (size_t i = 1; i < comps.size(); ++i) {
        if (comps[i].mean_activation > comps[best].mean_activation ||
            (comps[i].mean_activation == comps[best].mean_activation &&
             comps[i].area > comps[best].area))
            best = i;
        // equal mean and area: keep the earlier (scan-order) component
    }
    for (auto [y, x] : comps[best].pixels) out.at(y, x) = 1;
    return out;
}

}  // namespace lp::img
