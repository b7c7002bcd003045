#pragma once

#include <vector>

#include "lungpipe/img/slice.hpp"

namespace lp::img {

struct Component {
    std::vector<std::pair<int64_t, int64_t>> pixels;  // (y,x), discovery order
    int64_t area = 0;
    double mean_activation = 0.0;  // mean of pre-threshold probabilities
    double cy = 0.0, cx = 0.0;
};

// 8-connected components of the 1-pixels, ordered by their first pixel in
// row-major scan order.
std::vector<Component> connected_components(const Mask2D& m);

// Thresholds the probability map, then keeps only the component with the
// highest mean activation (ties: larger area, then scan order). Everything
// below threshold everywhere gives an empty mask.
Mask2D select_densest_region(const Slice& prob, double threshold = 0.5);

}  // namespace lp::img
