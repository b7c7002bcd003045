#pragma once

#include <cmath>

#include "lungpipe/core/tensor.hpp"

namespace lp::nn {

template <typename T>
struct LossResult {
    double loss = 0.0;
    TensorT<T> grad;  // d loss / d pred
};

// Class-weighted binary cross-entropy, mean over all elements:
//   L = -(1/N) * sum[ w*y*log(h) + (1-y)*log(1-h) ]
// Predictions are clamped to [1e-7, 1-1e-7]; where the clamp is active the
// gradient is zero (the implemented function is flat there). The weight
// tensor holds the positive-class weight per element, so callers can weight
// output units differently; the scalar overload applies one w everywhere.
template <typename T>
LossResult<T> weighted_bce(const TensorT<T>& pred, const TensorT<T>& target,
                           const TensorT<T>& pos_weight) {
    check_same_shape(pred, target, "weighted_bce");
    check_same_shape(pred, pos_weight, "weighted_bce weights");
    const double eps = 1e-7;
    const double n = static_cast<double>(pred.size());
    LossResult<T> r;
    r.grad = TensorT<T>(pred.shape);
    double acc = 0.0;
    for (int64_t i = 0; i < pred.size(); ++i) {
        const double raw = pred[i];
        const double h = std::min(1.0 - eps, std::max(eps, raw));
        const double y = target[i];
        const double w = pos_weight[i];
        acc += w * y * std::log(h) + (1.0 - y) * std::log(1.0 - h);
        const bool clamped = raw < eps || raw > 1.0 - eps;
        r.grad[i] = clamped ? T(0) : static_cast<T>(-(w * y / h - (1.0 - y) / (1.0 - h)) / n);
    }
    r.loss = -acc / n;
    return r;
}

template <typename T>
LossResult<T> weighted_bce(const TensorT<T>& pred, const TensorT<T>& target, double w) {
    TensorT<T> pw(pred.shape);
    pw.fill(static_cast<T>(w));
    return weighted_bce(pred, target, pw);
}

// Dice coefficient of two binary masks; both empty counts as perfect overlap.
template <typename T>
double dice_coefficient(const TensorT<T>& a, const TensorT<T>& b) {
    check_same_shape(a, b, "dice");
    int64_t inter = 0, na = 0, nb = 0;
    for (int64_t i = 0; i < a.size(); ++i) {
        const bool pa = a[i] > T(0.5), pb = b[i] > T(0.5);
        inter += pa && pb;
        na += pa;
        nb += pb;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

}  // namespace lp::nn
