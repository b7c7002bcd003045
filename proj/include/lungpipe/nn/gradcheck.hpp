#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "lungpipe/nn/adam.hpp"

// Central-difference gradient verification. The loss closure must be a pure
// function of the current parameter values (train mode with dropout steps
// frozen), and analytic gradients must already sit in the grad tensors from
// one backward pass before calling.
//
// The comparison per tensor is the norm ratio ||a - n|| / (||a|| + ||n||),
// which stays meaningful in 32-bit arithmetic where elementwise relative
// error on near-zero components drowns in rounding noise. Returned value is
// the worst ratio across tensors.
//
// atol treats absolute deviations at the finite-difference noise floor
// (machine eps * |loss| / h, accumulated over elements) as agreement. It is
// needed for parameters whose true gradient is zero or near it — e.g. a conv
// bias every consumer of which feeds a batchnorm, so the shift it applies is
// subtracted right back out — where both sides are pure rounding noise and
// their ratio is meaningless.

namespace lp::nn {

template <typename T>
struct GradCheckConfig {
    double h = std::is_same_v<T, double> ? 1e-5 : 1e-2;
    double atol = 0.0;
};

template <typename T>
double grad_check_tensor(const std::function<double()>& loss, TensorT<T>& w, const TensorT<T>& g,
                         GradCheckConfig<T> cfg = {}) {
    double da = 0, dn = 0, dd = 0;
    for (int64_t i = 0; i < w.size(); ++i) {
        const T keep = w[i];
        w[i] = static_cast<T>(keep + cfg.h);
        const double up = loss();
        w[i] = static_cast<T>(keep - cfg.h);
        const double down = loss();
        w[i] = keep;
        const double num = (up - down) / (2.0 * cfg.h);
        const double ana = static_cast<double>(g[i]);
        da += ana * ana;
        dn += num * num;
        dd += (ana - num) * (ana - num);
    }
    const double diff = std::sqrt(dd);
    if (diff <= cfg.atol) return 0.0;
    // ||a-n|| <= ||a|| + ||n||, so diff > 0 implies a positive denominator
    return diff / (std::sqrt(da) + std::sqrt(dn));
}

template <typename T>
double grad_check_params(const std::function<double()>& loss,
                         const std::vector<ParamRef<T>>& params, GradCheckConfig<T> cfg = {}) {
    double worst = 0.0;
    for (const auto& p : params)
        worst = std::max(worst, grad_check_tensor(loss, *p.w, *p.g, cfg));
    return worst;
}

}  // namespace lp::nn
