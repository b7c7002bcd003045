#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "lungpipe/core/tensor.hpp"

namespace lp::nn {

template <typename T>
struct ParamRef {
    std::string name;
    TensorT<T>* w = nullptr;
    TensorT<T>* g = nullptr;
};

// Adam with bias correction. Moment tensors are lazily allocated on the first
// step and stay aligned with the parameter list order.
template <typename T>
struct Adam {
    double lr = 0.0001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    int64_t t = 0;
    std::vector<TensorT<T>> m, v;

    void step(const std::vector<ParamRef<T>>& params) {
        if (m.empty()) {
            for (const auto& p : params) {
                m.emplace_back(p.w->shape);
                v.emplace_back(p.w->shape);
            }
        }
        if (m.size() != params.size())
            throw ValueError("adam: parameter count changed mid-training");
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t pi = 0; pi < params.size(); ++pi) {
            TensorT<T>& w = *params[pi].w;
            const TensorT<T>& g = *params[pi].g;
            TensorT<T>& mi = m[pi];
            TensorT<T>& vi = v[pi];
            T* __restrict wp = w.data();
            const T* __restrict gp = g.data();
            T* __restrict mp = mi.data();
            T* __restrict vp = vi.data();
#pragma omp parallel for schedule(static)
            for (int64_t i = 0; i < w.size(); ++i) {
                const double gd = gp[i];
                const double mn = beta1 * mp[i] + (1.0 - beta1) * gd;
                const double vn = beta2 * vp[i] + (1.0 - beta2) * gd * gd;
                mp[i] = static_cast<T>(mn);
                vp[i] = static_cast<T>(vn);
                wp[i] = static_cast<T>(wp[i] - lr * (mn / c1) / (std::sqrt(vn / c2) + eps));
            }
        }
    }
};

}  // namespace lp::nn
