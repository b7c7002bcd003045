#pragma once

#include <algorithm>
#include <cstdint>

#include "lungpipe/core/tensor.hpp"

// Serial reference kernels: direct summation straight from the operator
// definitions, no blocking, no parallelism. These exist to check the
// optimized kernels against and to serve as the benchmark baseline; keep
// them dumb.

namespace lp::nn::ref {

template <typename T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b, int64_t stride) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t OC = w.dim(0), K = w.dim(2);
    const int64_t OH = (H + stride - 1) / stride;
    const int64_t OW = (W + stride - 1) / stride;
    const int64_t pad_y = std::max<int64_t>(0, (OH - 1) * stride + K - H) / 2;
    const int64_t pad_x = std::max<int64_t>(0, (OW - 1) * stride + K - W) / 2;

    TensorT<T> out({N, OC, OH, OW});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t oc = 0; oc < OC; ++oc)
            for (int64_t oy = 0; oy < OH; ++oy)
                for (int64_t ox = 0; ox < OW; ++ox) {
                    T acc = b[oc];
                    for (int64_t ic = 0; ic < C; ++ic)
                        for (int64_t ky = 0; ky < K; ++ky)
                            for (int64_t kx = 0; kx < K; ++kx) {
                                const int64_t iy = oy * stride + ky - pad_y;
                                const int64_t ix = ox * stride + kx - pad_x;
                                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                                acc += w[((oc * C + ic) * K + ky) * K + kx] *
                                       x[((n * C + ic) * H + iy) * W + ix];
                            }
                    out[((n * OC + oc) * OH + oy) * OW + ox] = acc;
                }
    return out;
}

template <typename T>
TensorT<T> conv3d(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t OC = w.dim(0), K = w.dim(2);
    const int64_t pad_z = std::max<int64_t>(0, K - 1) / 2;
    const int64_t pad_y = pad_z, pad_x = pad_z;  // stride 1, same padding

    TensorT<T> out({N, OC, D, H, W});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t oc = 0; oc < OC; ++oc)
            for (int64_t oz = 0; oz < D; ++oz)
                for (int64_t oy = 0; oy < H; ++oy)
                    for (int64_t ox = 0; ox < W; ++ox) {
                        T acc = b[oc];
                        for (int64_t ic = 0; ic < C; ++ic)
                            for (int64_t kz = 0; kz < K; ++kz)
                                for (int64_t ky = 0; ky < K; ++ky)
                                    for (int64_t kx = 0; kx < K; ++kx) {
                                        const int64_t iz = oz + kz - pad_z;
                                        const int64_t iy = oy + ky - pad_y;
                                        const int64_t ix = ox + kx - pad_x;
                                        if (iz < 0 || iz >= D || iy < 0 || iy >= H || ix < 0 ||
                                            ix >= W)
                                            continue;
                                        acc += w[(((oc * C + ic) * K + kz) * K + ky) * K + kx] *
                                               x[(((n * C + ic) * D + iz) * H + iy) * W + ix];
                                    }
                        out[(((n * OC + oc) * D + oz) * H + oy) * W + ox] = acc;
                    }
    return out;
}

template <typename T>
TensorT<T> dense(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    const int64_t N = x.dim(0), I = x.dim(1), O = w.dim(0);
    TensorT<T> out({N, O});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t o = 0; o < O; ++o) {
            T acc = b[o];
            for (int64_t i = 0; i < I; ++i) acc += x[n * I + i] * w[o * I + i];
            out[n * O + o] = acc;
        }
    return out;
}

template <typename T>
TensorT<T> maxpool3d(const TensorT<T>& x, int64_t k) {
    const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t OD = D / k, OH = H / k, OW = W / k;
    TensorT<T> out({N, C, OD, OH, OW});
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t oz = 0; oz < OD; ++oz)
                for (int64_t oy = 0; oy < OH; ++oy)
                    for (int64_t ox = 0; ox < OW; ++ox) {
                        T best = x[(((n * C + c) * D + oz * k) * H + oy * k) * W + ox * k];
                        for (int64_t kz = 0; kz < k; ++kz)
                            for (int64_t ky = 0; ky < k; ++ky)
                                for (int64_t kx = 0; kx < k; ++kx)
                                    best = std::max(
                                        best, x[(((n * C + c) * D + oz * k + kz) * H + oy * k + ky) *
                                                    W +
                                                ox * k + kx]);
                        out[(((n * C + c) * OD + oz) * OH + oy) * OW + ox] = best;
                    }
    return out;
}

}  // namespace lp::nn::ref
