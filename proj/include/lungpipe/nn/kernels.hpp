#pragma once

#include <algorithm>
#include <cstdint>

#include "lungpipe/core/tensor.hpp"

// Convolution / dense / pooling kernels, OpenMP-parallel.
//
// Every parallel loop owns whole output elements (usually an output row) and
// accumulates in a fixed order, so results are bit-identical for any thread
// count. No cross-thread reductions anywhere.
//
// Convolutions use zero "same" padding: out = ceil(in / stride),
// pad_begin = floor(max(0, (out-1)*stride + k - in) / 2), remainder at the end.

namespace lp::nn {

struct AxisGeom {
    int64_t out;
    int64_t pad;  // pad before index 0
};

inline AxisGeom same_axis(int64_t in, int64_t k, int64_t stride) {
    const int64_t out = (in + stride - 1) / stride;
    const int64_t total = std::max<int64_t>(0, (out - 1) * stride + k - in);
    return {out, total / 2};
}

// ----------------------------------------------------------------------------
// conv2d: x [N,C,H,W], w [OC,C,K,K], b [OC] -> out [N,OC,OH,OW]
// ----------------------------------------------------------------------------

template <typename T>
TensorT<T> conv2d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b,
                          int64_t stride) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t OC = w.dim(0), K = w.dim(2);
    const AxisGeom gy = same_axis(H, K, stride), gx = same_axis(W, K, stride);
    const int64_t OH = gy.out, OW = gx.out;

    TensorT<T> out({N, OC, OH, OW});
    const T* __restrict xp = x.data();
    const T* __restrict wp = w.data();
    const T* __restrict bp = b.data();
    T* __restrict op = out.data();

    const int64_t rows = N * OC * OH;
#pragma omp parallel for schedule(static)
    for (int64_t row = 0; row < rows; ++row) {
        const int64_t oy = row % OH;
        const int64_t oc = (row / OH) % OC;
        const int64_t n = row / (OH * OC);
        T* __restrict orow = op + row * OW;
        for (int64_t ox = 0; ox < OW; ++ox) orow[ox] = bp[oc];
        for (int64_t ic = 0; ic < C; ++ic) {
            for (int64_t ky = 0; ky < K; ++ky) {
                const int64_t iy = oy * stride + ky - gy.pad;
                if (iy < 0 || iy >= H) continue;
                const T* __restrict irow = xp + ((n * C + ic) * H + iy) * W;
                const T* __restrict wrow = wp + ((oc * C + ic) * K + ky) * K;
                for (int64_t kx = 0; kx < K; ++kx) {
                    const T wv = wrow[kx];
                    const int64_t off = kx - gx.pad;
                    // ox range with 0 <= ox*stride + off < W
                    int64_t lo = 0;
                    if (off < 0) lo = (-off + stride - 1) / stride;
                    int64_t hi = std::min(OW, off < W ? (W - 1 - off) / stride + 1 : int64_t(0));
                    if (stride == 1) {
                        const T* __restrict src = irow + off;
                        for (int64_t ox = lo; ox < hi; ++ox) orow[ox] += wv * src[ox];
                    } else {
                        for (int64_t ox = lo; ox < hi; ++ox) orow[ox] += wv * irow[ox * stride + off];
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
TensorT<T> conv2d_backward_input(const TensorT<T>& gout, const TensorT<T>& w,
                                 const std::vector<int64_t>& xshape, int64_t stride) {
    const int64_t N = xshape[0], C = xshape[1], H = xshape[2], W = xshape[3];
    const int64_t OC = w.dim(0), K = w.dim(2);
    const AxisGeom gy = same_axis(H, K, stride), gx = same_axis(W, K, stride);
    const int64_t OH = gy.out, OW = gx.out;

    TensorT<T> gin(xshape);
    const T* __restrict gp = gout.data();
    const T* __restrict wp = w.data();
    T* __restrict ip = gin.data();

    const int64_t rows = N * C * H;
#pragma omp parallel for schedule(static)
    for (int64_t row = 0; row < rows; ++row) {
        const int64_t iy = row % H;
        const int64_t ic = (row / H) % C;
        const int64_t n = row / (H * C);
        T* __restrict grow = ip + row * W;
        for (int64_t oc = 0; oc < OC; ++oc) {
            for (int64_t ky = 0; ky < K; ++ky) {
                const int64_t num = iy + gy.pad - ky;
                if (num < 0 || num % stride != 0) continue;
                const int64_t oy = num / stride;
                if (oy >= OH) continue;
                const T* __restrict gorow = gp + ((n * OC + oc) * OH + oy) * OW;
                const T* __restrict wrow = wp + ((oc * C + ic) * K + ky) * K;
                for (int64_t kx = 0; kx < K; ++kx) {
                    const T wv = wrow[kx];
                    const int64_t off = kx - gx.pad;
                    int64_t lo = 0;
                    if (off < 0) lo = (-off + stride - 1) / stride;
                    int64_t hi = std::min(OW, off < W ? (W - 1 - off) / stride + 1 : int64_t(0));
                    if (stride == 1) {
                        T* __restrict dst = grow + off;
                        for (int64_t ox = lo; ox < hi; ++ox) dst[ox] += wv * gorow[ox];
                    } else {
                        for (int64_t ox = lo; ox < hi; ++ox) grow[ox * stride + off] += wv * gorow[ox];
                    }
                }
            }
        }
    }
    return gin;
}

template <typename T>
void conv2d_backward_params(const TensorT<T>& gout, const TensorT<T>& x, int64_t stride,
                            TensorT<T>& gw, TensorT<T>& gb) {
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t OC = gw.dim(0), K = gw.dim(2);
    const AxisGeom gy = same_axis(H, K, stride), gx = same_axis(W, K, stride);
    const int64_t OH = gy.out, OW = gx.out;

    const T* __restrict gp = gout.data();
    const T* __restrict xp = x.data();
    T* __restrict wp = gw.data();

    const int64_t wrows = OC * C * K;
#pragma omp parallel for schedule(static)
    for (int64_t row = 0; row < wrows; ++row) {
        const int64_t ky = row % K;
        const int64_t ic = (row / K) % C;
        const int64_t oc = row / (K * C);
        T* __restrict gwrow = wp + row * K;
        for (int64_t kx = 0; kx < K; ++kx) {
            const int64_t off = kx - gx.pad;
            int64_t lo = 0;
            if (off < 0) lo = (-off + stride - 1) / stride;
            const int64_t hi = std::min(OW, off < W ? (W - 1 - off) / stride + 1 : int64_t(0));
            T acc = T(0);
            for (int64_t n = 0; n < N; ++n) {
                for (int64_t oy = 0; oy < OH; ++oy) {
                    const int64_t iy = oy * stride + ky - gy.pad;
                    if (iy < 0 || iy >= H) continue;
                    const T* __restrict gorow = gp + ((n * OC + oc) * OH + oy) * OW;
                    const T* __restrict irow = xp + ((n * C + ic) * H + iy) * W;
                    if (stride == 1) {
                        const T* __restrict src = irow + off;
                        for (int64_t ox = lo; ox < hi; ++ox) acc += gorow[ox] * src[ox];
                    } else {
                        for (int64_t ox = lo; ox < hi; ++ox) acc += gorow[ox] * irow[ox * stride + off];
                    }
                }
            }
            gwrow[kx] = acc;
        }
    }

    T* __restrict bp = gb.data();
#pragma omp parallel for schedule(static)
    for (int64_t oc = 0; oc < OC; ++oc) {
        T acc = T(0);
        for (int64_t n = 0; n < N; ++n) {
            const T* __restrict plane = gp + (n * OC + oc) * OH * OW;
            for (int64_t i = 0; i < OH * OW; ++i) acc += plane[i];
        }
        bp[oc] = acc;
    }
}

// ----------------------------------------------------------------------------
// conv3d: x [N,C,D,H,W], w [OC,C,K,K,K], b [OC] -> out [N,OC,OD,OH,OW]
// Stride 1 only (both architectures use stride-1 3-d convolutions).
// ----------------------------------------------------------------------------

template <typename T>
TensorT<T> conv3d_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t OC = w.dim(0), K = w.dim(2);
    const AxisGeom gz = same_axis(D, K, 1), gy = same_axis(H, K, 1), gx = same_axis(W, K, 1);
    const int64_t OD = gz.out, OH = gy.out, OW = gx.out;

    TensorT<T> out({N, OC, OD, OH, OW});
    const T* __restrict xp = x.data();
    const T* __restrict wp = w.data();
    const T* __restrict bp = b.data();
    T* __restrict op = out.data();

    const int64_t rows = N * OC * OD * OH;
#pragma omp parallel for schedule(static)
    for (int64_t row = 0; row < rows; ++row) {
        const int64_t oy = row % OH;
        const int64_t oz = (row / OH) % OD;
        const int64_t oc = (row / (OH * OD)) % OC;
        const int64_t n = row / (OH * OD * OC);
        T* __restrict orow = op + row * OW;
        for (int64_t ox = 0; ox < OW; ++ox) orow[ox] = bp[oc];
        for (int64_t ic = 0; ic < C; ++ic) {
            for (int64_t kz = 0; kz < K; ++kz) {
                const int64_t iz = oz + kz - gz.pad;
                if (iz < 0 || iz >= D) continue;
                for (int64_t ky = 0; ky < K; ++ky) {
                    const int64_t iy = oy + ky - gy.pad;
                    if (iy < 0 || iy >= H) continue;
                    const T* __restrict irow = xp + (((n * C + ic) * D + iz) * H + iy) * W;
                    const T* __restrict wrow = wp + (((oc * C + ic) * K + kz) * K + ky) * K;
                    for (int64_t kx = 0; kx < K; ++kx) {
                        const T wv = wrow[kx];
                        const int64_t off = kx - gx.pad;
                        const int64_t lo = std::max<int64_t>(0, -off);
                        const int64_t hi = std::min(OW, W - off);
                        const T* __restrict src = irow + off;
                        for (int64_t ox = lo; ox < hi; ++ox) orow[ox] += wv * src[ox];
                    }
                }
            }
        }
    }
    return out;
}

template <typename T>
TensorT<T> conv3d_backward_input(const TensorT<T>& gout, const TensorT<T>& w,
                                 const std::vector<int64_t>& xshape) {
    const int64_t N = xshape[0], C = xshape[1], D = xshape[2], H = xshape[3], W = xshape[4];
    const int64_t OC = w.dim(0), K = w.dim(2);
    const AxisGeom gz = same_axis(D, K, 1), gy = same_axis(H, K, 1), gx = same_axis(W, K, 1);
    const int64_t OD = gz.out, OH = gy.out, OW = gx.out;

    TensorT<T> gin(xshape);
    const T* __restrict gp = gout.data();
    const T* __restrict wp = w.data();
    T* __restrict ip = gin.data();

    const int64_t rows = N * C * D * H;
#pragma omp parallel for schedule(static)
    for (int64_t row = 0; row < rows; ++row) {
        const int64_t iy = row % H;
        const int64_t iz = (row / H) % D;
        const int64_t ic = (row / (H * D)) % C;
        const int64_t n = row / (H * D * C);
        T* __restrict grow = ip + row * W;
        for (int64_t oc = 0; oc < OC; ++oc) {
            for (int64_t kz = 0; kz < K; ++kz) {
                const int64_t oz = iz + gz.pad - kz;
                if (oz < 0 || oz >= OD) continue;
                for (int64_t ky = 0; ky < K; ++ky) {
                    const int64_t oy = iy + gy.pad - ky;
                    if (oy < 0 || oy >= OH) continue;
                    const T* __restrict gorow = gp + (((n * OC + oc) * OD + oz) * OH + oy) * OW;
                    const T* __restrict wrow = wp + (((oc * C + ic) * K + kz) * K + ky) * K;
                    for (int64_t kx = 0; kx < K; ++kx) {
                        const T wv = wrow[kx];
                        const int64_t off = kx - gx.pad;  // ix = ox + off
                        const int64_t lo = std::max<int64_t>(0, off);
                        const int64_t hi = std::min(W, OW + off);
                        const T* __restrict src = gorow - off;
                        for (int64_t ix = lo; ix < hi; ++ix) grow[ix] += wv * src[ix];
                    }
                }
            }
        }
    }
    return gin;
}

template <typename T>
void conv3d_backward_params(const TensorT<T>& gout, const TensorT<T>& x,
                            TensorT<T>& gw, TensorT<T>& gb) {
    const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t OC = gw.dim(0), K = gw.dim(2);
    const AxisGeom gz = same_axis(D, K, 1), gy = same_axis(H, K, 1), gx = same_axis(W, K, 1);
    const int64_t OD = gz.out, OH = gy.out, OW = gx.out;

    const T* __restrict gp = gout.data();
    const T* __restrict xp = x.data();
    T* __restrict wp = gw.data();

    const int64_t wrows = OC * C * K * K;
#pragma omp parallel for schedule(static)
    for (int64_t row = 0; row < wrows; ++row) {
        const int64_t ky = row % K;
        const int64_t kz = (row / K) % K;
        const int64_t ic = (row / (K * K)) % C;
        const int64_t oc = row / (K * K * C);
        T* __restrict gwrow = wp + row * K;
        for (int64_t kx = 0; kx < K; ++kx) {
            const int64_t off = kx - gx.pad;
            const int64_t lo = std::max<int64_t>(0, -off);
            const int64_t hi = std::min(OW, W - off);
            T acc = T(0);
            for (int64_t n = 0; n < N; ++n) {
                for (int64_t oz = 0; oz < OD; ++oz) {
                    const int64_t iz = oz + kz - gz.pad;
                    if (iz < 0 || iz >= D) continue;
                    for (int64_t oy = 0; oy < OH; ++oy) {
                        const int64_t iy = oy + ky - gy.pad;
                        if (iy < 0 || iy >= H) continue;
                        const T* __restrict gorow = gp + (((n * OC + oc) * OD + oz) * OH + oy) * OW;
                        const T* __restrict src = xp + (((n * C + ic) * D + iz) * H + iy) * W + off;
                        for (int64_t ox = lo; ox < hi; ++ox) acc += gorow[ox] * src[ox];
                    }
                }
            }
            gwrow[kx] = acc;
        }
    }

    T* __restrict bp = gb.data();
    const int64_t plane = OD * OH * OW;
#pragma omp parallel for schedule(static)
    for (int64_t oc = 0; oc < OC; ++oc) {
        T acc = T(0);
        for (int64_t n = 0; n < N; ++n) {
            const T* __restrict p = gp + (n * OC + oc) * plane;
            for (int64_t i = 0; i < plane; ++i) acc += p[i];
        }
        bp[oc] = acc;
    }
}

// ----------------------------------------------------------------------------
// dense: x [N,I], w [O,I], b [O] -> out [N,O]
// ----------------------------------------------------------------------------

template <typename T>
TensorT<T> dense_forward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    const int64_t N = x.dim(0), I = x.dim(1), O = w.dim(0);
    TensorT<T> out({N, O});
    const T* __restrict xp = x.data();
    const T* __restrict wp = w.data();
    const T* __restrict bp = b.data();
    T* __restrict op = out.data();

#pragma omp parallel for schedule(static)
    for (int64_t cell = 0; cell < N * O; ++cell) {
        const int64_t o = cell % O;
        const int64_t n = cell / O;
        const T* __restrict xr = xp + n * I;
        const T* __restrict wr = wp + o * I;
        T acc = bp[o];
        for (int64_t i = 0; i < I; ++i) acc += xr[i] * wr[i];
        op[cell] = acc;
    }
    return out;
}

template <typename T>
TensorT<T> dense_backward_input(const TensorT<T>& gout, const TensorT<T>& w) {
    const int64_t N = gout.dim(0), O = gout.dim(1), I = w.dim(1);
    TensorT<T> gin({N, I});
    const T* __restrict gp = gout.data();
    const T* __restrict wp = w.data();
    T* __restrict ip = gin.data();

#pragma omp parallel for schedule(static)
    for (int64_t n = 0; n < N; ++n) {
        T* __restrict grow = ip + n * I;
        const T* __restrict gr = gp + n * O;
        for (int64_t o = 0; o < O; ++o) {
            const T gv = gr[o];
            const T* __restrict wr = wp + o * I;
            for (int64_t i = 0; i < I; ++i) grow[i] += gv * wr[i];
        }
    }
    return gin;
}

template <typename T>
void dense_backward_params(const TensorT<T>& gout, const TensorT<T>& x,
                           TensorT<T>& gw, TensorT<T>& gb) {
    const int64_t N = gout.dim(0), O = gout.dim(1), I = x.dim(1);
    const T* __restrict gp = gout.data();
    const T* __restrict xp = x.data();
    T* __restrict wp = gw.data();
    T* __restrict bp = gb.data();

#pragma omp parallel for schedule(static)
    for (int64_t o = 0; o < O; ++o) {
        T* __restrict gwrow = wp + o * I;
        for (int64_t i = 0; i < I; ++i) gwrow[i] = T(0);
        T bacc = T(0);
        for (int64_t n = 0; n < N; ++n) {
            const T gv = gp[n * O + o];
            bacc += gv;
            const T* __restrict xr = xp + n * I;
            for (int64_t i = 0; i < I; ++i) gwrow[i] += gv * xr[i];
        }
        bp[o] = bacc;
    }
}

// ----------------------------------------------------------------------------
// maxpool3d: window k, stride k, floor division. x [N,C,D,H,W].
// argmax stores flat input offsets for the backward scatter.
// ----------------------------------------------------------------------------

template <typename T>
TensorT<T> maxpool3d_forward(const TensorT<T>& x, int64_t k, std::vector<int64_t>& argmax) {
    const int64_t N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const int64_t OD = D / k, OH = H / k, OW = W / k;
    if (OD < 1 || OH < 1 || OW < 1)
        throw ValueError("maxpool3d: input " + x.shape_str() + " smaller than window " + std::to_string(k));

    TensorT<T> out({N, C, OD, OH, OW});
    argmax.assign(static_cast<size_t>(out.size()), 0);
    const T* __restrict xp = x.data();
    T* __restrict op = out.data();
    int64_t* __restrict ap = argmax.data();

    const int64_t rows = N * C * OD * OH;
#pragma omp parallel for schedule(static)
    for (int64_t row = 0; row < rows; ++row) {
        const int64_t oy = row % OH;
        const int64_t oz = (row / OH) % OD;
        const int64_t c = (row / (OH * OD)) % C;
        const int64_t n = row / (OH * OD * C);
        for (int64_t ox = 0; ox < OW; ++ox) {
            T best = xp[(((n * C + c) * D + oz * k) * H + oy * k) * W + ox * k];
            int64_t besti = (((n * C + c) * D + oz * k) * H + oy * k) * W + ox * k;
            for (int64_t kz = 0; kz < k; ++kz)
                for (int64_t ky = 0; ky < k; ++ky)
                    for (int64_t kx = 0; kx < k; ++kx) {
                        const int64_t idx =
                            (((n * C + c) * D + oz * k + kz) * H + oy * k + ky) * W + ox * k + kx;
                        if (xp[idx] > best) {
                            best = xp[idx];
                            besti = idx;
                        }
                    }
            op[row * OW + ox] = best;
            ap[row * OW + ox] = besti;
        }
    }
    return out;
}

template <typename T>
TensorT<T> maxpool3d_backward(const TensorT<T>& gout, const std::vector<int64_t>& argmax,
                              const std::vector<int64_t>& xshape) {
    TensorT<T> gin(xshape);
    const T* __restrict gp = gout.data();
    T* __restrict ip = gin.data();
    // windows are disjoint, so scatter targets never collide
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < gout.size(); ++i) ip[argmax[static_cast<size_t>(i)]] += gp[i];
    return gin;
}

}  // namespace lp::nn
