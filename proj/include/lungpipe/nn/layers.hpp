#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "lungpipe/core/rng.hpp"
#include "lungpipe/core/tensor.hpp"
#include "lungpipe/nn/kernels.hpp"

// Layer building blocks. Each layer owns its parameters, gradients and the
// caches its backward needs; models wire them explicitly (there is no generic
// graph). Everything is templated so the gradient checks can run the same
// code in double.

namespace lp::nn {

enum class Mode { train, infer };

// One entry of the checkpoint's layer table: kind plus the integers that pin
// its shape-relevant hyperparameters.
struct LayerSpec {
    std::string kind;
    std::vector<int64_t> hp;

    bool operator==(const LayerSpec&) const = default;
};

template <typename T>
using ParamVisitor = std::function<void(const std::string&, TensorT<T>&, TensorT<T>&)>;
template <typename T>
using BufferVisitor = std::function<void(const std::string&, TensorT<T>&)>;

template <typename T>
void fanin_uniform_init(TensorT<T>& w, int64_t fan_in, Rng& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
    for (int64_t i = 0; i < w.size(); ++i) w[i] = static_cast<T>(rng.uniform(-limit, limit));
}

// ----------------------------------------------------------------------------

template <typename T>
struct Conv2d {
    std::string name;
    int64_t in_c = 0, out_c = 0, k = 0, stride = 1;
    TensorT<T> w, b, gw, gb;
    TensorT<T> x_cache;

    static Conv2d make(std::string name, int64_t in_c, int64_t out_c, int64_t k, int64_t stride,
                       Rng& rng) {
        Conv2d l;
        l.name = std::move(name);
        l.in_c = in_c;
        l.out_c = out_c;
        l.k = k;
        l.stride = stride;
        l.w = TensorT<T>({out_c, in_c, k, k});
        l.b = TensorT<T>({out_c});
        l.gw = TensorT<T>({out_c, in_c, k, k});
        l.gb = TensorT<T>({out_c});
        fanin_uniform_init(l.w, in_c * k * k, rng);
        return l;
    }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) {
        if (x.rank() != 4 || x.dim(1) != in_c)
            throw ValueError(name + ": expected [N," + std::to_string(in_c) + ",H,W], got " +
                             x.shape_str());
        if (mode == Mode::train) x_cache = x;
        return conv2d_forward(x, w, b, stride);
    }

    TensorT<T> backward(const TensorT<T>& g) {
        conv2d_backward_params(g, x_cache, stride, gw, gb);
        return conv2d_backward_input(g, w, x_cache.shape, stride);
    }

    LayerSpec spec() const { return {"conv2d", {in_c, out_c, k, stride}}; }
    void visit_params(const ParamVisitor<T>& fn) {
        fn(name + ".w", w, gw);
        fn(name + ".b", b, gb);
    }
};

template <typename T>
struct Conv3d {
    std::string name;
    int64_t in_c = 0, out_c = 0, k = 0;
    TensorT<T> w, b, gw, gb;
    TensorT<T> x_cache;

    static Conv3d make(std::string name, int64_t in_c, int64_t out_c, int64_t k, Rng& rng) {
        Conv3d l;
        l.name = std::move(name);
        l.in_c = in_c;
        l.out_c = out_c;
        l.k = k;
        l.w = TensorT<T>({out_c, in_c, k, k, k});
        l.b = TensorT<T>({out_c});
        l.gw = TensorT<T>({out_c, in_c, k, k, k});
        l.gb = TensorT<T>({out_c});
        fanin_uniform_init(l.w, in_c * k * k * k, rng);
        return l;
    }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) {
        if (x.rank() != 5 || x.dim(1) != in_c)
            throw ValueError(name + ": expected [N," + std::to_string(in_c) + ",D,H,W], got " +
                             x.shape_str());
        if (mode == Mode::train) x_cache = x;
        return conv3d_forward(x, w, b);
    }

    TensorT<T> backward(const TensorT<T>& g) {
        conv3d_backward_params(g, x_cache, gw, gb);
        return conv3d_backward_input(g, w, x_cache.shape);
    }

    LayerSpec spec() const { return {"conv3d", {in_c, out_c, k, 1}}; }
    void visit_params(const ParamVisitor<T>& fn) {
        fn(name + ".w", w, gw);
        fn(name + ".b", b, gb);
    }
};

template <typename T>
struct Dense {
    std::string name;
    int64_t in_f = 0, out_f = 0;
    TensorT<T> w, b, gw, gb;
    TensorT<T> x_cache;

    static Dense make(std::string name, int64_t in_f, int64_t out_f, Rng& rng) {
        Dense l;
        l.name = std::move(name);
        l.in_f = in_f;
        l.out_f = out_f;
        l.w = TensorT<T>({out_f, in_f});
        l.b = TensorT<T>({out_f});
        l.gw = TensorT<T>({out_f, in_f});
        l.gb = TensorT<T>({out_f});
        fanin_uniform_init(l.w, in_f, rng);
        return l;
    }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) {
        if (x.rank() != 2 || x.dim(1) != in_f)
            throw ValueError(name + ": expected [N," + std::to_string(in_f) + "], got " +
                             x.shape_str());
        if (mode == Mode::train) x_cache = x;
        return dense_forward(x, w, b);
    }

    TensorT<T> backward(const TensorT<T>& g) {
        dense_backward_params(g, x_cache, gw, gb);
        return dense_backward_input(g, w);
    }

    LayerSpec spec() const { return {"dense", {in_f, out_f}}; }
    void visit_params(const ParamVisitor<T>& fn) {
        fn(name + ".w", w, gw);
        fn(name + ".b", b, gb);
    }
};

// ----------------------------------------------------------------------------
// Batch normalization over channel axis 1; works for [N,C,...] of any rank.
// Train mode normalizes with batch statistics and folds them into the running
// estimates (momentum 0.9); inference uses the running estimates.

template <typename T>
struct BatchNorm {
    std::string name;
    int64_t channels = 0;
    T eps = T(1e-5);
    T momentum = T(0.9);
    TensorT<T> gamma, beta, ggamma, gbeta;
    TensorT<T> running_mean, running_var;
    // caches
    TensorT<T> xhat;
    std::vector<T> mean_c, invstd_c;
    std::vector<int64_t> xshape;

    static BatchNorm make(std::string name, int64_t channels) {
        BatchNorm l;
        l.name = std::move(name);
        l.channels = channels;
        l.gamma = TensorT<T>({channels});
        l.beta = TensorT<T>({channels});
        l.ggamma = TensorT<T>({channels});
        l.gbeta = TensorT<T>({channels});
        l.running_mean = TensorT<T>({channels});
        l.running_var = TensorT<T>({channels});
        l.gamma.fill(T(1));
        l.running_var.fill(T(1));
        return l;
    }

    TensorT<T> forward(const TensorT<T>& x, Mode mode) {
        if (x.rank() < 2 || x.dim(1) != channels)
            throw ValueError(name + ": expected channel extent " + std::to_string(channels) +
                             ", got " + x.shape_str());
        const int64_t N = x.dim(0), C = channels;
        const int64_t M = x.size() / (N * C);  // spatial extent per (n,c)
        TensorT<T> y(x.shape);
        const T* __restrict xp = x.data();
        T* __restrict yp = y.data();

        if (mode == Mode::infer) {
#pragma omp parallel for schedule(static)
            for (int64_t c = 0; c < C; ++c) {
                const T inv = T(1) / std::sqrt(running_var[c] + eps);
                const T sc = gamma[c] * inv;
                const T sh = beta[c] - running_mean[c] * sc;
                for (int64_t n = 0; n < N; ++n) {
                    const T* __restrict src = xp + (n * C + c) * M;
                    T* __restrict dst = yp + (n * C + c) * M;
                    for (int64_t i = 0; i < M; ++i) dst[i] = src[i] * sc + sh;
                }
            }
            return y;
        }

        xshape = x.shape;
        xhat = TensorT<T>(x.shape);
        mean_c.assign(static_cast<size_t>(C), T(0));
        invstd_c.assign(static_cast<size_t>(C), T(0));
        T* __restrict hp = xhat.data();
        const T count = static_cast<T>(N * M);

#pragma omp parallel for schedule(static)
        for (int64_t c = 0; c < C; ++c) {
            T mu = T(0);
            for (int64_t n = 0; n < N; ++n) {
                const T* __restrict src = xp + (n * C + c) * M;
                for (int64_t i = 0; i < M; ++i) mu += src[i];
            }
            mu /= count;
            T var = T(0);
            for (int64_t n = 0; n < N; ++n) {
                const T* __restrict src = xp + (n * C + c) * M;
                for (int64_t i = 0; i < M; ++i) var += (src[i] - mu) * (src[i] - mu);
            }
            var /= count;
            const T inv = T(1) / std::sqrt(var + eps);
            mean_c[static_cast<size_t>(c)] = mu;
            invstd_c[static_cast<size_t>(c)] = inv;
            running_mean[c] = momentum * running_mean[c] + (T(1) - momentum) * mu;
            running_var[c] = momentum * running_var[c] + (T(1) - momentum) * var;
            for (int64_t n = 0; n < N; ++n) {
                const T* __restrict src = xp + (n * C + c) * M;
                T* __restrict hat = hp + (n * C + c) * M;
                T* __restrict dst = yp + (n * C + c) * M;
                for (int64_t i = 0; i < M; ++i) {
                    hat[i] = (src[i] - mu) * inv;
                    dst[i] = gamma[c] * hat[i] + beta[c];
                }
            }
        }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& g) {
        const int64_t N = xshape[0], C = channels;
        const int64_t M = g.size() / (N * C);
        TensorT<T> gin(xshape);
        const T* __restrict gp = g.data();
        const T* __restrict hp = xhat.data();
        T* __restrict ip = gin.data();
        const T count = static_cast<T>(N * M);

#pragma omp parallel for schedule(static)
        for (int64_t c = 0; c < C; ++c) {
            T sum_g = T(0), sum_gh = T(0);
            for (int64_t n = 0; n < N; ++n) {
                const T* __restrict gr = gp + (n * C + c) * M;
                const T* __restrict hr = hp + (n * C + c) * M;
                for (int64_t i = 0; i < M; ++i) {
                    sum_g += gr[i];
                    sum_gh += gr[i] * hr[i];
                }
            }
            ggamma[c] = sum_gh;
            gbeta[c] = sum_g;
            // d/dx of ((x-mu)*inv*gamma + beta) with mu, var functions of x:
            // gin = gamma*inv/count * (count*g - sum_g - xhat*sum_gh)
            const T scale = gamma[c] * invstd_c[static_cast<size_t>(c)] / count;
            for (int64_t n = 0; n < N; ++n) {
                const T* __restrict gr = gp + (n * C + c) * M;
                const T* __restrict hr = hp + (n * C + c) * M;
                T* __restrict dst = ip + (n * C + c) * M;
                for (int64_t i = 0; i < M; ++i)
                    dst[i] = scale * (count * gr[i] - sum_g - hr[i] * sum_gh);
            }
        }
        return gin;
    }

    LayerSpec spec() const { return {"batchnorm", {channels}}; }
    void visit_params(const ParamVisitor<T>& fn) {
        fn(name + ".gamma", gamma, ggamma);
        fn(name + ".beta", beta, gbeta);
    }
    void visit_buffers(const BufferVisitor<T>& fn) {
        fn(name + ".running_mean", running_mean);
        fn(name + ".running_var", running_var);
    }
};

// ----------------------------------------------------------------------------

template <typename T>
struct Relu {
    TensorT<T> x_cache;

    TensorT<T> forward(const TensorT<T>& x, Mode mode) {
        TensorT<T> y(x.shape);
        const T* __restrict xp = x.data();
        T* __restrict yp = y.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < x.size(); ++i) yp[i] = xp[i] > T(0) ? xp[i] : T(0);
        if (mode == Mode::train) x_cache = x;
        return y;
    }

    TensorT<T> backward(const TensorT<T>& g) {
        TensorT<T> gin(g.shape);
        const T* __restrict gp = g.data();
        const T* __restrict xp = x_cache.data();
        T* __restrict ip = gin.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < g.size(); ++i) ip[i] = xp[i] > T(0) ? gp[i] : T(0);
        return gin;
    }

    LayerSpec spec() const { return {"relu", {}}; }
};

template <typename T>
struct LeakyRelu {
    T alpha = T(0.1);
    TensorT<T> x_cache;

    TensorT<T> forward(const TensorT<T>& x, Mode mode) {
        TensorT<T> y(x.shape);
        const T* __restrict xp = x.data();
        T* __restrict yp = y.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < x.size(); ++i) yp[i] = xp[i] > T(0) ? xp[i] : alpha * xp[i];
        if (mode == Mode::train) x_cache = x;
        return y;
    }

    TensorT<T> backward(const TensorT<T>& g) {
        TensorT<T> gin(g.shape);
        const T* __restrict gp = g.data();
        const T* __restrict xp = x_cache.data();
        T* __restrict ip = gin.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < g.size(); ++i) ip[i] = xp[i] > T(0) ? gp[i] : alpha * gp[i];
        return gin;
    }

    LayerSpec spec() const { return {"leakyrelu", {}}; }
};

template <typename T>
struct Sigmoid {
    TensorT<T> y_cache;

    TensorT<T> forward(const TensorT<T>& x, Mode mode) {
        TensorT<T> y(x.shape);
        const T* __restrict xp = x.data();
        T* __restrict yp = y.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < x.size(); ++i) yp[i] = T(1) / (T(1) + std::exp(-xp[i]));
        if (mode == Mode::train) y_cache = y;
        return y;
    }

    TensorT<T> backward(const TensorT<T>& g) {
        TensorT<T> gin(g.shape);
        const T* __restrict gp = g.data();
        const T* __restrict yp = y_cache.data();
        T* __restrict ip = gin.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < g.size(); ++i) ip[i] = gp[i] * yp[i] * (T(1) - yp[i]);
        return gin;
    }

    LayerSpec spec() const { return {"sigmoid", {}}; }
};

// ----------------------------------------------------------------------------
// Inverted dropout. The mask for element i is a pure function of
// (layer seed, step, i), so it is independent of evaluation order and can be
// held fixed by freezing the step — which is exactly what the finite-
// difference checks need.

template <typename T>
struct Dropout {
    double rate = 0.25;
    uint64_t seed = 0;
    uint64_t step = 0;
    TensorT<T> mask;  // scale per element: 0 or 1/(1-rate)

    TensorT<T> forward(const TensorT<T>& x, Mode mode) {
        if (mode == Mode::infer || rate <= 0.0) return x;
        mask = TensorT<T>(x.shape);
        TensorT<T> y(x.shape);
        const T keep_scale = static_cast<T>(1.0 / (1.0 - rate));
        const T* __restrict xp = x.data();
        T* __restrict mp = mask.data();
        T* __restrict yp = y.data();
        const uint64_t base = splitmix64(seed ^ (step * 0x9e3779b97f4a7c15ULL));
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < x.size(); ++i) {
            const double u = counter_uniform(base, static_cast<uint64_t>(i));
            mp[i] = u < rate ? T(0) : keep_scale;
            yp[i] = xp[i] * mp[i];
        }
        return y;
    }

    TensorT<T> backward(const TensorT<T>& g) {
        TensorT<T> gin(g.shape);
        const T* __restrict gp = g.data();
        const T* __restrict mp = mask.data();
        T* __restrict ip = gin.data();
#pragma omp parallel for schedule(static)
        for (int64_t i = 0; i < g.size(); ++i) ip[i] = gp[i] * mp[i];
        return gin;
    }

    LayerSpec spec() const { return {"dropout", {static_cast<int64_t>(rate * 100)}}; }
};

// ----------------------------------------------------------------------------

template <typename T>
struct Upsample2x {
    std::vector<int64_t> xshape;

    TensorT<T> forward(const TensorT<T>& x, Mode mode) {
        const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
        TensorT<T> y({N, C, H * 2, W * 2});
        const T* __restrict xp = x.data();
        T* __restrict yp = y.data();
#pragma omp parallel for schedule(static)
        for (int64_t row = 0; row < N * C * H; ++row) {
            const int64_t iy = row % H;
            const int64_t nc = row / H;
            const T* __restrict src = xp + row * W;
            T* __restrict d0 = yp + (nc * H * 2 + iy * 2) * W * 2;
            T* __restrict d1 = d0 + W * 2;
            for (int64_t ix = 0; ix < W; ++ix) {
                d0[2 * ix] = src[ix];
                d0[2 * ix + 1] = src[ix];
                d1[2 * ix] = src[ix];
                d1[2 * ix + 1] = src[ix];
            }
        }
        if (mode == Mode::train) xshape = x.shape;
        return y;
    }

    TensorT<T> backward(const TensorT<T>& g) {
        const int64_t N = xshape[0], C = xshape[1], H = xshape[2], W = xshape[3];
        TensorT<T> gin(xshape);
        const T* __restrict gp = g.data();
        T* __restrict ip = gin.data();
#pragma omp parallel for schedule(static)
        for (int64_t row = 0; row < N * C * H; ++row) {
            const int64_t iy = row % H;
            const int64_t nc = row / H;
            T* __restrict dst = ip + row * W;
            const T* __restrict s0 = gp + (nc * H * 2 + iy * 2) * W * 2;
            const T* __restrict s1 = s0 + W * 2;
            for (int64_t ix = 0; ix < W; ++ix)
                dst[ix] = s0[2 * ix] + s0[2 * ix + 1] + s1[2 * ix] + s1[2 * ix + 1];
        }
        return gin;
    }

    LayerSpec spec() const { return {"upsample2x", {}}; }
};

// Channel concatenation of two [N,C,H,W] tensors.
template <typename T>
struct Concat {
    int64_t ca = 0, cb = 0;

    TensorT<T> forward(const TensorT<T>& a, const TensorT<T>& b) {
        if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3))
            throw ValueError("concat: incompatible shapes " + a.shape_str() + " vs " +
                             b.shape_str());
        ca = a.dim(1);
        cb = b.dim(1);
        const int64_t N = a.dim(0), H = a.dim(2), W = a.dim(3);
        TensorT<T> y({N, ca + cb, H, W});
        const int64_t plane = H * W;
        const T* __restrict ap = a.data();
        const T* __restrict bp = b.data();
        T* __restrict yp = y.data();
#pragma omp parallel for schedule(static)
        for (int64_t n = 0; n < N; ++n) {
            T* dst = yp + n * (ca + cb) * plane;
            const T* sa = ap + n * ca * plane;
            const T* sb = bp + n * cb * plane;
            for (int64_t i = 0; i < ca * plane; ++i) dst[i] = sa[i];
            for (int64_t i = 0; i < cb * plane; ++i) dst[ca * plane + i] = sb[i];
        }
        return y;
    }

    std::pair<TensorT<T>, TensorT<T>> backward(const TensorT<T>& g) {
        const int64_t N = g.dim(0), H = g.dim(2), W = g.dim(3);
        const int64_t plane = H * W;
        TensorT<T> ga({N, ca, H, W}), gb({N, cb, H, W});
        const T* __restrict gp = g.data();
        T* __restrict pa = ga.data();
        T* __restrict pb = gb.data();
#pragma omp parallel for schedule(static)
        for (int64_t n = 0; n < N; ++n) {
            const T* src = gp + n * (ca + cb) * plane;
            T* da = pa + n * ca * plane;
            T* db = pb + n * cb * plane;
            for (int64_t i = 0; i < ca * plane; ++i) da[i] = src[i];
            for (int64_t i = 0; i < cb * plane; ++i) db[i] = src[ca * plane + i];
        }
        return {std::move(ga), std::move(gb)};
    }

    LayerSpec spec() const { return {"concat", {}}; }
};

template <typename T>
struct MaxPool3d {
    int64_t k = 3;
    std::vector<int64_t> argmax;
    std::vector<int64_t> xshape;

    TensorT<T> forward(const TensorT<T>& x, Mode mode) {
        if (mode == Mode::train) xshape = x.shape;
        return maxpool3d_forward(x, k, argmax);
    }

    TensorT<T> backward(const TensorT<T>& g) { return maxpool3d_backward(g, argmax, xshape); }

    LayerSpec spec() const { return {"maxpool3d", {k, k}}; }
};

template <typename T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
    check_same_shape(a, b, "residual add");
    TensorT<T> y(a.shape);
    const T* __restrict ap = a.data();
    const T* __restrict bp = b.data();
    T* __restrict yp = y.data();
#pragma omp parallel for schedule(static)
    for (int64_t i = 0; i < a.size(); ++i) yp[i] = ap[i] + bp[i];
    return y;
}

}  // namespace lp::nn
