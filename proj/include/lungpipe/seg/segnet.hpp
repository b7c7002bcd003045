#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "lungpipe/core/error.hpp"
#include "lungpipe/core/rng.hpp"
#include "lungpipe/core/tensor.hpp"
#include "lungpipe/core/train_error.hpp"
#include "lungpipe/img/slice.hpp"
#include "lungpipe/ingest/clinical.hpp"
#include "lungpipe/nn/augment.hpp"
#include "lungpipe/nn/adam.hpp"
#include "lungpipe/nn/checkpoint.hpp"
#include "lungpipe/nn/layers.hpp"
#include "lungpipe/nn/loss.hpp"

// Residual U-Net for nodule segmentation. Three contracting units downsample
// by strided convolution, a single pre-activated bridge widens the features,
// and three expanding units upsample and concatenate with the mirrored
// contracting outputs (innermost skip first, the raw input last). Every unit
// is pre-activated (BN -> ReLU -> conv) with a 1x1 projection on the
// identity path wherever shape changes.

namespace lp::seg {

struct SegNetConfig {
    int64_t input_hw = 256;                     // H = W, divisible by 8
    std::array<int64_t, 3> widths = {64, 128, 256};
    int64_t bridge = 512;
    double pos_weight = 12.0;
    double lr = 0.0001;
    nn::AugmentationConfig augment;
    int64_t epochs = 40;
    int64_t batch_size = 8;
    uint64_t seed = 0;

    void validate() const {
        if (input_hw < 8 || input_hw % 8 != 0)
            throw ValueError("segnet config: input size must be >= 8 and divisible by 8");
        for (int i = 0; i < 2; ++i)
            if (widths[i + 1] != 2 * widths[i])
                throw ValueError("segnet config: contracting widths must double");
        if (bridge != 2 * widths[2])
            throw ValueError("segnet config: bridge width must double the last unit");
        if (widths[0] < 1 || batch_size < 1 || epochs < 0)
            throw ValueError("segnet config: nonpositive size field");
    }
};

// Pre-activated residual unit: BN -> ReLU -> conv(stride s) -> BN -> ReLU ->
// conv(stride 1), plus the identity (1x1 stride-s projection when shape
// changes).
template <typename T>
struct ResUnit2d {
    nn::BatchNorm<T> bn1, bn2;
    nn::Relu<T> relu1, relu2;
    nn::Conv2d<T> conv1, conv2;
    std::optional<nn::Conv2d<T>> proj;

    static ResUnit2d make(const std::string& name, int64_t in_c, int64_t out_c, int64_t stride,
                          Rng& rng) {
        ResUnit2d u;
        u.bn1 = nn::BatchNorm<T>::make(name + ".bn1", in_c);
        u.conv1 = nn::Conv2d<T>::make(name + ".conv1", in_c, out_c, 3, stride, rng);
        u.bn2 = nn::BatchNorm<T>::make(name + ".bn2", out_c);
        u.conv2 = nn::Conv2d<T>::make(name + ".conv2", out_c, out_c, 3, 1, rng);
        if (stride != 1 || in_c != out_c)
            u.proj = nn::Conv2d<T>::make(name + ".proj", in_c, out_c, 1, stride, rng);
        return u;
    }

    TensorT<T> forward(const TensorT<T>& x, nn::Mode mode) {
        auto h = conv1.forward(relu1.forward(bn1.forward(x, mode), mode), mode);
        h = conv2.forward(relu2.forward(bn2.forward(h, mode), mode), mode);
        return nn::add(h, proj ? proj->forward(x, mode) : x);
    }

    TensorT<T> backward(const TensorT<T>& g) {
        auto gm = bn1.backward(relu1.backward(conv1.backward(
            bn2.backward(relu2.backward(conv2.backward(g))))));
        return proj ? nn::add(gm, proj->backward(g)) : nn::add(gm, g);
    }

    void specs(std::vector<nn::LayerSpec>& out) const {
        out.push_back(bn1.spec());
        out.push_back(conv1.spec());
        out.push_back(bn2.spec());
        out.push_back(conv2.spec());
        if (proj) out.push_back(proj->spec());
    }
    void visit_params(const nn::ParamVisitor<T>& fn) {
        bn1.visit_params(fn);
        conv1.visit_params(fn);
        bn2.visit_params(fn);
        conv2.visit_params(fn);
        if (proj) proj->visit_params(fn);
    }
    void visit_buffers(const nn::BufferVisitor<T>& fn) {
        bn1.visit_buffers(fn);
        bn2.visit_buffers(fn);
    }
};

template <typename T>
struct SegNet {
    SegNetConfig cfg;
    ResUnit2d<T> c1, c2, c3;
    nn::BatchNorm<T> bridge_bn;
    nn::Relu<T> bridge_relu;
    nn::Conv2d<T> bridge_conv;
    nn::Upsample2x<T> up1, up2, up3;
    nn::Concat<T> cat1, cat2, cat3;
    ResUnit2d<T> e1, e2, e3;
    nn::Conv2d<T> head;
    nn::Sigmoid<T> sig;

    static SegNet build(const SegNetConfig& cfg, Rng& rng) {
        cfg.validate();
        const auto [w1, w2, w3] = cfg.widths;
        SegNet m;
        m.cfg = cfg;
        m.c1 = ResUnit2d<T>::make("c1", 1, w1, 2, rng);
        m.c2 = ResUnit2d<T>::make("c2", w1, w2, 2, rng);
        m.c3 = ResUnit2d<T>::make("c3", w2, w3, 2, rng);
        m.bridge_bn = nn::BatchNorm<T>::make("bridge.bn", w3);
        m.bridge_conv = nn::Conv2d<T>::make("bridge.conv", w3, cfg.bridge, 3, 1, rng);
        m.e1 = ResUnit2d<T>::make("e1", cfg.bridge + w2, w3, 1, rng);
        m.e2 = ResUnit2d<T>::make("e2", w3 + w1, w2, 1, rng);
        m.e3 = ResUnit2d<T>::make("e3", w2 + 1, w1, 1, rng);
        m.head = nn::Conv2d<T>::make("head", w1, 1, 1, 1, rng);
        return m;
    }

    // x: [N,1,H,W] in [0,1]; returns [N,1,H,W] probabilities
    TensorT<T> forward(const TensorT<T>& x, nn::Mode mode) {
        if (x.rank() != 4 || x.dim(1) != 1 || x.dim(2) != cfg.input_hw || x.dim(3) != cfg.input_hw)
            throw ValueError("segnet: expected [N,1," + std::to_string(cfg.input_hw) + "," +
                             std::to_string(cfg.input_hw) + "], got " + x.shape_str());
        auto a1 = c1.forward(x, mode);
        auto a2 = c2.forward(a1, mode);
        auto a3 = c3.forward(a2, mode);
        auto b = bridge_conv.forward(bridge_relu.forward(bridge_bn.forward(a3, mode), mode), mode);
        auto o1 = e1.forward(cat1.forward(up1.forward(b, mode), a2), mode);
        auto o2 = e2.forward(cat2.forward(up2.forward(o1, mode), a1), mode);
        auto o3 = e3.forward(cat3.forward(up3.forward(o2, mode), x), mode);
        return sig.forward(head.forward(o3, mode), mode);
    }

    // g: dL/d(prob); returns dL/dx and refreshes every parameter gradient
    TensorT<T> backward(const TensorT<T>& g) {
        auto go3 = head.backward(sig.backward(g));
        auto [gup3, gx_skip] = cat3.backward(e3.backward(go3));
        auto go2 = up3.backward(gup3);
        auto [gup2, ga1_skip] = cat2.backward(e2.backward(go2));
        auto go1 = up2.backward(gup2);
        auto [gup1, ga2_skip] = cat1.backward(e1.backward(go1));
        auto gb = up1.backward(gup1);
        auto ga3 = bridge_bn.backward(bridge_relu.backward(bridge_conv.backward(gb)));
        auto ga2 = nn::add(c3.backward(ga3), ga2_skip);
        auto ga1 = nn::add(c2.backward(ga2), ga1_skip);
        return nn::add(c1.backward(ga1), gx_skip);
    }

    std::vector<nn::LayerSpec> specs() const {
        std::vector<nn::LayerSpec> out;
        c1.specs(out);
        c2.specs(out);
        c3.specs(out);
        out.push_back(bridge_bn.spec());
        out.push_back(bridge_conv.spec());
        e1.specs(out);
        e2.specs(out);
        e3.specs(out);
        out.push_back(head.spec());
        return out;
    }

    void visit_params(const nn::ParamVisitor<T>& fn) {
        c1.visit_params(fn);
        c2.visit_params(fn);
        c3.visit_params(fn);
        bridge_bn.visit_params(fn);
        bridge_conv.visit_params(fn);
        e1.visit_params(fn);
        e2.visit_params(fn);
        e3.visit_params(fn);
        head.visit_params(fn);
    }
    void visit_buffers(const nn::BufferVisitor<T>& fn) {
        c1.visit_buffers(fn);
        c2.visit_buffers(fn);
        c3.visit_buffers(fn);
        bridge_bn.visit_buffers(fn);
        e1.visit_buffers(fn);
        e2.visit_buffers(fn);
        e3.visit_buffers(fn);
    }

    std::vector<nn::ParamRef<T>> params() {
        std::vector<nn::ParamRef<T>> out;
        visit_params([&](const std::string& n, TensorT<T>& w, TensorT<T>& g) {
            out.push_back({n, &w, &g});
        });
        return out;
    }

    int64_t param_count() {
        int64_t n = 0;
        visit_params([&](const std::string&, TensorT<T>& w, TensorT<T>&) { n += w.size(); });
        return n;
    }

    nn::CheckpointData to_checkpoint(uint64_t step, uint64_t seed) {
        nn::CheckpointData ck;
        ck.step = step;
        ck.seed = seed;
        ck.specs = specs();
        visit_params([&](const std::string& n, TensorT<T>& w, TensorT<T>&) {
            ck.tensors.emplace_back(n, w.template cast<float>());
        });
        visit_buffers([&](const std::string& n, TensorT<T>& b) {
            ck.tensors.emplace_back(n, b.template cast<float>());
        });
        return ck;
    }

    void load(const nn::CheckpointData& ck, const std::string& path = "<memory>") {
        nn::require_specs_match(specs(), ck.specs, path);
        const auto restore = [&](const std::string& n, TensorT<T>& dst) {
            Tensor staging = dst.template cast<float>();
            nn::restore_tensor(ck, n, staging, path);
            dst = staging.template cast<T>();
        };
        visit_params([&](const std::string& n, TensorT<T>& w, TensorT<T>&) { restore(n, w); });
        visit_buffers([&](const std::string& n, TensorT<T>& b) { restore(n, b); });
    }
};

// ----------------------------------------------------------------------------
// Inference with lung-field gating

template <typename T>
img::Slice segnet_predict(SegNet<T>& model, const img::Slice& s) {
    if (s.h != model.cfg.input_hw || s.w != model.cfg.input_hw)
        throw ValueError("segnet_predict: slice is " + std::to_string(s.h) + "x" +
                         std::to_string(s.w) + ", model wants " +
                         std::to_string(model.cfg.input_hw));
    TensorT<T> x({1, 1, s.h, s.w});
    for (int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<T>(s.px[static_cast<size_t>(i)]);
    auto y = model.forward(x, nn::Mode::infer);
    img::Slice out = img::Slice::zeros(s.h, s.w);
    out.sy = s.sy;
    out.sx = s.sx;
    // falsely activated pixels outside the lung field are removed by the
    // ceiling mask: the input is exactly 0 there
    for (int64_t i = 0; i < y.size(); ++i)
        out.px[static_cast<size_t>(i)] =
            s.px[static_cast<size_t>(i)] > 0.0f ? static_cast<float>(y[i]) : 0.0f;
    return out;
}

// ----------------------------------------------------------------------------
// Patient-wise split

struct SegSplit {
    std::vector<ingest::NoduleRecord> train, val, test;
};

// Partitions patients (not nodules) by the given ratios, deterministically
// under the seed. Downstream, train/val enumerate every nodule-bearing
// slice; test keeps only the primary slice of each nodule.
inline SegSplit make_split(const std::vector<ingest::NoduleRecord>& nodules,
                           std::array<double, 3> ratios, uint64_t seed) {
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw ValueError("make_split: ratios must sum to 1");

    std::vector<std::string> patients;  // first-appearance order
    for (const auto& n : nodules)
        if (std::find(patients.begin(), patients.end(), n.patient_id) == patients.end())
            patients.push_back(n.patient_id);

    const int64_t p = static_cast<int64_t>(patients.size());
    int64_t n_train = std::llround(ratios[0] * static_cast<double>(p));
    int64_t n_val = std::llround(ratios[1] * static_cast<double>(p));
    n_train = std::clamp<int64_t>(n_train, 0, p);
    n_val = std::clamp<int64_t>(n_val, 0, p - n_train);
    const int64_t n_test = p - n_train - n_val;
    if ((ratios[0] > 0 && n_train == 0) || (ratios[1] > 0 && n_val == 0) ||
        (ratios[2] > 0 && n_test == 0))
        throw ValueError("make_split: too few patients (" + std::to_string(p) +
                         ") for the requested ratios");

    Rng rng(seed);
    rng.shuffle(patients);

    SegSplit split;
    for (const auto& n : nodules) {
        const auto it = std::find(patients.begin(), patients.end(), n.patient_id);
        const int64_t pos = it - patients.begin();
        if (pos < n_train)
            split.train.push_back(n);
        else if (pos < n_train + n_val)
            split.val.push_back(n);
        else
            split.test.push_back(n);
    }
    return split;
}

// ----------------------------------------------------------------------------
// Metrics

inline double dice(const img::Mask2D& x, const img::Mask2D& y) {
    if (x.h != y.h || x.w != y.w)
        throw ValueError("dice: mask shapes differ");
    int64_t inter = 0, nx = 0, ny = 0;
    for (size_t i = 0; i < x.px.size(); ++i) {
        nx += x.px[i];
        ny += y.px[i];
        inter += x.px[i] & y.px[i];
    }
    if (nx + ny == 0) return 1.0;  // both empty: perfect agreement
    return 2.0 * static_cast<double>(inter) / static_cast<double>(nx + ny);
}

struct SegMetrics {
    double mean_dice = 0.0;
    double recall = 0.0;     // pooled pixel confusion counts
    double precision = 0.0;
};

inline SegMetrics seg_metrics(const std::vector<img::Mask2D>& preds,
                              const std::vector<img::Mask2D>& truths) {
    if (preds.empty() || preds.size() != truths.size())
        throw ValueError("seg_metrics: empty or misaligned mask lists");
    double dice_sum = 0.0;
    int64_t tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < preds.size(); ++i) {
        dice_sum += dice(preds[i], truths[i]);
        for (size_t j = 0; j < preds[i].px.size(); ++j) {
            const bool p = preds[i].px[j] != 0, t = truths[i].px[j] != 0;
            tp += p && t;
            fp += p && !t;
            fn += !p && t;
        }
    }
    SegMetrics m;
    m.mean_dice = dice_sum / static_cast<double>(preds.size());
    m.recall = tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
    m.precision = tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
    return m;
}

inline img::Mask2D binarize(const img::Slice& prob, double threshold = 0.5) {
    img::Mask2D m = img::Mask2D::zeros(prob.h, prob.w);
    for (size_t i = 0; i < prob.px.size(); ++i) m.px[i] = prob.px[i] > threshold ? 1 : 0;
    return m;
}

// ----------------------------------------------------------------------------
// Training

struct SegSample {
    img::Slice image;    // preprocessed, [0,1], background exactly 0
    img::Mask2D truth;
};

struct SegEpochLog {
    int64_t epoch = 0;
    double train_loss = 0.0;
    double val_dice = 0.0;
};

template <typename T>
struct SegTrainResult {
    SegNet<T> model;  // restored to the best-validation-dice state
    std::vector<SegEpochLog> log;
    double best_val_dice = 0.0;
    int64_t best_epoch = 0;
};

template <typename T>
double validation_dice(SegNet<T>& model, const std::vector<SegSample>& val) {
    double sum = 0.0;
    for (const auto& s : val) {
        auto prob = segnet_predict(model, s.image);
        sum += dice(binarize(prob), s.truth);
    }
    return sum / static_cast<double>(val.size());
}

template <typename T>
SegTrainResult<T> train_segnet(const std::vector<SegSample>& train,
                               const std::vector<SegSample>& val, const SegNetConfig& cfg) {
    if (train.empty()) throw ValueError("train_segnet: empty training set");
    if (val.empty()) throw ValueError("train_segnet: empty validation set");
    for (const auto& s : train)
        if (s.image.h != cfg.input_hw || s.image.w != cfg.input_hw || s.truth.h != cfg.input_hw ||
            s.truth.w != cfg.input_hw)
            throw ValueError("train_segnet: sample size does not match config");

    Rng master(cfg.seed);
    SegTrainResult<T> res;
    res.model = SegNet<T>::build(cfg, master);
    auto& model = res.model;

    nn::Adam<T> opt;
    opt.lr = cfg.lr;
    const auto params = model.params();

    nn::CheckpointData best = model.to_checkpoint(0, cfg.seed);
    res.best_val_dice = -1.0;

    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    const int64_t hw = cfg.input_hw;
    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng epoch_rng = master.fork(static_cast<uint64_t>(epoch));
        epoch_rng.shuffle(order);

        double loss_sum = 0.0;
        int64_t batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t bsz = std::min<size_t>(cfg.batch_size, order.size() - start);
            TensorT<T> x({static_cast<int64_t>(bsz), 1, hw, hw});
            TensorT<T> y({static_cast<int64_t>(bsz), 1, hw, hw});
            for (size_t bi = 0; bi < bsz; ++bi) {
                const size_t idx = order[start + bi];
                img::Slice im = train[idx].image;
                img::Mask2D tm = train[idx].truth;
                Rng aug_rng = epoch_rng.fork(static_cast<uint64_t>(idx));
                nn::augment_slice(im, &tm, cfg.augment, aug_rng);
                const int64_t off = static_cast<int64_t>(bi) * hw * hw;
                for (int64_t i = 0; i < hw * hw; ++i) {
                    x[off + i] = static_cast<T>(im.px[static_cast<size_t>(i)]);
                    y[off + i] = static_cast<T>(tm.px[static_cast<size_t>(i)]);
                }
            }
            auto out = model.forward(x, nn::Mode::train);
            auto lr = nn::weighted_bce(out, y, static_cast<T>(cfg.pos_weight));
            if (!std::isfinite(lr.loss) || !out.all_finite())
                throw DivergenceError("train_segnet: diverged (non-finite loss or output) at epoch " +
                                      std::to_string(epoch) + " batch " +
                                      std::to_string(batches));
            model.backward(lr.grad);
            for (const auto& p : params)
                if (!p.g->all_finite())
                    throw DivergenceError("train_segnet: diverged (non-finite gradient in " +
                                          p.name + ") at epoch " + std::to_string(epoch));
            opt.step(params);
            loss_sum += lr.loss;
            ++batches;
        }

        SegEpochLog row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(batches);
        row.val_dice = validation_dice(model, val);
        res.log.push_back(row);

        if (row.val_dice > res.best_val_dice) {
            res.best_val_dice = row.val_dice;
            res.best_epoch = epoch;
            best = model.to_checkpoint(static_cast<uint64_t>(epoch), cfg.seed);
        }
    }

    if (cfg.epochs > 0) model.load(best);
    return res;
}

}  // namespace lp::seg
