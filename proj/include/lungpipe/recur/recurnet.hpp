#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "lungpipe/core/error.hpp"
#include "lungpipe/core/metrics.hpp"
#include "lungpipe/core/rng.hpp"
#include "lungpipe/core/tensor.hpp"
#include "lungpipe/core/train_error.hpp"
#include "lungpipe/img/roi.hpp"
#include "lungpipe/nn/adam.hpp"
#include "lungpipe/nn/augment.hpp"
#include "lungpipe/nn/checkpoint.hpp"
#include "lungpipe/nn/layers.hpp"
#include "lungpipe/nn/loss.hpp"

// 3D CNN scoring recurrence risk from a cubic ROI. Four same-padded 3x3x3
// convolution units with leaky activations, pooling by 3 after the 2nd and
// 4th, then four dense layers each carrying 25% dropout, ending in a two-unit
// sigmoid head. The risk score is the recurrence unit (index 1).

namespace lp::recur {

struct RecurNetConfig {
    int64_t input_size = 50;                           // cubic ROI edge, voxels
    std::array<int64_t, 4> filters = {32, 64, 128, 256};
    std::array<int64_t, 4> dense = {1024, 512, 256, 2};
    double leaky_alpha = 0.1;
    int64_t pool = 3;                                  // window == stride
    double dropout = 0.25;
    double pos_weight = 3.0;
    double lr = 0.0001;
    nn::AugmentationConfig augment;
    int64_t epochs = 30;
    int64_t batch_size = 8;
    uint64_t seed = 0;

    // spatial extent after the two pooling stages
    int64_t pooled_size() const { return input_size / pool / pool; }

    void validate() const {
        for (int64_t f : filters)
            if (f < 1) throw ValueError("recurnet config: filter counts must be positive");
        for (int64_t d : dense)
            if (d < 1) throw ValueError("recurnet config: dense widths must be positive");
        if (dense[3] != 2)
            throw ValueError("recurnet config: the head must have exactly 2 units");
        if (pool < 1 || pooled_size() < 1)
            throw ValueError("recurnet config: input size " + std::to_string(input_size) +
                             " collapses under two /" + std::to_string(pool) + " poolings");
        if (dropout < 0.0 || dropout >= 1.0)
            throw ValueError("recurnet config: dropout rate out of range");
        if (batch_size < 1 || epochs < 0)
            throw ValueError("recurnet config: nonpositive size field");
    }
};

struct RiskScore {
    std::string nodule_id;
    double probability = 0.0;
};

inline bool risk_label(const RiskScore& s) { return s.probability > 0.5; }

template <typename T>
struct RecurNet {
    RecurNetConfig cfg;
    int64_t flat_len = 0;
    nn::Conv3d<T> conv1, conv2, conv3, conv4;
    nn::LeakyRelu<T> act1, act2, act3, act4;
    nn::MaxPool3d<T> pool1, pool2;
    nn::Dense<T> fc1, fc2, fc3, fc4;
    nn::LeakyRelu<T> fa1, fa2, fa3;
    nn::Dropout<T> drop1, drop2, drop3, drop4;
    nn::Sigmoid<T> sig;
    std::vector<int64_t> conv_out_shape;  // for the backward unflatten

    static RecurNet build(const RecurNetConfig& cfg, Rng& rng) {
        cfg.validate();
        RecurNet m;
        m.cfg = cfg;
        const auto [f1, f2, f3, f4] = cfg.filters;
        m.conv1 = nn::Conv3d<T>::make("conv1", 1, f1, 3, rng);
        m.conv2 = nn::Conv3d<T>::make("conv2", f1, f2, 3, rng);
        m.conv3 = nn::Conv3d<T>::make("conv3", f2, f3, 3, rng);
        m.conv4 = nn::Conv3d<T>::make("conv4", f3, f4, 3, rng);
        for (auto* a : {&m.act1, &m.act2, &m.act3, &m.act4, &m.fa1, &m.fa2, &m.fa3})
            a->alpha = static_cast<T>(cfg.leaky_alpha);
        m.pool1.k = cfg.pool;
        m.pool2.k = cfg.pool;
        const int64_t s = cfg.pooled_size();
        m.flat_len = f4 * s * s * s;
        m.fc1 = nn::Dense<T>::make("fc1", m.flat_len, cfg.dense[0], rng);
        m.fc2 = nn::Dense<T>::make("fc2", cfg.dense[0], cfg.dense[1], rng);
        m.fc3 = nn::Dense<T>::make("fc3", cfg.dense[1], cfg.dense[2], rng);
        m.fc4 = nn::Dense<T>::make("fc4", cfg.dense[2], cfg.dense[3], rng);
        int i = 0;
        for (auto* d : {&m.drop1, &m.drop2, &m.drop3, &m.drop4}) {
            d->rate = cfg.dropout;
            d->seed = splitmix64(cfg.seed ^ static_cast<uint64_t>(0xd0 + i++));
        }
        return m;
    }

    // fresh dropout masks per optimization step; held fixed for FD checks
    void set_dropout_step(uint64_t step) {
        drop1.step = step;
        drop2.step = step;
        drop3.step = step;
        drop4.step = step;
    }

    // x: [N,1,s,s,s] in [0,1]; returns [N,2] per-unit probabilities
    TensorT<T> forward(const TensorT<T>& x, nn::Mode mode) {
        const int64_t s = cfg.input_size;
        if (x.rank() != 5 || x.dim(1) != 1 || x.dim(2) != s || x.dim(3) != s || x.dim(4) != s)
            throw ValueError("recurnet: expected [N,1," + std::to_string(s) + "," +
                             std::to_string(s) + "," + std::to_string(s) + "], got " +
                             x.shape_str());
        auto h = act2.forward(conv2.forward(act1.forward(conv1.forward(x, mode), mode), mode), mode);
        h = pool1.forward(h, mode);
        h = act4.forward(conv4.forward(act3.forward(conv3.forward(h, mode), mode), mode), mode);
        h = pool2.forward(h, mode);
        conv_out_shape = h.shape;
        h.shape = {h.dim(0), flat_len};  // row-major flatten is a relabel
        h = drop1.forward(fa1.forward(fc1.forward(h, mode), mode), mode);
        h = drop2.forward(fa2.forward(fc2.forward(h, mode), mode), mode);
        h = drop3.forward(fa3.forward(fc3.forward(h, mode), mode), mode);
        h = drop4.forward(fc4.forward(h, mode), mode);
        return sig.forward(h, mode);
    }

    TensorT<T> backward(const TensorT<T>& g) {
        auto gh = fc4.backward(drop4.backward(sig.backward(g)));
        gh = fc3.backward(fa3.backward(drop3.backward(gh)));
        gh = fc2.backward(fa2.backward(drop2.backward(gh)));
        gh = fc1.backward(fa1.backward(drop1.backward(gh)));
        gh.shape = conv_out_shape;
        gh = pool2.backward(gh);
        gh = conv3.backward(act3.backward(conv4.backward(act4.backward(gh))));
        gh = pool1.backward(gh);
        return conv1.backward(act1.backward(conv2.backward(act2.backward(gh))));
    }

    std::vector<nn::LayerSpec> specs() const {
        return {conv1.spec(), act1.spec(), conv2.spec(), act2.spec(), pool1.spec(),
                conv3.spec(), act3.spec(), conv4.spec(), act4.spec(), pool2.spec(),
                fc1.spec(),   fa1.spec(),  drop1.spec(), fc2.spec(),  fa2.spec(),
                drop2.spec(), fc3.spec(),  fa3.spec(),   drop3.spec(), fc4.spec(),
                drop4.spec(), sig.spec()};
    }

    void visit_params(const nn::ParamVisitor<T>& fn) {
        conv1.visit_params(fn);
        conv2.visit_params(fn);
        conv3.visit_params(fn);
        conv4.visit_params(fn);
        fc1.visit_params(fn);
        fc2.visit_params(fn);
        fc3.visit_params(fn);
        fc4.visit_params(fn);
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
        return ck;
    }

    void load(const nn::CheckpointData& ck, const std::string& path = "<memory>") {
        nn::require_specs_match(specs(), ck.specs, path);
        visit_params([&](const std::string& n, TensorT<T>& w, TensorT<T>&) {
            Tensor staging = w.template cast<float>();
            nn::restore_tensor(ck, n, staging, path);
            w = staging.template cast<T>();
        });
    }
};

// ----------------------------------------------------------------------------
// Inference

template <typename T>
RiskScore recurnet_predict(RecurNet<T>& model, const img::Roi3D& roi) {
    const int64_t s = model.cfg.input_size;
    if (roi.voxels.shape != std::vector<int64_t>{s, s, s})
        throw ValueError("recurnet_predict: ROI is " + roi.voxels.shape_str() +
                         ", model wants [" + std::to_string(s) + "," + std::to_string(s) + "," +
                         std::to_string(s) + "]");
    TensorT<T> x({1, 1, s, s, s});
    for (int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<T>(roi.voxels[i]);
    auto y = model.forward(x, nn::Mode::infer);
    RiskScore out;
    out.probability = static_cast<double>(y[1]);  // recurrence unit
    return out;
}

// ----------------------------------------------------------------------------
// Per-patient aggregation: the most confident nodule wins, where confidence
// is distance from the 0.5 decision point; ties go to the higher probability.

inline double aggregate_patient_score(const std::vector<RiskScore>& scores) {
    if (scores.empty()) throw ValueError("aggregate_patient_score: no scores for patient");
    const RiskScore* best = &scores[0];
    for (const auto& s : scores) {
        const double cs = std::abs(s.probability - 0.5), cb = std::abs(best->probability - 0.5);
        if (cs > cb || (cs == cb && s.probability > best->probability)) best = &s;
    }
    return best->probability;
}

// ----------------------------------------------------------------------------
// Stratified patient split

struct RecurPatient {
    std::string patient_id;
    bool recurrence = false;
};

struct RecurrenceSplit {
    std::vector<std::string> train, val, test;  // patient ids; nodules follow their patient
};

inline RecurrenceSplit make_recurrence_split(const std::vector<RecurPatient>& patients,
                                             std::array<double, 3> ratios, uint64_t seed) {
    if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9)
        throw ValueError("make_recurrence_split: ratios must sum to 1");
    std::vector<std::string> pos, neg;
    for (const auto& p : patients) (p.recurrence ? pos : neg).push_back(p.patient_id);
    if (pos.empty() || neg.empty())
        throw ValueError("make_recurrence_split: needs both classes present");

    Rng rng(seed);
    RecurrenceSplit split;
    // partition each class proportionally, so every partition's positive
    // count stays within one patient of the global fraction
    for (auto* cls : {&pos, &neg}) {
        rng.shuffle(*cls);
        const int64_t n = static_cast<int64_t>(cls->size());
        int64_t n_train = std::llround(ratios[0] * static_cast<double>(n));
        int64_t n_val = std::llround(ratios[1] * static_cast<double>(n));
        n_train = std::clamp<int64_t>(n_train, 0, n);
        n_val = std::clamp<int64_t>(n_val, 0, n - n_train);
        for (int64_t i = 0; i < n; ++i) {
            if (i < n_train)
                split.train.push_back((*cls)[static_cast<size_t>(i)]);
            else if (i < n_train + n_val)
                split.val.push_back((*cls)[static_cast<size_t>(i)]);
            else
                split.test.push_back((*cls)[static_cast<size_t>(i)]);
        }
    }
    if ((ratios[0] > 0 && split.train.empty()) || (ratios[1] > 0 && split.val.empty()) ||
        (ratios[2] > 0 && split.test.empty()))
        throw ValueError("make_recurrence_split: too few patients (" +
                         std::to_string(patients.size()) + ") for the requested ratios");
    return split;
}

// ----------------------------------------------------------------------------
// Training

struct RecurSample {
    Tensor roi;  // [s,s,s] in [0,1]
    bool label = false;
};

struct RecurEpochLog {
    int64_t epoch = 0;
    double train_loss = 0.0;
    double val_auc = 0.0;
};

template <typename T>
struct RecurTrainResult {
    RecurNet<T> model;  // restored to the best-validation-AUC state
    std::vector<RecurEpochLog> log;
    double best_val_auc = 0.0;
    int64_t best_epoch = 0;
};

template <typename T>
double validation_auc(RecurNet<T>& model, const std::vector<RecurSample>& val) {
    const int64_t s = model.cfg.input_size;
    std::vector<double> scores;
    std::vector<int> labels;
    TensorT<T> x({1, 1, s, s, s});
    for (const auto& sample : val) {
        for (int64_t i = 0; i < x.size(); ++i) x[i] = static_cast<T>(sample.roi[i]);
        auto y = model.forward(x, nn::Mode::infer);
        scores.push_back(static_cast<double>(y[1]));
        labels.push_back(sample.label ? 1 : 0);
    }
    return roc_auc(scores, labels);
}

template <typename T>
RecurTrainResult<T> train_recurnet(const std::vector<RecurSample>& train,
                                   const std::vector<RecurSample>& val,
                                   const RecurNetConfig& cfg) {
    if (train.empty()) throw ValueError("train_recurnet: empty training set");
    if (val.empty()) throw ValueError("train_recurnet: empty validation set");
    bool val_pos = false, val_neg = false;
    for (const auto& sample : val) (sample.label ? val_pos : val_neg) = true;
    if (!val_pos || !val_neg)
        throw ValueError("train_recurnet: validation AUC needs both classes present");
    const int64_t s = cfg.input_size;
    for (const auto& sample : train)
        if (sample.roi.shape != std::vector<int64_t>{s, s, s})
            throw ValueError("train_recurnet: sample ROI does not match configured size");

    Rng master(cfg.seed);
    RecurTrainResult<T> res;
    res.model = RecurNet<T>::build(cfg, master);
    auto& model = res.model;

    nn::Adam<T> opt;
    opt.lr = cfg.lr;
    const auto params = model.params();

    nn::CheckpointData best = model.to_checkpoint(0, cfg.seed);
    res.best_val_auc = -1.0;
    double best_train_loss = std::numeric_limits<double>::infinity();

    std::vector<size_t> order(train.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;

    uint64_t step = 0;
    for (int64_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng epoch_rng = master.fork(static_cast<uint64_t>(epoch));
        epoch_rng.shuffle(order);

        double loss_sum = 0.0;
        int64_t batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const size_t bsz = std::min<size_t>(cfg.batch_size, order.size() - start);
            TensorT<T> x({static_cast<int64_t>(bsz), 1, s, s, s});
            TensorT<T> y({static_cast<int64_t>(bsz), 2});
            TensorT<T> w({static_cast<int64_t>(bsz), 2});
            w.fill(T(1));
            for (size_t bi = 0; bi < bsz; ++bi) {
                const size_t idx = order[start + bi];
                Rng aug_rng = epoch_rng.fork(static_cast<uint64_t>(idx));
                Tensor aug = nn::augment_roi(train[idx].roi, cfg.augment, aug_rng);
                const int64_t off = static_cast<int64_t>(bi) * s * s * s;
                for (int64_t i = 0; i < s * s * s; ++i) x[off + i] = static_cast<T>(aug[i]);
                const int64_t bi64 = static_cast<int64_t>(bi);
                y[bi64 * 2 + (train[idx].label ? 1 : 0)] = T(1);
                if (train[idx].label) w[bi64 * 2 + 1] = static_cast<T>(cfg.pos_weight);
            }
            ++step;
            model.set_dropout_step(step);
            auto out = model.forward(x, nn::Mode::train);
            auto lr = nn::weighted_bce(out, y, w);
            if (!std::isfinite(lr.loss) || !out.all_finite())
                throw DivergenceError("train_recurnet: diverged (non-finite loss or output) at epoch " +
                                      std::to_string(epoch) + " batch " + std::to_string(batches));
            model.backward(lr.grad);
            for (const auto& p : params)
                if (!p.g->all_finite())
                    throw DivergenceError("train_recurnet: diverged (non-finite gradient in " +
                                          p.name + ") at epoch " + std::to_string(epoch));
            opt.step(params);
            loss_sum += lr.loss;
            ++batches;
        }

        RecurEpochLog row;
        row.epoch = epoch;
        row.train_loss = loss_sum / static_cast<double>(batches);
        row.val_auc = validation_auc(model, val);
        res.log.push_back(row);

        // AUC is a ranking statistic, so it saturates on a finite validation
        // set; among epochs tied on it, keep the one that fits train best.
        if (row.val_auc > res.best_val_auc ||
            (row.val_auc == res.best_val_auc && row.train_loss < best_train_loss)) {
            res.best_val_auc = row.val_auc;
            best_train_loss = row.train_loss;
            res.best_epoch = epoch;
            best = model.to_checkpoint(step, cfg.seed);
        }
    }

    if (cfg.epochs > 0) model.load(best);
    return res;
}

}  // namespace lp::recur
