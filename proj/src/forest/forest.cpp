#include "lungpipe/forest/forest.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "lungpipe/core/metrics.hpp"
#include "lungpipe/core/rng.hpp"
#include "lungpipe/ingest/cleaning.hpp"

namespace lp::forest {

FeatureVector build_feature_vector(const ingest::PatientRecord& p,
                                   const img::GeometricFeatures& g, double network_score) {
    if (g.empty)
        throw ValueError("build_feature_vector: patient " + p.patient_id +
                         " has no segmented geometry");
    if (!(network_score >= 0.0 && network_score <= 1.0))
        throw ValueError("build_feature_vector: network score " +
                         std::to_string(network_score) + " outside [0,1]");
    FeatureVector v;
    v[kFeatStageOrdinal] = static_cast<double>(ingest::stage_ordinal(p.stage));
    v[kFeatGender] = p.gender == ingest::Gender::female ? 1.0 : 0.0;
    v[kFeatAge] = p.age;
    v[kFeatAdjuvant] = ingest::derive_adjuvant_flag(p) ? 1.0 : 0.0;
    v[kFeatDiameterMm] = g.diameter_mm;
    v[kFeatMeanAttenuationHu] = g.mean_attenuation_hu;
    v[kFeatPerimeterMm] = g.perimeter_mm;
    v[kFeatNetworkScore] = network_score;
    return v;
}

// ----------------------------------------------------------------------------
// Tree growing

namespace {

constexpr int kFeaturesPerSplit = 3;  // ceil(sqrt(8))

double gini(int64_t pos, int64_t n) {
    const double p = static_cast<double>(pos) / static_cast<double>(n);
    return 1.0 - p * p - (1.0 - p) * (1.0 - p);
}

struct TreeBuilder {
    const std::vector<FeatureVector>& xs;
    const std::vector<int>& ys;
    const ForestParams& params;
    Rng rng;
    Tree tree;

    // Sample indices for the node being built live in idx[lo, hi).
    std::vector<int64_t> idx;

    int32_t leaf(int64_t lo, int64_t hi) {
        int64_t pos = 0;
        for (int64_t i = lo; i < hi; ++i) pos += ys[static_cast<size_t>(idx[i])];
        TreeNode n;
        n.p_pos = static_cast<double>(pos) / static_cast<double>(hi - lo);
        tree.nodes.push_back(n);
        return static_cast<int32_t>(tree.nodes.size() - 1);
    }

    // Candidate features for this split: all in test mode, otherwise 3 drawn
    // without replacement and evaluated in index order so that equal-gain
    // ties resolve to the lowest feature.
    std::array<int, kFeatureCount> draw_features(int& count) {
        std::array<int, kFeatureCount> feats;
        for (int i = 0; i < kFeatureCount; ++i) feats[i] = i;
        if (params.test_mode) {
            count = kFeatureCount;
            return feats;
        }
        count = kFeaturesPerSplit;
        for (int i = 0; i < count; ++i) {
            const int j = i + static_cast<int>(rng.uniform_index(
                                  static_cast<uint64_t>(kFeatureCount - i)));
            std::swap(feats[i], feats[j]);
        }
        std::sort(feats.begin(), feats.begin() + count);
        return feats;
    }

    int32_t build(int64_t lo, int64_t hi, int64_t depth) {
        const int64_t n = hi - lo;
        int64_t pos = 0;
        for (int64_t i = lo; i < hi; ++i) pos += ys[static_cast<size_t>(idx[i])];
        const bool pure = pos == 0 || pos == n;
        if (n < 2 || pure || (params.max_depth > 0 && depth >= params.max_depth))
            return leaf(lo, hi);

        int nfeat = 0;
        const auto feats = draw_features(nfeat);

        // Zero-gain splits are still taken on impure nodes: parity-style data
        // has no first split with positive gain, yet separates a level down.
        double best_gain = -std::numeric_limits<double>::infinity();
        int best_feature = -1;
        double best_threshold = 0.0;
        const double parent = gini(pos, n);

        std::vector<std::pair<double, int>> vals(static_cast<size_t>(n));
        for (int fi = 0; fi < nfeat; ++fi) {
            const int f = feats[fi];
            for (int64_t i = lo; i < hi; ++i) {
                const auto& x = xs[static_cast<size_t>(idx[i])];
                vals[static_cast<size_t>(i - lo)] = {x[static_cast<size_t>(f)],
                                                     ys[static_cast<size_t>(idx[i])]};
            }
            std::sort(vals.begin(), vals.end());
            int64_t lpos = 0;
            for (int64_t i = 0; i < n - 1; ++i) {
                lpos += vals[static_cast<size_t>(i)].second;
                const double a = vals[static_cast<size_t>(i)].first;
                const double b = vals[static_cast<size_t>(i + 1)].first;
                if (b <= a) continue;  // same value: no boundary here
                const int64_t ln = i + 1, rn = n - ln;
                const double gain =
                    parent - (static_cast<double>(ln) * gini(lpos, ln) +
                              static_cast<double>(rn) * gini(pos - lpos, rn)) /
                                 static_cast<double>(n);
                // strict >: first hit wins, and sweeps run in ascending
                // feature then threshold order
                if (gain > best_gain) {
                    best_gain = gain;
                    best_feature = f;
                    best_threshold = 0.5 * (a + b);
                }
            }
        }
        if (best_feature < 0) return leaf(lo, hi);  // candidates all constant

        // partition: x[f] <= threshold goes left
        const auto mid_it = std::partition(
            idx.begin() + lo, idx.begin() + hi, [&](int64_t s) {
                return xs[static_cast<size_t>(s)][static_cast<size_t>(best_feature)] <=
                       best_threshold;
            });
        const int64_t mid = mid_it - idx.begin();

        TreeNode node;
        node.feature = best_feature;
        node.threshold = best_threshold;
        tree.nodes.push_back(node);
        const auto at = static_cast<int32_t>(tree.nodes.size() - 1);
        const int32_t l = build(lo, mid, depth + 1);
        const int32_t r = build(mid, hi, depth + 1);
        tree.nodes[static_cast<size_t>(at)].left = l;
        tree.nodes[static_cast<size_t>(at)].right = r;
        return at;
    }
};

Tree fit_tree(const std::vector<FeatureVector>& xs, const std::vector<int>& ys,
              const ForestParams& params, Rng rng) {
    const int64_t n = static_cast<int64_t>(xs.size());
    TreeBuilder b{xs, ys, params, rng, {}, {}};
    b.idx.resize(static_cast<size_t>(n));
    if (params.test_mode) {
        for (int64_t i = 0; i < n; ++i) b.idx[static_cast<size_t>(i)] = i;
    } else {
        for (int64_t i = 0; i < n; ++i)
            b.idx[static_cast<size_t>(i)] =
                static_cast<int64_t>(b.rng.uniform_index(static_cast<uint64_t>(n)));
    }
    b.build(0, n, 0);
    return std::move(b.tree);
}

}  // namespace

ForestModel fit_forest(const std::vector<FeatureVector>& xs, const std::vector<int>& ys,
                       const ForestParams& params, uint64_t seed) {
    if (xs.size() != ys.size())
        throw ValueError("fit_forest: " + std::to_string(xs.size()) + " vectors vs " +
                         std::to_string(ys.size()) + " labels");
    if (xs.empty()) throw ValueError("fit_forest: empty training set");
    if (params.n_estimators < 1 || params.max_depth < 0)
        throw ValueError("fit_forest: malformed params");
    bool pos = false, neg = false;
    for (int y : ys) {
        if (y != 0 && y != 1) throw ValueError("fit_forest: labels must be 0 or 1");
        (y ? pos : neg) = true;
    }
    if (!pos || !neg) throw ValueError("fit_forest: needs both classes present");

    ForestModel m;
    m.params = params;
    m.seed = seed;
    m.trees.resize(static_cast<size_t>(params.n_estimators));
    const Rng master(seed);
// per-tree forks are pure in (seed, t), so the schedule cannot reorder draws
#pragma omp parallel for schedule(static)
    for (int64_t t = 0; t < params.n_estimators; ++t)
        m.trees[static_cast<size_t>(t)] =
            fit_tree(xs, ys, params, master.fork(static_cast<uint64_t>(t)));
    return m;
}

double predict_proba(const ForestModel& m, const FeatureVector& v) {
    if (m.trees.empty()) throw ValueError("predict_proba: model has no trees");
    double sum = 0.0;
    for (const auto& tree : m.trees) {
        int32_t at = 0;
        while (tree.nodes[static_cast<size_t>(at)].feature >= 0) {
            const auto& n = tree.nodes[static_cast<size_t>(at)];
            at = v[static_cast<size_t>(n.feature)] <= n.threshold ? n.left : n.right;
        }
        sum += tree.nodes[static_cast<size_t>(at)].p_pos;
    }
    return sum / static_cast<double>(m.trees.size());
}

// ----------------------------------------------------------------------------
// Persistence: magic, version, params, then flat node tables (little-endian).

namespace {

constexpr char kForestMagic[8] = {'L', 'P', 'F', 'R', 'S', 'T', '\0', '\0'};
constexpr uint32_t kForestVersion = 1;

template <typename V>
void put(std::ostream& os, V v) {
    static_assert(std::is_trivially_copyable_v<V>);
    os.write(reinterpret_cast<const char*>(&v), sizeof v);  // host is little-endian
}

template <typename V>
V take(std::istream& is, const std::string& path) {
    V v;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw IoError("forest model truncated: " + path);
    return v;
}

}  // namespace

void save_forest(const std::string& path, const ForestModel& m) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot write forest model: " + path);
    os.write(kForestMagic, sizeof kForestMagic);
    put<uint32_t>(os, kForestVersion);
    put<int64_t>(os, m.params.n_estimators);
    put<int64_t>(os, m.params.max_depth);
    put<uint8_t>(os, m.params.test_mode ? 1 : 0);
    put<uint64_t>(os, m.seed);
    put<uint32_t>(os, static_cast<uint32_t>(m.trees.size()));
    for (const auto& tree : m.trees) {
        put<uint32_t>(os, static_cast<uint32_t>(tree.nodes.size()));
        for (const auto& n : tree.nodes) {
            put<int32_t>(os, n.feature);
            put<double>(os, n.threshold);
            put<int32_t>(os, n.left);
            put<int32_t>(os, n.right);
            put<double>(os, n.p_pos);
        }
    }
    if (!os) throw IoError("write failed: " + path);
}

ForestModel load_forest(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open forest model: " + path);
    char magic[sizeof kForestMagic];
    is.read(magic, sizeof magic);
    if (!is || std::memcmp(magic, kForestMagic, sizeof magic) != 0)
        throw IoError("not a forest model (bad magic): " + path);
    const auto version = take<uint32_t>(is, path);
    if (version != kForestVersion)
        throw IoError("unsupported forest model version " + std::to_string(version) + ": " +
                      path);
    ForestModel m;
    m.params.n_estimators = take<int64_t>(is, path);
    m.params.max_depth = take<int64_t>(is, path);
    m.params.test_mode = take<uint8_t>(is, path) != 0;
    m.seed = take<uint64_t>(is, path);
    const auto ntrees = take<uint32_t>(is, path);
    if (ntrees > (1u << 24)) throw IoError("forest model corrupt (tree count): " + path);
    m.trees.resize(ntrees);
    for (auto& tree : m.trees) {
        const auto nnodes = take<uint32_t>(is, path);
        if (nnodes == 0 || nnodes > (1u << 28))
            throw IoError("forest model corrupt (node count): " + path);
        tree.nodes.resize(nnodes);
        for (auto& n : tree.nodes) {
            n.feature = take<int32_t>(is, path);
            n.threshold = take<double>(is, path);
            n.left = take<int32_t>(is, path);
            n.right = take<int32_t>(is, path);
            n.p_pos = take<double>(is, path);
            const auto limit = static_cast<int32_t>(nnodes);
            const bool bad_children = n.feature >= 0 ? (n.left < 0 || n.right < 0)
                                                     : (n.left != -1 || n.right != -1);
            if (n.feature >= kFeatureCount || n.left >= limit || n.right >= limit ||
                bad_children)
                throw IoError("forest model corrupt (node table): " + path);
        }
    }
    return m;
}

// ----------------------------------------------------------------------------
// Cross-validation

std::vector<ForestParams> default_grid() {
    std::vector<ForestParams> grid;
    for (int64_t n : {100, 200, 500})
        for (int64_t d : {3, 5, 8, 0}) grid.push_back({n, d, false});
    return grid;
}

CvSelection cross_validate(const std::vector<FeatureVector>& xs, const std::vector<int>& ys,
                           const std::vector<ForestParams>& grid, int folds, uint64_t seed) {
    if (xs.size() != ys.size()) throw ValueError("cross_validate: misaligned inputs");
    if (grid.empty()) throw ValueError("cross_validate: empty grid");
    if (folds < 2) throw ValueError("cross_validate: needs at least 2 folds");

    // stratified assignment: shuffle each class, deal round-robin
    std::vector<int64_t> pos, neg;
    for (int64_t i = 0; i < static_cast<int64_t>(ys.size()); ++i)
        (ys[static_cast<size_t>(i)] ? pos : neg).push_back(i);
    if (static_cast<int>(pos.size()) < folds || static_cast<int>(neg.size()) < folds)
        throw ValueError("cross_validate: a fold would miss a class (" +
                         std::to_string(pos.size()) + " positive / " +
                         std::to_string(neg.size()) + " negative across " +
                         std::to_string(folds) + " folds)");
    Rng rng(seed);
    std::vector<int> fold_of(ys.size());
    for (auto* cls : {&pos, &neg}) {
        rng.shuffle(*cls);
        for (size_t i = 0; i < cls->size(); ++i)
            fold_of[static_cast<size_t>((*cls)[i])] = static_cast<int>(i % folds);
    }

    CvSelection sel;
    sel.mean_auc = -1.0;
    int64_t best_rank_n = 0, best_rank_d = 0;
    for (const auto& point : grid) {
        double auc_sum = 0.0;
        for (int f = 0; f < folds; ++f) {
            std::vector<FeatureVector> tr_x;
            std::vector<int> tr_y;
            std::vector<double> va_s;
            std::vector<int> va_y;
            std::vector<int64_t> va_i;
            for (size_t i = 0; i < xs.size(); ++i) {
                if (fold_of[i] == f) {
                    va_i.push_back(static_cast<int64_t>(i));
                } else {
                    tr_x.push_back(xs[i]);
                    tr_y.push_back(ys[i]);
                }
            }
            // the same per-fold fit seed across grid points keeps the
            // comparison paired
            const auto model =
                fit_forest(tr_x, tr_y, point, splitmix64(seed ^ (0xf01dULL + f)));
            for (int64_t i : va_i) {
                va_s.push_back(predict_proba(model, xs[static_cast<size_t>(i)]));
                va_y.push_back(ys[static_cast<size_t>(i)]);
            }
            auc_sum += roc_auc(va_s, va_y);
        }
        const double mean = auc_sum / static_cast<double>(folds);
        sel.table.push_back({point, mean});

        const int64_t rank_d =
            point.max_depth == 0 ? std::numeric_limits<int64_t>::max() : point.max_depth;
        const bool better =
            mean > sel.mean_auc ||
            (mean == sel.mean_auc &&
             (point.n_estimators < best_rank_n ||
              (point.n_estimators == best_rank_n && rank_d < best_rank_d)));
        if (better) {
            sel.best = point;
            sel.mean_auc = mean;
            best_rank_n = point.n_estimators;
            best_rank_d = rank_d;
        }
    }
    return sel;
}

// ----------------------------------------------------------------------------
// Metrics

namespace {

// IA/IB -> 0, IIA/IIB -> 1, IIIA/IIIB -> 2, IV -> 3
int stage_group(ingest::Stage s) {
    const int ord = ingest::stage_ordinal(s);  // IA=1 .. IV=7
    return ord <= 2 ? 0 : ord <= 4 ? 1 : ord <= 6 ? 2 : 3;
}

std::optional<double> ratio(int64_t num, int64_t den) {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
}

std::optional<double> safe_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    bool pos = false, neg = false;
    for (int y : labels) (y ? pos : neg) = true;
    if (!pos || !neg) return std::nullopt;
    return roc_auc(scores, labels);
}

}  // namespace

ClassificationMetrics stage_subgroup_metrics(const std::vector<double>& scores,
                                             const std::vector<int>& labels,
                                             const std::vector<ingest::Stage>& stages) {
    if (scores.size() != labels.size() || scores.size() != stages.size())
        throw ValueError("stage_subgroup_metrics: misaligned inputs");

    ClassificationMetrics m;
    for (size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] > 0.5;
        Confusion& c = m.by_stage_group[static_cast<size_t>(stage_group(stages[i]))];
        if (labels[i]) {
            (pred ? c.tp : c.fn)++;
        } else {
            (pred ? c.fp : c.tn)++;
        }
    }
    for (const auto& c : m.by_stage_group) {
        m.overall.tp += c.tp;
        m.overall.fp += c.fp;
        m.overall.tn += c.tn;
        m.overall.fn += c.fn;
    }

    const Confusion& o = m.overall;
    m.accuracy = ratio(o.tp + o.tn, o.total());
    m.auc = safe_auc(scores, labels);
    m.recall = ratio(o.tp, o.tp + o.fn);
    m.precision = ratio(o.tp, o.tp + o.fp);
    const Confusion& s1 = m.by_stage_group[0];
    m.stage1_accuracy = ratio(s1.tp + s1.tn, s1.total());
    m.stage1_recall = ratio(s1.tp, s1.tp + s1.fn);
    const Confusion& s2 = m.by_stage_group[1];
    m.stage2_accuracy = ratio(s2.tp + s2.tn, s2.total());
    m.stage2_precision = ratio(s2.tp, s2.tp + s2.fp);
    return m;
}

std::string metrics_csv_row(const ClassificationMetrics& m) {
    std::ostringstream os;
    os.precision(4);
    os << std::fixed;
    bool first = true;
    for (const auto& cell :
         {m.accuracy, m.auc, m.recall, m.precision, m.stage1_accuracy, m.stage1_recall,
          m.stage2_accuracy, m.stage2_precision}) {
        if (!first) os << ',';
        first = false;
        if (cell) {
            os << *cell;
        } else {
            os << "undefined";
        }
    }
    return os.str();
}

}  // namespace lp::forest
