#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "lungpipe/core/metrics.hpp"
#include "lungpipe/core/rng.hpp"
#include "lungpipe/forest/forest.hpp"

using lp::Rng;
using lp::ValueError;
namespace fr = lp::forest;
namespace ingest = lp::ingest;
using ingest::Stage;

namespace {

// All-pairs Mann-Whitney counting, the O(n^2) oracle.
double auc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
    double num = 0;
    int64_t pairs = 0;
    for (size_t i = 0; i < s.size(); ++i) {
        if (!y[i]) continue;
        for (size_t j = 0; j < s.size(); ++j) {
            if (y[j]) continue;
            ++pairs;
            if (s[i] > s[j])
                num += 1.0;
            else if (s[i] == s[j])
                num += 0.5;
        }
    }
    return num / static_cast<double>(pairs);
}

fr::FeatureVector zero_vec() {
    fr::FeatureVector v{};
    return v;
}

// Cohort separable on diameter and network score; the other six features are
// uninformative noise.
void separable(int n, uint64_t seed, std::vector<fr::FeatureVector>& xs, std::vector<int>& ys) {
    Rng rng(seed);
    for (int i = 0; i < n; ++i) {
        const int y = i % 2;
        fr::FeatureVector v;
        v[fr::kFeatStageOrdinal] = static_cast<double>(1 + rng.uniform_index(7));
        v[fr::kFeatGender] = static_cast<double>(rng.uniform_index(2));
        v[fr::kFeatAge] = rng.uniform(50, 80);
        v[fr::kFeatAdjuvant] = static_cast<double>(rng.uniform_index(2));
        v[fr::kFeatDiameterMm] = y ? rng.uniform(18, 25) : rng.uniform(4, 9);
        v[fr::kFeatMeanAttenuationHu] = rng.uniform(-200, 100);
        v[fr::kFeatPerimeterMm] = rng.uniform(10, 70);
        v[fr::kFeatNetworkScore] = y ? rng.uniform(0.7, 0.95) : rng.uniform(0.05, 0.3);
        xs.push_back(v);
        ys.push_back(y);
    }
}

// Bit patterns in the first `bits` features, everything else zero.
void parity(int bits, int replicas, std::vector<fr::FeatureVector>& xs, std::vector<int>& ys) {
    for (int pattern = 0; pattern < (1 << bits); ++pattern) {
        fr::FeatureVector v = zero_vec();
        int ones = 0;
        for (int b = 0; b < bits; ++b) {
            const int bit = (pattern >> b) & 1;
            v[static_cast<size_t>(b)] = bit;
            ones += bit;
        }
        for (int r = 0; r < replicas; ++r) {
            xs.push_back(v);
            ys.push_back(ones % 2);
        }
    }
}

ingest::PatientRecord patient(Stage stage, ingest::Gender gender, double age,
                              double surgery_day, std::vector<double> chemo) {
    ingest::PatientRecord p;
    p.patient_id = "p0";
    p.stage = stage;
    p.gender = gender;
    p.age = age;
    p.surgery_days = surgery_day;
    p.chemo_days = std::move(chemo);
    return p;
}

lp::img::GeometricFeatures geometry(double diameter, double hu, double perimeter) {
    lp::img::GeometricFeatures g;
    g.diameter_mm = diameter;
    g.mean_attenuation_hu = hu;
    g.perimeter_mm = perimeter;
    return g;
}

}  // namespace

TEST_CASE("feature vectors encode the documented order") {
    const auto p = patient(Stage::IIIA, ingest::Gender::female, 63, 10, {40});
    const auto g = geometry(14.5, -120, 40.2);
    const auto v = fr::build_feature_vector(p, g, 0.73);
    const fr::FeatureVector want = {5, 1, 63, 1, 14.5, -120, 40.2, 0.73};
    CHECK(v == want);

    // stage encoding endpoints
    CHECK(fr::build_feature_vector(patient(Stage::IA, ingest::Gender::male, 50, 1, {}), g,
                                   0.5)[fr::kFeatStageOrdinal] == 1.0);
    CHECK(fr::build_feature_vector(patient(Stage::IV, ingest::Gender::male, 50, 1, {}), g,
                                   0.5)[fr::kFeatStageOrdinal] == 7.0);
    // chemotherapy before surgery is not adjuvant
    CHECK(fr::build_feature_vector(patient(Stage::IB, ingest::Gender::male, 50, 10, {5}), g,
                                   0.5)[fr::kFeatAdjuvant] == 0.0);

    lp::img::GeometricFeatures none;
    none.empty = true;
    CHECK_THROWS_AS(fr::build_feature_vector(p, none, 0.5), ValueError);
    CHECK_THROWS_AS(fr::build_feature_vector(p, g, 1.2), ValueError);
    auto no_surgery = p;
    no_surgery.surgery_days.reset();
    CHECK_THROWS_AS(fr::build_feature_vector(no_surgery, g, 0.5), ValueError);
}

TEST_CASE("ranking statistic matches the all-pairs oracle") {
    for (uint64_t seed : {1, 2, 3, 4, 5}) {
        Rng rng(seed);
        std::vector<double> s;
        std::vector<int> y;
        for (int i = 0; i < 30; ++i) {
            // quantized scores so tie handling is exercised
            s.push_back(std::round(rng.uniform() * 10.0) / 10.0);
            y.push_back(static_cast<int>(rng.uniform_index(2)));
        }
        bool pos = false, neg = false;
        for (int v : y) (v ? pos : neg) = true;
        if (!pos) y[0] = 1;
        if (!neg) y[1] = 0;
        CHECK(lp::roc_auc(s, y) == doctest::Approx(auc_oracle(s, y)).epsilon(1e-12));
    }
}

TEST_CASE("ranking statistic only sees the order of the scores") {
    Rng rng(9);
    std::vector<double> s;
    std::vector<int> y;
    for (int i = 0; i < 25; ++i) {
        s.push_back(std::round(rng.uniform() * 8.0) / 8.0);
        y.push_back(static_cast<int>(rng.uniform_index(2)));
    }
    y[0] = 1;
    y[1] = 0;
    const double base = lp::roc_auc(s, y);

    auto mapped = [&](auto&& f) {
        std::vector<double> t;
        for (double v : s) t.push_back(f(v));
        return lp::roc_auc(t, y);
    };
    CHECK(mapped([](double v) { return std::exp(v); }) == base);
    CHECK(mapped([](double v) { return 3.0 * v - 1.0; }) == base);
    CHECK(mapped([](double v) { return v * v * v; }) == base);
    CHECK(mapped([](double v) { return std::tanh(v); }) == base);
}

TEST_CASE("a single unbootstrapped tree fits any consistent data exactly") {
    // random labels over distinct continuous vectors
    Rng rng(12);
    std::vector<fr::FeatureVector> xs;
    std::vector<int> ys;
    for (int i = 0; i < 40; ++i) {
        fr::FeatureVector v;
        for (auto& e : v) e = rng.uniform(-1, 1);
        xs.push_back(v);
        ys.push_back(static_cast<int>(rng.uniform_index(2)));
    }
    ys[0] = 1;
    ys[1] = 0;
    const auto model = fr::fit_forest(xs, ys, {1, 0, true}, 3);
    for (size_t i = 0; i < xs.size(); ++i)
        CHECK(fr::predict_label(model, xs[i]) == (ys[i] == 1));

    // the hard case: no first split has positive Gini gain, yet the pattern
    // separates one level down
    std::vector<fr::FeatureVector> xor_x;
    std::vector<int> xor_y;
    parity(2, 1, xor_x, xor_y);
    const auto xm = fr::fit_forest(xor_x, xor_y, {1, 0, true}, 3);
    for (size_t i = 0; i < xor_x.size(); ++i)
        CHECK(fr::predict_label(xm, xor_x[i]) == (xor_y[i] == 1));
}

TEST_CASE("fifty trees separate a wide-margin cohort") {
    for (uint64_t seed : {1, 2, 3, 4, 5}) {
        std::vector<fr::FeatureVector> xs;
        std::vector<int> ys;
        separable(60, seed * 11 + 1, xs, ys);
        const auto model = fr::fit_forest(xs, ys, {50, 0, false}, seed);
        int correct = 0;
        for (size_t i = 0; i < xs.size(); ++i) {
            const double p = fr::predict_proba(model, xs[i]);
            CHECK(p >= 0.0);
            CHECK(p <= 1.0);
            correct += fr::predict_label(model, xs[i]) == (ys[i] == 1);
        }
        CAPTURE(seed);
        CHECK(correct == 60);
    }
}

TEST_CASE("depth-one stumps cannot express parity") {
    // any mix of axis stumps gets at most 3 of the 4 xor patterns right
    std::vector<fr::FeatureVector> xs;
    std::vector<int> ys;
    parity(2, 5, xs, ys);
    const auto model = fr::fit_forest(xs, ys, {50, 1, false}, 7);
    int correct = 0;
    for (size_t i = 0; i < xs.size(); ++i)
        correct += fr::predict_label(model, xs[i]) == (ys[i] == 1);
    CHECK(static_cast<double>(correct) / static_cast<double>(xs.size()) <= 0.75);
}

TEST_CASE("fitting is deterministic under the seed") {
    std::vector<fr::FeatureVector> xs;
    std::vector<int> ys;
    separable(40, 21, xs, ys);
    const auto a = fr::fit_forest(xs, ys, {20, 5, false}, 5);
    const auto b = fr::fit_forest(xs, ys, {20, 5, false}, 5);
    REQUIRE(a.trees.size() == b.trees.size());
    for (size_t t = 0; t < a.trees.size(); ++t) CHECK(a.trees[t] == b.trees[t]);

    const auto c = fr::fit_forest(xs, ys, {20, 5, false}, 6);
    bool any_differs = false;
    for (size_t t = 0; t < a.trees.size(); ++t) any_differs |= !(a.trees[t] == c.trees[t]);
    CHECK(any_differs);
}

TEST_CASE("fitting rejects degenerate inputs") {
    std::vector<fr::FeatureVector> xs = {zero_vec(), zero_vec()};
    CHECK_THROWS_WITH_AS(fr::fit_forest(xs, {1, 1}, {10, 0, false}, 1),
                         doctest::Contains("both classes"), ValueError);
    CHECK_THROWS_AS(fr::fit_forest(xs, {0, 1, 0}, {10, 0, false}, 1), ValueError);
    CHECK_THROWS_AS(fr::fit_forest({}, {}, {10, 0, false}, 1), ValueError);
    CHECK_THROWS_AS(fr::fit_forest(xs, {0, 2}, {10, 0, false}, 1), ValueError);
    CHECK_THROWS_AS(fr::fit_forest(xs, {0, 1}, {0, 0, false}, 1), ValueError);
}

TEST_CASE("probability is the mean of per-tree leaf frequencies") {
    auto leaf_tree = [](double p) {
        fr::Tree t;
        fr::TreeNode n;
        n.p_pos = p;
        t.nodes.push_back(n);
        return t;
    };
    fr::ForestModel m;
    m.params = {3, 0, false};
    m.trees = {leaf_tree(1.0), leaf_tree(1.0), leaf_tree(1.0)};
    CHECK(fr::predict_proba(m, zero_vec()) == 1.0);

    m.trees = {leaf_tree(1.0), leaf_tree(0.0), leaf_tree(1.0), leaf_tree(0.0)};
    CHECK(fr::predict_proba(m, zero_vec()) == 0.5);

    m.trees = {leaf_tree(0.37)};
    CHECK(fr::predict_proba(m, zero_vec()) == 0.37);
}

TEST_CASE("duplicating every tree leaves the probability unchanged") {
    std::vector<fr::FeatureVector> xs;
    std::vector<int> ys;
    separable(40, 33, xs, ys);
    const auto model = fr::fit_forest(xs, ys, {15, 4, false}, 9);

    auto doubled = model;
    doubled.trees.insert(doubled.trees.end(), model.trees.begin(), model.trees.end());
    Rng rng(2);
    for (int trial = 0; trial < 10; ++trial) {
        fr::FeatureVector v;
        for (auto& e : v) e = rng.uniform(-5, 30);
        CHECK(fr::predict_proba(doubled, v) ==
              doctest::Approx(fr::predict_proba(model, v)).epsilon(1e-14));
    }
}

TEST_CASE("cross-validation selects the depth that the data demands") {
    // 3-bit parity separates at depth 3 and is pure noise to stumps
    std::vector<fr::FeatureVector> xs;
    std::vector<int> ys;
    parity(3, 10, xs, ys);
    const std::vector<fr::ForestParams> grid = {{50, 1, false}, {50, 3, false}};
    const auto sel = fr::cross_validate(xs, ys, grid, 5, 17);
    CHECK(sel.best.max_depth == 3);
    CHECK(sel.mean_auc > 0.9);
    REQUIRE(sel.table.size() == 2);
    CHECK(sel.table[0].params.max_depth == 1);
    CHECK(sel.table[0].mean_auc < sel.table[1].mean_auc);

    // determinism, and a singleton grid returns its only point
    const auto again = fr::cross_validate(xs, ys, grid, 5, 17);
    CHECK(again.best.max_depth == sel.best.max_depth);
    CHECK(again.mean_auc == sel.mean_auc);
    const auto single = fr::cross_validate(xs, ys, {{25, 2, false}}, 3, 1);
    CHECK(single.best.n_estimators == 25);
    CHECK(single.best.max_depth == 2);
}

TEST_CASE("cross-validation ties prefer the smaller then shallower forest") {
    // every grid point separates this cohort perfectly, so all AUCs tie at 1
    std::vector<fr::FeatureVector> xs;
    std::vector<int> ys;
    separable(50, 3, xs, ys);
    const std::vector<fr::ForestParams> grid = {
        {200, 0, false}, {100, 0, false}, {100, 3, false}, {200, 3, false}};
    const auto sel = fr::cross_validate(xs, ys, grid, 5, 4);
    for (const auto& cell : sel.table) CHECK(cell.mean_auc == 1.0);
    CHECK(sel.best.n_estimators == 100);
    CHECK(sel.best.max_depth == 3);
}

TEST_CASE("cross-validation rejects degenerate folds") {
    std::vector<fr::FeatureVector> xs;
    std::vector<int> ys;
    separable(40, 8, xs, ys);
    const std::vector<fr::ForestParams> grid = {{10, 3, false}};
    CHECK_THROWS_AS(fr::cross_validate(xs, ys, grid, 1, 1), ValueError);

    std::vector<int> three_pos = ys;
    int kept = 0;
    for (auto& y : three_pos)
        if (y == 1 && ++kept > 3) y = 0;
    CHECK_THROWS_WITH_AS(fr::cross_validate(xs, three_pos, grid, 5, 1),
                         doctest::Contains("fold"), ValueError);

    std::vector<int> short_y(ys.begin(), ys.end() - 1);
    CHECK_THROWS_AS(fr::cross_validate(xs, short_y, grid, 5, 1), ValueError);
}

TEST_CASE("the default grid spans the documented search space") {
    const auto grid = fr::default_grid();
    REQUIRE(grid.size() == 12);
    CHECK(grid.front().n_estimators == 100);
    CHECK(grid.front().max_depth == 3);
    CHECK(grid.back().n_estimators == 500);
    CHECK(grid.back().max_depth == 0);  // unbounded
}

TEST_CASE("stage subgroup metrics match a hand-built cohort") {
    const std::vector<Stage> stages = {Stage::IA,   Stage::IA,   Stage::IB, Stage::IB,
                                       Stage::IIA,  Stage::IIB,  Stage::IIA, Stage::IIB,
                                       Stage::IIIA, Stage::IIIB, Stage::IV,  Stage::IV};
    const std::vector<double> scores = {0.9, 0.3, 0.2, 0.6, 0.8, 0.7,
                                        0.1, 0.55, 0.4, 0.95, 0.45, 0.05};
    const std::vector<int> labels = {1, 1, 0, 0, 1, 1, 0, 0, 0, 1, 1, 0};

    const auto m = fr::stage_subgroup_metrics(scores, labels, stages);
    CHECK(m.overall == fr::Confusion{4, 2, 4, 2});
    CHECK(m.by_stage_group[0] == fr::Confusion{1, 1, 1, 1});
    CHECK(m.by_stage_group[1] == fr::Confusion{2, 1, 1, 0});
    CHECK(m.by_stage_group[2] == fr::Confusion{1, 0, 1, 0});
    CHECK(m.by_stage_group[3] == fr::Confusion{0, 0, 1, 1});

    CHECK(*m.accuracy == doctest::Approx(8.0 / 12.0));
    CHECK(*m.auc == doctest::Approx(31.0 / 36.0));
    CHECK(*m.recall == doctest::Approx(4.0 / 6.0));
    CHECK(*m.precision == doctest::Approx(4.0 / 6.0));
    CHECK(*m.stage1_accuracy == doctest::Approx(0.5));
    CHECK(*m.stage1_recall == doctest::Approx(0.5));
    CHECK(*m.stage2_accuracy == doctest::Approx(0.75));
    CHECK(*m.stage2_precision == doctest::Approx(2.0 / 3.0));

    // the four subgroup matrices partition the cohort
    fr::Confusion sum;
    for (const auto& c : m.by_stage_group) {
        sum.tp += c.tp;
        sum.fp += c.fp;
        sum.tn += c.tn;
        sum.fn += c.fn;
    }
    CHECK(sum == m.overall);

    CHECK(fr::metrics_csv_row(m) == "0.6667,0.8611,0.6667,0.6667,0.5000,0.5000,0.7500,0.6667");
}

TEST_CASE("empty-denominator cells stay undefined instead of reading zero") {
    // stage I holds only negatives: its recall is 0/0; stage II is absent
    const std::vector<Stage> stages = {Stage::IA, Stage::IB, Stage::IV};
    const std::vector<double> scores = {0.1, 0.2, 0.9};
    const std::vector<int> labels = {0, 0, 1};
    const auto m = fr::stage_subgroup_metrics(scores, labels, stages);
    CHECK(*m.accuracy == 1.0);
    CHECK(*m.stage1_accuracy == 1.0);
    CHECK_FALSE(m.stage1_recall.has_value());
    CHECK_FALSE(m.stage2_accuracy.has_value());
    CHECK_FALSE(m.stage2_precision.has_value());
    const auto row = fr::metrics_csv_row(m);
    CHECK(row == "1.0000,1.0000,1.0000,1.0000,1.0000,undefined,undefined,undefined");

    // all-correct predictions: every defined cell reads 1.0
    const auto perfect = fr::stage_subgroup_metrics({0.9, 0.1, 0.8, 0.2},
                                                    {1, 0, 1, 0},
                                                    {Stage::IA, Stage::IA, Stage::IIB, Stage::IIB});
    CHECK(*perfect.accuracy == 1.0);
    CHECK(*perfect.auc == 1.0);
    CHECK(*perfect.recall == 1.0);
    CHECK(*perfect.precision == 1.0);
    CHECK(*perfect.stage1_accuracy == 1.0);
    CHECK(*perfect.stage1_recall == 1.0);
    CHECK(*perfect.stage2_accuracy == 1.0);
    CHECK(*perfect.stage2_precision == 1.0);

    // a single-class cohort has no ranking metric but keeps its accuracy
    const auto one_class =
        fr::stage_subgroup_metrics({0.1, 0.2}, {0, 0}, {Stage::IA, Stage::IA});
    CHECK_FALSE(one_class.auc.has_value());
    CHECK(*one_class.accuracy == 1.0);

    CHECK_THROWS_AS(fr::stage_subgroup_metrics({0.5}, {1, 0}, {Stage::IA, Stage::IB}),
                    ValueError);
}

TEST_CASE("the model round-trips through its binary format") {
    std::vector<fr::FeatureVector> xs;
    std::vector<int> ys;
    separable(40, 5, xs, ys);
    const auto model = fr::fit_forest(xs, ys, {20, 6, false}, 11);

    const auto dir = std::filesystem::temp_directory_path() / "lungpipe_forest_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "forest.bin").string();
    fr::save_forest(path, model);
    const auto loaded = fr::load_forest(path);

    CHECK(loaded.params.n_estimators == model.params.n_estimators);
    CHECK(loaded.params.max_depth == model.params.max_depth);
    CHECK(loaded.seed == model.seed);
    REQUIRE(loaded.trees.size() == model.trees.size());
    for (size_t t = 0; t < model.trees.size(); ++t) CHECK(loaded.trees[t] == model.trees[t]);
    for (size_t i = 0; i < xs.size(); ++i)
        CHECK(fr::predict_proba(loaded, xs[i]) == fr::predict_proba(model, xs[i]));

    const std::string junk = (dir / "junk.bin").string();
    std::ofstream(junk, std::ios::binary) << "not a forest at all";
    CHECK_THROWS_AS(fr::load_forest(junk), lp::IoError);

    // truncate the real file mid-table
    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    const std::string cut = (dir / "cut.bin").string();
    std::ofstream(cut, std::ios::binary).write(bytes.data(), bytes.size() / 2);
    CHECK_THROWS_AS(fr::load_forest(cut), lp::IoError);

    CHECK_THROWS_AS(fr::load_forest((dir / "missing.bin").string()), lp::IoError);
}
