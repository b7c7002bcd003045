#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lungpipe/core/error.hpp"
#include "lungpipe/img/features.hpp"
#include "lungpipe/ingest/clinical.hpp"

// Fused-feature random forest: CART trees on bootstrap resamples, Gini
// impurity, 3 of the 8 features considered per split (ceil(sqrt(8))),
// midpoint thresholds. Everything is deterministic under the fit seed, with
// trees grown independently from per-tree forks.

namespace lp::forest {

// Fixed feature order; every vector carries all 8 (cleaning upstream
// guarantees completeness).
inline constexpr int kFeatureCount = 8;
inline constexpr int kFeatStageOrdinal = 0;     // IA=1 .. IV=7
inline constexpr int kFeatGender = 1;           // male=0, female=1
inline constexpr int kFeatAge = 2;              // years
inline constexpr int kFeatAdjuvant = 3;         // chemo after surgery
inline constexpr int kFeatDiameterMm = 4;
inline constexpr int kFeatMeanAttenuationHu = 5;
inline constexpr int kFeatPerimeterMm = 6;
inline constexpr int kFeatNetworkScore = 7;     // aggregated CNN probability

using FeatureVector = std::array<double, kFeatureCount>;

// Geometry comes from the predicted segmentation, not the ground truth.
FeatureVector build_feature_vector(const ingest::PatientRecord& p,
                                   const img::GeometricFeatures& g, double network_score);

// ----------------------------------------------------------------------------

struct TreeNode {
    int32_t feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int32_t left = -1, right = -1;
    double p_pos = 0.0;  // leaf positive-class frequency; the pair sums to 1

    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;  // node 0 is the root

    bool operator==(const Tree&) const = default;
};

struct ForestParams {
    int64_t n_estimators = 100;
    int64_t max_depth = 0;   // 0 = unbounded
    bool test_mode = false;  // diagnostic: no bootstrap, all features per split
};

struct ForestModel {
    std::vector<Tree> trees;
    ForestParams params;
    uint64_t seed = 0;
};

ForestModel fit_forest(const std::vector<FeatureVector>& xs, const std::vector<int>& ys,
                       const ForestParams& params, uint64_t seed);

// Mean of per-tree leaf positive frequencies; the label cut sits at 0.5.
double predict_proba(const ForestModel& m, const FeatureVector& v);
inline bool predict_label(const ForestModel& m, const FeatureVector& v) {
    return predict_proba(m, v) > 0.5;
}

void save_forest(const std::string& path, const ForestModel& m);
ForestModel load_forest(const std::string& path);

// ----------------------------------------------------------------------------
// Hyperparameter selection: stratified k-fold CV maximizing mean validation
// AUC; ties prefer the smaller forest, then the shallower depth (unbounded
// counts as deepest).

struct CvCell {
    ForestParams params;
    double mean_auc = 0.0;
};

struct CvSelection {
    ForestParams best;
    double mean_auc = 0.0;
    std::vector<CvCell> table;  // one row per grid point, in grid order
};

std::vector<ForestParams> default_grid();  // {100,200,500} x {3,5,8,unbounded}

CvSelection cross_validate(const std::vector<FeatureVector>& xs, const std::vector<int>& ys,
                           const std::vector<ForestParams>& grid, int folds, uint64_t seed);

// ----------------------------------------------------------------------------
// Cohort metrics with stage-subgroup breakdowns. Substages fold into their
// numeral group (IA/IB -> I, IIA/IIB -> II, ...); the four group confusions
// partition the cohort, so they sum back to the overall matrix. Cells whose
// denominator is empty stay unset rather than reading as zero.

struct Confusion {
    int64_t tp = 0, fp = 0, tn = 0, fn = 0;

    int64_t total() const { return tp + fp + tn + fn; }
    bool operator==(const Confusion&) const = default;
};

struct ClassificationMetrics {
    Confusion overall;
    std::array<Confusion, 4> by_stage_group;  // I, II, III, IV
    std::optional<double> accuracy, auc, recall, precision;
    std::optional<double> stage1_accuracy, stage1_recall;
    std::optional<double> stage2_accuracy, stage2_precision;
};

ClassificationMetrics stage_subgroup_metrics(const std::vector<double>& scores,
                                             const std::vector<int>& labels,
                                             const std::vector<ingest::Stage>& stages);

// Comma-separated row matching the evaluation table layout; empty-denominator
// cells print as "undefined".
inline constexpr const char* kMetricsCsvHeader =
    "accuracy,auc,recall,precision,stage_i_accuracy,stage_i_recall,"
    "stage_ii_accuracy,stage_ii_precision";
std::string metrics_csv_row(const ClassificationMetrics& m);

}  // namespace lp::forest
