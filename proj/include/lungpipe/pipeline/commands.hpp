#pragma once

#include <cstdint>
#include <string>

#include "lungpipe/forest/forest.hpp"
#include "lungpipe/pipeline/config.hpp"
#include "lungpipe/seg/segnet.hpp"

// The batch commands behind the CLI verbs. Each one is a pure function of
// (config, seed, input files): artifacts land in a fresh run directory under
// out_dir -- named run-<utc-stamp>-<seed>, or run_name when given -- with a
// manifest listing the resolved configuration and the digest of every input
// file. Nothing inside a run directory depends on the clock, so a rerun
// with the same inputs reproduces every artifact byte for byte.
//
// Errors surface as exceptions (ValueError, IoError, DivergenceError); the
// CLI layer maps them to exit codes and one-line error classes.

namespace lp::pipeline {

// FNV-1a over the file bytes, 16 hex digits; manifests and duplicate-series
// checks only, not security.
std::string file_digest(const std::string& path);

struct GenPhantomResult {
    std::string root;
    int64_t patients = 0;
    int64_t nodules = 0;
    int64_t positives = 0;  // recurrence labels drawn true
};

// Writes the dataset to dest (data_root when dest is empty).
GenPhantomResult cmd_gen_phantom(const PipelineConfig& cfg, const std::string& dest = "");

struct TrainSegResult {
    std::string run_dir, checkpoint, log_csv, split_csv;
    int64_t train_slices = 0, val_slices = 0;
    double best_val_dice = 0.0;
    int64_t best_epoch = 0;
};

// ingest -> clean -> patient split -> preprocess -> train. Train/val take
// every nodule-bearing slice (truth = union of the patient's nodule masks
// on that slice); the test partition keeps only primary slices.
TrainSegResult cmd_train_seg(const PipelineConfig& cfg, const std::string& run_name = "");

struct TrainRecurResult {
    std::string run_dir, checkpoint, log_csv, split_csv, scores_csv, skipped_csv;
    int64_t train_rois = 0, val_rois = 0, skipped = 0;
    double best_val_auc = 0.0;
    int64_t best_epoch = 0;
};

// For every nodule of the stratified train/val patients: segment the primary
// slice with the given checkpoint, post-process, resample, cut the ROI, and
// train the risk network on the results. Nodules whose predicted mask comes
// back empty are skipped and counted, not silently dropped.
TrainRecurResult cmd_train_recur(const PipelineConfig& cfg, const std::string& seg_checkpoint,
                                 const std::string& run_name = "");

struct FitForestResult {
    std::string run_dir, forest_path, baseline_path, report_csv, cv_csv, features_csv;
    forest::CvSelection proposed_cv, baseline_cv;
    forest::ClassificationMetrics proposed, baseline;  // held-out test partition
    int64_t train_patients = 0, test_patients = 0, skipped_nodules = 0;
};

// Builds per-patient feature vectors through both checkpoints, honors the
// recurrence split manifest written by train-recur (no re-splitting),
// cross-validates and fits on the train partition, and reports held-out
// metrics for the full model and for a clinical-only baseline whose
// image-derived features are held constant.
FitForestResult cmd_fit_forest(const PipelineConfig& cfg, const std::string& seg_checkpoint,
                               const std::string& recur_checkpoint,
                               const std::string& split_csv = "",  // default: split.csv next to the checkpoint
                               const std::string& run_name = "");

struct PredictResult {
    std::string run_dir, mask_path, prediction_csv, nodules_csv;
    bool localized = false;
    int64_t nodule_count = 0;
    double probability = 0.0;
    bool label = false;
};

// Full chain on one unseen patient: every slice is segmented and
// post-processed, the stacked mask is split into 3D components (the
// localized nodules), each gets an ROI and a network score, and the most
// confident nodule's score and geometry join the clinical row as forest
// features. An empty segmentation is an explicit no-nodule-localized
// outcome, not a zero score.
PredictResult cmd_predict(const PipelineConfig& cfg, const std::string& seg_checkpoint,
                          const std::string& recur_checkpoint, const std::string& forest_path,
                          const std::string& volume_path, const std::string& clinical_path,
                          const std::string& run_name = "");

struct EvaluateResult {
    std::string run_dir, seg_report_csv, recur_report_csv;
    seg::SegMetrics seg_raw, seg_postprocessed;        // test primary slices
    forest::ClassificationMetrics proposed, baseline;  // test patients
};

// Re-evaluates trained artifacts on the held-out partitions recorded in the
// split manifests next to each checkpoint: segmentation metrics with and
// without post-processing, and the recurrence report for both forest
// models. Given identical artifacts this reproduces fit-forest's report
// byte for byte.
EvaluateResult cmd_evaluate(const PipelineConfig& cfg, const std::string& seg_checkpoint,
                            const std::string& recur_checkpoint, const std::string& forest_path,
                            const std::string& baseline_path = "",  // default: sibling of forest_path
                            const std::string& run_name = "");

}  // namespace lp::pipeline
