#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lungpipe/core/error.hpp"
#include "lungpipe/ingest/clinical.hpp"
#include "lungpipe/ingest/volume.hpp"

// Synthetic CT cohorts with known ground truth: a soft-tissue body disk
// holding two air-range lung ellipsoids, 1-3 bright spherical nodules per
// patient, and a clinical table whose recurrence labels follow a documented
// logistic rule, so every stage of the pipeline can be checked against the
// construction.

namespace lp::pipeline {

struct PhantomSpec {
    std::array<int64_t, 3> dims = {96, 128, 128};  // z, y, x voxels
    std::array<double, 3> spacing_mm = {1, 1, 1};

    // tissue levels; Gaussian noise of noise_hu sigma goes on top
    double body_hu = 40.0;
    double lung_hu = -800.0;
    double nodule_hu = 30.0;
    double air_hu = -1000.0;
    double noise_hu = 25.0;

    double min_radius_mm = 4.0;
    double max_radius_mm = 10.0;
    int64_t max_nodules = 3;  // per patient, uniform in [1, max_nodules]

    // Label rule: p(recurrence) = logistic(diameter_coeff * (d - d_mid)
    //   + stage_coeff * (stage_ordinal - 4) + logit(base_rate))
    // where d is the patient's largest nodule diameter and d_mid the middle
    // of the diameter range. The stage ordinal itself tracks d with Gaussian
    // jitter of stage_noise, so staging carries a noisy copy of the signal.
    double diameter_coeff = 0.5;   // per mm
    double stage_coeff = 0.15;     // per ordinal step
    double stage_noise = 2.0;
    double base_rate = 0.35;

    uint64_t seed = 0;

    void validate() const;
};

// One generated patient, in memory. The mask per nodule is analytic: voxel
// centers strictly inside the sphere, no noise.
struct PhantomPatient {
    ingest::CtVolume ct;
    std::vector<ingest::MaskVolume> masks;
    ingest::PatientRecord record;
    std::vector<ingest::NoduleRecord> nodules;  // series_path filled on write
    double p_recur = 0.0;                       // the logistic probability behind the label
};

// Deterministic in (spec.seed, index) alone, so patients can be generated
// in any order or in parallel.
PhantomPatient make_phantom_patient(const PhantomSpec& spec, int64_t index);

struct PhantomDataset {
    ingest::ClinicalTable table;
    std::vector<std::string> volume_paths;  // header files, relative to root
    std::vector<std::string> mask_paths;
};

// Writes volumes/<patient>.hdr, masks/<patient>_<nodule>.hdr, and
// clinical.csv under root. Rerunning with the same spec reproduces every
// file byte for byte.
PhantomDataset generate_phantom_dataset(const PhantomSpec& spec, int64_t n_patients,
                                        const std::string& root);

}  // namespace lp::pipeline
