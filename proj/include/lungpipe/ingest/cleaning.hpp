#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lungpipe/ingest/clinical.hpp"
#include "lungpipe/ingest/volume.hpp"

// Cohort cleaning rules and label derivation. Each cleaner partitions its
// input ids: every id lands in exactly one of kept/excluded, and an excluded
// id carries the first matching reason in the documented precedence order.

namespace lp::ingest {

enum class Reason {
    SLICE_THICKNESS,      // z spacing > 2.5 mm
    INCONSISTENT_SPACING, // slice positions not an arithmetic sequence
    DIAMETER_LT_3MM,
    ANNOTATOR_MINORITY,   // marked by fewer than 3 of 4 readers
    NONSURGICAL_PRIMARY,
    RESIDUAL_DISEASE,
    LOST_CONTACT,         // last contact before study end
    MULTIPLE_SERIES,      // several non-identical series for the patient
    DIAMETER_LT_4MM,
};

const char* reason_name(Reason r);

struct CleaningReport {
    std::vector<std::string> kept;
    std::vector<std::pair<std::string, Reason>> excluded;
};

// Scan-level precedence: SLICE_THICKNESS, INCONSISTENT_SPACING; then per
// nodule: DIAMETER_LT_3MM, ANNOTATOR_MINORITY. A scan-level failure excludes
// every nodule of the scan with that reason.
CleaningReport clean_segmentation_scan(const VolumeHeader& header,
                                       const std::vector<NoduleRecord>& nodules);

// Patient-level precedence: NONSURGICAL_PRIMARY, RESIDUAL_DISEASE,
// LOST_CONTACT, MULTIPLE_SERIES; then per nodule: DIAMETER_LT_4MM. Ids in
// the report are the patient id plus every nodule id. The digest callable
// maps a series path to an identity digest (dims+spacing+payload), injected
// so the rule is testable without volumes on disk.
CleaningReport clean_recurrence_patient(
    const PatientRecord& p, const std::vector<NoduleRecord>& nodules,
    const std::function<std::string(const std::string&)>& digest_of);

// recurrence iff progression happened and strictly after surgery
bool derive_recurrence_label(const PatientRecord& p);

// adjuvant iff any chemotherapy strictly after surgery
bool derive_adjuvant_flag(const PatientRecord& p);

// Pixel-level 2-of-4 vote among annotator masks.
MaskVolume consensus_mask(const std::vector<MaskVolume>& masks);

}  // namespace lp::ingest
