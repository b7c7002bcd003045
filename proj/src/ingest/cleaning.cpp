#include "lungpipe/ingest/cleaning.hpp"

#include <cmath>
#include <set>

namespace lp::ingest {

const char* reason_name(Reason r) {
    switch (r) {
        case Reason::SLICE_THICKNESS: return "SLICE_THICKNESS";
        case Reason::INCONSISTENT_SPACING: return "INCONSISTENT_SPACING";
        case Reason::DIAMETER_LT_3MM: return "DIAMETER_LT_3MM";
        case Reason::ANNOTATOR_MINORITY: return "ANNOTATOR_MINORITY";
        case Reason::NONSURGICAL_PRIMARY: return "NONSURGICAL_PRIMARY";
        case Reason::RESIDUAL_DISEASE: return "RESIDUAL_DISEASE";
        case Reason::LOST_CONTACT: return "LOST_CONTACT";
        case Reason::MULTIPLE_SERIES: return "MULTIPLE_SERIES";
        case Reason::DIAMETER_LT_4MM: return "DIAMETER_LT_4MM";
    }
    return "?";
}

CleaningReport clean_segmentation_scan(const VolumeHeader& header,
                                       const std::vector<NoduleRecord>& nodules) {
    CleaningReport report;

    std::optional<Reason> scan_reason;
    if (header.spacing_mm[0] > 2.5) {
        scan_reason = Reason::SLICE_THICKNESS;
    } else if (header.slice_positions_mm) {
        const auto& zs = *header.slice_positions_mm;
        if (zs.size() >= 2) {
            const double step = zs[1] - zs[0];
            for (size_t i = 1; i + 1 < zs.size(); ++i) {
                if (std::fabs((zs[i + 1] - zs[i]) - step) > 0.01) {
                    scan_reason = Reason::INCONSISTENT_SPACING;
                    break;
                }
            }
        }
    }

    for (const auto& n : nodules) {
        if (scan_reason) {
            report.excluded.emplace_back(n.nodule_id, *scan_reason);
        } else if (n.diameter_mm < 3.0) {
            report.excluded.emplace_back(n.nodule_id, Reason::DIAMETER_LT_3MM);
        } else if (n.annotator_count < 3) {
            report.excluded.emplace_back(n.nodule_id, Reason::ANNOTATOR_MINORITY);
        } else {
            report.kept.push_back(n.nodule_id);
        }
    }
    return report;
}

CleaningReport clean_recurrence_patient(
    const PatientRecord& p, const std::vector<NoduleRecord>& nodules,
    const std::function<std::string(const std::string&)>& digest_of) {
    CleaningReport report;

    std::optional<Reason> patient_reason;
    if (p.treatment_kind != TreatmentKind::surgery) {
        patient_reason = Reason::NONSURGICAL_PRIMARY;
    } else if (p.residual_disease) {
        patient_reason = Reason::RESIDUAL_DISEASE;
    } else if (p.last_contact_days < p.study_end_days) {
        patient_reason = Reason::LOST_CONTACT;
    } else {
        std::set<std::string> paths;
        for (const auto& n : nodules) paths.insert(n.series_path);
        if (paths.size() >= 2) {
            std::set<std::string> digests;
            for (const auto& path : paths) digests.insert(digest_of(path));
            if (digests.size() >= 2) patient_reason = Reason::MULTIPLE_SERIES;
        }
    }

    if (patient_reason) {
        report.excluded.emplace_back(p.patient_id, *patient_reason);
        for (const auto& n : nodules) report.excluded.emplace_back(n.nodule_id, *patient_reason);
        return report;
    }

    report.kept.push_back(p.patient_id);
    for (const auto& n : nodules) {
        if (n.diameter_mm < 4.0)
            report.excluded.emplace_back(n.nodule_id, Reason::DIAMETER_LT_4MM);
        else
            report.kept.push_back(n.nodule_id);
    }
    return report;
}

bool derive_recurrence_label(const PatientRecord& p) {
    if (!p.surgery_days)
        throw ValueError("derive_recurrence_label: patient " + p.patient_id +
                         " has no surgery date (cleaning should have excluded it)");
    return p.progression_days && *p.progression_days > *p.surgery_days;
}

bool derive_adjuvant_flag(const PatientRecord& p) {
    if (!p.surgery_days)
        throw ValueError("derive_adjuvant_flag: patient " + p.patient_id +
                         " has no surgery date (cleaning should have excluded it)");
    for (double d : p.chemo_days)
        if (d > *p.surgery_days) return true;
    return false;
}

MaskVolume consensus_mask(const std::vector<MaskVolume>& masks) {
    if (masks.size() != 4) throw ValueError("consensus_mask wants exactly 4 masks");
    const auto& h0 = masks[0].header;
    for (const auto& m : masks) {
        if (m.header.dims != h0.dims || m.header.spacing_mm != h0.spacing_mm)
            throw ValueError("consensus_mask: annotator masks disagree on dims/spacing");
    }
    MaskVolume out;
    out.header = h0;
    out.voxels.resize(masks[0].voxels.size());
    for (size_t i = 0; i < out.voxels.size(); ++i) {
        const int votes = masks[0].voxels[i] + masks[1].voxels[i] + masks[2].voxels[i] +
                          masks[3].voxels[i];
        out.voxels[i] = votes >= 2 ? 1 : 0;
    }
    return out;
}

}  // namespace lp::ingest
