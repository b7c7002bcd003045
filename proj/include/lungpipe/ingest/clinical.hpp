#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lungpipe/core/error.hpp"

namespace lp::ingest {

enum class Stage { IA, IB, IIA, IIB, IIIA, IIIB, IV };
enum class Gender { male, female };
enum class TreatmentKind { surgery, chemo, radiation, other };

Stage parse_stage(const std::string& s);
const char* stage_name(Stage s);

// Ordinal encoding used as a forest feature: IA=1 ... IV=7.
int stage_ordinal(Stage s);

struct PatientRecord {
    std::string patient_id;
    Stage stage = Stage::IA;
    Gender gender = Gender::male;
    double age = 0;
    TreatmentKind treatment_kind = TreatmentKind::surgery;
    std::optional<double> surgery_days;
    std::optional<double> progression_days;
    std::vector<double> chemo_days;
    bool residual_disease = false;
    double last_contact_days = 0;
    double study_end_days = 0;
};

struct NoduleRecord {
    std::string patient_id;
    std::string nodule_id;
    std::string series_path;
    double diameter_mm = 0;
    int64_t primary_slice_index = 0;
    int annotator_count = 4;  // column is optional; absent means "not tracked"
};

struct ClinicalTable {
    std::vector<PatientRecord> patients;  // unique by patient_id, first row wins
    std::vector<NoduleRecord> nodules;    // one per row
};

// Comma-separated, header row required. One row per nodule; patient columns
// repeat. Empty cell = absent. chemo_days holds semicolon-separated offsets.
ClinicalTable read_clinical_table(const std::string& path);

}  // namespace lp::ingest
