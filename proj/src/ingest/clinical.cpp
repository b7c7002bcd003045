#include "lungpipe/ingest/clinical.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

namespace lp::ingest {

Stage parse_stage(const std::string& s) {
    if (s == "IA") return Stage::IA;
    if (s == "IB") return Stage::IB;
    if (s == "IIA") return Stage::IIA;
    if (s == "IIB") return Stage::IIB;
    if (s == "IIIA") return Stage::IIIA;
    if (s == "IIIB") return Stage::IIIB;
    if (s == "IV") return Stage::IV;
    throw ValueError("unknown stage '" + s + "'");
}

const char* stage_name(Stage s) {
    switch (s) {
        case Stage::IA: return "IA";
        case Stage::IB: return "IB";
        case Stage::IIA: return "IIA";
        case Stage::IIB: return "IIB";
        case Stage::IIIA: return "IIIA";
        case Stage::IIIB: return "IIIB";
        case Stage::IV: return "IV";
    }
    return "?";
}

int stage_ordinal(Stage s) { return static_cast<int>(s) + 1; }

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

double parse_number(const std::string& s, const std::string& where) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ValueError("clinical table: bad number '" + s + "' at " + where);
    return v;
}

double parse_days(const std::string& s, const std::string& where) {
    const double v = parse_number(s, where);
    if (v < 0) throw ValueError("clinical table: negative day offset '" + s + "' at " + where);
    return v;
}

}  // namespace

ClinicalTable read_clinical_table(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open clinical table: " + path);
    std::string line;
    if (!std::getline(is, line)) throw ValueError("clinical table is empty: " + path);

    const auto header = split(line, ',');
    std::map<std::string, size_t> col;
    for (size_t i = 0; i < header.size(); ++i) col[header[i]] = i;

    const char* required[] = {"patient_id",      "nodule_id",        "stage",
                              "gender",          "age",              "treatment_kind",
                              "surgery_days",    "progression_days", "chemo_days",
                              "residual_disease", "last_contact_days", "study_end_days",
                              "diameter_mm",     "primary_slice_index", "series_path"};
    for (const char* r : required)
        if (!col.count(r))
            throw ValueError("clinical table: missing required column '" + std::string(r) +
                             "': " + path);
    const bool has_annot = col.count("annotator_count") > 0;

    ClinicalTable table;
    std::map<std::string, size_t> patient_index;
    int64_t row_no = 1;
    while (std::getline(is, line)) {
        ++row_no;
        if (line.empty()) continue;
        const auto cells = split(line, ',');
        if (cells.size() != header.size())
            throw ValueError("clinical table: row " + std::to_string(row_no) + " has " +
                             std::to_string(cells.size()) + " cells, header has " +
                             std::to_string(header.size()) + ": " + path);
        auto cell = [&](const char* name) -> const std::string& { return cells[col.at(name)]; };
        auto where = [&](const char* name) {
            return "row " + std::to_string(row_no) + " column " + name;
        };

        NoduleRecord n;
        n.patient_id = cell("patient_id");
        n.nodule_id = cell("nodule_id");
        n.series_path = cell("series_path");
        n.diameter_mm = parse_number(cell("diameter_mm"), where("diameter_mm"));
        n.primary_slice_index = static_cast<int64_t>(
            parse_number(cell("primary_slice_index"), where("primary_slice_index")));
        if (has_annot && !cells[col.at("annotator_count")].empty())
            n.annotator_count = static_cast<int>(
                parse_number(cells[col.at("annotator_count")], where("annotator_count")));
        table.nodules.push_back(std::move(n));

        if (patient_index.count(cell("patient_id"))) continue;  // first row wins

        PatientRecord p;
        p.patient_id = cell("patient_id");
        try {
            p.stage = parse_stage(cell("stage"));
        } catch (const ValueError& e) {
            throw ValueError(std::string(e.what()) + " at " + where("stage"));
        }
        const std::string& g = cell("gender");
        if (g == "male")
            p.gender = Gender::male;
        else if (g == "female")
            p.gender = Gender::female;
        else
            throw ValueError("clinical table: unknown gender '" + g + "' at " + where("gender"));
        p.age = parse_number(cell("age"), where("age"));
        const std::string& t = cell("treatment_kind");
        if (t == "surgery")
            p.treatment_kind = TreatmentKind::surgery;
        else if (t == "chemo")
            p.treatment_kind = TreatmentKind::chemo;
        else if (t == "radiation")
            p.treatment_kind = TreatmentKind::radiation;
        else if (t == "other")
            p.treatment_kind = TreatmentKind::other;
        else
            throw ValueError("clinical table: unknown treatment_kind '" + t + "' at " +
                             where("treatment_kind"));
        if (!cell("surgery_days").empty())
            p.surgery_days = parse_days(cell("surgery_days"), where("surgery_days"));
        if (!cell("progression_days").empty())
            p.progression_days = parse_days(cell("progression_days"), where("progression_days"));
        if (!cell("chemo_days").empty())
            for (const auto& d : split(cell("chemo_days"), ';'))
                p.chemo_days.push_back(parse_days(d, where("chemo_days")));
        const std::string& rd = cell("residual_disease");
        if (rd == "0" || rd.empty())
            p.residual_disease = false;
        else if (rd == "1")
            p.residual_disease = true;
        else
            throw ValueError("clinical table: residual_disease wants 0/1, got '" + rd + "' at " +
                             where("residual_disease"));
        p.last_contact_days = parse_days(cell("last_contact_days"), where("last_contact_days"));
        p.study_end_days = parse_days(cell("study_end_days"), where("study_end_days"));
        patient_index[p.patient_id] = table.patients.size();
        table.patients.push_back(std::move(p));
    }
    return table;
}

}  // namespace lp::ingest
