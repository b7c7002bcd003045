#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "lungpipe/core/rng.hpp"
#include "lungpipe/ingest/cleaning.hpp"
#include "lungpipe/ingest/clinical.hpp"
#include "lungpipe/ingest/volume.hpp"

namespace fs = std::filesystem;
using namespace lp::ingest;
using lp::Rng;
using lp::ValueError;

namespace {

fs::path temp_dir() {
    auto d = fs::temp_directory_path() / "lungpipe_io_test";
    fs::create_directories(d);
    return d;
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

CtVolume make_ct(std::array<int64_t, 3> dims, uint64_t seed) {
    CtVolume v;
    v.header.dims = dims;
    v.header.spacing_mm = {1.25, 0.7, 0.7};
    v.header.origin_mm = {-100.0, -200.5, -200.5};
    v.header.value_kind = ValueKind::hounsfield_int16;
    Rng rng(seed);
    v.voxels.resize(static_cast<size_t>(v.header.voxel_count()));
    for (auto& x : v.voxels) x = static_cast<float>(static_cast<int>(rng.uniform(-1024.0, 3071.0)));
    return v;
}

MaskVolume make_mask(std::array<int64_t, 3> dims) {
    MaskVolume m;
    m.header.dims = dims;
    m.header.spacing_mm = {1.0, 1.0, 1.0};
    m.header.origin_mm = {0.0, 0.0, 0.0};
    m.header.value_kind = ValueKind::mask_uint8;
    m.voxels.assign(static_cast<size_t>(m.header.voxel_count()), 0);
    return m;
}

PatientRecord surgical_patient() {
    PatientRecord p;
    p.patient_id = "P1";
    p.treatment_kind = TreatmentKind::surgery;
    p.surgery_days = 100;
    return p;
}

}  // namespace

TEST_CASE("ct volume round-trips through disk byte for byte") {
    auto dir = temp_dir();
    auto v = make_ct({4, 4, 4}, 11);
    const auto p1 = dir / "a.vol";
    const auto p2 = dir / "b.vol";
    write_volume(p1.string(), v);

    // 64 int16 voxels -> 128-byte payload
    CHECK(fs::file_size(dir / "a.raw") == 128);

    auto r = read_ct_volume(p1.string());
    CHECK(r.header.dims == v.header.dims);
    CHECK(r.header.spacing_mm == v.header.spacing_mm);
    CHECK(r.voxels == v.voxels);

    // read -> write back to the same path reproduces both files byte for byte
    const std::string header_bytes = slurp(p1);
    const std::string payload_bytes = slurp(dir / "a.raw");
    write_volume(p1.string(), r);
    CHECK(slurp(p1) == header_bytes);
    CHECK(slurp(dir / "a.raw") == payload_bytes);

    // a different header path gets its own payload file, same contents
    write_volume(p2.string(), r);
    CHECK(slurp(dir / "b.raw") == payload_bytes);
    CHECK(read_ct_volume(p2.string()).voxels == v.voxels);
}

TEST_CASE("mask volume round-trips and rejects non-binary payloads") {
    auto dir = temp_dir();
    auto m = make_mask({3, 5, 2});
    m.at(1, 2, 0) = 1;
    m.at(2, 4, 1) = 1;
    const auto p = dir / "m.vol";
    write_volume(p.string(), m);
    auto r = read_mask_volume(p.string());
    CHECK(r.voxels == m.voxels);

    // poke a 2 into the payload
    {
        std::fstream f(dir / "m.raw", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(7);
        char two = 2;
        f.write(&two, 1);
    }
    CHECK_THROWS_WITH_AS(read_mask_volume(p.string()),
                         doctest::Contains("mask payload holds value 2"), ValueError);
}

TEST_CASE("payload size mismatch is reported with the path") {
    auto dir = temp_dir();
    auto v = make_ct({4, 4, 4}, 3);
    const auto p = dir / "short.vol";
    write_volume(p.string(), v);
    fs::resize_file(dir / "short.raw", 127);
    CHECK_THROWS_WITH_AS(read_ct_volume(p.string()), doctest::Contains("size mismatch"),
                         ValueError);
}

TEST_CASE("header errors name the offending field") {
    auto dir = temp_dir();
    const auto write_header = [&](const std::string& text) {
        std::ofstream os(dir / "bad.vol");
        os << text;
    };

    write_header("dims: 2 2 2\nspacing_mm: 1 1 1\norigin_mm: 0 0 0\nvalue_kind: float64\ndata_path: bad.raw\n");
    CHECK_THROWS_WITH_AS(read_volume((dir / "bad.vol").string()),
                         doctest::Contains("value_kind"), ValueError);

    write_header("dims: 2 2\nspacing_mm: 1 1 1\norigin_mm: 0 0 0\nvalue_kind: mask-uint8\ndata_path: bad.raw\n");
    CHECK_THROWS_WITH_AS(read_volume((dir / "bad.vol").string()), doctest::Contains("dims"),
                         ValueError);

    write_header("spacing_mm: 1 1 1\norigin_mm: 0 0 0\nvalue_kind: mask-uint8\ndata_path: bad.raw\n");
    CHECK_THROWS_WITH_AS(read_volume((dir / "bad.vol").string()),
                         doctest::Contains("missing field dims"), ValueError);

    write_header("dims: 2 2 2\nnot a header line\n");
    CHECK_THROWS_WITH_AS(read_volume((dir / "bad.vol").string()),
                         doctest::Contains("malformed line"), ValueError);
}

TEST_CASE("volume digest keys on dims, spacing, and payload") {
    auto dir = temp_dir();
    auto v = make_ct({3, 4, 5}, 21);
    write_volume((dir / "d1.vol").string(), v);
    write_volume((dir / "d2.vol").string(), v);  // same content, different path
    CHECK(volume_digest((dir / "d1.vol").string()) == volume_digest((dir / "d2.vol").string()));

    v.voxels[10] += 1.0f;
    write_volume((dir / "d3.vol").string(), v);
    CHECK(volume_digest((dir / "d1.vol").string()) != volume_digest((dir / "d3.vol").string()));
}

TEST_CASE("clinical table parses records and absent cells") {
    auto dir = temp_dir();
    const auto p = dir / "clin.csv";
    {
        std::ofstream os(p);
        os << "patient_id,nodule_id,stage,gender,age,treatment_kind,surgery_days,"
              "progression_days,chemo_days,residual_disease,last_contact_days,"
              "study_end_days,diameter_mm,primary_slice_index,series_path,annotator_count\n";
        os << "P1,N1,IIA,female,63,surgery,100,,90;200,0,900,800,7.5,42,vol/p1.vol,4\n";
        os << "P1,N2,IIA,female,63,surgery,100,,90;200,0,900,800,3.5,17,vol/p1.vol,3\n";
        os << "P2,N3,IV,male,71,chemo,,400,,1,700,800,12.0,10,vol/p2.vol,2\n";
    }
    auto t = read_clinical_table(p.string());
    REQUIRE(t.patients.size() == 2);
    REQUIRE(t.nodules.size() == 3);

    const auto& p1 = t.patients[0];
    CHECK(p1.patient_id == "P1");
    CHECK(p1.stage == Stage::IIA);
    CHECK(p1.gender == Gender::female);
    CHECK(p1.age == 63);
    CHECK(p1.surgery_days.has_value());
    CHECK(*p1.surgery_days == 100);
    CHECK_FALSE(p1.progression_days.has_value());  // empty cell stays absent
    CHECK(p1.chemo_days == std::vector<double>{90, 200});
    CHECK_FALSE(p1.residual_disease);

    const auto& p2 = t.patients[1];
    CHECK(p2.treatment_kind == TreatmentKind::chemo);
    CHECK_FALSE(p2.surgery_days.has_value());
    CHECK(p2.progression_days.has_value());
    CHECK(p2.residual_disease);
    CHECK(p2.chemo_days.empty());

    CHECK(t.nodules[1].nodule_id == "N2");
    CHECK(t.nodules[1].annotator_count == 3);
    CHECK(t.nodules[2].primary_slice_index == 10);
    CHECK(t.nodules[2].series_path == "vol/p2.vol");
}

TEST_CASE("clinical table errors carry row and column") {
    auto dir = temp_dir();
    const auto p = dir / "clin_bad.csv";
    const std::string header =
        "patient_id,nodule_id,stage,gender,age,treatment_kind,surgery_days,"
        "progression_days,chemo_days,residual_disease,last_contact_days,"
        "study_end_days,diameter_mm,primary_slice_index,series_path\n";

    {
        std::ofstream os(p);
        os << header << "P1,N1,V,male,60,surgery,10,,,0,5,5,6,0,x.vol\n";
    }
    CHECK_THROWS_WITH_AS(read_clinical_table(p.string()),
                         doctest::Contains("row 2 column stage"), ValueError);

    {
        std::ofstream os(p);
        os << header << "P1,N1,IA,male,60,surgery,-10,,,0,5,5,6,0,x.vol\n";
    }
    CHECK_THROWS_WITH_AS(read_clinical_table(p.string()),
                         doctest::Contains("negative day offset"), ValueError);

    {
        std::ofstream os(p);
        os << "patient_id,nodule_id\nP1,N1\n";
    }
    CHECK_THROWS_WITH_AS(read_clinical_table(p.string()),
                         doctest::Contains("missing required column"), ValueError);
}

TEST_CASE("segmentation cleaning applies the documented precedence") {
    NoduleRecord good;
    good.patient_id = "P1";
    good.nodule_id = "N1";
    good.diameter_mm = 5.0;
    good.annotator_count = 3;

    VolumeHeader h;
    h.dims = {100, 256, 256};
    h.spacing_mm = {1.25, 0.7, 0.7};

    SUBCASE("thin-slice scan with majority nodule is kept") {
        auto rep = clean_segmentation_scan(h, {good});
        CHECK(rep.kept == std::vector<std::string>{"N1"});
        CHECK(rep.excluded.empty());
    }

    SUBCASE("z spacing above 2.5 mm excludes every nodule of the scan") {
        h.spacing_mm[0] = 3.0;
        auto small = good;
        small.nodule_id = "N2";
        small.diameter_mm = 2.0;  // would also fail diameter, but scan rule wins
        auto rep = clean_segmentation_scan(h, {good, small});
        REQUIRE(rep.excluded.size() == 2);
        CHECK(rep.excluded[0].second == Reason::SLICE_THICKNESS);
        CHECK(rep.excluded[1].second == Reason::SLICE_THICKNESS);
        CHECK(rep.kept.empty());
    }

    SUBCASE("boundary: exactly 2.5 mm passes") {
        h.spacing_mm[0] = 2.5;
        auto rep = clean_segmentation_scan(h, {good});
        CHECK(rep.excluded.empty());
    }

    SUBCASE("non-arithmetic slice positions are inconsistent spacing") {
        h.slice_positions_mm = std::vector<double>(100);
        for (int i = 0; i < 100; ++i) (*h.slice_positions_mm)[i] = i * 1.25;
        (*h.slice_positions_mm)[40] += 0.05;  // 0.05 > 0.01 tolerance
        auto rep = clean_segmentation_scan(h, {good});
        REQUIRE(rep.excluded.size() == 1);
        CHECK(rep.excluded[0].second == Reason::INCONSISTENT_SPACING);
    }

    SUBCASE("jitter within 0.01 mm still counts as uniform") {
        h.slice_positions_mm = std::vector<double>(100);
        for (int i = 0; i < 100; ++i) (*h.slice_positions_mm)[i] = i * 1.25 + (i % 2) * 0.004;
        auto rep = clean_segmentation_scan(h, {good});
        CHECK(rep.excluded.empty());
    }

    SUBCASE("small nodules and minority nodules fall out individually") {
        auto small = good;
        small.nodule_id = "N2";
        small.diameter_mm = 2.9;
        auto minority = good;
        minority.nodule_id = "N3";
        minority.annotator_count = 2;
        auto both = good;
        both.nodule_id = "N4";
        both.diameter_mm = 1.0;
        both.annotator_count = 0;  // diameter rule is checked first
        auto rep = clean_segmentation_scan(h, {good, small, minority, both});
        CHECK(rep.kept == std::vector<std::string>{"N1"});
        REQUIRE(rep.excluded.size() == 3);
        CHECK(rep.excluded[0] == std::pair<std::string, Reason>{"N2", Reason::DIAMETER_LT_3MM});
        CHECK(rep.excluded[1] == std::pair<std::string, Reason>{"N3", Reason::ANNOTATOR_MINORITY});
        CHECK(rep.excluded[2] == std::pair<std::string, Reason>{"N4", Reason::DIAMETER_LT_3MM});
    }

    SUBCASE("boundary: 3.0 mm diameter and 3 annotators pass") {
        auto n = good;
        n.diameter_mm = 3.0;
        n.annotator_count = 3;
        auto rep = clean_segmentation_scan(h, {n});
        CHECK(rep.excluded.empty());
    }
}

TEST_CASE("segmentation cleaning partitions its input") {
    Rng rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        VolumeHeader h;
        h.dims = {40, 64, 64};
        h.spacing_mm = {rng.uniform(0.5, 4.0), 0.7, 0.7};
        std::vector<NoduleRecord> ns;
        const int count = 1 + static_cast<int>(rng.uniform_index(6));
        for (int i = 0; i < count; ++i) {
            NoduleRecord n;
            n.nodule_id = "N" + std::to_string(i);
            n.diameter_mm = rng.uniform(1.0, 12.0);
            n.annotator_count = static_cast<int>(rng.uniform_index(5));
            ns.push_back(n);
        }
        auto rep = clean_segmentation_scan(h, ns);
        CHECK(rep.kept.size() + rep.excluded.size() == ns.size());
        std::set<std::string> seen;
        for (const auto& id : rep.kept) seen.insert(id);
        for (const auto& [id, r] : rep.excluded) seen.insert(id);
        CHECK(seen.size() == ns.size());
    }
}

TEST_CASE("recurrence cleaning applies the documented precedence") {
    auto ident = [](const std::string&) { return std::string("same"); };

    NoduleRecord n;
    n.patient_id = "P1";
    n.nodule_id = "N1";
    n.diameter_mm = 4.0;  // boundary: < 4 excludes, 4.0 passes
    n.series_path = "a.vol";

    SUBCASE("surgical, in-contact patient with a 4 mm nodule is kept") {
        auto p = surgical_patient();
        p.last_contact_days = 800;
        p.study_end_days = 800;
        auto rep = clean_recurrence_patient(p, {n}, ident);
        CHECK(rep.excluded.empty());
        CHECK(rep.kept == std::vector<std::string>{"P1", "N1"});
    }

    SUBCASE("non-surgical primary treatment excludes the patient and nodules") {
        auto p = surgical_patient();
        p.treatment_kind = TreatmentKind::radiation;
        p.residual_disease = true;  // also true, but NONSURGICAL_PRIMARY wins
        auto rep = clean_recurrence_patient(p, {n}, ident);
        REQUIRE(rep.excluded.size() == 2);
        for (const auto& [id, r] : rep.excluded) CHECK(r == Reason::NONSURGICAL_PRIMARY);
    }

    SUBCASE("residual disease excludes") {
        auto p = surgical_patient();
        p.residual_disease = true;
        auto rep = clean_recurrence_patient(p, {n}, ident);
        REQUIRE(!rep.excluded.empty());
        CHECK(rep.excluded[0].second == Reason::RESIDUAL_DISEASE);
    }

    SUBCASE("losing contact before study end excludes") {
        auto p = surgical_patient();
        p.last_contact_days = 500;
        p.study_end_days = 800;
        auto rep = clean_recurrence_patient(p, {n}, ident);
        REQUIRE(!rep.excluded.empty());
        CHECK(rep.excluded[0].second == Reason::LOST_CONTACT);
    }

    SUBCASE("distinct series with distinct digests exclude the patient") {
        auto p = surgical_patient();
        p.last_contact_days = 800;
        p.study_end_days = 800;
        auto n2 = n;
        n2.nodule_id = "N2";
        n2.series_path = "b.vol";
        auto digest = [](const std::string& path) { return path; };  // all differ
        auto rep = clean_recurrence_patient(p, {n, n2}, digest);
        REQUIRE(!rep.excluded.empty());
        CHECK(rep.excluded[0].second == Reason::MULTIPLE_SERIES);
    }

    SUBCASE("distinct paths with identical digests are one series") {
        auto p = surgical_patient();
        p.last_contact_days = 800;
        p.study_end_days = 800;
        auto n2 = n;
        n2.nodule_id = "N2";
        n2.series_path = "copy_of_a.vol";
        auto rep = clean_recurrence_patient(p, {n, n2}, ident);
        CHECK(rep.excluded.empty());
    }

    SUBCASE("small nodules fall out individually, patient stays") {
        auto p = surgical_patient();
        p.last_contact_days = 800;
        p.study_end_days = 800;
        auto small = n;
        small.nodule_id = "N2";
        small.diameter_mm = 3.9;
        auto rep = clean_recurrence_patient(p, {n, small}, ident);
        CHECK(rep.kept == std::vector<std::string>{"P1", "N1"});
        REQUIRE(rep.excluded.size() == 1);
        CHECK(rep.excluded[0] == std::pair<std::string, Reason>{"N2", Reason::DIAMETER_LT_4MM});
    }
}

TEST_CASE("recurrence label follows strict post-surgery progression") {
    auto p = surgical_patient();

    p.progression_days = 400;
    CHECK(derive_recurrence_label(p));

    p.progression_days.reset();
    CHECK_FALSE(derive_recurrence_label(p));

    p.progression_days = 50;
    CHECK_FALSE(derive_recurrence_label(p));

    p.progression_days = 100;  // same day is not post-surgical
    CHECK_FALSE(derive_recurrence_label(p));

    // monotone: delaying a recurrent progression never clears the label
    p.progression_days = 101;
    REQUIRE(derive_recurrence_label(p));
    for (double d = 101; d < 1000; d += 97) {
        p.progression_days = d;
        CHECK(derive_recurrence_label(p));
    }

    p.surgery_days.reset();
    CHECK_THROWS_AS(derive_recurrence_label(p), ValueError);
}

TEST_CASE("adjuvant flag wants chemo strictly after surgery") {
    auto p = surgical_patient();

    p.chemo_days = {90, 200};
    CHECK(derive_adjuvant_flag(p));

    p.chemo_days = {};
    CHECK_FALSE(derive_adjuvant_flag(p));

    p.chemo_days = {100};
    CHECK_FALSE(derive_adjuvant_flag(p));

    p.chemo_days = {99, 100};
    CHECK_FALSE(derive_adjuvant_flag(p));

    p.surgery_days.reset();
    CHECK_THROWS_AS(derive_adjuvant_flag(p), ValueError);
}

TEST_CASE("consensus mask is a 2-of-4 vote, checked against all 16 patterns") {
    // voxel i is marked by annotator a iff bit a of i is set
    std::vector<MaskVolume> masks(4, make_mask({1, 4, 4}));
    for (int a = 0; a < 4; ++a)
        for (int i = 0; i < 16; ++i) masks[a].voxels[i] = (i >> a) & 1;

    auto c = consensus_mask(masks);
    for (int i = 0; i < 16; ++i) {
        const int votes = __builtin_popcount(static_cast<unsigned>(i));
        CHECK(c.voxels[i] == (votes >= 2 ? 1 : 0));
    }

    // permutation invariance
    std::vector<MaskVolume> shuffled{masks[2], masks[0], masks[3], masks[1]};
    CHECK(consensus_mask(shuffled).voxels == c.voxels);

    // unanimity returns the common mask
    std::vector<MaskVolume> same(4, masks[1]);
    CHECK(consensus_mask(same).voxels == masks[1].voxels);
}

TEST_CASE("consensus mask validates its inputs") {
    std::vector<MaskVolume> masks(4, make_mask({2, 2, 2}));
    masks[3] = make_mask({2, 2, 3});
    CHECK_THROWS_AS(consensus_mask(masks), ValueError);

    std::vector<MaskVolume> three(3, make_mask({2, 2, 2}));
    CHECK_THROWS_AS(consensus_mask(three), ValueError);

    std::vector<MaskVolume> spaced(4, make_mask({2, 2, 2}));
    spaced[1].header.spacing_mm = {2.0, 1.0, 1.0};
    CHECK_THROWS_AS(consensus_mask(spaced), ValueError);
}
