#include "lungpipe/pipeline/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "lungpipe/core/rng.hpp"

namespace lp::pipeline {

namespace {

namespace fs = std::filesystem;
using ingest::CtVolume;
using ingest::MaskVolume;

// Body and lung shapes derived from the world extents, in mm. Voxel (z,y,x)
// sits at world index * spacing.
struct Anatomy {
    double body_cy, body_cx, body_ay, body_ax;      // axial ellipse, all z
    std::array<std::array<double, 3>, 2> lung_c{};  // left/right centers, z-y-x
    std::array<double, 3> lung_a{};                 // shared semi-axes
};

Anatomy derive_anatomy(const PhantomSpec& s) {
    const double Z = static_cast<double>(s.dims[0] - 1) * s.spacing_mm[0];
    const double Y = static_cast<double>(s.dims[1] - 1) * s.spacing_mm[1];
    const double X = static_cast<double>(s.dims[2] - 1) * s.spacing_mm[2];
    Anatomy a;
    a.body_cy = Y / 2;
    a.body_cx = X / 2;
    a.body_ay = 0.42 * Y;
    a.body_ax = 0.47 * X;
    a.lung_a = {0.42 * Z, 0.30 * Y, 0.19 * X};
    a.lung_c[0] = {Z / 2, Y / 2 - 0.02 * Y, X / 2 - 0.19 * X};
    a.lung_c[1] = {Z / 2, Y / 2 - 0.02 * Y, X / 2 + 0.19 * X};
    return a;
}

double sq(double v) { return v * v; }

bool in_lung(const Anatomy& a, int which, double z, double y, double x) {
    const auto& c = a.lung_c[static_cast<size_t>(which)];
    return sq((z - c[0]) / a.lung_a[0]) + sq((y - c[1]) / a.lung_a[1]) +
               sq((x - c[2]) / a.lung_a[2]) <=
           1.0;
}

// standard normal from the stateless counter stream, so voxel noise can be
// filled in parallel and still only depends on (seed, voxel index)
double counter_normal(uint64_t seed, uint64_t counter) {
    const double u1 = std::max(counter_uniform(seed, 2 * counter), 1e-300);
    const double u2 = counter_uniform(seed, 2 * counter + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

struct Nodule {
    std::array<double, 3> center_mm{};  // on the voxel lattice
    double radius_mm = 0;
};

// integral values bare, everything else one decimal (all generated numbers
// are constructed on a 0.1 grid)
std::string fmt_num(double v) {
    std::ostringstream os;
    if (v == std::floor(v) && std::abs(v) < 1e15)
        os << static_cast<long long>(v);
    else
        os << std::fixed << std::setprecision(1) << v;
    return os.str();
}

}  // namespace

void PhantomSpec::validate() const {
    if (dims[0] < 8 || dims[1] < 16 || dims[2] < 16)
        throw ValueError("phantom: volume dims too small");
    // slice extents stay divisible by 8 so predicted masks can be resized
    // back onto the native grid
    if (dims[1] % 8 != 0 || dims[2] % 8 != 0)
        throw ValueError("phantom: y/x dims must be divisible by 8");
    for (double s : spacing_mm)
        if (!(s > 0)) throw ValueError("phantom: spacing must be positive");
    if (!(min_radius_mm > 0) || min_radius_mm > max_radius_mm)
        throw ValueError("phantom: bad nodule radius range");
    if (max_nodules < 1 || max_nodules > 8)
        throw ValueError("phantom: nodules per patient must be in [1, 8]");
    if (noise_hu < 0) throw ValueError("phantom: negative noise level");
    if (!(base_rate > 0.0) || !(base_rate < 1.0))
        throw ValueError("phantom: base rate must be inside (0, 1)");
    for (double hu : {body_hu, lung_hu, nodule_hu, air_hu})
        if (hu < -1024 || hu > 3071) throw ValueError("phantom: tissue level outside the HU range");

    const Anatomy a = derive_anatomy(*this);
    const double a_min = std::min({a.lung_a[0], a.lung_a[1], a.lung_a[2]});
    if (max_radius_mm > 0.8 * a_min)
        throw ValueError("phantom: nodule radius " + fmt_num(max_radius_mm) +
                         " mm exceeds the lung (semi-axis " + fmt_num(a_min) + " mm)");
}

PhantomPatient make_phantom_patient(const PhantomSpec& spec, int64_t index) {
    spec.validate();
    const Anatomy anat = derive_anatomy(spec);
    const double a_min = std::min({anat.lung_a[0], anat.lung_a[1], anat.lung_a[2]});
    const Rng master(spec.seed);
    Rng rng = master.fork(static_cast<uint64_t>(index));

    std::ostringstream pid;
    pid << "sp" << std::setfill('0') << std::setw(3) << index;

    // --- geometry -----------------------------------------------------------
    const int64_t n_nodules = 1 + static_cast<int64_t>(rng.uniform_index(
                                      static_cast<uint64_t>(spec.max_nodules)));
    std::vector<Nodule> nodules;
    for (int64_t k = 0; k < n_nodules; ++k) {
        Nodule nd;
        nd.radius_mm = std::round(rng.uniform(spec.min_radius_mm, spec.max_radius_mm) * 10) / 10;
        const double room = 1.0 - nd.radius_mm / a_min;
        bool placed = false;
        for (int attempt = 0; attempt < 10000 && !placed; ++attempt) {
            const int lung = static_cast<int>(rng.uniform_index(2));
            const auto& c = anat.lung_c[static_cast<size_t>(lung)];
            std::array<double, 3> p;
            for (int i = 0; i < 3; ++i)
                // snapped to the lattice so the analytic mask volume is
                // translation-invariant
                p[static_cast<size_t>(i)] = std::round(
                    rng.uniform(c[static_cast<size_t>(i)] - anat.lung_a[static_cast<size_t>(i)],
                                c[static_cast<size_t>(i)] + anat.lung_a[static_cast<size_t>(i)]));
            const double rel = std::sqrt(sq((p[0] - c[0]) / anat.lung_a[0]) +
                                         sq((p[1] - c[1]) / anat.lung_a[1]) +
                                         sq((p[2] - c[2]) / anat.lung_a[2]));
            if (rel > 0.97 * room) continue;  // sphere would leave the lung
            bool clear = true;
            for (const auto& other : nodules) {
                const double d = std::sqrt(sq(p[0] - other.center_mm[0]) +
                                           sq(p[1] - other.center_mm[1]) +
                                           sq(p[2] - other.center_mm[2]));
                clear &= d >= nd.radius_mm + other.radius_mm + 2.0;
            }
            if (!clear) continue;
            nd.center_mm = p;
            placed = true;
        }
        if (!placed)
            throw ValueError("phantom: could not place a nodule of radius " +
                             fmt_num(nd.radius_mm) + " mm inside the lung");
        nodules.push_back(nd);
    }

    // --- clinical row -------------------------------------------------------
    double d_largest = 0;
    for (const auto& nd : nodules) d_largest = std::max(d_largest, 2 * nd.radius_mm);
    const double d_min = 2 * spec.min_radius_mm, d_max = 2 * spec.max_radius_mm;
    const double frac = d_max > d_min ? (d_largest - d_min) / (d_max - d_min) : 0.5;

    const int64_t ord = std::clamp<int64_t>(
        std::llround(1.0 + 6.0 * frac + spec.stage_noise * rng.normal()), 1, 7);

    const double logit = spec.diameter_coeff * (d_largest - (d_min + d_max) / 2) +
                         spec.stage_coeff * static_cast<double>(ord - 4) +
                         std::log(spec.base_rate / (1.0 - spec.base_rate));
    PhantomPatient out;
    out.p_recur = 1.0 / (1.0 + std::exp(-logit));
    const bool recurred = rng.bernoulli(out.p_recur);

    auto& rec = out.record;
    rec.patient_id = pid.str();
    rec.stage = static_cast<ingest::Stage>(ord - 1);
    rec.gender = rng.bernoulli(0.5) ? ingest::Gender::female : ingest::Gender::male;
    rec.age = std::round(rng.uniform(45, 85));
    rec.treatment_kind = ingest::TreatmentKind::surgery;
    rec.surgery_days = 30 + std::round(rng.uniform(0, 60));
    if (recurred) rec.progression_days = *rec.surgery_days + 30 + std::round(rng.uniform(0, 330));
    if (rng.bernoulli(0.4)) rec.chemo_days = {*rec.surgery_days + 21};
    rec.residual_disease = false;
    rec.last_contact_days = 1200;
    rec.study_end_days = 1200;

    // --- voxels -------------------------------------------------------------
    const auto [dz, dy, dx] = spec.dims;
    ingest::VolumeHeader hdr;
    hdr.dims = spec.dims;
    hdr.spacing_mm = spec.spacing_mm;
    hdr.origin_mm = {0, 0, 0};

    out.ct.header = hdr;
    out.ct.header.value_kind = ingest::ValueKind::hounsfield_int16;
    out.ct.voxels.assign(static_cast<size_t>(hdr.voxel_count()), 0.0f);
    const uint64_t noise_seed =
        splitmix64(spec.seed ^ (0x8f00ULL + static_cast<uint64_t>(index)));

#pragma omp parallel for
    for (int64_t z = 0; z < dz; ++z) {
        const double zw = static_cast<double>(z) * spec.spacing_mm[0];
        for (int64_t y = 0; y < dy; ++y) {
            const double yw = static_cast<double>(y) * spec.spacing_mm[1];
            for (int64_t x = 0; x < dx; ++x) {
                const double xw = static_cast<double>(x) * spec.spacing_mm[2];
                double hu = spec.air_hu;
                if (sq((yw - anat.body_cy) / anat.body_ay) +
                        sq((xw - anat.body_cx) / anat.body_ax) <=
                    1.0)
                    hu = spec.body_hu;
                if (in_lung(anat, 0, zw, yw, xw) || in_lung(anat, 1, zw, yw, xw))
                    hu = spec.lung_hu;
                for (const auto& nd : nodules)
                    if (sq(zw - nd.center_mm[0]) + sq(yw - nd.center_mm[1]) +
                            sq(xw - nd.center_mm[2]) <=
                        sq(nd.radius_mm))
                        hu = spec.nodule_hu;
                const int64_t v = (z * dy + y) * dx + x;
                hu += spec.noise_hu * counter_normal(noise_seed, static_cast<uint64_t>(v));
                out.ct.voxels[static_cast<size_t>(v)] =
                    static_cast<float>(std::clamp(hu, -1024.0, 3071.0));
            }
        }
    }

    // --- analytic masks and nodule rows --------------------------------------
    for (size_t k = 0; k < nodules.size(); ++k) {
        const auto& nd = nodules[k];
        MaskVolume m;
        m.header = hdr;
        m.header.value_kind = ingest::ValueKind::mask_uint8;
        m.voxels.assign(static_cast<size_t>(hdr.voxel_count()), 0);
        std::vector<int64_t> area(static_cast<size_t>(dz), 0);
        for (int64_t z = 0; z < dz; ++z)
            for (int64_t y = 0; y < dy; ++y)
                for (int64_t x = 0; x < dx; ++x) {
                    const double zw = static_cast<double>(z) * spec.spacing_mm[0];
                    const double yw = static_cast<double>(y) * spec.spacing_mm[1];
                    const double xw = static_cast<double>(x) * spec.spacing_mm[2];
                    if (sq(zw - nd.center_mm[0]) + sq(yw - nd.center_mm[1]) +
                            sq(xw - nd.center_mm[2]) <=
                        sq(nd.radius_mm)) {
                        m.at(z, y, x) = 1;
                        ++area[static_cast<size_t>(z)];
                    }
                }

        ingest::NoduleRecord nr;
        nr.patient_id = rec.patient_id;
        nr.nodule_id = rec.patient_id + "_n" + std::to_string(k);
        nr.diameter_mm = 2 * nd.radius_mm;
        nr.primary_slice_index =
            std::max_element(area.begin(), area.end()) - area.begin();
        nr.annotator_count = 4;
        out.nodules.push_back(std::move(nr));
        out.masks.push_back(std::move(m));
    }
    return out;
}

PhantomDataset generate_phantom_dataset(const PhantomSpec& spec, int64_t n_patients,
                                        const std::string& root) {
    spec.validate();
    if (n_patients < 1) throw ValueError("phantom: need at least one patient");
    fs::create_directories(fs::path(root) / "volumes");
    fs::create_directories(fs::path(root) / "masks");

    PhantomDataset ds;
    std::ostringstream csv;
    csv << "patient_id,nodule_id,stage,gender,age,treatment_kind,surgery_days,"
           "progression_days,chemo_days,residual_disease,last_contact_days,"
           "study_end_days,diameter_mm,primary_slice_index,series_path,annotator_count\n";

    for (int64_t i = 0; i < n_patients; ++i) {
        PhantomPatient p = make_phantom_patient(spec, i);
        const std::string vol_rel = "volumes/" + p.record.patient_id + ".hdr";
        ingest::write_volume((fs::path(root) / vol_rel).string(), p.ct);
        ds.volume_paths.push_back(vol_rel);

        const auto& r = p.record;
        for (size_t k = 0; k < p.nodules.size(); ++k) {
            auto& n = p.nodules[k];
            n.series_path = vol_rel;
            const std::string mask_rel = "masks/" + n.nodule_id + ".hdr";
            ingest::write_volume((fs::path(root) / mask_rel).string(), p.masks[k]);
            ds.mask_paths.push_back(mask_rel);

            csv << r.patient_id << ',' << n.nodule_id << ',' << ingest::stage_name(r.stage)
                << ',' << (r.gender == ingest::Gender::female ? "female" : "male") << ','
                << fmt_num(r.age) << ",surgery," << fmt_num(*r.surgery_days) << ',';
            if (r.progression_days) csv << fmt_num(*r.progression_days);
            csv << ',';
            for (size_t c = 0; c < r.chemo_days.size(); ++c)
                csv << (c ? ";" : "") << fmt_num(r.chemo_days[c]);
            csv << ",0," << fmt_num(r.last_contact_days) << ',' << fmt_num(r.study_end_days)
                << ',' << fmt_num(n.diameter_mm) << ',' << n.primary_slice_index << ','
                << vol_rel << ",4\n";

            ds.table.nodules.push_back(n);
        }
        ds.table.patients.push_back(p.record);
    }

    std::ofstream os(fs::path(root) / "clinical.csv", std::ios::binary);
    if (!os) throw IoError("phantom: cannot write clinical table under " + root);
    os << csv.str();
    return ds;
}

}  // namespace lp::pipeline
