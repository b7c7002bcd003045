#include "lungpipe/ingest/volume.hpp"

#include <charconv>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace lp::ingest {

namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

double parse_double(const std::string& s, const std::string& key) {
    double v = 0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e)
        throw ValueError("volume header: bad number '" + s + "' in field " + key);
    return v;
}

std::vector<std::string> split_ws(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    std::string tok;
    while (is >> tok) out.push_back(tok);
    return out;
}

VolumeHeader parse_header(const std::string& header_path) {
    std::ifstream is(header_path);
    if (!is) throw IoError("cannot open volume header: " + header_path);
    VolumeHeader h;
    bool got_dims = false, got_spacing = false, got_origin = false, got_kind = false,
         got_data = false;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto colon = line.find(':');
        if (colon == std::string::npos)
            throw ValueError("volume header: malformed line '" + line + "' in " + header_path);
        const std::string key = line.substr(0, colon);
        std::string value = line.substr(colon + 1);
        if (!value.empty() && value.front() == ' ') value.erase(0, 1);

        if (key == "dims") {
            const auto parts = split_ws(value);
            if (parts.size() != 3) throw ValueError("volume header: dims wants 3 values");
            for (int i = 0; i < 3; ++i) {
                h.dims[static_cast<size_t>(i)] =
                    static_cast<int64_t>(parse_double(parts[static_cast<size_t>(i)], "dims"));
                if (h.dims[static_cast<size_t>(i)] < 1)
                    throw ValueError("volume header: dims must be >= 1");
            }
            got_dims = true;
        } else if (key == "spacing_mm") {
            const auto parts = split_ws(value);
            if (parts.size() != 3) throw ValueError("volume header: spacing_mm wants 3 values");
            for (int i = 0; i < 3; ++i) {
                h.spacing_mm[static_cast<size_t>(i)] =
                    parse_double(parts[static_cast<size_t>(i)], "spacing_mm");
                if (!(h.spacing_mm[static_cast<size_t>(i)] > 0))
                    throw ValueError("volume header: spacing_mm must be > 0");
            }
            got_spacing = true;
        } else if (key == "origin_mm") {
            const auto parts = split_ws(value);
            if (parts.size() != 3) throw ValueError("volume header: origin_mm wants 3 values");
            for (int i = 0; i < 3; ++i)
                h.origin_mm[static_cast<size_t>(i)] =
                    parse_double(parts[static_cast<size_t>(i)], "origin_mm");
            got_origin = true;
        } else if (key == "value_kind") {
            if (value == "hounsfield-int16")
                h.value_kind = ValueKind::hounsfield_int16;
            else if (value == "mask-uint8")
                h.value_kind = ValueKind::mask_uint8;
            else
                throw ValueError("volume header: unknown value_kind '" + value + "'");
            got_kind = true;
        } else if (key == "data_path") {
            h.data_path = value;
            got_data = true;
        } else if (key == "slice_positions_mm") {
            const auto parts = split_ws(value);
            std::vector<double> zs;
            for (const auto& p : parts) zs.push_back(parse_double(p, "slice_positions_mm"));
            h.slice_positions_mm = std::move(zs);
        } else {
            throw ValueError("volume header: unknown field '" + key + "' in " + header_path);
        }
    }
    if (!got_dims) throw ValueError("volume header: missing field dims: " + header_path);
    if (!got_spacing) throw ValueError("volume header: missing field spacing_mm: " + header_path);
    if (!got_origin) throw ValueError("volume header: missing field origin_mm: " + header_path);
    if (!got_kind) throw ValueError("volume header: missing field value_kind: " + header_path);
    if (!got_data) throw ValueError("volume header: missing field data_path: " + header_path);
    if (h.slice_positions_mm &&
        static_cast<int64_t>(h.slice_positions_mm->size()) != h.dims[0])
        throw ValueError("volume header: slice_positions_mm count does not match dims.z");
    return h;
}

std::string payload_path(const std::string& header_path, const VolumeHeader& h) {
    return (fs::path(header_path).parent_path() / h.data_path).string();
}

// Writers name the payload after the header file, whatever data_path the
// in-memory header carries: writing a volume read from a.vol out to b.vol
// must not silently clobber a.raw.
VolumeHeader with_derived_data_path(const std::string& header_path, VolumeHeader h) {
    h.data_path = fs::path(header_path).stem().string() + ".raw";
    return h;
}

std::vector<char> read_payload(const std::string& header_path, const VolumeHeader& h,
                               size_t elem_width) {
    const std::string p = payload_path(header_path, h);
    std::ifstream is(p, std::ios::binary);
    if (!is) throw IoError("cannot open volume payload: " + p);
    std::vector<char> bytes((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    const size_t want = static_cast<size_t>(h.voxel_count()) * elem_width;
    if (bytes.size() != want)
        throw ValueError("volume payload size mismatch for " + p + ": got " +
                         std::to_string(bytes.size()) + " bytes, dims want " +
                         std::to_string(want));
    return bytes;
}

void write_header(const std::string& header_path, const VolumeHeader& h) {
    std::ofstream os(header_path);
    if (!os) throw IoError("cannot write volume header: " + header_path);
    os << "dims: " << h.dims[0] << ' ' << h.dims[1] << ' ' << h.dims[2] << '\n';
    os << "spacing_mm: " << fmt_double(h.spacing_mm[0]) << ' ' << fmt_double(h.spacing_mm[1]) << ' '
       << fmt_double(h.spacing_mm[2]) << '\n';
    os << "origin_mm: " << fmt_double(h.origin_mm[0]) << ' ' << fmt_double(h.origin_mm[1]) << ' '
       << fmt_double(h.origin_mm[2]) << '\n';
    os << "value_kind: "
       << (h.value_kind == ValueKind::hounsfield_int16 ? "hounsfield-int16" : "mask-uint8") << '\n';
    os << "data_path: " << h.data_path << '\n';
    if (h.slice_positions_mm) {
        os << "slice_positions_mm:";
        for (double z : *h.slice_positions_mm) os << ' ' << fmt_double(z);
        os << '\n';
    }
    if (!os) throw IoError("write failed: " + header_path);
}

}  // namespace

AnyVolume read_volume(const std::string& header_path) {
    AnyVolume out;
    out.header = parse_header(header_path);
    const VolumeHeader& h = out.header;
    if (h.value_kind == ValueKind::hounsfield_int16) {
        const auto bytes = read_payload(header_path, h, 2);
        CtVolume v;
        v.header = h;
        v.voxels.resize(static_cast<size_t>(h.voxel_count()));
        const int16_t* src = reinterpret_cast<const int16_t*>(bytes.data());
        for (size_t i = 0; i < v.voxels.size(); ++i) v.voxels[i] = static_cast<float>(src[i]);
        out.ct = std::move(v);
    } else {
        const auto bytes = read_payload(header_path, h, 1);
        MaskVolume m;
        m.header = h;
        m.voxels.resize(static_cast<size_t>(h.voxel_count()));
        for (size_t i = 0; i < m.voxels.size(); ++i) {
            const auto b = static_cast<uint8_t>(bytes[i]);
            if (b > 1)
                throw ValueError("mask payload holds value " + std::to_string(b) +
                                 " (not 0/1): " + header_path);
            m.voxels[i] = b;
        }
        out.mask = std::move(m);
    }
    return out;
}

CtVolume read_ct_volume(const std::string& header_path) {
    auto any = read_volume(header_path);
    if (!any.ct)
        throw ValueError("expected hounsfield-int16 volume, got mask: " + header_path);
    return std::move(*any.ct);
}

MaskVolume read_mask_volume(const std::string& header_path) {
    auto any = read_volume(header_path);
    if (!any.mask)
        throw ValueError("expected mask-uint8 volume, got hounsfield: " + header_path);
    return std::move(*any.mask);
}

void write_volume(const std::string& header_path, const CtVolume& v) {
    if (static_cast<int64_t>(v.voxels.size()) != v.header.voxel_count())
        throw ValueError("volume voxel count does not match header dims");
    const VolumeHeader h = with_derived_data_path(header_path, v.header);
    write_header(header_path, h);
    const std::string p = payload_path(header_path, h);
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot write volume payload: " + p);
    std::vector<int16_t> raw(v.voxels.size());
    for (size_t i = 0; i < raw.size(); ++i) raw[i] = static_cast<int16_t>(std::llround(v.voxels[i]));
    os.write(reinterpret_cast<const char*>(raw.data()),
             static_cast<std::streamsize>(raw.size() * 2));
    if (!os) throw IoError("write failed: " + p);
}

void write_volume(const std::string& header_path, const MaskVolume& m) {
    if (static_cast<int64_t>(m.voxels.size()) != m.header.voxel_count())
        throw ValueError("mask voxel count does not match header dims");
    const VolumeHeader h = with_derived_data_path(header_path, m.header);
    write_header(header_path, h);
    const std::string p = payload_path(header_path, h);
    std::ofstream os(p, std::ios::binary);
    if (!os) throw IoError("cannot write volume payload: " + p);
    os.write(reinterpret_cast<const char*>(m.voxels.data()),
             static_cast<std::streamsize>(m.voxels.size()));
    if (!os) throw IoError("write failed: " + p);
}

std::string volume_digest(const std::string& header_path) {
    const VolumeHeader h = parse_header(header_path);
    const size_t width = h.value_kind == ValueKind::hounsfield_int16 ? 2 : 1;
    const auto bytes = read_payload(header_path, h, width);
    // FNV-1a over dims, spacing, and payload
    uint64_t hash = 1469598103934665603ULL;
    auto mix = [&hash](const void* data, size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < n; ++i) {
            hash ^= p[i];
            hash *= 1099511628211ULL;
        }
    };
    mix(h.dims.data(), sizeof h.dims);
    mix(h.spacing_mm.data(), sizeof h.spacing_mm);
    mix(bytes.data(), bytes.size());
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return std::string(buf);
}

}  // namespace lp::ingest
