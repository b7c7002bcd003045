#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lungpipe/core/error.hpp"

// Volume container + file format. A volume on disk is a text header of
// `key: value` lines (keys: dims, spacing_mm, origin_mm, value_kind,
// data_path, optional slice_positions_mm) next to a little-endian raw payload
// in z-major order. Numbers in headers are written in shortest round-trip
// form so write(read(p)) reproduces canonical files byte for byte.

namespace lp::ingest {

enum class ValueKind { hounsfield_int16, mask_uint8 };

struct VolumeHeader {
    std::array<int64_t, 3> dims{};        // z, y, x
    std::array<double, 3> spacing_mm{};   // z, y, x
    std::array<double, 3> origin_mm{};    // z, y, x
    ValueKind value_kind = ValueKind::hounsfield_int16;
    std::string data_path;  // relative to the header file
    std::optional<std::vector<double>> slice_positions_mm;

    int64_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }
};

// HU voxels held as floats: freshly read volumes carry exact integers, while
// resampled volumes keep interpolated values. Quantization happens only on
// write.
struct CtVolume {
    VolumeHeader header;
    std::vector<float> voxels;  // [z][y][x] flattened

    float at(int64_t z, int64_t y, int64_t x) const {
        return voxels[static_cast<size_t>((z * header.dims[1] + y) * header.dims[2] + x)];
    }
    float& at(int64_t z, int64_t y, int64_t x) {
        return voxels[static_cast<size_t>((z * header.dims[1] + y) * header.dims[2] + x)];
    }
};

struct MaskVolume {
    VolumeHeader header;
    std::vector<uint8_t> voxels;  // {0,1}, [z][y][x]

    uint8_t at(int64_t z, int64_t y, int64_t x) const {
        return voxels[static_cast<size_t>((z * header.dims[1] + y) * header.dims[2] + x)];
    }
    uint8_t& at(int64_t z, int64_t y, int64_t x) {
        return voxels[static_cast<size_t>((z * header.dims[1] + y) * header.dims[2] + x)];
    }
};

struct AnyVolume {
    VolumeHeader header;
    std::optional<CtVolume> ct;     // set when value_kind is hounsfield-int16
    std::optional<MaskVolume> mask; // set when value_kind is mask-uint8
};

AnyVolume read_volume(const std::string& header_path);
CtVolume read_ct_volume(const std::string& header_path);
MaskVolume read_mask_volume(const std::string& header_path);

void write_volume(const std::string& header_path, const CtVolume& v);
void write_volume(const std::string& header_path, const MaskVolume& m);

// dims + spacing + payload hash; used for the duplicate-series rule
std::string volume_digest(const std::string& header_path);

}  // namespace lp::ingest
