#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "dxagent/domain/domain.hpp"

namespace dxagent::nifti {

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kHeaderBlock = 352;  // header + 4-byte extension flag
inline constexpr std::array<std::int32_t, 3> kMni152Dims{182, 218, 182};

enum class Endianness { little, big };

struct Header {
    std::int32_t sizeof_hdr = 348;
    std::int32_t ndim = 3;
    std::array<std::int32_t, 4> dims{1, 1, 1, 1};  // nx, ny, nz, nt
    std::int16_t datatype_code = 16;               // DT_FLOAT32
    std::int16_t bitpix = 32;
    std::array<float, 3> voxel_sizes{1.0f, 1.0f, 1.0f};  // mm
    float vox_offset = 352.0f;
    std::array<char, 4> magic{'n', '+', '1', '\0'};
    Endianness endianness = Endianness::little;

    bool single_file() const noexcept { return magic[1] == '+'; }
    bool operator==(const Header&) const = default;
};

/// Parses the 348-byte header from the start of `bytes`, inflating gzip
/// input first. Byte order is detected from sizeof_hdr. Voxel data is never
/// touched.
Header parse_header(std::string_view bytes);

/// Reads at most the header block from disk (plain or .gz).
Header read_header(const std::filesystem::path& path);

/// Serializes a header (plus a zero extension flag) to a 352-byte block in
/// the header's own byte order.
std::string encode_header(const Header& header);

/// Exclusion rules for preprocessed structural scans: 2D and 4D inputs are
/// violations; a non-MNI152 grid is only a notice.
ValidationReport validate_preprocessed_mri(const Header& header);

}  // namespace dxagent::nifti
