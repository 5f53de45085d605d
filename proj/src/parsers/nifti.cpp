#include "dxagent/parsers/nifti.hpp"

#include <algorithm>
#include <bit>
#include <cstring>

#include "dxagent/core/error.hpp"
#include "dxagent/core/util.hpp"

namespace dxagent::nifti {

namespace {

// Standard NIfTI-1 offsets
constexpr std::size_t kOffSizeofHdr = 0;
constexpr std::size_t kOffDim = 40;
constexpr std::size_t kOffDatatype = 70;
constexpr std::size_t kOffBitpix = 72;
constexpr std::size_t kOffPixdim = 76;
constexpr std::size_t kOffVoxOffset = 108;
constexpr std::size_t kOffMagic = 344;

template <typename T>
T load(std::string_view bytes, std::size_t offset, bool swap) {
    T value;
    std::memcpy(&value, bytes.data() + offset, sizeof(T));
    if (swap) {
        auto* p = reinterpret_cast<unsigned char*>(&value);
        std::reverse(p, p + sizeof(T));
    }
    return value;
}

template <typename T>
void store(std::string& bytes, std::size_t offset, T value, bool swap) {
    auto* p = reinterpret_cast<unsigned char*>(&value);
    if (swap) std::reverse(p, p + sizeof(T));
    std::memcpy(bytes.data() + offset, p, sizeof(T));
}

constexpr bool host_is_little() { return std::endian::native == std::endian::little; }

}  // namespace

Header parse_header(std::string_view raw) {
    const std::string decoded = maybe_gunzip(raw, kHeaderBlock);
    const std::string_view bytes = decoded;
    if (bytes.size() < kHeaderSize) {
        fail(ErrorCode::TruncatedInput, "NIfTI header needs 348 bytes, got " + std::to_string(bytes.size()));
    }

    Header h;
    const auto native = load<std::int32_t>(bytes, kOffSizeofHdr, false);
    bool swap = false;
    if (native == static_cast<std::int32_t>(kHeaderSize)) {
        swap = false;
    } else if (load<std::int32_t>(bytes, kOffSizeofHdr, true) == static_cast<std::int32_t>(kHeaderSize)) {
        swap = true;
    } else {
        fail(ErrorCode::BadHeaderSize, "sizeof_hdr is " + std::to_string(native) + " in either byte order, not 348");
    }
    const bool file_little = host_is_little() != swap;
    h.endianness = file_little ? Endianness::little : Endianness::big;
    h.sizeof_hdr = 348;

    std::memcpy(h.magic.data(), bytes.data() + kOffMagic, 4);
    const bool magic_ok = (h.magic[0] == 'n' && (h.magic[1] == '+' || h.magic[1] == 'i') && h.magic[2] == '1' &&
                           h.magic[3] == '\0');
    if (!magic_ok) fail(ErrorCode::BadMagic, "magic at offset 344 is not \"n+1\\0\" or \"ni1\\0\"");

    std::array<std::int16_t, 8> dim{};
    for (std::size_t k = 0; k < 8; ++k) dim[k] = load<std::int16_t>(bytes, kOffDim + 2 * k, swap);
    if (dim[0] < 1 || dim[0] > 7) {
        fail(ErrorCode::InvalidImage, "dim[0] = " + std::to_string(dim[0]) + " outside 1..7");
    }
    h.ndim = dim[0];
    for (int k = 1; k <= h.ndim; ++k) {
        if (dim[k] < 1) fail(ErrorCode::InvalidImage, "dim[" + std::to_string(k) + "] < 1");
    }
    for (std::size_t k = 0; k < 4; ++k) {
        const int axis = static_cast<int>(k) + 1;
        h.dims[k] = axis <= h.ndim ? dim[axis] : 1;
    }
    h.datatype_code = load<std::int16_t>(bytes, kOffDatatype, swap);
    h.bitpix = load<std::int16_t>(bytes, kOffBitpix, swap);
    for (std::size_t k = 0; k < 3; ++k) h.voxel_sizes[k] = load<float>(bytes, kOffPixdim + 4 * (k + 1), swap);
    h.vox_offset = load<float>(bytes, kOffVoxOffset, swap);
    return h;
}

Header read_header(const std::filesystem::path& path) {
    return parse_header(read_file_maybe_gzip(path, kHeaderBlock));
}

std::string encode_header(const Header& h) {
    std::string bytes(kHeaderBlock, '\0');
    const bool want_little = h.endianness == Endianness::little;
    const bool swap = want_little != host_is_little();
    store<std::int32_t>(bytes, kOffSizeofHdr, 348, swap);
    std::array<std::int16_t, 8> dim{};
    dim.fill(1);
    dim[0] = static_cast<std::int16_t>(h.ndim);
    for (std::size_t k = 0; k < 4; ++k) dim[k + 1] = static_cast<std::int16_t>(h.dims[k]);
    for (std::size_t k = 0; k < 8; ++k) store<std::int16_t>(bytes, kOffDim + 2 * k, dim[k], swap);
    store<std::int16_t>(bytes, kOffDatatype, h.datatype_code, swap);
    store<std::int16_t>(bytes, kOffBitpix, h.bitpix, swap);
    store<float>(bytes, kOffPixdim, 1.0f, swap);  // qfac
    for (std::size_t k = 0; k < 3; ++k) store<float>(bytes, kOffPixdim + 4 * (k + 1), h.voxel_sizes[k], swap);
    store<float>(bytes, kOffVoxOffset, h.vox_offset, swap);
    std::memcpy(bytes.data() + kOffMagic, h.magic.data(), 4);
    return bytes;
}

ValidationReport validate_preprocessed_mri(const Header& h) {
    ValidationReport report;
    const bool flat = h.ndim < 3 || h.dims[0] == 1 || h.dims[1] == 1 || h.dims[2] == 1;
    if (flat) {
        report.violations.push_back({"dims", "2D scan excluded (calibration/localizer or single-slice acquisition)"});
    }
    if (h.ndim >= 4 && h.dims[3] > 1) {
        report.violations.push_back({"dims", "4D time series excluded (nt = " + std::to_string(h.dims[3]) + ")"});
    }
    if (h.dims[0] != kMni152Dims[0] || h.dims[1] != kMni152Dims[1] || h.dims[2] != kMni152Dims[2]) {
        report.notices.push_back("grid " + std::to_string(h.dims[0]) + "x" + std::to_string(h.dims[1]) + "x" +
                                 std::to_string(h.dims[2]) + " is not the MNI152 template 182x218x182");
    }
    return report;
}

}  // namespace dxagent::nifti
