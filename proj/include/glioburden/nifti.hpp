#pragma once

// NIfTI-1 single-file (.nii / .nii.gz) subset: 3D volumes of uint8, int16,
// uint16 or float32 voxels. Both byte orders are read; files are written
// little-endian. gzip is detected from the stream (0x1f 0x8b) by zlib.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <zlib.h>

#include "glioburden/error.hpp"
#include "glioburden/volume.hpp"

namespace glioburden::nifti {

inline constexpr std::size_t kHeaderSize = 348;
inline constexpr std::size_t kDefaultVoxOffset = 352;
inline constexpr std::uint64_t kMaxVoxels = std::uint64_t{1} << 32;

enum class Datatype : std::int16_t { UInt8 = 2, Int16 = 4, Float32 = 16, UInt16 = 512 };

enum class Errc {
    Io,
    BadHeaderSize,
    BadMagic,
    UnsupportedDatatype,
    BadDims,
    DimsOverflow,
    BadSpacing,
    BadScaling,
    Truncated,
    NonIntegerLabel,
    LabelOutOfRange,
    UnknownLabel,
    ValueOutOfRange,
    Mismatch,
};

inline ErrorKind kind_of(Errc e) {
    switch (e) {
        case Errc::Io: return ErrorKind::Io;
        case Errc::UnknownLabel:
        case Errc::ValueOutOfRange:
        case Errc::Mismatch: return ErrorKind::Validation;
        default: return ErrorKind::Format;
    }
}

class NiftiError : public Error {
public:
    NiftiError(Errc code, const std::string& what) : Error(kind_of(code), what), code_(code) {}
    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

struct Header {
    std::int32_t sizeof_hdr = 348;
    std::array<std::int16_t, 8> dim{};
    std::int16_t datatype = 2;
    std::int16_t bitpix = 8;
    std::array<float, 8> pixdim{};
    float vox_offset = 352.0f;
    float scl_slope = 1.0f;
    float scl_inter = 0.0f;
    std::uint8_t xyzt_units = 2;  // millimetres
    std::int16_t qform_code = 0;
    std::int16_t sform_code = 0;
    std::array<float, 6> quatern{};  // b, c, d, qoffset x, y, z
    std::array<float, 4> srow_x{}, srow_y{}, srow_z{};
    std::array<char, 80> descrip{};
    std::array<char, 4> magic{'n', '+', '1', '\0'};
    bool swapped = false;  // set by parse
};

namespace detail {

template <typename T>
T load(const std::uint8_t* p, bool swap) {
    std::array<std::uint8_t, sizeof(T)> b;
    std::memcpy(b.data(), p, sizeof(T));
    if (swap) std::reverse(b.begin(), b.end());
    return std::bit_cast<T>(b);
}

template <typename T>
void store(std::uint8_t* p, T v) {
    static_assert(std::endian::native == std::endian::little, "writer assumes a little-endian host");
    std::memcpy(p, &v, sizeof(T));
}

inline std::size_t datatype_size(std::int16_t dt) {
    switch (static_cast<Datatype>(dt)) {
        case Datatype::UInt8: return 1;
        case Datatype::Int16:
        case Datatype::UInt16: return 2;
        case Datatype::Float32: return 4;
    }
    return 0;
}

}  // namespace detail

inline Header parse_header(std::span<const std::uint8_t> raw) {
    using detail::load;
    if (raw.size() < kHeaderSize) throw NiftiError(Errc::Truncated, "NIfTI header shorter than 348 bytes");
    const auto* b = raw.data();
    Header h;
    // Byte order from dim[0], which must lie in [1, 7].
    const auto dim0 = load<std::int16_t>(b + 40, false);
    h.swapped = dim0 < 1 || dim0 > 7;
    const bool s = h.swapped;
    if (s) {
        const auto d = load<std::int16_t>(b + 40, true);
        if (d < 1 || d > 7) throw NiftiError(Errc::BadDims, "dim[0] out of range in either byte order");
    }
    h.sizeof_hdr = load<std::int32_t>(b, s);
    if (h.sizeof_hdr != 348)
        throw NiftiError(Errc::BadHeaderSize, "sizeof_hdr is " + std::to_string(h.sizeof_hdr) + ", expected 348");
    for (int i = 0; i < 8; ++i) h.dim[i] = load<std::int16_t>(b + 40 + 2 * i, s);
    h.datatype = load<std::int16_t>(b + 70, s);
    h.bitpix = load<std::int16_t>(b + 72, s);
    for (int i = 0; i < 8; ++i) h.pixdim[i] = load<float>(b + 76 + 4 * i, s);
    h.vox_offset = load<float>(b + 108, s);
    h.scl_slope = load<float>(b + 112, s);
    h.scl_inter = load<float>(b + 116, s);
    h.xyzt_units = b[123];
    std::memcpy(h.descrip.data(), b + 148, 80);
    h.qform_code = load<std::int16_t>(b + 252, s);
    h.sform_code = load<std::int16_t>(b + 254, s);
    for (int i = 0; i < 6; ++i) h.quatern[i] = load<float>(b + 256 + 4 * i, s);
    for (int i = 0; i < 4; ++i) {
        h.srow_x[i] = load<float>(b + 280 + 4 * i, s);
        h.srow_y[i] = load<float>(b + 296 + 4 * i, s);
        h.srow_z[i] = load<float>(b + 312 + 4 * i, s);
    }
    std::memcpy(h.magic.data(), b + 344, 4);

    if (std::memcmp(h.magic.data(), "n+1\0", 4) != 0) {
        if (std::memcmp(h.magic.data(), "ni1\0", 4) == 0)
            throw NiftiError(Errc::BadMagic, "header/image pairs (ni1) are not supported");
        throw NiftiError(Errc::BadMagic, "missing NIfTI-1 single-file magic");
    }
    if (detail::datatype_size(h.datatype) == 0)
        throw NiftiError(Errc::UnsupportedDatatype, "unsupported datatype " + std::to_string(h.datatype));
    if (h.dim[0] != 3) throw NiftiError(Errc::BadDims, "only 3D volumes are supported");
    for (int i = 1; i <= 3; ++i)
        if (h.dim[i] < 1) throw NiftiError(Errc::BadDims, "dim[" + std::to_string(i) + "] must be >= 1");
    for (int i = 1; i <= 3; ++i)
        if (!(h.pixdim[i] > 0.0f) || !std::isfinite(h.pixdim[i]))
            throw NiftiError(Errc::BadSpacing, "pixdim[" + std::to_string(i) + "] must be positive");
    if (!(h.vox_offset >= 352.0f) || h.vox_offset != std::floor(h.vox_offset))
        throw NiftiError(Errc::BadDims, "vox_offset must be an integer >= 352");
    return h;
}

inline std::array<std::uint8_t, kHeaderSize> serialize_header(const Header& h) {
    using detail::store;
    std::array<std::uint8_t, kHeaderSize> out{};
    auto* b = out.data();
    store<std::int32_t>(b, 348);
    b[38] = 'r';
    for (int i = 0; i < 8; ++i) store<std::int16_t>(b + 40 + 2 * i, h.dim[i]);
    store<std::int16_t>(b + 70, h.datatype);
    store<std::int16_t>(b + 72, h.bitpix);
    for (int i = 0; i < 8; ++i) store<float>(b + 76 + 4 * i, h.pixdim[i]);
    store<float>(b + 108, h.vox_offset);
    store<float>(b + 112, h.scl_slope);
    store<float>(b + 116, h.scl_inter);
    b[123] = h.xyzt_units;
    std::memcpy(b + 148, h.descrip.data(), 80);
    store<std::int16_t>(b + 252, h.qform_code);
    store<std::int16_t>(b + 254, h.sform_code);
    for (int i = 0; i < 6; ++i) store<float>(b + 256 + 4 * i, h.quatern[i]);
    for (int i = 0; i < 4; ++i) {
        store<float>(b + 280 + 4 * i, h.srow_x[i]);
        store<float>(b + 296 + 4 * i, h.srow_y[i]);
        store<float>(b + 312 + 4 * i, h.srow_z[i]);
    }
    std::memcpy(b + 344, h.magic.data(), 4);
    return out;
}

/// Number of voxels declared by the header, rejecting counts that overflow.
inline std::size_t voxel_count(const Header& h) {
    std::uint64_t n = 1;
    for (int i = 1; i <= 3; ++i) {
        n *= static_cast<std::uint64_t>(h.dim[i]);
        if (n > kMaxVoxels) throw NiftiError(Errc::DimsOverflow, "declared volume exceeds 2^32 voxels");
    }
    return static_cast<std::size_t>(n);
}

/// World axis (0 = x, 1 = y, 2 = z) that the third voxel axis mostly points
/// along, from the sform or qform. Nullopt when neither is set.
inline std::optional<int> slice_world_axis(const Header& h) {
    std::array<double, 3> col{};
    if (h.sform_code > 0) {
        col = {h.srow_x[2], h.srow_y[2], h.srow_z[2]};
    } else if (h.qform_code > 0) {
        const double b = h.quatern[0], c = h.quatern[1], d = h.quatern[2];
        const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + d * d)));
        col = {2 * (b * d + a * c), 2 * (c * d - a * b), a * a + d * d - b * b - c * c};
    } else {
        return std::nullopt;
    }
    int best = 0;
    for (int i = 1; i < 3; ++i)
        if (std::abs(col[i]) > std::abs(col[best])) best = i;
    return best;
}

struct RawImage {
    Header header;
    std::vector<std::uint8_t> payload;  // native file byte order
};

namespace detail {

class GzReader {
public:
    explicit GzReader(const std::filesystem::path& path) : path_(path.string()) {
        f_ = gzopen(path_.c_str(), "rb");
        if (!f_) throw NiftiError(Errc::Io, "cannot open '" + path_ + "'");
    }
    ~GzReader() {
        if (f_) gzclose(f_);
    }
    GzReader(const GzReader&) = delete;
    GzReader& operator=(const GzReader&) = delete;

    std::size_t read(std::uint8_t* dst, std::size_t n) {
        std::size_t got = 0;
        while (got < n) {
            const auto chunk = static_cast<unsigned>(std::min<std::size_t>(n - got, 1u << 30));
            const int r = gzread(f_, dst + got, chunk);
            if (r < 0) {
                int err = 0;
                const char* msg = gzerror(f_, &err);
                throw NiftiError(Errc::Io, "read error in '" + path_ + "': " + (msg ? msg : "?"));
            }
            if (r == 0) break;
            got += static_cast<std::size_t>(r);
        }
        return got;
    }

private:
    std::string path_;
    gzFile f_ = nullptr;
};

}  // namespace detail

/// Reads header and exactly the declared payload.
inline RawImage read_raw(const std::filesystem::path& path) {
    detail::GzReader in(path);
    std::array<std::uint8_t, kHeaderSize> hb{};
    if (in.read(hb.data(), hb.size()) != hb.size())
        throw NiftiError(Errc::Truncated, "'" + path.string() + "' is shorter than a NIfTI header");
    RawImage img{parse_header(hb), {}};
    const auto count = voxel_count(img.header);
    const auto bytes = count * detail::datatype_size(img.header.datatype);
    std::vector<std::uint8_t> skip(static_cast<std::size_t>(img.header.vox_offset) - kHeaderSize);
    if (in.read(skip.data(), skip.size()) != skip.size())
        throw NiftiError(Errc::Truncated, "'" + path.string() + "' ends before vox_offset");
    img.payload.resize(bytes);
    if (in.read(img.payload.data(), bytes) != bytes)
        throw NiftiError(Errc::Truncated, "'" + path.string() + "' voxel data is truncated");
    return img;
}

/// Voxel values as doubles, before scaling.
inline std::vector<double> decode_values(const RawImage& img) {
    const auto& h = img.header;
    const auto n = voxel_count(h);
    std::vector<double> out(n);
    const auto* p = img.payload.data();
    const bool s = h.swapped;
    switch (static_cast<Datatype>(h.datatype)) {
        case Datatype::UInt8:
            for (std::size_t i = 0; i < n; ++i) out[i] = p[i];
            break;
        case Datatype::Int16:
            for (std::size_t i = 0; i < n; ++i) out[i] = detail::load<std::int16_t>(p + 2 * i, s);
            break;
        case Datatype::UInt16:
            for (std::size_t i = 0; i < n; ++i) out[i] = detail::load<std::uint16_t>(p + 2 * i, s);
            break;
        case Datatype::Float32:
            for (std::size_t i = 0; i < n; ++i) out[i] = detail::load<float>(p + 4 * i, s);
            break;
    }
    return out;
}

inline Dims dims_of(const Header& h) {
    return {static_cast<std::size_t>(h.dim[1]), static_cast<std::size_t>(h.dim[2]),
            static_cast<std::size_t>(h.dim[3])};
}

inline Spacing spacing_of(const Header& h) { return {h.pixdim[1], h.pixdim[2], h.pixdim[3]}; }

/// Appends a warning when the affine says the third axis is not the slice axis.
inline void orientation_warnings(const Header& h, const std::string& path, std::vector<std::string>* warnings) {
    if (!warnings) return;
    if (const auto axis = slice_world_axis(h); axis && *axis != 2)
        warnings->push_back("'" + path + "': third voxel axis is not the superior-inferior axis; "
                            "measurements still use it as the slice axis");
}

inline LabelVolume read_label_volume(const std::filesystem::path& path, const LabelSemantics& semantics = {},
                                     std::vector<std::string>* warnings = nullptr) {
    const auto img = read_raw(path);
    const auto& h = img.header;
    if (!(h.scl_slope == 0.0f || h.scl_slope == 1.0f) || h.scl_inter != 0.0f)
        throw NiftiError(Errc::BadScaling, "label volumes must not be intensity-scaled");
    const auto values = decode_values(img);
    LabelVolume v(dims_of(h), spacing_of(h), semantics);
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double x = values[i];
        if (x != std::floor(x) || !std::isfinite(x))
            throw NiftiError(Errc::NonIntegerLabel, "non-integer value in label file '" + path.string() + "'");
        if (x < 0.0 || x > 255.0)
            throw NiftiError(Errc::LabelOutOfRange, "label value " + std::to_string(x) + " outside 0..255");
        const auto l = static_cast<std::uint8_t>(x);
        if (!semantics.knows(l))
            throw NiftiError(Errc::UnknownLabel, "label value " + std::to_string(l) +
                                                     " is not in the label semantics (see --labels)");
        v.labels[i] = l;
    }
    orientation_warnings(h, path.string(), warnings);
    return v;
}

inline constexpr double kProbabilityTolerance = 1e-6;

/// One probability channel per class, in ET, ED, Cavity order.
inline ProbabilityVolume read_probability_volume(const std::array<std::filesystem::path, 3>& paths) {
    ProbabilityVolume pv;
    for (std::size_t k = 0; k < 3; ++k) {
        const auto img = read_raw(paths[k]);
        const auto& h = img.header;
        const auto dims = dims_of(h);
        const auto sp = spacing_of(h);
        if (k == 0) {
            pv.dims = dims;
            pv.spacing = sp;
        } else {
            if (dims != pv.dims) throw NiftiError(Errc::Mismatch, "probability channels differ in dims");
            auto close = [](double a, double b) { return std::abs(a - b) <= 1e-5 * std::max(std::abs(a), std::abs(b)); };
            if (!close(sp.dx, pv.spacing.dx) || !close(sp.dy, pv.spacing.dy) || !close(sp.dz, pv.spacing.dz))
                throw NiftiError(Errc::Mismatch, "probability channels differ in pixdim");
        }
        const auto values = decode_values(img);
        const bool scaled = h.scl_slope != 0.0f;
        auto& ch = pv.channels[k];
        ch.resize(values.size());
        for (std::size_t i = 0; i < values.size(); ++i) {
            double x = scaled ? values[i] * h.scl_slope + h.scl_inter : values[i];
            if (!(x >= -kProbabilityTolerance && x <= 1.0 + kProbabilityTolerance))
                throw NiftiError(Errc::ValueOutOfRange, "probability " + std::to_string(x) + " outside [0, 1] in '" +
                                                            paths[k].string() + "'");
            ch[i] = static_cast<float>(std::clamp(x, 0.0, 1.0));
        }
    }
    return pv;
}

inline Header make_header(const Dims& d, const Spacing& sp, Datatype dt) {
    for (auto n : {d.nx, d.ny, d.nz})
        if (n == 0 || n > static_cast<std::size_t>(std::numeric_limits<std::int16_t>::max()))
            throw NiftiError(Errc::BadDims, "dims must lie in 1..32767 to be written");
    if (!sp.valid()) throw NiftiError(Errc::BadSpacing, "spacing must be positive");
    Header h;
    h.dim = {3, static_cast<std::int16_t>(d.nx), static_cast<std::int16_t>(d.ny), static_cast<std::int16_t>(d.nz),
             1, 1, 1, 1};
    h.datatype = static_cast<std::int16_t>(dt);
    h.bitpix = static_cast<std::int16_t>(8 * detail::datatype_size(h.datatype));
    h.pixdim = {1.0f, static_cast<float>(sp.dx), static_cast<float>(sp.dy), static_cast<float>(sp.dz), 0, 0, 0, 0};
    h.vox_offset = static_cast<float>(kDefaultVoxOffset);
    h.sform_code = 1;
    h.srow_x = {h.pixdim[1], 0, 0, 0};
    h.srow_y = {0, h.pixdim[2], 0, 0};
    h.srow_z = {0, 0, h.pixdim[3], 0};
    constexpr std::string_view tag = "glioburden";
    std::copy(tag.begin(), tag.end(), h.descrip.begin());
    return h;
}

/// Header, a zero 4-byte extension marker, then the payload. Paths ending in
/// ".gz" are gzip-compressed.
inline void write_raw(const std::filesystem::path& path, const Header& h, std::span<const std::uint8_t> payload) {
    const auto hb = serialize_header(h);
    const std::array<std::uint8_t, 4> ext{};
    const bool gz = path.extension() == ".gz";
    gzFile f = gzopen(path.string().c_str(), gz ? "wb6" : "wbT");
    if (!f) throw NiftiError(Errc::Io, "cannot open '" + path.string() + "' for writing");
    bool ok = gzwrite(f, hb.data(), static_cast<unsigned>(hb.size())) == static_cast<int>(hb.size()) &&
              gzwrite(f, ext.data(), 4) == 4;
    std::size_t done = 0;
    while (ok && done < payload.size()) {
        const auto chunk = static_cast<unsigned>(std::min<std::size_t>(payload.size() - done, 1u << 30));
        ok = gzwrite(f, payload.data() + done, chunk) == static_cast<int>(chunk);
        done += chunk;
    }
    if (gzclose(f) != Z_OK) ok = false;
    if (!ok) throw NiftiError(Errc::Io, "failed writing '" + path.string() + "'");
}

inline void write_label_volume(const LabelVolume& v, const std::filesystem::path& path) {
    if (v.labels.size() != v.dims.count()) throw NiftiError(Errc::BadDims, "label array does not match dims");
    write_raw(path, make_header(v.dims, v.spacing, Datatype::UInt8), v.labels);
}

inline void write_float_volume(const Dims& d, const Spacing& sp, std::span<const float> values,
                               const std::filesystem::path& path) {
    if (values.size() != d.count()) throw NiftiError(Errc::BadDims, "value array does not match dims");
    std::vector<std::uint8_t> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) detail::store<float>(bytes.data() + 4 * i, values[i]);
    write_raw(path, make_header(d, sp, Datatype::Float32), bytes);
}

}  // namespace glioburden::nifti
