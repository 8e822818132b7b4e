#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "samreg/features.hpp"
#include "samreg/grid.hpp"

namespace samreg {

/// In-memory form of one .rgrd file: header fields plus the raw payload.
/// Keeping the payload as bytes makes write(read(f)) reproduce f exactly.
struct GridFile {
    static constexpr std::uint32_t kVersion = 1;
    static constexpr std::uint32_t kDtypeU8 = 0;
    static constexpr std::uint32_t kDtypeF32 = 1;

    std::uint32_t dtype = kDtypeF32;
    Extent dims;
    std::uint32_t channels = 1;
    std::vector<float> spacing;
    std::vector<std::uint8_t> payload;

    std::size_t dtype_size() const { return dtype == kDtypeU8 ? 1 : 4; }

    std::size_t expected_payload() const {
        return detail::numel(dims) * channels * dtype_size();
    }
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) {
    put_u32(out, std::bit_cast<std::uint32_t>(v));
}

inline float get_f32(const std::uint8_t* p) { return std::bit_cast<float>(get_u32(p)); }

/// Write bytes to a sibling temp file, then rename over the target.
inline void write_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw io_error("cannot open for writing: " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()),
                  static_cast<std::streamsize>(bytes.size()));
        if (!out) throw io_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline void write_atomic_text(const std::filesystem::path& path, const std::string& text) {
    std::vector<std::uint8_t> bytes(text.begin(), text.end());
    write_atomic(path, bytes);
}

} // namespace detail

inline void write_grid_file(const std::filesystem::path& path, const GridFile& gf) {
    if (gf.dims.size() != 2 && gf.dims.size() != 3)
        throw io_error("write_grid_file: ndim must be 2 or 3");
    if (gf.dtype != GridFile::kDtypeU8 && gf.dtype != GridFile::kDtypeF32)
        throw io_error("write_grid_file: unknown dtype code");
    if (gf.channels < 1) throw io_error("write_grid_file: channels must be >= 1");
    if (gf.spacing.size() != gf.dims.size())
        throw io_error("write_grid_file: spacing entry per axis required");
    if (gf.payload.size() != gf.expected_payload())
        throw io_error("write_grid_file: payload length mismatch");

    std::vector<std::uint8_t> bytes;
    bytes.reserve(24 + 4 * gf.dims.size() * 2 + gf.payload.size());
    bytes.insert(bytes.end(), {'R', 'G', 'R', 'D'});
    detail::put_u32(bytes, GridFile::kVersion);
    detail::put_u32(bytes, gf.dtype);
    detail::put_u32(bytes, static_cast<std::uint32_t>(gf.dims.size()));
    for (std::size_t d : gf.dims) detail::put_u32(bytes, static_cast<std::uint32_t>(d));
    detail::put_u32(bytes, gf.channels);
    for (float s : gf.spacing) detail::put_f32(bytes, s);
    bytes.insert(bytes.end(), gf.payload.begin(), gf.payload.end());
    detail::write_atomic(path, bytes);
}

inline GridFile read_grid_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    auto need = [&](std::size_t n) {
        if (bytes.size() - pos < n) throw io_error("truncated grid file: " + path.string());
    };
    need(4);
    if (!(bytes[0] == 'R' && bytes[1] == 'G' && bytes[2] == 'R' && bytes[3] == 'D'))
        throw io_error("bad magic in: " + path.string());
    pos = 4;
    need(12);
    const std::uint32_t version = detail::get_u32(bytes.data() + pos);
    pos += 4;
    if (version != GridFile::kVersion)
        throw io_error("unsupported version in: " + path.string());
    GridFile gf;
    gf.dtype = detail::get_u32(bytes.data() + pos);
    pos += 4;
    if (gf.dtype != GridFile::kDtypeU8 && gf.dtype != GridFile::kDtypeF32)
        throw io_error("unknown dtype code in: " + path.string());
    const std::uint32_t ndim = detail::get_u32(bytes.data() + pos);
    pos += 4;
    if (ndim != 2 && ndim != 3) throw io_error("ndim must be 2 or 3 in: " + path.string());
    need(4 * ndim + 4);
    for (std::uint32_t a = 0; a < ndim; ++a) {
        gf.dims.push_back(detail::get_u32(bytes.data() + pos));
        pos += 4;
        if (gf.dims.back() < 1) throw io_error("zero axis extent in: " + path.string());
    }
    gf.channels = detail::get_u32(bytes.data() + pos);
    pos += 4;
    if (gf.channels < 1) throw io_error("channels must be >= 1 in: " + path.string());
    need(4 * ndim);
    for (std::uint32_t a = 0; a < ndim; ++a) {
        gf.spacing.push_back(detail::get_f32(bytes.data() + pos));
        pos += 4;
    }
    if (bytes.size() - pos != gf.expected_payload())
        throw io_error("payload length mismatch in: " + path.string());
    gf.payload.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return gf;
}

// --- typed conversions ----------------------------------------------------

inline GridFile from_image(const GridImage& img, std::uint32_t dtype = GridFile::kDtypeF32) {
    GridFile gf;
    gf.dtype = dtype;
    gf.dims = img.dims;
    gf.channels = 1;
    for (double s : img.spacing) gf.spacing.push_back(static_cast<float>(s));
    if (dtype == GridFile::kDtypeU8) {
        gf.payload.reserve(img.size());
        for (double v : img.data) {
            const double r = std::round(std::clamp(v, 0.0, 255.0));
            gf.payload.push_back(static_cast<std::uint8_t>(r));
        }
    } else {
        for (double v : img.data) detail::put_f32(gf.payload, static_cast<float>(v));
    }
    return gf;
}

inline GridImage to_image(const GridFile& gf) {
    if (gf.channels != 1) throw io_error("to_image: expected a single-channel grid");
    std::vector<double> data;
    data.reserve(detail::numel(gf.dims));
    if (gf.dtype == GridFile::kDtypeU8) {
        for (std::uint8_t b : gf.payload) data.push_back(static_cast<double>(b));
    } else {
        for (std::size_t i = 0; i < gf.payload.size(); i += 4)
            data.push_back(static_cast<double>(detail::get_f32(gf.payload.data() + i)));
    }
    std::vector<double> spacing(gf.spacing.begin(), gf.spacing.end());
    return GridImage(gf.dims, std::move(data), std::move(spacing));
}

inline GridFile from_mask(const BinaryMask& mask, std::vector<double> spacing = {}) {
    GridFile gf;
    gf.dtype = GridFile::kDtypeU8;
    gf.dims = mask.dims;
    gf.channels = 1;
    if (spacing.empty()) spacing.assign(mask.dims.size(), 1.0);
    for (double s : spacing) gf.spacing.push_back(static_cast<float>(s));
    gf.payload.assign(mask.data.begin(), mask.data.end());
    return gf;
}

inline BinaryMask to_mask(const GridFile& gf) {
    if (gf.channels != 1) throw io_error("to_mask: expected a single-channel grid");
    std::vector<std::uint8_t> data;
    data.reserve(detail::numel(gf.dims));
    if (gf.dtype == GridFile::kDtypeU8) {
        for (std::uint8_t b : gf.payload) data.push_back(b ? 1 : 0);
    } else {
        for (std::size_t i = 0; i < gf.payload.size(); i += 4)
            data.push_back(detail::get_f32(gf.payload.data() + i) >= 0.5f ? 1 : 0);
    }
    return BinaryMask(gf.dims, std::move(data));
}

inline GridFile from_field(const DisplacementField& field) {
    GridFile gf;
    gf.dtype = GridFile::kDtypeF32;
    gf.dims = field.dims;
    gf.channels = static_cast<std::uint32_t>(field.dims.size());
    gf.spacing.assign(field.dims.size(), 1.0f);
    for (double v : field.vectors) detail::put_f32(gf.payload, static_cast<float>(v));
    return gf;
}

inline DisplacementField to_field(const GridFile& gf, std::string provenance = "imported") {
    if (gf.channels != gf.dims.size())
        throw io_error("to_field: channel count must equal axis count");
    if (gf.dtype != GridFile::kDtypeF32) throw io_error("to_field: expected f32 payload");
    std::vector<double> vectors;
    vectors.reserve(detail::numel(gf.dims) * gf.channels);
    for (std::size_t i = 0; i < gf.payload.size(); i += 4)
        vectors.push_back(static_cast<double>(detail::get_f32(gf.payload.data() + i)));
    return DisplacementField(gf.dims, std::move(vectors), std::move(provenance));
}

inline GridFile from_feature_map(const FeatureMap& fmap) {
    GridFile gf;
    gf.dtype = GridFile::kDtypeF32;
    gf.dims = fmap.dims;
    gf.channels = static_cast<std::uint32_t>(fmap.channels);
    gf.spacing.assign(fmap.dims.size(), 1.0f);
    for (double v : fmap.data) detail::put_f32(gf.payload, static_cast<float>(v));
    return gf;
}

inline FeatureMap to_feature_map(const GridFile& gf) {
    if (gf.dims.size() != 2) throw io_error("to_feature_map: expected a 2D grid");
    if (gf.dtype != GridFile::kDtypeF32) throw io_error("to_feature_map: expected f32 payload");
    std::vector<double> data;
    data.reserve(detail::numel(gf.dims) * gf.channels);
    for (std::size_t i = 0; i < gf.payload.size(); i += 4)
        data.push_back(static_cast<double>(detail::get_f32(gf.payload.data() + i)));
    return FeatureMap(gf.dims, gf.channels, std::move(data));
}

// --- manifests --------------------------------------------------------------

/// Candidate-mask listing written by `segment`: one grid file per mask.
struct MaskRecord {
    std::string path; // relative on disk, resolved after read
    std::size_t slice = 0;
    std::size_t index = 0;
};

inline constexpr const char* kMaskManifestHeader = "#samreg-masks v1";
inline constexpr const char* kPairManifestHeader = "#samreg-pairs v1";

inline void write_mask_manifest(const std::filesystem::path& path,
                                const std::vector<MaskRecord>& records) {
    std::ostringstream out;
    out << kMaskManifestHeader << "\n";
    for (const auto& r : records)
        out << r.path << "\t" << r.slice << "\t" << r.index << "\n";
    detail::write_atomic_text(path, out.str());
}

inline std::vector<MaskRecord> read_mask_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kMaskManifestHeader)
        throw io_error("bad mask manifest header in: " + path.string());
    std::vector<MaskRecord> records;
    const auto base = path.parent_path();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        MaskRecord r;
        if (!std::getline(row, r.path, '\t')) throw io_error("bad mask record: " + line);
        std::string slice, index;
        if (!std::getline(row, slice, '\t') || !std::getline(row, index, '\t'))
            throw io_error("bad mask record: " + line);
        r.slice = static_cast<std::size_t>(std::stoull(slice));
        r.index = static_cast<std::size_t>(std::stoull(index));
        r.path = (base / r.path).string();
        records.push_back(std::move(r));
    }
    return records;
}

/// One matched pair as stored in a pair manifest.
struct PairRecord {
    std::string moving_path;
    std::string fixed_path;
    std::size_t moving_slice = 0;
    std::size_t fixed_slice = 0;
    double similarity = 0.0;
};

inline void write_pair_manifest(const std::filesystem::path& path,
                                const std::vector<PairRecord>& records) {
    std::ostringstream out;
    out << kPairManifestHeader << "\n";
    char sim[32];
    for (const auto& r : records) {
        std::snprintf(sim, sizeof sim, "%.6f", r.similarity);
        out << r.moving_path << "\t" << r.fixed_path << "\t" << r.moving_slice << "\t"
            << r.fixed_slice << "\t" << sim << "\n";
    }
    detail::write_atomic_text(path, out.str());
}

inline std::vector<PairRecord> read_pair_manifest(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open: " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != kPairManifestHeader)
        throw io_error("bad pair manifest header in: " + path.string());
    std::vector<PairRecord> records;
    const auto base = path.parent_path();
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        PairRecord r;
        std::string mv_slice, fx_slice, sim;
        if (!std::getline(row, r.moving_path, '\t') || !std::getline(row, r.fixed_path, '\t') ||
            !std::getline(row, mv_slice, '\t') || !std::getline(row, fx_slice, '\t') ||
            !std::getline(row, sim, '\t'))
            throw io_error("bad pair record: " + line);
        r.moving_slice = static_cast<std::size_t>(std::stoull(mv_slice));
        r.fixed_slice = static_cast<std::size_t>(std::stoull(fx_slice));
        r.similarity = std::stod(sim);
        r.moving_path = (base / r.moving_path).string();
        r.fixed_path = (base / r.fixed_path).string();
        records.push_back(std::move(r));
    }
    return records;
}

/// Grayscale P5 preview of a 2D image, intensity range stretched to 0..255.
inline void write_pgm(const std::filesystem::path& path, const GridImage& image) {
    if (image.dims.size() != 2) throw io_error("write_pgm: expected a 2D image");
    const auto [mn_it, mx_it] = std::minmax_element(image.data.begin(), image.data.end());
    const double mn = *mn_it, mx = *mx_it;
    const double scale = mx > mn ? 255.0 / (mx - mn) : 0.0;
    std::ostringstream head;
    head << "P5\n" << image.dims[1] << " " << image.dims[0] << "\n255\n";
    std::vector<std::uint8_t> bytes(head.str().begin(), head.str().end());
    for (double v : image.data)
        bytes.push_back(static_cast<std::uint8_t>(std::round((v - mn) * scale)));
    detail::write_atomic(path, bytes);
}

} // namespace samreg
