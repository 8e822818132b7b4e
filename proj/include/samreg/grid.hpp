#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "samreg/errors.hpp"

namespace samreg {

/// Extent per axis, ordered (slice, row, col) in 3D and (row, col) in 2D.
using Extent = std::vector<std::size_t>;

namespace detail {

inline std::size_t numel(const Extent& dims) {
    std::size_t n = 1;
    for (std::size_t d : dims) n *= d;
    return n;
}

/// Row-major strides; last axis is contiguous.
inline std::array<std::size_t, 3> strides(const Extent& dims) {
    std::array<std::size_t, 3> s{0, 0, 0};
    std::size_t acc = 1;
    for (std::size_t a = dims.size(); a-- > 0;) {
        s[a] = acc;
        acc *= dims[a];
    }
    return s;
}

inline void check_dims(const Extent& dims, const char* what) {
    if (dims.size() != 2 && dims.size() != 3)
        throw dimension_error(std::string(what) + ": expected 2 or 3 axes, got " +
                              std::to_string(dims.size()));
    for (std::size_t d : dims)
        if (d < 1) throw validation_error(std::string(what) + ": every axis extent must be >= 1");
}

inline void check_same_dims(const Extent& a, const Extent& b, const char* what) {
    if (a != b) throw dimension_error(std::string(what) + ": grid extents differ");
}

} // namespace detail

/// Scalar intensity grid, 2D or 3D, with optional per-axis physical spacing.
struct GridImage {
    Extent dims;
    std::vector<double> spacing; // physical size per axis, default 1.0
    std::vector<double> data;    // row-major

    GridImage() = default;

    GridImage(Extent d, std::vector<double> values, std::vector<double> sp = {})
        : dims(std::move(d)), spacing(std::move(sp)), data(std::move(values)) {
        detail::check_dims(dims, "GridImage");
        if (spacing.empty()) spacing.assign(dims.size(), 1.0);
        if (spacing.size() != dims.size())
            throw dimension_error("GridImage: spacing axis count differs from dims");
        for (double s : spacing)
            if (!(s > 0.0)) throw validation_error("GridImage: spacing must be > 0");
        if (data.size() != detail::numel(dims))
            throw validation_error("GridImage: data length does not match dims");
    }

    static GridImage zeros(Extent d, std::vector<double> sp = {}) {
        std::size_t n = detail::numel(d);
        return GridImage(std::move(d), std::vector<double>(n, 0.0), std::move(sp));
    }

    std::size_t size() const { return data.size(); }
    std::size_t axes() const { return dims.size(); }
};

/// Per-voxel binary membership of one ROI.
struct BinaryMask {
    Extent dims;
    std::vector<std::uint8_t> data;

    BinaryMask() = default;

    BinaryMask(Extent d, std::vector<std::uint8_t> values)
        : dims(std::move(d)), data(std::move(values)) {
        detail::check_dims(dims, "BinaryMask");
        if (data.size() != detail::numel(dims))
            throw validation_error("BinaryMask: data length does not match dims");
        for (auto& v : data) v = v ? 1 : 0;
    }

    static BinaryMask zeros(Extent d) {
        std::size_t n = detail::numel(d);
        return BinaryMask(std::move(d), std::vector<std::uint8_t>(n, 0));
    }

    /// Count of set voxels.
    std::size_t area() const {
        std::size_t a = 0;
        for (std::uint8_t v : data) a += v;
        return a;
    }

    std::size_t axes() const { return dims.size(); }
};

/// Per-voxel membership weight in [0,1]; the resampled/warped form of a mask.
struct SoftMask {
    Extent dims;
    std::vector<double> data;

    SoftMask() = default;

    SoftMask(Extent d, std::vector<double> values)
        : dims(std::move(d)), data(std::move(values)) {
        detail::check_dims(dims, "SoftMask");
        if (data.size() != detail::numel(dims))
            throw validation_error("SoftMask: data length does not match dims");
        for (double v : data)
            if (!(v >= 0.0 && v <= 1.0))
                throw validation_error("SoftMask: values must lie in [0,1]");
    }

    static SoftMask zeros(Extent d) {
        std::size_t n = detail::numel(d);
        return SoftMask(std::move(d), std::vector<double>(n, 0.0));
    }

    static SoftMask from_binary(const BinaryMask& m) {
        std::vector<double> v(m.data.size());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = m.data[i] ? 1.0 : 0.0;
        return SoftMask(m.dims, std::move(v));
    }

    double mass() const { return std::accumulate(data.begin(), data.end(), 0.0); }
    std::size_t axes() const { return dims.size(); }
};

/// Dense per-voxel displacement, one component per axis in voxel units.
/// Storage is row-major over voxels with components interleaved
/// (component-fastest), matching the grid file layout.
struct DisplacementField {
    Extent dims;
    std::vector<double> vectors;
    std::string provenance; // fitted / synthetic / imported

    DisplacementField() = default;

    DisplacementField(Extent d, std::vector<double> vec, std::string prov = "")
        : dims(std::move(d)), vectors(std::move(vec)), provenance(std::move(prov)) {
        detail::check_dims(dims, "DisplacementField");
        if (vectors.size() != detail::numel(dims) * dims.size())
            throw validation_error("DisplacementField: vector length != axes * voxel count");
        for (double v : vectors)
            if (!std::isfinite(v)) throw validation_error("DisplacementField: non-finite component");
    }

    static DisplacementField zeros(Extent d, std::string prov = "") {
        std::size_t n = detail::numel(d) * d.size();
        return DisplacementField(std::move(d), std::vector<double>(n, 0.0), std::move(prov));
    }

    std::size_t axes() const { return dims.size(); }
    std::size_t voxels() const { return detail::numel(dims); }

    double component(std::size_t voxel, std::size_t axis) const {
        return vectors[voxel * dims.size() + axis];
    }
};

} // namespace samreg
