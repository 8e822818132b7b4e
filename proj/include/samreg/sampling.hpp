#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "samreg/grid.hpp"
#include "samreg/parallel.hpp"

namespace samreg {

namespace detail {

/// Multilinear sample of a scalar grid at a continuous point, with the
/// gradient w.r.t. the point. Corners outside the grid contribute zero
/// (zero padding), so a point far outside samples to 0.
///
/// The interpolant is only piecewise smooth. Away from cell boundaries
/// grad_lo == grad_hi is the ordinary gradient; exactly on a boundary they
/// are the backward and forward slopes, which descent code needs separately
/// to recognize one-sided minima.
struct InterpSample {
    double value = 0.0;
    std::array<double, 3> grad_lo{0.0, 0.0, 0.0};
    std::array<double, 3> grad_hi{0.0, 0.0, 0.0};
};

inline double interp_value(const double* data, const Extent& dims,
                           const std::array<std::size_t, 3>& stride,
                           const std::array<double, 3>& point) {
    const std::size_t naxes = dims.size();
    std::array<long, 3> base{};
    std::array<double, 3> frac{};
    for (std::size_t a = 0; a < naxes; ++a) {
        double fl = std::floor(point[a]);
        base[a] = static_cast<long>(fl);
        frac[a] = point[a] - fl;
    }
    double value = 0.0;
    const std::size_t corners = std::size_t{1} << naxes;
    for (std::size_t c = 0; c < corners; ++c) {
        bool inside = true;
        std::size_t offset = 0;
        double weight = 1.0;
        for (std::size_t a = 0; a < naxes; ++a) {
            const bool hi = (c >> a) & 1u;
            const long coord = base[a] + (hi ? 1 : 0);
            if (coord < 0 || coord >= static_cast<long>(dims[a])) {
                inside = false;
                break;
            }
            offset += static_cast<std::size_t>(coord) * stride[a];
            weight *= hi ? frac[a] : 1.0 - frac[a];
        }
        if (!inside || weight == 0.0) continue;
        value += weight * data[offset];
    }
    return value;
}

/// Points this close to a cell boundary take boundary gradient semantics;
/// descent iterates park arbitrarily near boundaries, and a one-sided slope
/// taken 1e-8 from the crossing misstates every finite step across it.
inline constexpr double kBoundarySnap = 1e-6;

inline InterpSample interp_sample(const double* data, const Extent& dims,
                                  const std::array<std::size_t, 3>& stride,
                                  const std::array<double, 3>& point) {
    const std::size_t naxes = dims.size();
    std::array<long, 3> base{};
    std::array<double, 3> frac{};
    std::array<bool, 3> boundary{false, false, false};
    for (std::size_t a = 0; a < naxes; ++a) {
        const double rounded = std::round(point[a]);
        if (std::abs(point[a] - rounded) <= kBoundarySnap) {
            base[a] = static_cast<long>(rounded);
            frac[a] = 0.0;
            boundary[a] = true;
        } else {
            const double fl = std::floor(point[a]);
            base[a] = static_cast<long>(fl);
            frac[a] = point[a] - fl;
        }
    }

    auto sample = [&](const std::array<long, 3>& coord) -> double {
        std::size_t offset = 0;
        for (std::size_t a = 0; a < naxes; ++a) {
            if (coord[a] < 0 || coord[a] >= static_cast<long>(dims[a])) return 0.0;
            offset += static_cast<std::size_t>(coord[a]) * stride[a];
        }
        return data[offset];
    };

    InterpSample out;
    out.value = interp_value(data, dims, stride, point);

    // Per axis: interpolate the cell slope over the other axes' corners; on
    // a boundary the backward slope comes from the cell below.
    const std::size_t other_corners = std::size_t{1} << (naxes - 1);
    for (std::size_t axis = 0; axis < naxes; ++axis) {
        double g_hi = 0.0, g_lo = 0.0;
        const bool on_boundary = boundary[axis];
        for (std::size_t c = 0; c < other_corners; ++c) {
            std::array<long, 3> coord{};
            double weight = 1.0;
            std::size_t bit = 0;
            for (std::size_t b = 0; b < naxes; ++b) {
                if (b == axis) continue;
                const bool hi = (c >> bit) & 1u;
                coord[b] = base[b] + (hi ? 1 : 0);
                weight *= hi ? frac[b] : 1.0 - frac[b];
                ++bit;
            }
            if (weight == 0.0) continue;
            coord[axis] = base[axis];
            const double below = sample(coord);
            coord[axis] = base[axis] + 1;
            const double above = sample(coord);
            g_hi += weight * (above - below);
            if (on_boundary) {
                coord[axis] = base[axis] - 1;
                g_lo += weight * (below - sample(coord));
            }
        }
        out.grad_hi[axis] = g_hi;
        out.grad_lo[axis] = on_boundary ? g_lo : g_hi;
    }
    return out;
}

/// Per-axis overlap table for area-fraction resampling: for each output
/// index, the covered input indices with their overlap lengths.
inline std::vector<std::vector<std::pair<std::size_t, double>>>
coverage_table(std::size_t in, std::size_t out) {
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    std::vector<std::vector<std::pair<std::size_t, double>>> table(out);
    for (std::size_t j = 0; j < out; ++j) {
        const double lo = j * scale;
        const double hi = (j + 1) * scale;
        std::size_t first = static_cast<std::size_t>(std::floor(lo));
        for (std::size_t i = first; i < in && static_cast<double>(i) < hi; ++i) {
            double ov = std::min(hi, static_cast<double>(i + 1)) - std::max(lo, static_cast<double>(i));
            if (ov > 0.0) table[j].push_back({i, ov});
        }
    }
    return table;
}

inline void for_each_index(const Extent& dims,
                           const std::function<void(const std::array<std::size_t, 3>&, std::size_t)>& fn) {
    const std::size_t naxes = dims.size();
    std::array<std::size_t, 3> idx{0, 0, 0};
    const std::size_t n = numel(dims);
    for (std::size_t flat = 0; flat < n; ++flat) {
        fn(idx, flat);
        for (std::size_t a = naxes; a-- > 0;) {
            if (++idx[a] < dims[a]) break;
            idx[a] = 0;
        }
    }
}

} // namespace detail

/// Area-fraction resampling of a binary mask onto a new extent: each output
/// voxel holds the fraction of its covered input volume that is set. Total
/// mass times the volume ratio is conserved.
inline SoftMask resample_mask(const BinaryMask& mask, const Extent& target_dims) {
    if (target_dims.size() != mask.dims.size())
        throw dimension_error("resample_mask: target axis count differs from mask");
    detail::check_dims(target_dims, "resample_mask");

    const std::size_t naxes = mask.dims.size();
    std::vector<std::vector<std::vector<std::pair<std::size_t, double>>>> tables(naxes);
    double cell_volume = 1.0;
    for (std::size_t a = 0; a < naxes; ++a) {
        tables[a] = detail::coverage_table(mask.dims[a], target_dims[a]);
        cell_volume *= static_cast<double>(mask.dims[a]) / static_cast<double>(target_dims[a]);
    }
    const auto in_stride = detail::strides(mask.dims);

    std::vector<double> out(detail::numel(target_dims), 0.0);
    detail::for_each_index(target_dims, [&](const std::array<std::size_t, 3>& idx, std::size_t flat) {
        double covered = 0.0;
        if (naxes == 2) {
            for (const auto& [i0, w0] : tables[0][idx[0]])
                for (const auto& [i1, w1] : tables[1][idx[1]]) {
                    if (mask.data[i0 * in_stride[0] + i1]) covered += w0 * w1;
                }
        } else {
            for (const auto& [i0, w0] : tables[0][idx[0]])
                for (const auto& [i1, w1] : tables[1][idx[1]])
                    for (const auto& [i2, w2] : tables[2][idx[2]]) {
                        if (mask.data[i0 * in_stride[0] + i1 * in_stride[1] + i2])
                            covered += w0 * w1 * w2;
                    }
        }
        out[flat] = std::clamp(covered / cell_volume, 0.0, 1.0);
    });
    return SoftMask(target_dims, std::move(out));
}

namespace detail {

inline void check_warp_args(const Extent& src_dims, const DisplacementField& ddf) {
    check_same_dims(src_dims, ddf.dims, "warp");
    for (double v : ddf.vectors)
        if (!std::isfinite(v)) throw validation_error("warp: non-finite displacement");
}

/// Pull-back warp core: out(x) = src(x + d(x)).
inline std::vector<double> warp_values(const std::vector<double>& src, const Extent& dims,
                                       const DisplacementField& ddf) {
    const std::size_t naxes = dims.size();
    const auto stride = strides(dims);
    const std::size_t n = numel(dims);
    std::vector<double> out(n, 0.0);

    std::vector<std::array<std::size_t, 3>> coords(n);
    for_each_index(dims, [&](const std::array<std::size_t, 3>& idx, std::size_t flat) {
        coords[flat] = idx;
    });
    parallel_for(n, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t flat = lo; flat < hi; ++flat) {
            std::array<double, 3> p{0.0, 0.0, 0.0};
            for (std::size_t a = 0; a < naxes; ++a)
                p[a] = static_cast<double>(coords[flat][a]) + ddf.vectors[flat * naxes + a];
            out[flat] = interp_value(src.data(), dims, stride, p);
        }
    });
    return out;
}

} // namespace detail

/// Warp an image by a displacement field (multilinear, zero padding).
inline GridImage warp(const GridImage& source, const DisplacementField& ddf) {
    detail::check_warp_args(source.dims, ddf);
    return GridImage(source.dims, detail::warp_values(source.data, source.dims, ddf), source.spacing);
}

/// Warp a soft mask; output stays in [0,1] (convex combination of members).
inline SoftMask warp(const SoftMask& source, const DisplacementField& ddf) {
    detail::check_warp_args(source.dims, ddf);
    auto values = detail::warp_values(source.data, source.dims, ddf);
    for (double& v : values) v = std::clamp(v, 0.0, 1.0);
    return SoftMask(source.dims, std::move(values));
}

} // namespace samreg
