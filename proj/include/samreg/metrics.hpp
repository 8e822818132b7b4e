#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <vector>

#include "samreg/grid.hpp"
#include "samreg/sampling.hpp"

namespace samreg {

/// Smoothing constant in the Dice denominator; keeps empty-vs-empty defined.
inline constexpr double kDiceSmoothing = 1e-7;

namespace detail {

inline std::vector<double> centroid_of(const std::vector<double>& weights, const Extent& dims,
                                       const char* what) {
    const std::size_t naxes = dims.size();
    double mass = 0.0;
    std::vector<double> acc(naxes, 0.0);
    for_each_index(dims, [&](const std::array<std::size_t, 3>& idx, std::size_t flat) {
        const double w = weights[flat];
        if (w == 0.0) return;
        mass += w;
        for (std::size_t a = 0; a < naxes; ++a) acc[a] += w * static_cast<double>(idx[a]);
    });
    if (!(mass > 0.0)) throw empty_roi_error(std::string(what) + ": mask has zero mass");
    for (double& v : acc) v /= mass;
    return acc;
}

inline double dice_of(const std::vector<double>& a, const std::vector<double>& b) {
    double inter = 0.0, sa = 0.0, sb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        inter += a[i] * b[i];
        sa += a[i];
        sb += b[i];
    }
    return 2.0 * inter / (sa + sb + kDiceSmoothing);
}

} // namespace detail

/// Mass-weighted mean coordinate per axis, in continuous voxel coordinates.
inline std::vector<double> centroid(const BinaryMask& mask) {
    return detail::centroid_of(SoftMask::from_binary(mask).data, mask.dims, "centroid");
}

inline std::vector<double> centroid(const SoftMask& mask) {
    return detail::centroid_of(mask.data, mask.dims, "centroid");
}

/// Soft Dice overlap: 2*sum(a*b) / (sum(a) + sum(b) + tau). On binary inputs
/// this is the standard overlap Dice.
inline double dice(const SoftMask& a, const SoftMask& b) {
    detail::check_same_dims(a.dims, b.dims, "dice");
    return detail::dice_of(a.data, b.data);
}

inline double dice(const BinaryMask& a, const BinaryMask& b) {
    detail::check_same_dims(a.dims, b.dims, "dice");
    return detail::dice_of(SoftMask::from_binary(a).data, SoftMask::from_binary(b).data);
}

inline double dice(const BinaryMask& a, const SoftMask& b) {
    detail::check_same_dims(a.dims, b.dims, "dice");
    return detail::dice_of(SoftMask::from_binary(a).data, b.data);
}

inline double dice(const SoftMask& a, const BinaryMask& b) { return dice(b, a); }

namespace detail {

inline double tre_of(const std::vector<double>& ca, const std::vector<double>& cb,
                     const std::vector<double>& spacing) {
    if (spacing.size() != ca.size())
        throw dimension_error("tre: spacing axis count differs from masks");
    double sq = 0.0;
    for (std::size_t a = 0; a < ca.size(); ++a) {
        const double d = (ca[a] - cb[a]) * spacing[a];
        sq += d * d;
    }
    return std::sqrt(sq);
}

} // namespace detail

/// Target registration error: Euclidean distance between spacing-scaled
/// centroids of a matched mask pair.
template <typename MaskA, typename MaskB>
inline double tre(const MaskA& a, const MaskB& b, std::vector<double> spacing = {}) {
    detail::check_same_dims(a.dims, b.dims, "tre");
    if (spacing.empty()) spacing.assign(a.dims.size(), 1.0);
    return detail::tre_of(centroid(a), centroid(b), spacing);
}

} // namespace samreg
