#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

#include "samreg/samreg.hpp"

namespace test_helpers {

using namespace samreg;

inline BinaryMask mask_of(Extent dims, std::initializer_list<std::size_t> set_flat) {
    std::vector<std::uint8_t> data(detail::numel(dims), 0);
    for (std::size_t i : set_flat) data[i] = 1;
    return BinaryMask(std::move(dims), std::move(data));
}

/// Axis-aligned box mask, bounds inclusive-exclusive per axis.
inline BinaryMask box_mask(const Extent& dims, const std::vector<std::size_t>& lo,
                           const std::vector<std::size_t>& hi) {
    std::vector<std::uint8_t> data(detail::numel(dims), 0);
    detail::for_each_index(dims, [&](const std::array<std::size_t, 3>& idx, std::size_t flat) {
        for (std::size_t a = 0; a < dims.size(); ++a)
            if (idx[a] < lo[a] || idx[a] >= hi[a]) return;
        data[flat] = 1;
    });
    return BinaryMask(dims, std::move(data));
}

inline DisplacementField constant_field(const Extent& dims, const std::vector<double>& shift) {
    const std::size_t n = detail::numel(dims);
    std::vector<double> vec(n * dims.size());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t a = 0; a < dims.size(); ++a) vec[i * dims.size() + a] = shift[a];
    return DisplacementField(dims, std::move(vec));
}

inline GridImage random_image(const Extent& dims, std::uint32_t seed) {
    std::mt19937 gen(seed);
    std::vector<double> data(detail::numel(dims));
    for (double& v : data) v = static_cast<double>(gen()) / 4294967296.0;
    return GridImage(dims, std::move(data));
}

inline BinaryMask random_mask(const Extent& dims, std::uint32_t seed, double density = 0.3) {
    std::mt19937 gen(seed);
    std::vector<std::uint8_t> data(detail::numel(dims));
    for (auto& v : data) v = (static_cast<double>(gen()) / 4294967296.0) < density ? 1 : 0;
    return BinaryMask(dims, std::move(data));
}

/// Smooth random field: per-component Gaussian-smoothed noise scaled to a
/// max absolute component value.
inline DisplacementField smooth_random_field(const Extent& dims, double amplitude, double sigma,
                                             std::uint32_t seed) {
    std::mt19937 gen(seed);
    const std::size_t n = detail::numel(dims);
    const std::size_t naxes = dims.size();
    std::vector<double> vec(n * naxes, 0.0);
    for (std::size_t a = 0; a < naxes; ++a) {
        std::vector<double> comp(n);
        std::normal_distribution<double> normal(0.0, 1.0);
        for (double& v : comp) v = normal(gen);
        comp = detail::gaussian_smooth_nd(std::move(comp), dims, sigma);
        double mx = 0.0;
        for (double v : comp) mx = std::max(mx, std::abs(v));
        const double scale = mx > 0.0 ? amplitude / mx : 0.0;
        for (std::size_t i = 0; i < n; ++i) vec[i * naxes + a] = comp[i] * scale;
    }
    return DisplacementField(dims, std::move(vec));
}

} // namespace test_helpers
