#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "samreg/grid.hpp"
#include "samreg/sampling.hpp"

namespace samreg {

/// Reduced-resolution feature grid with a fixed-length vector per cell.
struct FeatureMap {
    Extent dims; // H' x W'
    std::size_t channels = 0;
    std::vector<double> data; // row-major over cells, channel-fastest

    FeatureMap() = default;

    FeatureMap(Extent d, std::size_t ch, std::vector<double> values)
        : dims(std::move(d)), channels(ch), data(std::move(values)) {
        if (dims.size() != 2) throw dimension_error("FeatureMap: expected 2 axes");
        if (channels < 1) throw validation_error("FeatureMap: channels must be >= 1");
        if (data.size() != detail::numel(dims) * channels)
            throw validation_error("FeatureMap: data length != cells * channels");
        for (double v : data)
            if (!std::isfinite(v)) throw validation_error("FeatureMap: non-finite value");
    }

    std::size_t cells() const { return detail::numel(dims); }

    const double* cell(std::size_t flat) const { return data.data() + flat * channels; }
};

/// Feature-space representation of one ROI: the mask-weighted mean feature.
struct Prototype {
    std::vector<double> values;
};

/// Builtin descriptor configuration. Ten channels by default: box mean and
/// standard deviation of intensity, the two central-difference gradient
/// components, gradient magnitude raw and after Gaussian smoothing at
/// sigma 1, 2 and 4 input voxels, plus two normalized cell coordinates.
/// Dropping the coordinate channels gives pure-appearance matching.
struct FeatureConfig {
    std::size_t downsample = 4;
    bool include_coords = true;
};

namespace detail {

/// Separable Gaussian blur, kernel truncated at ceil(3*sigma) and
/// renormalized at the borders so constants are preserved exactly.
inline std::vector<double> gaussian_smooth_2d(const std::vector<double>& img, const Extent& dims,
                                              double sigma) {
    const std::size_t rows = dims[0], cols = dims[1];
    const long radius = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    for (long k = -radius; k <= radius; ++k)
        kernel[static_cast<std::size_t>(k + radius)] =
            std::exp(-0.5 * (static_cast<double>(k) * k) / (sigma * sigma));

    auto pass = [&](const std::vector<double>& src, bool along_rows) {
        std::vector<double> dst(src.size());
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                const long center = along_rows ? static_cast<long>(r) : static_cast<long>(c);
                const long limit = along_rows ? static_cast<long>(rows) : static_cast<long>(cols);
                double acc = 0.0, wsum = 0.0;
                for (long k = -radius; k <= radius; ++k) {
                    const long pos = center + k;
                    if (pos < 0 || pos >= limit) continue;
                    const double w = kernel[static_cast<std::size_t>(k + radius)];
                    const std::size_t flat = along_rows
                        ? static_cast<std::size_t>(pos) * cols + c
                        : r * cols + static_cast<std::size_t>(pos);
                    acc += w * src[flat];
                    wsum += w;
                }
                dst[r * cols + c] = acc / wsum;
            }
        }
        return dst;
    };
    return pass(pass(img, true), false);
}

/// Central differences, one-sided at the borders (axis 0 = rows).
inline void gradient_2d(const std::vector<double>& img, const Extent& dims,
                        std::vector<double>& grow, std::vector<double>& gcol) {
    const std::size_t rows = dims[0], cols = dims[1];
    grow.assign(img.size(), 0.0);
    gcol.assign(img.size(), 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            if (rows > 1) {
                if (r == 0) grow[i] = img[i + cols] - img[i];
                else if (r == rows - 1) grow[i] = img[i] - img[i - cols];
                else grow[i] = 0.5 * (img[i + cols] - img[i - cols]);
            }
            if (cols > 1) {
                if (c == 0) gcol[i] = img[i + 1] - img[i];
                else if (c == cols - 1) gcol[i] = img[i] - img[i - 1];
                else gcol[i] = 0.5 * (img[i + 1] - img[i - 1]);
            }
        }
    }
}

} // namespace detail

/// Builtin deterministic feature extractor: box-downsample by the configured
/// factor and emit per-cell appearance plus coarse location channels.
inline FeatureMap extract_features(const GridImage& image, const FeatureConfig& cfg = {}) {
    if (image.dims.size() != 2) throw dimension_error("extract_features: expected a 2D image");
    const std::size_t r = cfg.downsample;
    if (r < 1) throw validation_error("extract_features: downsample factor must be >= 1");
    if (image.dims[0] < r || image.dims[1] < r)
        throw size_error("extract_features: image smaller than the downsample factor");

    const std::size_t rows = image.dims[0], cols = image.dims[1];
    const std::size_t out_rows = (rows + r - 1) / r;
    const std::size_t out_cols = (cols + r - 1) / r;

    std::vector<double> grow, gcol;
    detail::gradient_2d(image.data, image.dims, grow, gcol);
    std::vector<double> mag_raw(image.size());
    for (std::size_t i = 0; i < image.size(); ++i) mag_raw[i] = std::hypot(grow[i], gcol[i]);

    const double scales[3] = {1.0, 2.0, 4.0};
    std::vector<std::vector<double>> mag_scale(3);
    for (int s = 0; s < 3; ++s) {
        auto smooth = detail::gaussian_smooth_2d(image.data, image.dims, scales[s]);
        std::vector<double> sr, sc;
        detail::gradient_2d(smooth, image.dims, sr, sc);
        mag_scale[s].resize(image.size());
        for (std::size_t i = 0; i < image.size(); ++i)
            mag_scale[s][i] = std::hypot(sr[i], sc[i]);
    }

    const std::size_t channels = cfg.include_coords ? 10 : 8;
    std::vector<double> out(out_rows * out_cols * channels, 0.0);

    for (std::size_t br = 0; br < out_rows; ++br) {
        for (std::size_t bc = 0; bc < out_cols; ++bc) {
            const std::size_t r0 = br * r, r1 = std::min(rows, r0 + r);
            const std::size_t c0 = bc * r, c1 = std::min(cols, c0 + r);
            const double count = static_cast<double>((r1 - r0) * (c1 - c0));
            double sum = 0.0, sum2 = 0.0, sgr = 0.0, sgc = 0.0, sm = 0.0;
            double sms[3] = {0.0, 0.0, 0.0};
            for (std::size_t rr = r0; rr < r1; ++rr) {
                for (std::size_t cc = c0; cc < c1; ++cc) {
                    const std::size_t i = rr * cols + cc;
                    sum += image.data[i];
                    sum2 += image.data[i] * image.data[i];
                    sgr += grow[i];
                    sgc += gcol[i];
                    sm += mag_raw[i];
                    for (int s = 0; s < 3; ++s) sms[s] += mag_scale[s][i];
                }
            }
            const double mean = sum / count;
            const double var = std::max(0.0, sum2 / count - mean * mean);
            double* f = out.data() + (br * out_cols + bc) * channels;
            f[0] = mean;
            f[1] = std::sqrt(var);
            f[2] = sgr / count;
            f[3] = sgc / count;
            f[4] = sm / count;
            f[5] = sms[0] / count;
            f[6] = sms[1] / count;
            f[7] = sms[2] / count;
            if (cfg.include_coords) {
                f[8] = (static_cast<double>(br) + 0.5) / static_cast<double>(out_rows);
                f[9] = (static_cast<double>(bc) + 0.5) / static_cast<double>(out_cols);
            }
        }
    }
    return FeatureMap({out_rows, out_cols}, channels, std::move(out));
}

/// Mask-weighted mean of feature cells: the mask is area-fraction resampled
/// to the feature extent, then used as pooling weights.
inline Prototype compute_prototype(const BinaryMask& mask, const FeatureMap& fmap) {
    if (mask.dims.size() != fmap.dims.size())
        throw dimension_error("compute_prototype: mask axis count differs from feature map");
    const SoftMask weights = resample_mask(mask, fmap.dims);
    const double mass = weights.mass();
    if (!(mass > 0.0)) throw empty_roi_error("compute_prototype: resampled mask has zero mass");

    Prototype p;
    p.values.assign(fmap.channels, 0.0);
    for (std::size_t cell = 0; cell < fmap.cells(); ++cell) {
        const double w = weights.data[cell];
        if (w == 0.0) continue;
        const double* f = fmap.cell(cell);
        for (std::size_t c = 0; c < fmap.channels; ++c) p.values[c] += w * f[c];
    }
    for (double& v : p.values) v /= mass;
    return p;
}

} // namespace samreg
