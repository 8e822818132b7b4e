#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <queue>
#include <vector>

#include "samreg/grid.hpp"
#include "samreg/matching.hpp"

namespace samreg {

/// Produces candidate ROI masks for a 2D slice. Implementations must return
/// masks with the slice's extent; an empty list is valid.
class Segmenter {
public:
    virtual ~Segmenter() = default;
    virtual std::vector<BinaryMask> segment(const GridImage& slice) const = 0;
};

/// Builtin "everything mode" stand-in: normalize intensity, binarize at a
/// ladder of intensity quantiles, emit every 4-connected component.
struct QuantileSegmenterConfig {
    std::size_t thresholds = 8;
    double quantile_lo = 0.1;
    double quantile_hi = 0.9;

    void validate() const {
        if (thresholds < 1) throw validation_error("QuantileSegmenterConfig: thresholds >= 1");
        if (!(quantile_lo >= 0.0 && quantile_hi <= 1.0 && quantile_lo <= quantile_hi))
            throw validation_error("QuantileSegmenterConfig: bad quantile range");
    }
};

/// Outlier-removing filter: area bounds plus overlap suppression.
struct RoiFilterConfig {
    std::size_t min_area = 200;
    std::size_t max_area = 7000;
    double max_overlap_ratio = 0.8;

    void validate() const {
        if (min_area < 1 || min_area > max_area)
            throw validation_error("RoiFilterConfig: require 0 < min_area <= max_area");
        if (!(max_overlap_ratio >= 0.0 && max_overlap_ratio <= 1.0))
            throw validation_error("RoiFilterConfig: max_overlap_ratio in [0,1]");
    }
};

namespace detail {

/// Linear-interpolated quantile of the (copied, sorted) sample.
inline double quantile(std::vector<double> sorted, double p) {
    const std::size_t n = sorted.size();
    if (n == 1) return sorted[0];
    const double h = static_cast<double>(n - 1) * p;
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, n - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// 4-connected components of the set voxels, discovered in raster order.
inline std::vector<BinaryMask> connected_components_2d(const std::vector<bool>& on,
                                                       const Extent& dims) {
    const std::size_t rows = dims[0], cols = dims[1];
    std::vector<BinaryMask> out;
    std::vector<bool> visited(on.size(), false);
    for (std::size_t start = 0; start < on.size(); ++start) {
        if (!on[start] || visited[start]) continue;
        std::vector<std::uint8_t> comp(on.size(), 0);
        std::queue<std::size_t> frontier;
        frontier.push(start);
        visited[start] = true;
        while (!frontier.empty()) {
            const std::size_t i = frontier.front();
            frontier.pop();
            comp[i] = 1;
            const std::size_t r = i / cols, c = i % cols;
            const std::size_t neighbors[4] = {
                r > 0 ? i - cols : i, r + 1 < rows ? i + cols : i,
                c > 0 ? i - 1 : i, c + 1 < cols ? i + 1 : i};
            for (std::size_t nb : neighbors) {
                if (nb == i || !on[nb] || visited[nb]) continue;
                visited[nb] = true;
                frontier.push(nb);
            }
        }
        out.emplace_back(dims, std::move(comp));
    }
    return out;
}

inline std::size_t overlap_count(const BinaryMask& a, const BinaryMask& b) {
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.data.size(); ++i) n += a.data[i] & b.data[i];
    return n;
}

} // namespace detail

/// Deterministic everything-mode candidates: Q quantile thresholds over the
/// normalized intensities, one candidate per 4-connected component, ordered
/// by (threshold index, component discovery order).
inline std::vector<BinaryMask> segment_everything(const GridImage& image,
                                                  const QuantileSegmenterConfig& cfg = {}) {
    if (image.dims.size() != 2) throw dimension_error("segment_everything: expected a 2D image");
    cfg.validate();

    const auto [mn_it, mx_it] = std::minmax_element(image.data.begin(), image.data.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<double> norm(image.size(), 0.0);
    if (mx > mn)
        for (std::size_t i = 0; i < norm.size(); ++i) norm[i] = (image.data[i] - mn) / (mx - mn);

    std::vector<double> sorted = norm;
    std::sort(sorted.begin(), sorted.end());

    std::vector<BinaryMask> candidates;
    for (std::size_t q = 0; q < cfg.thresholds; ++q) {
        const double p = cfg.thresholds == 1
            ? cfg.quantile_lo
            : cfg.quantile_lo + (cfg.quantile_hi - cfg.quantile_lo) *
                  static_cast<double>(q) / static_cast<double>(cfg.thresholds - 1);
        const double level = detail::quantile(sorted, p);
        std::vector<bool> on(norm.size());
        for (std::size_t i = 0; i < norm.size(); ++i) on[i] = norm[i] >= level;
        for (auto& comp : detail::connected_components_2d(on, image.dims))
            candidates.push_back(std::move(comp));
    }
    return candidates;
}

class QuantileSegmenter : public Segmenter {
public:
    explicit QuantileSegmenter(QuantileSegmenterConfig cfg = {}) : cfg_(cfg) { cfg_.validate(); }

    std::vector<BinaryMask> segment(const GridImage& slice) const override {
        return segment_everything(slice, cfg_);
    }

private:
    QuantileSegmenterConfig cfg_;
};

/// Drop candidates outside the area bounds, then scan in order and drop any
/// mask whose overlap ratio |A..B| / min(|A|,|B|) with an already-kept mask
/// exceeds the cap. Order-stable.
inline std::vector<BinaryMask> filter_rois(const std::vector<BinaryMask>& candidates,
                                           const RoiFilterConfig& cfg = {}) {
    cfg.validate();
    std::vector<BinaryMask> kept;
    std::vector<std::size_t> kept_area;
    for (const auto& mask : candidates) {
        const std::size_t area = mask.area();
        if (area < cfg.min_area || area > cfg.max_area) continue;
        bool suppressed = false;
        for (std::size_t k = 0; k < kept.size(); ++k) {
            if (kept[k].dims != mask.dims) continue;
            const std::size_t inter = detail::overlap_count(kept[k], mask);
            const double ratio = static_cast<double>(inter) /
                                 static_cast<double>(std::min(kept_area[k], area));
            if (ratio > cfg.max_overlap_ratio) {
                suppressed = true;
                break;
            }
        }
        if (suppressed) continue;
        kept.push_back(mask);
        kept_area.push_back(area);
    }
    return kept;
}

/// Per-voxel class probability vectors over K classes.
struct PosteriorGrid {
    Extent dims;
    std::size_t classes = 0;
    std::vector<double> probs; // row-major over voxels, class-fastest

    PosteriorGrid() = default;

    PosteriorGrid(Extent d, std::size_t k, std::vector<double> values)
        : dims(std::move(d)), classes(k), probs(std::move(values)) {
        detail::check_dims(dims, "PosteriorGrid");
        if (classes < 1) throw validation_error("PosteriorGrid: class count must be >= 1");
        if (probs.size() != detail::numel(dims) * classes)
            throw validation_error("PosteriorGrid: probs length != voxels * classes");
        for (std::size_t v = 0; v < detail::numel(dims); ++v) {
            double sum = 0.0;
            for (std::size_t c = 0; c < classes; ++c) {
                const double p = probs[v * classes + c];
                if (!(p >= 0.0)) throw validation_error("PosteriorGrid: negative probability");
                sum += p;
            }
            if (std::abs(sum - 1.0) > 1e-6)
                throw validation_error("PosteriorGrid: voxel probabilities must sum to 1");
        }
    }

    std::size_t voxels() const { return detail::numel(dims); }
};

/// Voxel-wise posterior fusion: the elementwise product renormalized to sum
/// one; a contradictory all-zero product falls back to the uniform vector.
inline PosteriorGrid fuse_posteriors(const PosteriorGrid& px, const PosteriorGrid& py) {
    if (px.dims != py.dims || px.classes != py.classes)
        throw dimension_error("fuse_posteriors: grids differ in dims or class count");
    std::vector<double> out(px.probs.size(), 0.0);
    const std::size_t k = px.classes;
    for (std::size_t v = 0; v < px.voxels(); ++v) {
        double sum = 0.0;
        for (std::size_t c = 0; c < k; ++c) {
            const double p = px.probs[v * k + c] * py.probs[v * k + c];
            out[v * k + c] = p;
            sum += p;
        }
        if (sum > 0.0) {
            for (std::size_t c = 0; c < k; ++c) out[v * k + c] /= sum;
        } else {
            for (std::size_t c = 0; c < k; ++c) out[v * k + c] = 1.0 / static_cast<double>(k);
        }
    }
    return PosteriorGrid(px.dims, k, std::move(out));
}

/// Same-class correspondence: per class, the argmax region in each grid
/// forms the pair; classes empty on either side emit nothing. Class
/// identity is exact correspondence, so similarity is 1.
inline RoiPairSet posteriors_to_pairs(const PosteriorGrid& px, const PosteriorGrid& py) {
    if (px.classes != py.classes)
        throw dimension_error("posteriors_to_pairs: class count mismatch");
    const std::size_t k = px.classes;

    auto argmax_masks = [k](const PosteriorGrid& g) {
        std::vector<BinaryMask> masks;
        std::vector<std::vector<std::uint8_t>> data(k, std::vector<std::uint8_t>(g.voxels(), 0));
        for (std::size_t v = 0; v < g.voxels(); ++v) {
            std::size_t best = 0;
            for (std::size_t c = 1; c < k; ++c)
                if (g.probs[v * k + c] > g.probs[v * k + best]) best = c;
            data[best][v] = 1;
        }
        masks.reserve(k);
        for (std::size_t c = 0; c < k; ++c) masks.emplace_back(g.dims, std::move(data[c]));
        return masks;
    };

    const auto mx = argmax_masks(px);
    const auto my = argmax_masks(py);

    RoiPairSet set;
    set.config.epsilon = 0.0;
    set.config.mode = MatchMode::one_to_one;
    for (std::size_t c = 0; c < k; ++c) {
        if (mx[c].area() == 0 || my[c].area() == 0) continue;
        set.pairs.push_back({c, c, 1.0, mx[c], my[c]});
    }
    return set;
}

} // namespace samreg
