#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "samreg/ddf_fit.hpp"
#include "samreg/features.hpp"
#include "samreg/grid.hpp"
#include "samreg/matching.hpp"
#include "samreg/parallel.hpp"
#include "samreg/segmentation.hpp"

namespace samreg {

struct VolumeMatchConfig {
    std::size_t slice_range = 11; // delta-s window, in slices
    MatchConfig match;
    RoiFilterConfig filter;
    QuantileSegmenterConfig segmenter;
    FeatureConfig features;
    bool reuse_fixed_cache = true; // recompute-per-slice path kept for testing

    void validate() const {
        match.validate();
        filter.validate();
        segmenter.validate();
    }
};

/// One volume-level correspondence: slice indices plus the in-slice pair.
struct VolumePair {
    std::size_t moving_slice = 0;
    std::size_t fixed_slice = 0;
    RoiPair pair; // ids are candidate indices within their slices
};

struct VolumePairSet {
    std::vector<VolumePair> pairs;
    Extent slice_dims; // (rows, cols)
    std::size_t depth = 0;
    VolumeMatchConfig config;

    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
};

/// Copy one axial slice of a 3D volume as a 2D image.
inline GridImage extract_slice(const GridImage& volume, std::size_t s) {
    if (volume.dims.size() != 3) throw dimension_error("extract_slice: expected a 3D volume");
    if (s >= volume.dims[0]) throw index_error("extract_slice: slice outside volume");
    const std::size_t rows = volume.dims[1], cols = volume.dims[2];
    std::vector<double> data(volume.data.begin() + static_cast<std::ptrdiff_t>(s * rows * cols),
                             volume.data.begin() + static_cast<std::ptrdiff_t>((s + 1) * rows * cols));
    return GridImage({rows, cols}, std::move(data), {volume.spacing[1], volume.spacing[2]});
}

namespace detail {

struct SliceCandidates {
    std::vector<BinaryMask> masks;
    std::vector<Prototype> prototypes;
};

inline SliceCandidates slice_candidates(const GridImage& slice, const Segmenter& segmenter,
                                        const VolumeMatchConfig& cfg) {
    SliceCandidates out;
    out.masks = filter_rois(segmenter.segment(slice), cfg.filter);
    if (out.masks.empty()) return out;
    const FeatureMap fmap = extract_features(slice, cfg.features);
    out.prototypes.reserve(out.masks.size());
    for (const auto& m : out.masks) out.prototypes.push_back(compute_prototype(m, fmap));
    return out;
}

} // namespace detail

/// Per-slice correspondence search over a pair of volumes: each moving
/// slice's candidates are matched against the fixed candidates pooled from
/// the clamped window [s - delta, s + delta]. Fixed-slice candidates and
/// prototypes are computed once per volume and reused across windows; the
/// recompute path exists only to check that the cache is an identity.
inline VolumePairSet register_volume(const GridImage& moving, const GridImage& fixed,
                                     const VolumeMatchConfig& cfg, const Segmenter& segmenter) {
    if (moving.dims.size() != 3 || fixed.dims.size() != 3)
        throw dimension_error("register_volume: expected 3D volumes");
    if (moving.dims != fixed.dims)
        throw dimension_error("register_volume: volumes differ in extent");
    cfg.validate();

    const std::size_t depth = moving.dims[0];

    std::vector<detail::SliceCandidates> fixed_cache(depth);
    if (cfg.reuse_fixed_cache) {
        parallel_for(depth, [&](std::size_t lo, std::size_t hi) {
            for (std::size_t s = lo; s < hi; ++s)
                fixed_cache[s] = detail::slice_candidates(extract_slice(fixed, s),
                                                          segmenter, cfg);
        });
    }

    VolumePairSet out;
    out.slice_dims = {moving.dims[1], moving.dims[2]};
    out.depth = depth;
    out.config = cfg;

    std::vector<std::vector<VolumePair>> per_slice(depth);
    parallel_for(depth, [&](std::size_t lo_s, std::size_t hi_s) {
        for (std::size_t s = lo_s; s < hi_s; ++s) {
            const auto moving_cand =
                detail::slice_candidates(extract_slice(moving, s), segmenter, cfg);
            if (moving_cand.masks.empty()) continue;

            const std::size_t win_lo = s >= cfg.slice_range ? s - cfg.slice_range : 0;
            const std::size_t win_hi = std::min(depth - 1, s + cfg.slice_range);

            std::vector<const BinaryMask*> pool_masks;
            std::vector<Prototype> pool_protos;
            std::vector<std::pair<std::size_t, std::size_t>> pool_origin; // (slice, index)
            std::vector<detail::SliceCandidates> recomputed; // recompute-path storage
            for (std::size_t fs = win_lo; fs <= win_hi; ++fs) {
                const detail::SliceCandidates* cand;
                if (cfg.reuse_fixed_cache) {
                    cand = &fixed_cache[fs];
                } else {
                    recomputed.push_back(
                        detail::slice_candidates(extract_slice(fixed, fs), segmenter, cfg));
                    cand = &recomputed.back();
                }
                for (std::size_t k = 0; k < cand->masks.size(); ++k) {
                    pool_masks.push_back(&cand->masks[k]);
                    pool_protos.push_back(cand->prototypes[k]);
                    pool_origin.push_back({fs, k});
                }
            }
            if (pool_masks.empty()) continue;

            const SimilarityMatrix sim = similarity_matrix(moving_cand.prototypes, pool_protos);
            for (const auto& sel : select_pairs(sim, cfg.match)) {
                VolumePair vp;
                vp.moving_slice = s;
                vp.fixed_slice = pool_origin[sel.fixed].first;
                vp.pair = {sel.moving, pool_origin[sel.fixed].second, sel.similarity,
                           moving_cand.masks[sel.moving], *pool_masks[sel.fixed]};
                per_slice[s].push_back(std::move(vp));
            }
        }
    });

    // Canonical order: moving slice ascending, then similarity descending
    // with the select_pairs tie order, which per_slice already holds.
    for (auto& chunk : per_slice)
        for (auto& vp : chunk) out.pairs.push_back(std::move(vp));
    return out;
}

inline VolumePairSet register_volume(const GridImage& moving, const GridImage& fixed,
                                     const VolumeMatchConfig& cfg = {}) {
    return register_volume(moving, fixed, cfg, QuantileSegmenter(cfg.segmenter));
}

namespace detail {

inline BinaryMask embed_slice_mask(const BinaryMask& mask, std::size_t slice, std::size_t depth) {
    const std::size_t per_slice = numel(mask.dims);
    std::vector<std::uint8_t> data(per_slice * depth, 0);
    std::copy(mask.data.begin(), mask.data.end(),
              data.begin() + static_cast<std::ptrdiff_t>(slice * per_slice));
    return BinaryMask({depth, mask.dims[0], mask.dims[1]}, std::move(data));
}

} // namespace detail

/// Lift a volume pair set to 3D masks on their slices; the through-plane
/// displacement of cross-slice pairs then falls out of the ordinary fit.
inline RoiPairSet lift_to_3d(const VolumePairSet& pairs) {
    RoiPairSet out;
    out.config = pairs.config.match;
    out.config.epsilon = 0.0; // ids are per-slice, ordering already canonical
    out.config.mode = MatchMode::one_to_many;
    for (std::size_t k = 0; k < pairs.pairs.size(); ++k) {
        const auto& vp = pairs.pairs[k];
        if (vp.moving_slice >= pairs.depth || vp.fixed_slice >= pairs.depth)
            throw index_error("lift_to_3d: slice index outside volume");
        RoiPair p;
        p.moving_id = k;
        p.fixed_id = k;
        p.similarity = vp.pair.similarity;
        p.moving_mask = detail::embed_slice_mask(vp.pair.moving_mask, vp.moving_slice, pairs.depth);
        p.fixed_mask = detail::embed_slice_mask(vp.pair.fixed_mask, vp.fixed_slice, pairs.depth);
        out.pairs.push_back(std::move(p));
    }
    std::sort(out.pairs.begin(), out.pairs.end(), [](const RoiPair& a, const RoiPair& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        return a.moving_id < b.moving_id;
    });
    return out;
}

inline FitResult fit_ddf(const VolumePairSet& pairs, const Extent& dims, const FitConfig& cfg = {}) {
    return fit_ddf(lift_to_3d(pairs), dims, cfg);
}

} // namespace samreg
