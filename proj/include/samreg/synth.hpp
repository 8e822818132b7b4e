#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <vector>

#include "samreg/grid.hpp"
#include "samreg/matching.hpp"
#include "samreg/metrics.hpp"
#include "samreg/sampling.hpp"
#include "samreg/volume.hpp"

namespace samreg {

namespace detail {

/// Explicit uniform/normal draws on top of mt19937 so generated cases do not
/// depend on the standard library's distribution implementations.
class SynthRng {
public:
    explicit SynthRng(std::uint32_t seed) : gen_(seed) {}

    double uniform() { return static_cast<double>(gen_()) * (1.0 / 4294967296.0); }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        // Box-Muller; the tiny offset keeps the log argument positive.
        const double u1 = uniform() + 1e-12;
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

private:
    std::mt19937 gen_;
};

/// Separable Gaussian smoothing along every axis of a 2D/3D scalar grid,
/// kernel truncated at 3 sigma and renormalized at the borders.
inline std::vector<double> gaussian_smooth_nd(std::vector<double> values, const Extent& dims,
                                              double sigma) {
    if (!(sigma > 0.0)) return values;
    const long radius = static_cast<long>(std::ceil(3.0 * sigma));
    std::vector<double> kernel(static_cast<std::size_t>(2 * radius + 1));
    for (long k = -radius; k <= radius; ++k)
        kernel[static_cast<std::size_t>(k + radius)] =
            std::exp(-0.5 * static_cast<double>(k) * static_cast<double>(k) / (sigma * sigma));

    const auto stride = strides(dims);
    std::vector<double> next(values.size());
    for (std::size_t axis = 0; axis < dims.size(); ++axis) {
        const long extent = static_cast<long>(dims[axis]);
        for_each_index(dims, [&](const std::array<std::size_t, 3>& idx, std::size_t flat) {
            const long center = static_cast<long>(idx[axis]);
            double acc = 0.0, wsum = 0.0;
            for (long k = -radius; k <= radius; ++k) {
                const long pos = center + k;
                if (pos < 0 || pos >= extent) continue;
                const double w = kernel[static_cast<std::size_t>(k + radius)];
                const long off = static_cast<long>(flat) + k * static_cast<long>(stride[axis]);
                acc += w * values[static_cast<std::size_t>(off)];
                wsum += w;
            }
            next[flat] = acc / wsum;
        });
        values.swap(next);
    }
    return values;
}

} // namespace detail

/// Recipe for one synthetic registration case.
struct SynthSpec {
    Extent dims{128, 128};
    std::size_t blob_count = 6;
    double radius_min = 13.0;
    double radius_max = 15.0;
    double amplitude = 0.0;  // max |d| of the ground-truth field, voxels
    double smoothness = 16.0; // sigma of the field's Gaussian kernel, voxels
    std::uint32_t seed = 0;

    void validate() const {
        detail::check_dims(dims, "SynthSpec");
        if (blob_count < 1 || blob_count > 8)
            throw validation_error("SynthSpec: blob_count must be in [1,8] to keep intensity "
                                   "levels separated by 0.1");
        if (!(radius_min > 0.0 && radius_min <= radius_max))
            throw validation_error("SynthSpec: bad radius range");
        if (!(amplitude >= 0.0)) throw validation_error("SynthSpec: amplitude must be >= 0");
        for (std::size_t d : dims)
            if (static_cast<double>(d) < 4.0 * radius_max)
                throw validation_error("SynthSpec: blobs with margin do not fit the extent");
    }
};

/// Ground-truth bijection between moving and fixed mask ids.
struct PairingOracle {
    std::vector<std::pair<std::size_t, std::size_t>> pairs;
    std::size_t moving_count = 0;
    std::size_t fixed_count = 0;
};

/// Id value for a predicted mask that matches no ground-truth mask.
inline constexpr std::size_t kUnresolvedId = std::numeric_limits<std::size_t>::max();

struct SynthCase {
    GridImage moving;
    GridImage fixed;
    std::vector<BinaryMask> moving_masks;
    std::vector<BinaryMask> fixed_masks;
    DisplacementField truth;
    PairingOracle oracle;
};

/// Deterministic synthetic case: intensity-coded non-overlapping blobs, a
/// Gaussian-smoothed noise field rescaled to the requested amplitude, and
/// fixed data rendered by warping the moving data with that field.
inline SynthCase generate(const SynthSpec& spec) {
    spec.validate();
    detail::SynthRng rng(spec.seed);
    const std::size_t naxes = spec.dims.size();
    const std::size_t n = detail::numel(spec.dims);

    struct Blob {
        std::vector<double> center;
        double radius;
    };
    std::vector<Blob> blobs;
    for (std::size_t k = 0; k < spec.blob_count; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            Blob b;
            b.radius = rng.uniform(spec.radius_min, spec.radius_max);
            b.center.resize(naxes);
            for (std::size_t a = 0; a < naxes; ++a)
                b.center[a] = rng.uniform(b.radius + 1.0,
                                          static_cast<double>(spec.dims[a]) - b.radius - 2.0);
            bool clear = true;
            for (const auto& other : blobs) {
                double sq = 0.0;
                for (std::size_t a = 0; a < naxes; ++a) {
                    const double d = b.center[a] - other.center[a];
                    sq += d * d;
                }
                if (std::sqrt(sq) < b.radius + other.radius + 2.0) {
                    clear = false;
                    break;
                }
            }
            if (clear) {
                blobs.push_back(std::move(b));
                placed = true;
            }
        }
        if (!placed)
            throw placement_error("generate: could not place blob " + std::to_string(k) +
                                  " in 1000 attempts");
    }

    SynthCase out;
    out.moving = GridImage::zeros(spec.dims);
    for (std::size_t k = 0; k < blobs.size(); ++k) {
        const double intensity = 0.3 + 0.1 * static_cast<double>(k);
        std::vector<std::uint8_t> mask(n, 0);
        detail::for_each_index(spec.dims, [&](const std::array<std::size_t, 3>& idx,
                                              std::size_t flat) {
            double sq = 0.0;
            for (std::size_t a = 0; a < naxes; ++a) {
                const double d = static_cast<double>(idx[a]) - blobs[k].center[a];
                sq += d * d;
            }
            if (sq <= blobs[k].radius * blobs[k].radius) {
                mask[flat] = 1;
                out.moving.data[flat] = intensity;
            }
        });
        out.moving_masks.emplace_back(spec.dims, std::move(mask));
    }

    // Ground-truth field: smoothed white noise rescaled to the amplitude.
    std::vector<double> vectors(n * naxes, 0.0);
    if (spec.amplitude > 0.0) {
        std::vector<std::vector<double>> comps(naxes, std::vector<double>(n));
        for (std::size_t a = 0; a < naxes; ++a) {
            for (std::size_t i = 0; i < n; ++i) comps[a][i] = rng.normal();
            comps[a] = detail::gaussian_smooth_nd(std::move(comps[a]), spec.dims, spec.smoothness);
        }
        double max_norm = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double sq = 0.0;
            for (std::size_t a = 0; a < naxes; ++a) sq += comps[a][i] * comps[a][i];
            max_norm = std::max(max_norm, std::sqrt(sq));
        }
        if (max_norm > 0.0) {
            const double scale = spec.amplitude / max_norm;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t a = 0; a < naxes; ++a)
                    vectors[i * naxes + a] = comps[a][i] * scale;
        }
    }
    out.truth = DisplacementField(spec.dims, std::move(vectors), "synthetic");

    out.fixed = warp(out.moving, out.truth);
    for (std::size_t k = 0; k < out.moving_masks.size(); ++k) {
        const SoftMask warped = warp(SoftMask::from_binary(out.moving_masks[k]), out.truth);
        std::vector<std::uint8_t> bin(n, 0);
        for (std::size_t i = 0; i < n; ++i) bin[i] = warped.data[i] >= 0.5 ? 1 : 0;
        out.fixed_masks.emplace_back(spec.dims, std::move(bin));
        out.oracle.pairs.push_back({k, k});
    }
    out.oracle.moving_count = out.moving_masks.size();
    out.oracle.fixed_count = out.fixed_masks.size();
    return out;
}

/// Fraction of predicted (moving id, fixed id) pairs present in the oracle
/// bijection; an empty prediction scores 0 by convention. kUnresolvedId
/// marks predictions that match no ground-truth mask and counts as wrong.
inline double score_pairing(const std::vector<std::pair<std::size_t, std::size_t>>& predicted,
                            const PairingOracle& truth) {
    if (predicted.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& [mv, fx] : predicted) {
        if (mv == kUnresolvedId || fx == kUnresolvedId) continue;
        if (mv >= truth.moving_count || fx >= truth.fixed_count)
            throw id_error("score_pairing: id does not belong to this case");
        for (const auto& [tm, tf] : truth.pairs) {
            if (tm == mv && tf == fx) {
                ++correct;
                break;
            }
        }
    }
    return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

inline double score_pairing(const RoiPairSet& predicted, const PairingOracle& truth) {
    std::vector<std::pair<std::size_t, std::size_t>> ids;
    ids.reserve(predicted.size());
    for (const auto& p : predicted.pairs) ids.push_back({p.moving_id, p.fixed_id});
    return score_pairing(ids, truth);
}

namespace detail {

inline std::size_t resolve_mask(const BinaryMask& mask, const std::vector<BinaryMask>& truth) {
    std::size_t best = kUnresolvedId;
    double best_dice = 0.5; // below this the prediction matches nothing
    for (std::size_t k = 0; k < truth.size(); ++k) {
        const double d = dice(mask, truth[k]);
        if (d > best_dice) {
            best_dice = d;
            best = k;
        }
    }
    return best;
}

} // namespace detail

/// Map pipeline-produced pairs onto case mask ids by best mask overlap, for
/// scoring predictions whose candidates came from a segmenter rather than
/// from the case's own mask lists.
inline std::vector<std::pair<std::size_t, std::size_t>> resolve_pair_ids(const RoiPairSet& predicted,
                                                                         const SynthCase& c) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    out.reserve(predicted.size());
    for (const auto& p : predicted.pairs)
        out.push_back({detail::resolve_mask(p.moving_mask, c.moving_masks),
                       detail::resolve_mask(p.fixed_mask, c.fixed_masks)});
    return out;
}

/// Synthetic volume pair with a known through-plane shift: fixed slice
/// s + offset is a copy of moving slice s. Blob ids are global, so a
/// correct volume pair must land on the shifted slice.
struct SynthVolumeCase {
    GridImage moving;
    GridImage fixed;
    std::vector<std::vector<BinaryMask>> moving_slice_masks; // [slice][local]
    std::vector<std::vector<BinaryMask>> fixed_slice_masks;
    std::vector<std::vector<std::size_t>> moving_slice_ids; // global blob ids
    std::vector<std::vector<std::size_t>> fixed_slice_ids;
    std::size_t slice_offset = 0;
};

inline SynthVolumeCase make_shifted_volume(std::size_t depth, std::size_t rows, std::size_t cols,
                                           std::size_t populated_slices, std::size_t blobs_per_slice,
                                           std::size_t slice_offset, std::uint32_t seed) {
    if (populated_slices + slice_offset > depth)
        throw validation_error("make_shifted_volume: populated slices overflow the depth");
    if (blobs_per_slice < 1 || blobs_per_slice > 6)
        throw validation_error("make_shifted_volume: blobs_per_slice must be in [1,6]");

    detail::SynthRng rng(seed);
    SynthVolumeCase out;
    out.slice_offset = slice_offset;
    out.moving = GridImage::zeros({depth, rows, cols});
    out.fixed = GridImage::zeros({depth, rows, cols});
    out.moving_slice_masks.resize(depth);
    out.fixed_slice_masks.resize(depth);
    out.moving_slice_ids.resize(depth);
    out.fixed_slice_ids.resize(depth);

    const double radius = 14.0;
    std::size_t next_id = 0;
    for (std::size_t s = 0; s < populated_slices; ++s) {
        std::vector<std::array<double, 2>> centers;
        for (std::size_t k = 0; k < blobs_per_slice; ++k) {
            bool placed = false;
            for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
                std::array<double, 2> c{
                    rng.uniform(radius + 1.0, static_cast<double>(rows) - radius - 2.0),
                    rng.uniform(radius + 1.0, static_cast<double>(cols) - radius - 2.0)};
                bool clear = true;
                for (const auto& other : centers)
                    if (std::hypot(c[0] - other[0], c[1] - other[1]) < 2.0 * radius + 2.0)
                        clear = false;
                if (clear) {
                    centers.push_back(c);
                    placed = true;
                }
            }
            if (!placed) throw placement_error("make_shifted_volume: blob placement failed");
        }
        for (std::size_t k = 0; k < blobs_per_slice; ++k) {
            const double intensity = 0.4 + 0.2 * static_cast<double>(k);
            std::vector<std::uint8_t> mask(rows * cols, 0);
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t c = 0; c < cols; ++c) {
                    const double dr = static_cast<double>(r) - centers[k][0];
                    const double dc = static_cast<double>(c) - centers[k][1];
                    if (dr * dr + dc * dc <= radius * radius) mask[r * cols + c] = 1;
                }
            const std::size_t mv_base = s * rows * cols;
            const std::size_t fx_base = (s + slice_offset) * rows * cols;
            for (std::size_t i = 0; i < rows * cols; ++i) {
                if (!mask[i]) continue;
                out.moving.data[mv_base + i] = intensity;
                out.fixed.data[fx_base + i] = intensity;
            }
            BinaryMask m({rows, cols}, std::move(mask));
            out.moving_slice_masks[s].push_back(m);
            out.moving_slice_ids[s].push_back(next_id);
            out.fixed_slice_masks[s + slice_offset].push_back(std::move(m));
            out.fixed_slice_ids[s + slice_offset].push_back(next_id);
            ++next_id;
        }
    }
    return out;
}

/// Fraction of volume pairs whose masks resolve to the same global blob on
/// both sides; empty predictions score 0.
inline double score_volume_pairing(const VolumePairSet& predicted, const SynthVolumeCase& c) {
    if (predicted.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& vp : predicted.pairs) {
        if (vp.moving_slice >= c.moving_slice_masks.size() ||
            vp.fixed_slice >= c.fixed_slice_masks.size())
            throw id_error("score_volume_pairing: slice outside the case volume");
        const std::size_t mv = detail::resolve_mask(vp.pair.moving_mask,
                                                    c.moving_slice_masks[vp.moving_slice]);
        const std::size_t fx = detail::resolve_mask(vp.pair.fixed_mask,
                                                    c.fixed_slice_masks[vp.fixed_slice]);
        if (mv == kUnresolvedId || fx == kUnresolvedId) continue;
        if (c.moving_slice_ids[vp.moving_slice][mv] == c.fixed_slice_ids[vp.fixed_slice][fx])
            ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predicted.size());
}

} // namespace samreg
