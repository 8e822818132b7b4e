#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "samreg/grid.hpp"
#include "samreg/matching.hpp"
#include "samreg/metrics.hpp"
#include "samreg/sampling.hpp"

namespace samreg {

struct FitConfig {
    double lambda = 0.1;          // smoothness weight
    std::size_t iterations = 500; // descent step cap
    double step_size = 0.5;       // voxels per unit (max-normalized) gradient
    double convergence_tol = 1e-5;
    std::size_t convergence_window = 10;
    std::size_t max_halvings = 20; // backtracking cap per step

    void validate() const {
        if (!(lambda >= 0.0)) throw validation_error("FitConfig: lambda must be >= 0");
        if (iterations < 1) throw validation_error("FitConfig: iterations must be >= 1");
        if (!(step_size > 0.0)) throw validation_error("FitConfig: step_size must be > 0");
        if (!(convergence_tol >= 0.0)) throw validation_error("FitConfig: convergence_tol >= 0");
    }
};

struct FitReport {
    double initial_loss = 0.0;
    double final_loss = 0.0;
    double roi_loss = 0.0;        // unweighted alignment term
    double smoothness_loss = 0.0; // unweighted regularity term
    std::size_t iterations_used = 0;
    bool converged = false;
    std::vector<double> loss_history; // accepted losses, non-increasing
    std::vector<double> pair_dice;    // post-fit, per pair
    std::vector<double> pair_tre;     // post-fit, per pair, voxel units
};

struct FitResult {
    DisplacementField field;
    FitReport report;
};

namespace detail {

struct AxisRange {
    std::size_t lo = 0;
    std::size_t hi = 0; // exclusive
};

using Region = std::array<AxisRange, 3>;

/// One alignment term: reference mask a (kept fixed) and mask m to be
/// pulled back through the field.
struct SoftPair {
    SoftMask reference; // a
    SoftMask source;    // m, sampled at x + d(x)
    Region ref_bbox;
    Region src_bbox;
    double ref_sum = 0.0;
};

inline Region support_bbox(const SoftMask& mask) {
    Region box;
    const std::size_t naxes = mask.dims.size();
    for (std::size_t a = 0; a < naxes; ++a) box[a] = {mask.dims[a], 0};
    for_each_index(mask.dims, [&](const std::array<std::size_t, 3>& idx, std::size_t flat) {
        if (mask.data[flat] == 0.0) return;
        for (std::size_t a = 0; a < naxes; ++a) {
            box[a].lo = std::min(box[a].lo, idx[a]);
            box[a].hi = std::max(box[a].hi, idx[a] + 1);
        }
    });
    for (std::size_t a = 0; a < naxes; ++a)
        if (box[a].hi <= box[a].lo) box[a] = {0, 0}; // empty support
    return box;
}

inline Region dilate_clip(const Region& box, double margin, const Extent& dims) {
    Region out;
    const std::size_t m = static_cast<std::size_t>(std::ceil(margin));
    for (std::size_t a = 0; a < dims.size(); ++a) {
        if (box[a].hi == 0 && box[a].lo == 0) {
            out[a] = {0, 0};
            continue;
        }
        out[a].lo = box[a].lo > m ? box[a].lo - m : 0;
        out[a].hi = std::min(dims[a], box[a].hi + m);
    }
    return out;
}

inline Region union_region(const Region& a, const Region& b, std::size_t naxes) {
    Region out;
    for (std::size_t ax = 0; ax < naxes; ++ax) {
        const bool a_empty = a[ax].hi <= a[ax].lo;
        const bool b_empty = b[ax].hi <= b[ax].lo;
        if (a_empty && b_empty) out[ax] = {0, 0};
        else if (a_empty) out[ax] = b[ax];
        else if (b_empty) out[ax] = a[ax];
        else out[ax] = {std::min(a[ax].lo, b[ax].lo), std::max(a[ax].hi, b[ax].hi)};
    }
    return out;
}

inline bool region_empty(const Region& r, std::size_t naxes) {
    for (std::size_t a = 0; a < naxes; ++a)
        if (r[a].hi <= r[a].lo) return true;
    return false;
}

template <typename Fn>
inline void for_region(const Extent& dims, const Region& region, Fn&& fn) {
    const std::size_t naxes = dims.size();
    if (region_empty(region, naxes)) return;
    if (naxes == 2) {
        const std::size_t cols = dims[1];
        for (std::size_t r = region[0].lo; r < region[0].hi; ++r)
            for (std::size_t c = region[1].lo; c < region[1].hi; ++c)
                fn(std::array<std::size_t, 3>{r, c, 0}, r * cols + c);
    } else {
        const std::size_t rows = dims[1], cols = dims[2];
        for (std::size_t s = region[0].lo; s < region[0].hi; ++s)
            for (std::size_t r = region[1].lo; r < region[1].hi; ++r)
                for (std::size_t c = region[2].lo; c < region[2].hi; ++c)
                    fn(std::array<std::size_t, 3>{s, r, c}, (s * rows + r) * cols + c);
    }
}

inline std::vector<SoftPair> lift_pairs(const RoiPairSet& pairs, const Extent& dims) {
    if (pairs.empty()) throw empty_input_error("fit: pair set is empty");
    std::vector<SoftPair> lifted;
    lifted.reserve(pairs.size());
    for (const auto& p : pairs.pairs) {
        if (p.moving_mask.dims != dims || p.fixed_mask.dims != dims)
            throw dimension_error("fit: pair mask extent differs from field extent");
        SoftPair sp;
        sp.reference = SoftMask::from_binary(p.moving_mask);
        sp.source = SoftMask::from_binary(p.fixed_mask);
        sp.ref_bbox = support_bbox(sp.reference);
        sp.src_bbox = support_bbox(sp.source);
        sp.ref_sum = sp.reference.mass();
        lifted.push_back(std::move(sp));
    }
    return lifted;
}

struct ObjectiveEval {
    double total = 0.0;
    double roi = 0.0;
    double smooth = 0.0;
    std::vector<double> grad; // field layout; empty when not requested
};

/// The alignment-plus-smoothness objective and its analytic gradient with
/// respect to every displacement component. Per pair this is
/// 0.5*MSE(a, w) + 0.5*(1 - dice(a, w)) with w the pulled-back source mask;
/// the smoothness term is the mean squared forward difference of the field.
///
/// Sample points sitting exactly on interpolation cell boundaries have two
/// one-sided loss derivatives. The reported gradient is the steepest-descent
/// choice: the forward derivative when it is negative, the backward one when
/// it is positive, zero when the boundary is a one-sided minimum. Off the
/// boundaries this is the ordinary gradient.
inline ObjectiveEval evaluate_objective(const std::vector<SoftPair>& pairs,
                                        const DisplacementField& field, double lambda,
                                        bool want_grad) {
    const Extent& dims = field.dims;
    const std::size_t naxes = dims.size();
    const auto stride = strides(dims);
    const double n_voxels = static_cast<double>(numel(dims));

    ObjectiveEval eval;
    std::vector<double> grad_fwd, grad_bwd; // one-sided loss derivatives
    if (want_grad) {
        grad_fwd.assign(field.vectors.size(), 0.0);
        grad_bwd.assign(field.vectors.size(), 0.0);
    }

    double max_disp = 0.0;
    for (double v : field.vectors) max_disp = std::max(max_disp, std::abs(v));
    const double margin = max_disp + 2.0;

    for (const auto& pair : pairs) {
        const Region warp_region = dilate_clip(pair.src_bbox, margin, dims);
        const Region region = union_region(pair.ref_bbox, warp_region, naxes);

        // Pass 1: warped values and the global sums the Dice term needs.
        double mse_sum = 0.0, inter = 0.0, warped_sum = 0.0;
        for_region(dims, region, [&](const std::array<std::size_t, 3>& idx, std::size_t flat) {
            std::array<double, 3> p{0.0, 0.0, 0.0};
            for (std::size_t a = 0; a < naxes; ++a)
                p[a] = static_cast<double>(idx[a]) + field.vectors[flat * naxes + a];
            const double w = interp_value(pair.source.data.data(), dims, stride, p);
            const double a_val = pair.reference.data[flat];
            const double diff = a_val - w;
            mse_sum += diff * diff;
            inter += w * a_val;
            warped_sum += w;
        });

        const double mse = mse_sum / n_voxels;
        const double denom = warped_sum + pair.ref_sum + kDiceSmoothing;
        const double dice_val = 2.0 * inter / denom;
        eval.roi += 0.5 * mse + 0.5 * (1.0 - dice_val);

        if (!want_grad) continue;

        // Pass 2: chain rule through the warp. d(dice)/dw(v) depends on the
        // pass-1 sums, so the sample gradient is consumed here.
        for_region(dims, warp_region, [&](const std::array<std::size_t, 3>& idx, std::size_t flat) {
            std::array<double, 3> p{0.0, 0.0, 0.0};
            for (std::size_t a = 0; a < naxes; ++a)
                p[a] = static_cast<double>(idx[a]) + field.vectors[flat * naxes + a];
            const InterpSample s = interp_sample(pair.source.data.data(), dims, stride, p);
            const double a_val = pair.reference.data[flat];
            const double d_mse = 2.0 * (s.value - a_val) / n_voxels;
            const double d_dice = (2.0 * a_val * denom - 2.0 * inter) / (denom * denom);
            const double d_roi = 0.5 * d_mse - 0.5 * d_dice;
            for (std::size_t a = 0; a < naxes; ++a) {
                grad_fwd[flat * naxes + a] += d_roi * s.grad_hi[a];
                grad_bwd[flat * naxes + a] += d_roi * s.grad_lo[a];
            }
        });
    }

    // Smoothness: mean over components, axes and valid positions of the
    // squared forward difference; the last position per axis is omitted.
    double count = 0.0;
    for (std::size_t a = 0; a < naxes; ++a)
        count += static_cast<double>(numel(dims) / dims[a] * (dims[a] - 1));
    count *= static_cast<double>(naxes);

    double smooth_sum = 0.0;
    if (count > 0.0) {
        for_each_index(dims, [&](const std::array<std::size_t, 3>& idx, std::size_t flat) {
            for (std::size_t a = 0; a < naxes; ++a) {
                if (idx[a] + 1 >= dims[a]) continue;
                const std::size_t flat_next = flat + stride[a];
                for (std::size_t c = 0; c < naxes; ++c) {
                    const double d = field.vectors[flat_next * naxes + c] -
                                     field.vectors[flat * naxes + c];
                    smooth_sum += d * d;
                    if (want_grad) {
                        const double g = lambda * 2.0 * d / count;
                        grad_fwd[flat_next * naxes + c] += g;
                        grad_bwd[flat_next * naxes + c] += g;
                        grad_fwd[flat * naxes + c] -= g;
                        grad_bwd[flat * naxes + c] -= g;
                    }
                }
            }
        });
        eval.smooth = smooth_sum / count;
    }

    if (want_grad) {
        eval.grad.assign(field.vectors.size(), 0.0);
        for (std::size_t i = 0; i < eval.grad.size(); ++i) {
            const double fwd = grad_fwd[i], bwd = grad_bwd[i];
            if (fwd < 0.0) eval.grad[i] = fwd;       // descend by increasing
            else if (bwd > 0.0) eval.grad[i] = bwd;  // descend by decreasing
            // otherwise a one-sided minimum: leave the component at zero
        }
    }

    eval.total = eval.roi + lambda * eval.smooth;
    return eval;
}

} // namespace detail

/// Region alignment term of the objective for an existing field.
inline double roi_loss(const RoiPairSet& pairs, const DisplacementField& ddf) {
    auto lifted = detail::lift_pairs(pairs, ddf.dims);
    return detail::evaluate_objective(lifted, ddf, 0.0, false).roi;
}

/// Mean squared forward finite difference of every displacement component.
inline double smoothness_loss(const DisplacementField& ddf) {
    return detail::evaluate_objective({}, ddf, 1.0, false).smooth;
}

/// First-order descent on roi_loss + lambda * smoothness_loss from a zero
/// field. Steps are scaled so the largest gradient component moves
/// step_size voxels; backtracking halves the step whenever the loss would
/// increase. Stops at the iteration cap or when the relative loss change
/// over the convergence window drops below tolerance.
inline FitResult fit_ddf(const RoiPairSet& pairs, const Extent& dims, const FitConfig& cfg = {}) {
    cfg.validate();
    detail::check_dims(dims, "fit_ddf");
    auto lifted = detail::lift_pairs(pairs, dims);

    DisplacementField field = DisplacementField::zeros(dims, "fitted");
    auto eval = detail::evaluate_objective(lifted, field, cfg.lambda, true);
    if (!std::isfinite(eval.total))
        throw divergence_error("fit_ddf: non-finite loss at initialization");

    FitReport report;
    report.initial_loss = eval.total;
    report.loss_history.push_back(eval.total);

    std::vector<double> trial(field.vectors.size());
    for (std::size_t it = 1; it <= cfg.iterations; ++it) {
        double gmax = 0.0;
        for (double g : eval.grad) gmax = std::max(gmax, std::abs(g));
        if (!std::isfinite(gmax))
            throw divergence_error("fit_ddf: non-finite gradient at loss " +
                                   std::to_string(eval.total));
        if (gmax < 1e-15) {
            report.converged = true;
            break;
        }

        double step = cfg.step_size / gmax;
        bool accepted = false;
        detail::ObjectiveEval trial_eval;
        for (std::size_t h = 0; h <= cfg.max_halvings; ++h) {
            for (std::size_t i = 0; i < trial.size(); ++i)
                trial[i] = field.vectors[i] - step * eval.grad[i];
            DisplacementField trial_field(dims, trial, "fitted");
            trial_eval = detail::evaluate_objective(lifted, trial_field, cfg.lambda, false);
            if (std::isfinite(trial_eval.total) && trial_eval.total <= eval.total) {
                field.vectors = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break; // no decrease possible along -grad

        eval = detail::evaluate_objective(lifted, field, cfg.lambda, true);
        report.loss_history.push_back(eval.total);
        report.iterations_used = it;

        const std::size_t w = cfg.convergence_window;
        if (report.loss_history.size() > w) {
            const double before = report.loss_history[report.loss_history.size() - 1 - w];
            const double change = before - eval.total;
            if (change <= cfg.convergence_tol * std::max(std::abs(before), 1e-30)) {
                report.converged = true;
                break;
            }
        }
    }

    report.final_loss = eval.total;
    report.roi_loss = eval.roi;
    report.smoothness_loss = eval.smooth;

    for (const auto& p : pairs.pairs) {
        const SoftMask warped = warp(SoftMask::from_binary(p.fixed_mask), field);
        const SoftMask ref = SoftMask::from_binary(p.moving_mask);
        report.pair_dice.push_back(dice(ref, warped));
        // a mask warped entirely off its target has no centroid to score
        report.pair_tre.push_back(warped.mass() > 0.0
                                      ? tre(ref, warped)
                                      : std::numeric_limits<double>::infinity());
    }
    return {std::move(field), std::move(report)};
}

} // namespace samreg
