#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "samreg/features.hpp"
#include "samreg/grid.hpp"
#include "samreg/parallel.hpp"

namespace samreg {

/// Kx-by-Ky matrix of absolute cosine similarities in [0,1].
struct SimilarityMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> values;

    double at(std::size_t i, std::size_t j) const { return values[i * cols + j]; }
    double& at(std::size_t i, std::size_t j) { return values[i * cols + j]; }
};

enum class MatchMode { one_to_one, one_to_many };

inline std::string to_string(MatchMode m) {
    return m == MatchMode::one_to_one ? "one-to-one" : "one-to-many";
}

struct MatchConfig {
    double epsilon = 0.8; // minimum similarity, strict
    std::optional<std::size_t> quantity_limit;
    MatchMode mode = MatchMode::one_to_one;

    void validate() const {
        if (!(epsilon >= 0.0 && epsilon <= 1.0))
            throw validation_error("MatchConfig: epsilon must lie in [0,1]");
        if (quantity_limit && *quantity_limit < 1)
            throw validation_error("MatchConfig: quantity_limit must be >= 1");
    }
};

/// One selected correspondence: candidate indices, similarity, masks.
struct RoiPair {
    std::size_t moving_id = 0;
    std::size_t fixed_id = 0;
    double similarity = 0.0;
    BinaryMask moving_mask;
    BinaryMask fixed_mask;
};

/// Ordered list of matched (moving, fixed) ROI masks with similarity scores.
/// Sorted by descending similarity, ties by (moving id, fixed id) ascending.
struct RoiPairSet {
    std::vector<RoiPair> pairs;
    MatchConfig config;

    std::size_t size() const { return pairs.size(); }
    bool empty() const { return pairs.empty(); }
};

struct IndexPair {
    std::size_t moving = 0;
    std::size_t fixed = 0;
    double similarity = 0.0;
};

/// Absolute cosine similarity between every moving/fixed prototype pair.
inline SimilarityMatrix similarity_matrix(const std::vector<Prototype>& protos_x,
                                          const std::vector<Prototype>& protos_y) {
    std::size_t channels = 0;
    auto check = [&](const std::vector<Prototype>& list, const char* side) {
        for (const auto& p : list) {
            if (channels == 0) channels = p.values.size();
            if (p.values.size() != channels)
                throw dimension_error(std::string("similarity_matrix: ") + side +
                                      " prototype channel count mismatch");
            double norm2 = 0.0;
            for (double v : p.values) norm2 += v * v;
            if (!(norm2 > 0.0))
                throw degenerate_prototype_error(std::string("similarity_matrix: zero-norm ") +
                                                 side + " prototype");
        }
    };
    check(protos_x, "moving");
    check(protos_y, "fixed");

    SimilarityMatrix s;
    s.rows = protos_x.size();
    s.cols = protos_y.size();
    s.values.assign(s.rows * s.cols, 0.0);

    std::vector<double> norm_x(s.rows), norm_y(s.cols);
    for (std::size_t i = 0; i < s.rows; ++i) {
        double n = 0.0;
        for (double v : protos_x[i].values) n += v * v;
        norm_x[i] = std::sqrt(n);
    }
    for (std::size_t j = 0; j < s.cols; ++j) {
        double n = 0.0;
        for (double v : protos_y[j].values) n += v * v;
        norm_y[j] = std::sqrt(n);
    }
    parallel_for(s.rows, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            for (std::size_t j = 0; j < s.cols; ++j) {
                double dot = 0.0;
                for (std::size_t c = 0; c < channels; ++c)
                    dot += protos_x[i].values[c] * protos_y[j].values[c];
                s.at(i, j) = std::clamp(std::abs(dot) / (norm_x[i] * norm_y[j]), 0.0, 1.0);
            }
        }
    });
    return s;
}

namespace detail {

inline void sort_selection(std::vector<IndexPair>& sel) {
    std::sort(sel.begin(), sel.end(), [](const IndexPair& a, const IndexPair& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        if (a.moving != b.moving) return a.moving < b.moving;
        return a.fixed < b.fixed;
    });
}

} // namespace detail

/// Select index pairs above the similarity threshold.
///
/// one-to-one: greedy on the globally largest remaining entry, consuming its
/// row and column; ties break toward the smallest (i, j). one-to-many: the
/// per-row argmax, fixed candidates may repeat. An optional quantity limit
/// keeps the top pairs by similarity afterwards.
inline std::vector<IndexPair> select_pairs(const SimilarityMatrix& s, const MatchConfig& cfg) {
    cfg.validate();
    std::vector<IndexPair> selection;

    if (cfg.mode == MatchMode::one_to_one) {
        std::vector<bool> row_used(s.rows, false), col_used(s.cols, false);
        const std::size_t max_pairs = std::min(s.rows, s.cols);
        while (selection.size() < max_pairs) {
            double best = -1.0;
            std::size_t bi = 0, bj = 0;
            for (std::size_t i = 0; i < s.rows; ++i) {
                if (row_used[i]) continue;
                for (std::size_t j = 0; j < s.cols; ++j) {
                    if (col_used[j]) continue;
                    if (s.at(i, j) > best) {
                        best = s.at(i, j);
                        bi = i;
                        bj = j;
                    }
                }
            }
            if (!(best > cfg.epsilon)) break;
            selection.push_back({bi, bj, best});
            row_used[bi] = true;
            col_used[bj] = true;
        }
    } else {
        for (std::size_t i = 0; i < s.rows; ++i) {
            if (s.cols == 0) break;
            std::size_t bj = 0;
            for (std::size_t j = 1; j < s.cols; ++j)
                if (s.at(i, j) > s.at(i, bj)) bj = j;
            if (s.at(i, bj) > cfg.epsilon) selection.push_back({i, bj, s.at(i, bj)});
        }
        detail::sort_selection(selection);
    }

    if (cfg.quantity_limit && selection.size() > *cfg.quantity_limit)
        selection.resize(*cfg.quantity_limit);
    return selection;
}

/// Materialize selected index pairs into a RoiPairSet, enforcing its
/// ordering and uniqueness invariants.
inline RoiPairSet build_pair_set(const std::vector<IndexPair>& selection,
                                 const std::vector<BinaryMask>& masks_x,
                                 const std::vector<BinaryMask>& masks_y,
                                 const MatchConfig& cfg) {
    cfg.validate();
    RoiPairSet set;
    set.config = cfg;
    set.pairs.reserve(selection.size());
    for (const auto& sel : selection) {
        if (sel.moving >= masks_x.size() || sel.fixed >= masks_y.size())
            throw index_error("build_pair_set: selection index out of range");
        if (!(sel.similarity > cfg.epsilon))
            throw validation_error("build_pair_set: similarity not above threshold");
        set.pairs.push_back({sel.moving, sel.fixed, sel.similarity,
                             masks_x[sel.moving], masks_y[sel.fixed]});
    }
    std::sort(set.pairs.begin(), set.pairs.end(), [](const RoiPair& a, const RoiPair& b) {
        if (a.similarity != b.similarity) return a.similarity > b.similarity;
        if (a.moving_id != b.moving_id) return a.moving_id < b.moving_id;
        return a.fixed_id < b.fixed_id;
    });
    if (cfg.mode == MatchMode::one_to_one) {
        std::vector<bool> seen_x(masks_x.size(), false), seen_y(masks_y.size(), false);
        for (const auto& p : set.pairs) {
            if (seen_x[p.moving_id] || seen_y[p.fixed_id])
                throw validation_error("build_pair_set: repeated index in one-to-one mode");
            seen_x[p.moving_id] = true;
            seen_y[p.fixed_id] = true;
        }
        if (set.pairs.size() > std::min(masks_x.size(), masks_y.size()))
            throw validation_error("build_pair_set: too many pairs for one-to-one mode");
    }
    return set;
}

} // namespace samreg
