// samreg command line: segment / match / fit / warp / eval / synth over the
// .rgrd grid format and tab-separated manifests.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "samreg/samreg.hpp"

namespace fs = std::filesystem;
using namespace samreg;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2; // unreadable/malformed input or bad arguments
constexpr int kExitEmpty = 3; // nothing to work on

Extent parse_dims(const std::string& text) {
    Extent dims;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, ','))
        dims.push_back(static_cast<std::size_t>(std::stoull(part)));
    return dims;
}

std::string format_sim(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

struct LoadedMask {
    BinaryMask mask;
    std::vector<double> spacing;
    std::string path; // absolute
    std::size_t slice = 0;
    std::size_t index = 0;
};

std::vector<LoadedMask> load_masks(const fs::path& manifest) {
    std::vector<LoadedMask> out;
    for (const auto& rec : read_mask_manifest(manifest)) {
        const GridFile gf = read_grid_file(rec.path);
        LoadedMask lm;
        lm.mask = to_mask(gf);
        lm.spacing.assign(gf.spacing.begin(), gf.spacing.end());
        lm.path = fs::absolute(rec.path).lexically_normal().string();
        lm.slice = rec.slice;
        lm.index = rec.index;
        out.push_back(std::move(lm));
    }
    return out;
}

std::string relative_to(const fs::path& target, const fs::path& base_dir) {
    std::error_code ec;
    fs::path rel = fs::relative(target, base_dir, ec);
    if (ec || rel.empty()) return target.string();
    return rel.generic_string();
}

// --- segment ---------------------------------------------------------------

int run_segment(const std::string& image_path, const std::string& out_dir,
                const QuantileSegmenterConfig& seg_cfg, const RoiFilterConfig& filter_cfg) {
    const GridFile gf = read_grid_file(image_path);
    if (gf.channels != 1) throw io_error("segment: expected a single-channel image");
    const GridImage image = to_image(gf);

    fs::create_directories(out_dir);
    std::vector<MaskRecord> records;
    const std::size_t slices = image.dims.size() == 3 ? image.dims[0] : 1;
    for (std::size_t s = 0; s < slices; ++s) {
        const GridImage slice = image.dims.size() == 3 ? extract_slice(image, s) : image;
        const auto kept = filter_rois(segment_everything(slice, seg_cfg), filter_cfg);
        for (std::size_t k = 0; k < kept.size(); ++k) {
            const std::string name = "m_" + std::to_string(s) + "_" + std::to_string(k) + ".rgrd";
            write_grid_file(fs::path(out_dir) / name, from_mask(kept[k], slice.spacing));
            records.push_back({name, s, k});
        }
    }
    write_mask_manifest(fs::path(out_dir) / "masks.tsv", records);
    return kExitOk;
}

// --- match -----------------------------------------------------------------

int run_match(const std::string& moving_masks, const std::string& fixed_masks,
              const std::string& moving_image, const std::string& fixed_image,
              const std::string& out_manifest, const MatchConfig& match_cfg,
              std::size_t slice_range, const FeatureConfig& feat_cfg) {
    const GridImage moving = to_image(read_grid_file(moving_image));
    const GridImage fixed = to_image(read_grid_file(fixed_image));
    if (moving.dims.size() != fixed.dims.size())
        throw dimension_error("match: images differ in axis count");

    auto mv = load_masks(moving_masks);
    auto fx = load_masks(fixed_masks);

    const std::size_t depth = moving.dims.size() == 3 ? moving.dims[0] : 1;
    const Extent slice_dims = moving.dims.size() == 3
        ? Extent{moving.dims[1], moving.dims[2]}
        : moving.dims;
    for (const auto& lm : mv) {
        if (lm.mask.dims != slice_dims)
            throw dimension_error("match: moving mask extent differs from image slices");
        if (lm.slice >= depth) throw index_error("match: moving mask slice outside image");
    }
    const Extent fixed_slice_dims = fixed.dims.size() == 3
        ? Extent{fixed.dims[1], fixed.dims[2]}
        : fixed.dims;
    const std::size_t fixed_depth = fixed.dims.size() == 3 ? fixed.dims[0] : 1;
    for (const auto& lm : fx) {
        if (lm.mask.dims != fixed_slice_dims)
            throw dimension_error("match: fixed mask extent differs from image slices");
        if (lm.slice >= fixed_depth) throw index_error("match: fixed mask slice outside image");
    }

    // Per-slice candidate tables with prototypes from the slice features.
    std::map<std::size_t, std::vector<std::size_t>> mv_by_slice, fx_by_slice;
    for (std::size_t i = 0; i < mv.size(); ++i) mv_by_slice[mv[i].slice].push_back(i);
    for (std::size_t i = 0; i < fx.size(); ++i) fx_by_slice[fx[i].slice].push_back(i);

    auto slice_features = [&](const GridImage& img, std::size_t s) {
        return img.dims.size() == 3 ? extract_features(extract_slice(img, s), feat_cfg)
                                    : extract_features(img, feat_cfg);
    };

    std::vector<Prototype> mv_protos(mv.size()), fx_protos(fx.size());
    for (const auto& [s, ids] : mv_by_slice) {
        const FeatureMap fmap = slice_features(moving, s);
        for (std::size_t i : ids) mv_protos[i] = compute_prototype(mv[i].mask, fmap);
    }
    for (const auto& [s, ids] : fx_by_slice) {
        const FeatureMap fmap = slice_features(fixed, s);
        for (std::size_t i : ids) fx_protos[i] = compute_prototype(fx[i].mask, fmap);
    }

    const fs::path out_dir = fs::absolute(out_manifest).parent_path();
    std::vector<PairRecord> records;
    for (const auto& [s, mv_ids] : mv_by_slice) {
        const std::size_t lo = s >= slice_range ? s - slice_range : 0;
        const std::size_t hi = std::min(fixed_depth - 1, s + slice_range);
        std::vector<Prototype> pool;
        std::vector<std::size_t> pool_ids;
        for (std::size_t fsl = lo; fsl <= hi; ++fsl) {
            auto it = fx_by_slice.find(fsl);
            if (it == fx_by_slice.end()) continue;
            for (std::size_t i : it->second) {
                pool.push_back(fx_protos[i]);
                pool_ids.push_back(i);
            }
        }
        if (pool.empty()) continue;
        std::vector<Prototype> row;
        for (std::size_t i : mv_ids) row.push_back(mv_protos[i]);
        const SimilarityMatrix sim = similarity_matrix(row, pool);
        for (const auto& sel : select_pairs(sim, match_cfg)) {
            const auto& m = mv[mv_ids[sel.moving]];
            const auto& f = fx[pool_ids[sel.fixed]];
            records.push_back({relative_to(m.path, out_dir), relative_to(f.path, out_dir),
                               m.slice, f.slice, sel.similarity});
        }
    }
    write_pair_manifest(out_manifest, records);
    if (records.empty()) std::cerr << "warning: no pairs above threshold\n";
    return kExitOk;
}

// --- fit -------------------------------------------------------------------

struct ManifestPairs {
    std::vector<PairRecord> records;
    std::vector<BinaryMask> moving, fixed;
    std::vector<std::vector<double>> moving_spacing;
    bool volumetric = false;
    Extent slice_dims;
    std::size_t depth = 1;
};

ManifestPairs load_pairs(const std::string& manifest, std::size_t depth_override) {
    ManifestPairs mp;
    mp.records = read_pair_manifest(manifest);
    if (mp.records.empty()) throw empty_input_error("empty pair manifest: " + manifest);
    for (const auto& rec : mp.records) {
        const GridFile mg = read_grid_file(rec.moving_path);
        const GridFile fg = read_grid_file(rec.fixed_path);
        mp.moving.push_back(to_mask(mg));
        mp.fixed.push_back(to_mask(fg));
        mp.moving_spacing.push_back(std::vector<double>(mg.spacing.begin(), mg.spacing.end()));
        if (mp.moving.back().dims != mp.fixed.back().dims)
            throw dimension_error("fit/eval: pair masks differ in extent");
        if (mp.slice_dims.empty()) mp.slice_dims = mp.moving.back().dims;
        else if (mp.slice_dims != mp.moving.back().dims)
            throw dimension_error("fit/eval: manifest masks differ in extent");
        if (rec.moving_slice != 0 || rec.fixed_slice != 0) mp.volumetric = true;
        mp.depth = std::max({mp.depth, rec.moving_slice + 1, rec.fixed_slice + 1});
    }
    if (depth_override > 0) {
        if (depth_override < mp.depth) throw validation_error("fit: --depth below manifest slices");
        mp.depth = depth_override;
        mp.volumetric = true;
    }
    if (mp.slice_dims.size() == 3 && mp.volumetric)
        throw dimension_error("fit: 3D masks cannot carry slice indices");
    return mp;
}

RoiPairSet to_pair_set(const ManifestPairs& mp) {
    RoiPairSet set;
    set.config.epsilon = 0.0;
    set.config.mode = MatchMode::one_to_many;
    for (std::size_t k = 0; k < mp.records.size(); ++k)
        set.pairs.push_back({k, k, mp.records[k].similarity, mp.moving[k], mp.fixed[k]});
    return set;
}

VolumePairSet to_volume_set(const ManifestPairs& mp) {
    VolumePairSet vs;
    vs.slice_dims = mp.slice_dims;
    vs.depth = mp.depth;
    for (std::size_t k = 0; k < mp.records.size(); ++k) {
        VolumePair vp;
        vp.moving_slice = mp.records[k].moving_slice;
        vp.fixed_slice = mp.records[k].fixed_slice;
        vp.pair = {k, k, mp.records[k].similarity, mp.moving[k], mp.fixed[k]};
        vs.pairs.push_back(std::move(vp));
    }
    return vs;
}

int run_fit(const std::string& manifest, const std::string& field_path,
            const std::string& report_path, const FitConfig& cfg, std::size_t depth_override) {
    const ManifestPairs mp = load_pairs(manifest, depth_override);

    FitResult result = mp.volumetric
        ? fit_ddf(to_volume_set(mp), Extent{mp.depth, mp.slice_dims[0], mp.slice_dims[1]}, cfg)
        : fit_ddf(to_pair_set(mp), mp.slice_dims, cfg);

    write_grid_file(field_path, from_field(result.field));

    std::ostringstream rep;
    char buf[64];
    auto kv = [&](const char* key, double v) {
        std::snprintf(buf, sizeof buf, "%.9g", v);
        rep << key << "\t" << buf << "\n";
    };
    kv("initial_loss", result.report.initial_loss);
    kv("final_loss", result.report.final_loss);
    kv("roi_loss", result.report.roi_loss);
    kv("smoothness_loss", result.report.smoothness_loss);
    kv("lambda", cfg.lambda);
    rep << "iterations\t" << result.report.iterations_used << "\n";
    rep << "converged\t" << (result.report.converged ? 1 : 0) << "\n";
    rep << "pair\tdice\ttre\n";
    for (std::size_t k = 0; k < result.report.pair_dice.size(); ++k) {
        rep << k << "\t" << format_sim(result.report.pair_dice[k]) << "\t"
            << format_sim(result.report.pair_tre[k]) << "\n";
    }
    detail::write_atomic_text(report_path, rep.str());
    return kExitOk;
}

// --- warp ------------------------------------------------------------------

int run_warp(const std::string& image_path, const std::string& field_path,
             const std::string& out_path, const std::string& pgm_path) {
    const GridFile gf = read_grid_file(image_path);
    if (gf.channels != 1) throw io_error("warp: expected a single-channel image");
    const GridImage image = to_image(gf);
    const DisplacementField field = to_field(read_grid_file(field_path));
    const GridImage warped = warp(image, field);
    write_grid_file(out_path, from_image(warped, gf.dtype));
    if (!pgm_path.empty()) {
        if (warped.dims.size() != 2) throw io_error("warp: --pgm needs a 2D image");
        write_pgm(pgm_path, warped);
    }
    return kExitOk;
}

// --- eval ------------------------------------------------------------------

int run_eval(const std::string& manifest, const std::string& field_path) {
    const ManifestPairs mp = load_pairs(manifest, 0);
    const DisplacementField field = to_field(read_grid_file(field_path));

    std::vector<RoiPair> pairs;
    std::vector<std::vector<double>> spacing;
    if (field.dims.size() == 3 && mp.slice_dims.size() == 2) {
        if (field.dims[1] != mp.slice_dims[0] || field.dims[2] != mp.slice_dims[1] ||
            field.dims[0] < mp.depth)
            throw dimension_error("eval: field extent does not cover the manifest masks");
        // manifest order, slice masks embedded into the field's volume
        for (std::size_t k = 0; k < mp.records.size(); ++k) {
            RoiPair p;
            p.moving_id = k;
            p.fixed_id = k;
            p.similarity = mp.records[k].similarity;
            p.moving_mask = detail::embed_slice_mask(mp.moving[k], mp.records[k].moving_slice,
                                                     field.dims[0]);
            p.fixed_mask = detail::embed_slice_mask(mp.fixed[k], mp.records[k].fixed_slice,
                                                    field.dims[0]);
            pairs.push_back(std::move(p));
            spacing.push_back({1.0, mp.moving_spacing[k][0], mp.moving_spacing[k][1]});
        }
    } else {
        if (mp.volumetric) throw dimension_error("eval: volumetric manifest needs a 3D field");
        for (std::size_t k = 0; k < mp.records.size(); ++k) {
            pairs.push_back({k, k, mp.records[k].similarity, mp.moving[k], mp.fixed[k]});
            spacing.push_back(mp.moving_spacing[k]);
        }
    }

    double dice_sum = 0.0, dice_sq = 0.0, tre_sum = 0.0, tre_sq = 0.0;
    std::cout << "pair\tdice\ttre\n";
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        if (pairs[k].moving_mask.dims != field.dims)
            throw dimension_error("eval: mask extent differs from field");
        const SoftMask warped = warp(SoftMask::from_binary(pairs[k].fixed_mask), field);
        const SoftMask ref = SoftMask::from_binary(pairs[k].moving_mask);
        const double d = dice(ref, warped);
        const double t = tre(ref, warped, spacing[k]);
        dice_sum += d;
        dice_sq += d * d;
        tre_sum += t;
        tre_sq += t * t;
        std::cout << k << "\t" << format_sim(d) << "\t" << format_sim(t) << "\n";
    }
    const double n = static_cast<double>(pairs.size());
    const double dice_mean = dice_sum / n;
    const double tre_mean = tre_sum / n;
    const double dice_sd = std::sqrt(std::max(0.0, dice_sq / n - dice_mean * dice_mean));
    const double tre_sd = std::sqrt(std::max(0.0, tre_sq / n - tre_mean * tre_mean));
    char line[128];
    std::snprintf(line, sizeof line, "mean\t%.4f±%.4f\t%.4f±%.4f\n", dice_mean, dice_sd,
                  tre_mean, tre_sd);
    std::cout << line;
    return kExitOk;
}

// --- synth -----------------------------------------------------------------

int run_synth(const std::string& out_dir, const SynthSpec& spec, bool pgm) {
    const SynthCase c = generate(spec);
    fs::create_directories(out_dir);
    const fs::path base(out_dir);

    write_grid_file(base / "moving.rgrd", from_image(c.moving));
    write_grid_file(base / "fixed.rgrd", from_image(c.fixed));
    write_grid_file(base / "ddf.rgrd", from_field(c.truth));

    auto dump_masks = [&](const std::vector<BinaryMask>& masks, const std::string& dir) {
        fs::create_directories(base / dir);
        std::vector<MaskRecord> records;
        for (std::size_t k = 0; k < masks.size(); ++k) {
            const std::string name = "m_0_" + std::to_string(k) + ".rgrd";
            write_grid_file(base / dir / name, from_mask(masks[k]));
            records.push_back({name, 0, k});
        }
        write_mask_manifest(base / dir / "masks.tsv", records);
    };
    dump_masks(c.moving_masks, "moving_masks");
    dump_masks(c.fixed_masks, "fixed_masks");

    std::ostringstream oracle;
    oracle << "#samreg-oracle v1\n";
    for (const auto& [mv, fx] : c.oracle.pairs) oracle << mv << "\t" << fx << "\n";
    detail::write_atomic_text(base / "oracle.tsv", oracle.str());

    std::vector<PairRecord> truth;
    for (const auto& [mv, fx] : c.oracle.pairs)
        truth.push_back({"moving_masks/m_0_" + std::to_string(mv) + ".rgrd",
                         "fixed_masks/m_0_" + std::to_string(fx) + ".rgrd", 0, 0, 1.0});
    write_pair_manifest(base / "pairs_truth.tsv", truth);

    if (pgm && spec.dims.size() == 2) {
        write_pgm(base / "moving.pgm", c.moving);
        write_pgm(base / "fixed.pgm", c.fixed);
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ROI-pair registration toolkit"};
    app.require_subcommand(1);

    // segment
    auto* seg = app.add_subcommand("segment", "Segment candidate ROIs into mask files");
    std::string seg_image, seg_out;
    QuantileSegmenterConfig seg_cfg;
    RoiFilterConfig filter_cfg;
    seg->add_option("image", seg_image, "input .rgrd image (2D or 3D)")->required();
    seg->add_option("out_dir", seg_out, "output directory for masks + manifest")->required();
    seg->add_option("--min-area", filter_cfg.min_area, "minimum ROI area (voxels)");
    seg->add_option("--max-area", filter_cfg.max_area, "maximum ROI area (voxels)");
    seg->add_option("--max-overlap", filter_cfg.max_overlap_ratio, "overlap suppression ratio");
    seg->add_option("--thresholds", seg_cfg.thresholds, "quantile threshold count");

    // match
    auto* match = app.add_subcommand("match", "Match moving and fixed candidate masks");
    std::string m_mv_masks, m_fx_masks, m_mv_img, m_fx_img, m_out;
    MatchConfig match_cfg;
    FeatureConfig feat_cfg;
    std::size_t slice_range = 11;
    std::size_t quantity_limit = 0;
    std::string mode = "one-to-one";
    match->add_option("moving_masks", m_mv_masks, "moving mask manifest")->required();
    match->add_option("fixed_masks", m_fx_masks, "fixed mask manifest")->required();
    match->add_option("moving_image", m_mv_img, "moving .rgrd image")->required();
    match->add_option("fixed_image", m_fx_img, "fixed .rgrd image")->required();
    match->add_option("out_manifest", m_out, "output pair manifest")->required();
    match->add_option("--epsilon", match_cfg.epsilon, "similarity threshold (strict)");
    match->add_option("--quantity-limit", quantity_limit, "keep top-K pairs (0 = unlimited)");
    match->add_option("--mode", mode, "one-to-one | one-to-many");
    match->add_option("--slice-range", slice_range, "fixed-slice search window (3D)");
    match->add_flag("--no-coords", [&feat_cfg](std::int64_t) { feat_cfg.include_coords = false; },
                    "drop coordinate feature channels");

    // fit
    auto* fit = app.add_subcommand("fit", "Fit a dense displacement field to pairs");
    std::string f_manifest, f_field = "ddf.rgrd", f_report = "fit_report.txt";
    FitConfig fit_cfg;
    std::size_t f_depth = 0;
    fit->add_option("manifest", f_manifest, "pair manifest")->required();
    fit->add_option("--field", f_field, "output field .rgrd");
    fit->add_option("--report", f_report, "output text report");
    fit->add_option("--lambda", fit_cfg.lambda, "smoothness weight");
    fit->add_option("--iters", fit_cfg.iterations, "iteration cap");
    fit->add_option("--step", fit_cfg.step_size, "step size (voxels per unit gradient)");
    fit->add_option("--depth", f_depth, "volume depth override (3D manifests)");

    // warp
    auto* warp_cmd = app.add_subcommand("warp", "Warp an image by a displacement field");
    std::string w_image, w_field, w_out, w_pgm;
    warp_cmd->add_option("image", w_image, "input .rgrd image")->required();
    warp_cmd->add_option("field", w_field, "displacement .rgrd (channels = axes)")->required();
    warp_cmd->add_option("out", w_out, "output .rgrd")->required();
    warp_cmd->add_option("--pgm", w_pgm, "also write a P5 preview (2D)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Per-pair Dice/TRE under a field");
    std::string e_manifest, e_field;
    eval_cmd->add_option("manifest", e_manifest, "pair manifest")->required();
    eval_cmd->add_option("field", e_field, "displacement .rgrd")->required();

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic case directory");
    std::string s_out;
    std::string s_dims = "128,128";
    SynthSpec spec;
    bool s_pgm = false;
    synth->add_option("out_dir", s_out, "output directory")->required();
    synth->add_option("--dims", s_dims, "extent, comma separated (e.g. 128,128)");
    synth->add_option("--blobs", spec.blob_count, "blob count");
    synth->add_option("--radius-min", spec.radius_min, "minimum blob radius");
    synth->add_option("--radius-max", spec.radius_max, "maximum blob radius");
    synth->add_option("--amplitude", spec.amplitude, "max displacement (voxels)");
    synth->add_option("--sigma", spec.smoothness, "field smoothing sigma (voxels)");
    synth->add_option("--seed", spec.seed, "random seed");
    synth->add_flag("--pgm", s_pgm, "also write P5 previews");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }

    try {
        if (seg->parsed()) return run_segment(seg_image, seg_out, seg_cfg, filter_cfg);
        if (match->parsed()) {
            if (mode == "one-to-one") match_cfg.mode = MatchMode::one_to_one;
            else if (mode == "one-to-many") match_cfg.mode = MatchMode::one_to_many;
            else throw validation_error("match: unknown mode " + mode);
            if (quantity_limit > 0) match_cfg.quantity_limit = quantity_limit;
            return run_match(m_mv_masks, m_fx_masks, m_mv_img, m_fx_img, m_out, match_cfg,
                             slice_range, feat_cfg);
        }
        if (fit->parsed()) return run_fit(f_manifest, f_field, f_report, fit_cfg, f_depth);
        if (warp_cmd->parsed()) return run_warp(w_image, w_field, w_out, w_pgm);
        if (eval_cmd->parsed()) return run_eval(e_manifest, e_field);
        if (synth->parsed()) {
            spec.dims = parse_dims(s_dims);
            return run_synth(s_out, spec, s_pgm);
        }
    } catch (const empty_input_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEmpty;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
    return kExitInput;
}
