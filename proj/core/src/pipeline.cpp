#include "skp/pipeline.hpp"

#include "skp/ply_io.hpp"
#include "skp/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace skp {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<LineSegment3D> select_top_longest(std::vector<LineSegment3D> lines,
                                              size_t max_lines) {
    if (max_lines == 0 || lines.size() <= max_lines) {
        std::sort(lines.begin(), lines.end(),
                  [](const LineSegment3D& a, const LineSegment3D& b) {
                      return a.id < b.id;
                  });
        return lines;
    }
    std::sort(lines.begin(), lines.end(),
              [](const LineSegment3D& a, const LineSegment3D& b) {
                  const double la = a.length(), lb = b.length();
                  if (la != lb)
                      return la > lb;
                  return a.id < b.id;
              });
    lines.resize(max_lines);
    std::sort(lines.begin(), lines.end(),
              [](const LineSegment3D& a, const LineSegment3D& b) {
                  return a.id < b.id;
              });
    return lines;
}

HybridModel encode_scene(const GaussianCloud& cloud,
                         const std::vector<LineSegment3D>& lines,
                         const EncodeConfig& cfg, EncodeReport* report,
                         const std::vector<Camera>& cameras,
                         const std::vector<Image>& truths) {
    if (!(cfg.prune_factor >= 1.0))
        throw std::invalid_argument("prune factor must be >= 1");
    if (cfg.retrain && (cameras.empty() || truths.size() != cameras.size()))
        throw std::invalid_argument(
            "retraining requires cameras and one truth image per camera");

    const std::vector<LineSegment3D> used = select_top_longest(lines, cfg.max_lines);
    std::unordered_map<uint32_t, const LineSegment3D*> by_id;
    for (const LineSegment3D& seg : used)
        by_id[seg.id] = &seg;

    const PartitionResult parts = partition(cloud, used, cfg.partition);

    HybridModel model;
    model.sh_degree = cloud.sh_degree;

    std::vector<size_t> patch_candidates = parts.patch_indices;
    size_t sketch_splats = 0;
    size_t iqr_reclassified = 0;
    std::vector<SketchGroup> final_groups;
    const size_t dissolve_below =
        std::max<size_t>(static_cast<size_t>(std::max(cfg.partition.min_group_size, 0)), 2);
    for (const SketchGroup& group : parts.groups) {
        const auto it = by_id.find(static_cast<uint32_t>(group.line_id));
        if (it == by_id.end())
            throw std::logic_error("group references an unknown line id");
        const LineSegment3D& seg = *it->second;

        SketchGroup working = group;
        if (working.member_indices.size() < dissolve_below) {
            patch_candidates.insert(patch_candidates.end(),
                                    working.member_indices.begin(),
                                    working.member_indices.end());
            continue;
        }
        SketchLineBlock block = encode_group(cloud, working, seg);

        // Decoded-scale outlier pass: splats whose reconstructed footprint
        // blows past the group's interquartile band fall back to the patch
        // unless their longest axis runs along the line.
        const std::vector<GaussianSplat> decoded = decode_group(block);
        const IqrSplit split = iqr_scale_filter(working, decoded, seg, cfg.partition);
        if (!split.reclassified.empty()) {
            iqr_reclassified += split.reclassified.size();
            patch_candidates.insert(patch_candidates.end(), split.reclassified.begin(),
                                    split.reclassified.end());
            if (split.kept.size() < dissolve_below) {
                patch_candidates.insert(patch_candidates.end(), split.kept.begin(),
                                        split.kept.end());
                continue;
            }
            SketchGroup refined;
            refined.line_id = working.line_id;
            size_t cursor = 0;
            for (size_t i = 0; i < working.member_indices.size(); ++i) {
                if (cursor < split.kept.size() &&
                    working.member_indices[i] == split.kept[cursor]) {
                    refined.member_indices.push_back(working.member_indices[i]);
                    refined.member_t.push_back(working.member_t[i]);
                    ++cursor;
                }
            }
            working = std::move(refined);
            block = encode_group(cloud, working, seg);
        }
        sketch_splats += working.member_indices.size();
        model.sketch_blocks.push_back(std::move(block));
        final_groups.push_back(std::move(working));
    }
    std::sort(patch_candidates.begin(), patch_candidates.end());

    const std::vector<size_t> kept =
        prune_uniform(patch_candidates, cfg.prune_factor, derive_seed(cfg.quant_seed, 101));
    std::vector<GaussianSplat> patch_splats;
    patch_splats.reserve(kept.size());
    for (size_t idx : kept)
        patch_splats.push_back(cloud.splats[idx]);
    if (cfg.retrain && cfg.retrain_cfg.steps > 0) {
        std::vector<GaussianSplat> sketch_decoded;
        for (const SketchLineBlock& block : model.sketch_blocks) {
            const std::vector<GaussianSplat> d = decode_group(block);
            sketch_decoded.insert(sketch_decoded.end(), d.begin(), d.end());
        }
        RetrainConfig rcfg = cfg.retrain_cfg;
        rcfg.sh_degree = cloud.sh_degree;
        patch_splats =
            retrain_patch(sketch_decoded, patch_splats, cameras, truths, rcfg).patch;
    }
    model.patch_block = quantize_patch(patch_splats, derive_seed(cfg.quant_seed, 102),
                                       cfg.kmeans_iterations);

    model.config["alignment_cos_min"] = format_double(cfg.partition.alignment_cos_min);
    model.config["eta"] = format_double(cfg.partition.eta);
    model.config["fit_degree"] = std::to_string(cfg.partition.fit_degree);
    model.config["iqr_multiplier"] = format_double(cfg.partition.iqr_multiplier);
    model.config["kmeans_iterations"] = std::to_string(cfg.kmeans_iterations);
    model.config["max_lines"] = std::to_string(cfg.max_lines);
    model.config["min_group_size"] = std::to_string(cfg.partition.min_group_size);
    model.config["partition_seed"] = std::to_string(cfg.partition.seed);
    model.config["prune_factor"] = format_double(cfg.prune_factor);
    model.config["quant_seed"] = std::to_string(cfg.quant_seed);
    model.config["radius_effective"] =
        format_double(cfg.partition.effective_radius(cloud));
    model.config["radius_r"] = format_double(cfg.partition.radius_r);
    model.config["ransac_iters"] = std::to_string(cfg.partition.ransac_iters);
    model.config["retrain"] = cfg.retrain ? "1" : "0";
    model.config["retrain_seed"] = std::to_string(cfg.retrain_cfg.seed);
    model.config["retrain_steps"] = std::to_string(cfg.retrain_cfg.steps);

    if (report) {
        report->total_splats = cloud.splats.size();
        report->sketch_splats = sketch_splats;
        report->patch_candidates = patch_candidates.size();
        report->patch_splats = kept.size();
        report->line_groups = model.sketch_blocks.size();
        report->lines_used = used.size();
        report->iqr_reclassified = iqr_reclassified;
        report->final_groups = std::move(final_groups);
        write_hybrid(model, &report->sizes);
    }
    return model;
}

namespace {

std::vector<ViewMetrics> compare_rendered(const GaussianCloud& test,
                                          const std::vector<Image>& references,
                                          const std::vector<Camera>& cameras,
                                          const LossConfig& cfg, int threads) {
    std::vector<ViewMetrics> out;
    out.reserve(cameras.size());
    for (size_t i = 0; i < cameras.size(); ++i) {
        const Image rendered = quantize8(render(test, cameras[i], threads));
        ViewMetrics m;
        m.psnr = psnr(rendered, references[i]);
        m.ssim = ssim(rendered, references[i], cfg);
        out.push_back(m);
    }
    return out;
}

} // namespace

std::vector<ViewMetrics> evaluate_views(const GaussianCloud& test,
                                        const GaussianCloud& reference,
                                        const std::vector<Camera>& cameras,
                                        const LossConfig& cfg, int threads) {
    std::vector<Image> refs;
    refs.reserve(cameras.size());
    for (const Camera& cam : cameras)
        refs.push_back(quantize8(render(reference, cam, threads)));
    return compare_rendered(test, refs, cameras, cfg, threads);
}

std::vector<ViewMetrics> evaluate_views(const GaussianCloud& test,
                                        const std::vector<Image>& truths,
                                        const std::vector<Camera>& cameras,
                                        const LossConfig& cfg, int threads) {
    if (truths.size() != cameras.size())
        throw std::invalid_argument("one truth image per camera required");
    std::vector<Image> refs;
    refs.reserve(truths.size());
    for (const Image& img : truths)
        refs.push_back(quantize8(img));
    return compare_rendered(test, refs, cameras, cfg, threads);
}

std::vector<SweepPoint> sweep_prune(const GaussianCloud& cloud,
                                    const std::vector<LineSegment3D>& lines,
                                    const EncodeConfig& base,
                                    const std::vector<double>& factors,
                                    const std::vector<Camera>& cameras,
                                    int threads,
                                    const std::vector<double>& line_fractions) {
    for (double fraction : line_fractions) {
        if (!(fraction > 0.0 && fraction <= 1.0))
            throw std::invalid_argument("line fractions must lie in (0, 1]");
    }

    const size_t raw_bytes = save_ply(cloud).size();
    std::vector<Image> refs;
    refs.reserve(cameras.size());
    for (const Camera& cam : cameras)
        refs.push_back(quantize8(render(cloud, cam, threads)));

    // The fraction picks from whatever line budget the base config allows.
    const size_t line_budget =
        base.max_lines == 0 ? lines.size() : std::min(lines.size(), base.max_lines);

    std::vector<SweepPoint> points;
    for (double fraction : line_fractions) {
        for (double factor : factors) {
            SweepPoint p;
            p.prune_factor = factor;
            p.line_fraction = fraction;
            try {
                EncodeConfig cfg = base;
                cfg.prune_factor = factor;
                if (line_budget > 0) {
                    const auto want = std::lround(fraction * static_cast<double>(line_budget));
                    cfg.max_lines = std::max<size_t>(1, static_cast<size_t>(want));
                }
                if (cfg.retrain_cfg.threads == 0)
                    cfg.retrain_cfg.threads = threads;
                EncodeReport report;
                const HybridModel model =
                    encode_scene(cloud, lines, cfg, &report, cameras, refs);
                const GaussianCloud decoded = decode_full(model);

                p.file_bytes = report.sizes.total;
                p.sketch_bytes = report.sizes.sketch_bytes;
                p.patch_bytes = report.sizes.patch_bytes;
                p.compression_ratio = static_cast<double>(raw_bytes) /
                                      static_cast<double>(report.sizes.total);
                p.sketch_splats = report.sketch_splats;
                p.patch_splats = report.patch_splats;
                const auto metrics = compare_rendered(decoded, refs, cameras, {}, threads);
                double sp = 0.0, ss = 0.0;
                for (const ViewMetrics& m : metrics) {
                    sp += m.psnr;
                    ss += m.ssim;
                }
                if (!metrics.empty()) {
                    p.mean_psnr = sp / static_cast<double>(metrics.size());
                    p.mean_ssim = ss / static_cast<double>(metrics.size());
                }
            } catch (const std::exception& e) {
                p.error = e.what();
            }
            points.push_back(p);
        }
    }
    return points;
}

} // namespace skp
