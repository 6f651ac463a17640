#pragma once

#include "skp/container.hpp"
#include "skp/renderer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace skp {

struct EncodeConfig {
    PartitionConfig partition;
    double prune_factor = 4.0;
    size_t max_lines = 0; // 0: use every line; otherwise keep the longest
    uint64_t quant_seed = 7;
    int kmeans_iterations = 25;
    // Off by default so encoding works without image data; when set,
    // encode_scene requires cameras plus one truth image per camera.
    bool retrain = false;
    RetrainConfig retrain_cfg;
};

struct EncodeReport {
    size_t total_splats = 0;
    size_t sketch_splats = 0;
    size_t patch_candidates = 0; // before pruning
    size_t patch_splats = 0;     // stored after pruning
    size_t line_groups = 0;
    size_t lines_used = 0;
    size_t iqr_reclassified = 0; // demoted by the decoded-scale filter
    SizeBreakdown sizes;
    std::vector<SketchGroup> final_groups; // per stored block, original indices
};

// Longest lines first (ties by lower id); the selection is returned in id
// order. max_lines == 0 keeps everything.
std::vector<LineSegment3D> select_top_longest(std::vector<LineSegment3D> lines,
                                              size_t max_lines);

// Partition against the lines, fit one block per surviving group, prune the
// leftovers, optionally retrain the survivors against the truth images with
// the decoded sketch splats frozen, vector-quantize them, and snapshot the
// configuration into the container header. cameras/truths are consulted only
// when cfg.retrain is set.
HybridModel encode_scene(const GaussianCloud& cloud,
                         const std::vector<LineSegment3D>& lines,
                         const EncodeConfig& cfg, EncodeReport* report = nullptr,
                         const std::vector<Camera>& cameras = {},
                         const std::vector<Image>& truths = {});

struct ViewMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
};

// Renders both clouds per camera, snaps to the 8-bit grid, and compares.
std::vector<ViewMetrics> evaluate_views(const GaussianCloud& test,
                                        const GaussianCloud& reference,
                                        const std::vector<Camera>& cameras,
                                        const LossConfig& cfg = {}, int threads = 0);

// Renders the cloud per camera and compares against stored truth images.
std::vector<ViewMetrics> evaluate_views(const GaussianCloud& test,
                                        const std::vector<Image>& truths,
                                        const std::vector<Camera>& cameras,
                                        const LossConfig& cfg = {}, int threads = 0);

struct SweepPoint {
    double prune_factor = 1.0;
    double line_fraction = 1.0;
    size_t file_bytes = 0;          // whole container
    size_t sketch_bytes = 0;
    size_t patch_bytes = 0;
    double compression_ratio = 0.0; // raw PLY bytes / file bytes
    size_t sketch_splats = 0;
    size_t patch_splats = 0;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
    std::string error; // non-empty: this point failed and its metrics are unset
};

// Rate-distortion grid over patch prune factors x top-longest line
// fractions, one point per combination (fractions outermost). Quality is
// measured against renders of the original cloud, which also serve as the
// truth images when base.retrain is set. A failing point records its error
// and the sweep continues.
std::vector<SweepPoint> sweep_prune(const GaussianCloud& cloud,
                                    const std::vector<LineSegment3D>& lines,
                                    const EncodeConfig& base,
                                    const std::vector<double>& factors,
                                    const std::vector<Camera>& cameras,
                                    int threads = 0,
                                    const std::vector<double>& line_fractions = {1.0});

// Shortest round-trip decimal form (used for config snapshots and reports).
std::string format_double(double v);

} // namespace skp
