#pragma once

#include "skp/gaussian.hpp"
#include "skp/lines.hpp"

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

namespace skp {

struct PartitionConfig {
    // <= 0 selects the default of 0.005 x the scene bounding-box diagonal.
    double radius_r = 0.0;
    double eta = 3.0;
    int ransac_iters = 100;
    int fit_degree = 3; // RANSAC model degree, independent of encoding degree
    int min_group_size = 8;
    double iqr_multiplier = 1.5;
    double alignment_cos_min = 0.9;
    uint64_t seed = 1;
    int threads = 0; // 0: hardware concurrency

    double effective_radius(const GaussianCloud& cloud) const;
};

// Residual threshold floor, in each attribute's native pre-activation units.
constexpr double kResidualFloor = 1e-6;

struct SketchGroup {
    int64_t line_id = 0;
    std::vector<size_t> member_indices; // ascending splat indices
    std::vector<double> member_t;       // projection parameter per member
};

struct PartitionResult {
    std::vector<SketchGroup> groups;
    std::vector<size_t> patch_indices; // ascending, disjoint from all groups
};

// Splats whose distance to the segment is <= r (closed), with the projection
// parameter, in ascending splat order.
std::vector<std::pair<size_t, double>> radius_search(const GaussianCloud& cloud,
                                                     const LineSegment3D& seg, double r);

struct RansacResult {
    std::vector<size_t> inliers; // indices into the candidate arrays, ascending
    bool degenerate = false;     // fewer points than the sample size: pass-through
};

// Polynomial RANSAC over one attribute channel. Per iteration: sample
// fit_degree+1 distinct points, fit, and score by the median of the
// Euclidean-norm residuals (least median of squares, robust while outliers
// stay under half). The winning candidate's inliers are those within eta x
// the median absolute deviation of its residuals (floored at
// kResidualFloor); the final model is refit on them and the inlier set
// recomputed once against it under a fresh threshold.
RansacResult ransac_attribute(const std::vector<double>& t,
                              const std::vector<Eigen::VectorXd>& values,
                              const PartitionConfig& cfg);
RansacResult ransac_attribute(const std::vector<double>& t,
                              const std::vector<Eigen::VectorXd>& values,
                              const PartitionConfig& cfg, uint64_t seed);

// Intersection of per-attribute inlier sets (ascending inputs and output).
std::vector<size_t> intersect_inliers(const std::array<std::vector<size_t>, 4>& sets);

// Quaternions flipped into a common hemisphere so one polynomial can fit
// them: each member is negated when its dot product with the dominant
// eigenvector of the population's (sign-invariant) second-moment matrix is
// negative. Input and output are in member order; t is part of the member
// contract and only its length is checked here.
std::vector<Eigen::Vector4d> align_quaternion_signs(const std::vector<double>& t,
                                                    const std::vector<Eigen::Vector4d>& quats);

struct IqrSplit {
    std::vector<size_t> kept;         // splat indices remaining in the group
    std::vector<size_t> reclassified; // splat indices demoted to Patch
};

// Flags decoded members whose max activated scale exceeds Q3 + multiplier x
// IQR of the group's distribution; a flagged member is demoted only when its
// longest covariance axis is not aligned with the line direction
// (|cos| < alignment_cos_min). `decoded` holds the decoded splats in member
// order. Groups smaller than 4 are passed through unchanged.
IqrSplit iqr_scale_filter(const SketchGroup& group,
                          const std::vector<GaussianSplat>& decoded,
                          const LineSegment3D& seg, const PartitionConfig& cfg);

// Full Sketch/Patch split: nearest-line candidate assignment within the
// radius, per-line per-attribute RANSAC with inlier intersection, and
// demotion of everything else to Patch. Lines are processed independently
// (parallel across lines, deterministic merge in line order).
PartitionResult partition(const GaussianCloud& cloud,
                          const std::vector<LineSegment3D>& lines,
                          const PartitionConfig& cfg);

} // namespace skp
