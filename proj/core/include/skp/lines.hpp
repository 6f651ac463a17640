#pragma once

#include "skp/gaussian.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace skp {

struct LineSegment3D {
    int64_t id = 0;
    Eigen::Vector3d p_start = Eigen::Vector3d::Zero();
    Eigen::Vector3d p_end = Eigen::Vector3d::Zero();

    Eigen::Vector3d point_at(double t) const { return (1.0 - t) * p_start + t * p_end; }
    Eigen::Vector3d direction() const { return (p_end - p_start).normalized(); }
    double length() const { return (p_end - p_start).norm(); }
};

struct LineProjection {
    double t = 0.0;        // clamped to [0, 1]
    double distance = 0.0; // to the segment point at t
};

// Closest point on the segment: t = argmin over [0,1] of |p - L(t)|.
// Degenerate segments (coincident endpoints) project everything to t = 0.
LineProjection project_to_segment(const Eigen::Vector3d& point, const LineSegment3D& seg);

struct LineFormatError : std::runtime_error {
    int line_number;
    LineFormatError(const std::string& message, int line_number);
};

// Text format, one segment per line: "id x1 y1 z1 x2 y2 z2".
// '#' starts a comment; blank lines are ignored.
std::vector<LineSegment3D> parse_lines(const std::string& text);
std::vector<LineSegment3D> load_lines(const std::string& path);
void save_lines(const std::vector<LineSegment3D>& lines, const std::string& path);

struct LineExtractConfig {
    double inlier_radius = 0.01;
    int min_inliers = 20;
    int max_lines = 32;
    int iterations = 200;
    uint64_t seed = 1;
};

// Sequential RANSAC over splat centers: repeatedly fit the best-supported
// infinite line from 2-point samples, trim it to the 1st..99th percentile of
// the inlier span, remove the inliers, and continue until max_lines or the
// support drops below min_inliers. Segments shorter than 1e-6 x the bounding
// box diagonal are rejected.
std::vector<LineSegment3D> extract_lines_from_points(const GaussianCloud& cloud,
                                                     const LineExtractConfig& cfg);

} // namespace skp
