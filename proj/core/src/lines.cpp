#include "skp/lines.hpp"

#include "skp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace skp {

LineProjection project_to_segment(const Eigen::Vector3d& point, const LineSegment3D& seg) {
    Eigen::Vector3d d = seg.p_end - seg.p_start;
    double len2 = d.squaredNorm();
    LineProjection out;
    if (len2 > 0.0) {
        out.t = std::clamp((point - seg.p_start).dot(d) / len2, 0.0, 1.0);
    }
    out.distance = (point - seg.point_at(out.t)).norm();
    return out;
}

LineFormatError::LineFormatError(const std::string& message, int line_number_in)
    : std::runtime_error(message + " (line " + std::to_string(line_number_in) + ")"),
      line_number(line_number_in) {}

std::vector<LineSegment3D> parse_lines(const std::string& text) {
    std::vector<LineSegment3D> lines;
    std::istringstream stream(text);
    std::string row;
    int line_number = 0;
    while (std::getline(stream, row)) {
        ++line_number;
        auto hash = row.find('#');
        if (hash != std::string::npos) row.erase(hash);
        std::istringstream ss(row);
        LineSegment3D seg;
        if (!(ss >> seg.id)) {
            if (ss.eof()) continue; // blank or comment-only line
            throw LineFormatError("expected integer line id", line_number);
        }
        for (int k = 0; k < 3; ++k) {
            if (!(ss >> seg.p_start[k])) throw LineFormatError("malformed start point", line_number);
        }
        for (int k = 0; k < 3; ++k) {
            if (!(ss >> seg.p_end[k])) throw LineFormatError("malformed end point", line_number);
        }
        std::string extra;
        if (ss >> extra) throw LineFormatError("trailing tokens after segment", line_number);
        lines.push_back(seg);
    }
    return lines;
}

std::vector<LineSegment3D> load_lines(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open line file: " + path);
    std::stringstream buf;
    buf << f.rdbuf();
    return parse_lines(buf.str());
}

void save_lines(const std::vector<LineSegment3D>& lines, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open line file for writing: " + path);
    char row[256];
    for (const auto& seg : lines) {
        std::snprintf(row, sizeof(row), "%lld %.17g %.17g %.17g %.17g %.17g %.17g\n",
                      static_cast<long long>(seg.id), seg.p_start[0], seg.p_start[1],
                      seg.p_start[2], seg.p_end[0], seg.p_end[1], seg.p_end[2]);
        f << row;
    }
}

namespace {

double point_line_distance(const Eigen::Vector3d& p, const Eigen::Vector3d& origin,
                           const Eigen::Vector3d& dir) {
    Eigen::Vector3d r = p - origin;
    return (r - r.dot(dir) * dir).norm();
}

double percentile(std::vector<double> sorted, double q) {
    double idx = q * static_cast<double>(sorted.size() - 1);
    size_t lo = static_cast<size_t>(std::floor(idx));
    size_t hi = static_cast<size_t>(std::ceil(idx));
    double frac = idx - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

} // namespace

std::vector<LineSegment3D> extract_lines_from_points(const GaussianCloud& cloud,
                                                     const LineExtractConfig& cfg) {
    std::vector<Eigen::Vector3d> points;
    points.reserve(cloud.splats.size());
    for (const auto& s : cloud.splats) points.push_back(s.position);

    double min_length = 1e-6 * compute_bounds(cloud).diagonal();
    Rng rng(cfg.seed);
    std::vector<LineSegment3D> segments;

    while (static_cast<int>(segments.size()) < cfg.max_lines &&
           points.size() >= std::max<size_t>(2, static_cast<size_t>(cfg.min_inliers))) {
        size_t best_count = 0;
        Eigen::Vector3d best_origin = Eigen::Vector3d::Zero();
        Eigen::Vector3d best_dir = Eigen::Vector3d::UnitX();
        for (int it = 0; it < cfg.iterations; ++it) {
            auto pick = rng.sample_distinct(points.size(), 2);
            Eigen::Vector3d a = points[pick[0]], b = points[pick[1]];
            if ((b - a).norm() < 1e-12) continue;
            Eigen::Vector3d dir = (b - a).normalized();
            size_t count = 0;
            for (const auto& p : points) {
                if (point_line_distance(p, a, dir) <= cfg.inlier_radius) ++count;
            }
            if (count > best_count) {
                best_count = count;
                best_origin = a;
                best_dir = dir;
            }
        }
        if (best_count < static_cast<size_t>(cfg.min_inliers)) break;

        std::vector<size_t> inliers;
        for (size_t i = 0; i < points.size(); ++i) {
            if (point_line_distance(points[i], best_origin, best_dir) <= cfg.inlier_radius) {
                inliers.push_back(i);
            }
        }

        // Refine direction with the principal axis of the inliers; fall back
        // to the sampled direction if the eigensolve is degenerate.
        Eigen::Vector3d centroid = Eigen::Vector3d::Zero();
        for (size_t i : inliers) centroid += points[i];
        centroid /= static_cast<double>(inliers.size());
        Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
        for (size_t i : inliers) {
            Eigen::Vector3d r = points[i] - centroid;
            cov += r * r.transpose();
        }
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
        Eigen::Vector3d dir = eig.eigenvectors().col(2);
        if (!dir.allFinite() || dir.norm() < 0.5) dir = best_dir;
        if (dir.dot(best_dir) < 0.0) dir = -dir;

        std::vector<double> ts;
        ts.reserve(inliers.size());
        for (size_t i : inliers) ts.push_back((points[i] - centroid).dot(dir));
        std::sort(ts.begin(), ts.end());
        double t_lo = percentile(ts, 0.01);
        double t_hi = percentile(ts, 0.99);

        LineSegment3D seg;
        seg.id = static_cast<int64_t>(segments.size());
        seg.p_start = centroid + t_lo * dir;
        seg.p_end = centroid + t_hi * dir;
        if (seg.length() >= min_length) segments.push_back(seg);

        std::vector<Eigen::Vector3d> remaining;
        remaining.reserve(points.size() - inliers.size());
        size_t k = 0;
        for (size_t i = 0; i < points.size(); ++i) {
            if (k < inliers.size() && inliers[k] == i) {
                ++k;
            } else {
                remaining.push_back(points[i]);
            }
        }
        points.swap(remaining);
    }
    return segments;
}

} // namespace skp
