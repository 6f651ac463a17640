#pragma once

#include "skp/camera.hpp"
#include "skp/gaussian.hpp"

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

namespace skp::detail {

constexpr double kNearPlane = 0.01;
constexpr double kTransmittanceCutoff = 1e-4;
constexpr double kCovarianceDilation = 0.3;
constexpr double kFootprintQ = 9.0; // (3 sigma)^2 ellipse clip
constexpr int kGradRowBlocks = 16;

struct ProjectedSplat {
    uint32_t index = 0;  // position in the cloud
    double depth = 0.0;  // camera-space z
    double u = 0.0, v = 0.0;
    double ia = 0.0, ib = 0.0, ic = 0.0; // inverse 2D covariance [[ia ib][ib ic]]
    double ca = 0.0, cb = 0.0, cc = 0.0; // dilated 2D covariance
    double alpha0 = 0.0;                 // activated opacity
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
    Eigen::Vector3d x_cam = Eigen::Vector3d::Zero();
    Eigen::Vector3d view_dir = Eigen::Vector3d::Zero();
    double view_dist = 1.0;
    double radius = 0.0; // pixels, 3 sigma of the major axis
};

// Real spherical-harmonics basis for the directional coefficients, in the
// storage order used by GaussianSplat::sh_rest. `degree` in [0, 3]; writes
// the active prefix of `basis` (and `dbasis` when non-null).
int sh_rest_basis(const Eigen::Vector3d& dir, int degree, double* basis,
                  Eigen::Vector3d* dbasis);

constexpr double kShDcFactor = 0.28209479177387814;

Eigen::Vector3d splat_color(const GaussianSplat& splat, int sh_degree,
                            const Eigen::Vector3d& dir);

// Projects one splat; returns false when culled (behind the near plane or
// entirely off-screen).
bool project_splat(const GaussianSplat& splat, int sh_degree, const Camera& cam,
                   uint32_t index, ProjectedSplat& out);

struct ContributionMap {
    int width = 0, height = 0;
    std::vector<ProjectedSplat> visible;          // sorted by (depth, index)
    std::vector<std::vector<uint32_t>> per_pixel; // indices into `visible`
};

ContributionMap build_contributions(const GaussianCloud& cloud, const Camera& cam);

} // namespace skp::detail
