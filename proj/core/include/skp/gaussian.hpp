#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace skp {

// Degree-3 spherical harmonics: 15 coefficients per color channel beyond DC,
// laid out channel-major (f_rest_0..14 red, 15..29 green, 30..44 blue).
constexpr int kShRestSize = 45;
constexpr int kShCoeffsPerChannel = 15;
constexpr int kMaxShDegree = 3;

struct GaussianSplat {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    // Pre-activation: world scales are exp(log_scale).
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    // (w, x, y, z), stored pre-normalization.
    Eigen::Vector4d rotation = Eigen::Vector4d(1, 0, 0, 0);
    // Pre-activation: opacity is sigmoid(opacity_logit).
    double opacity_logit = 0.0;
    Eigen::Vector3d sh_dc = Eigen::Vector3d::Zero();
    Eigen::Matrix<double, kShRestSize, 1> sh_rest =
        Eigen::Matrix<double, kShRestSize, 1>::Zero();
};

struct GaussianCloud {
    std::vector<GaussianSplat> splats;
    int sh_degree = 3; // in [0, 3]

    size_t size() const { return splats.size(); }
};

double sigmoid(double x);
double inverse_sigmoid(double y);

// Rotation matrix of the normalized quaternion. Throws std::domain_error on
// (near-)zero norm.
Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q);

// Sigma = R * diag(exp(log_scale))^2 * R^T
Eigen::Matrix3d covariance(const GaussianSplat& splat);

// exp(-1/2 (x-mu)^T Sigma^-1 (x-mu)). Activated scales are floored at 1e-8
// before inversion so the quadratic form stays finite.
double evaluate_density(const GaussianSplat& splat, const Eigen::Vector3d& x);

struct Bounds {
    Eigen::Vector3d min = Eigen::Vector3d::Zero();
    Eigen::Vector3d max = Eigen::Vector3d::Zero();
    double diagonal() const { return (max - min).norm(); }
};

// Axis-aligned bounds over splat centers (zero extent for an empty cloud).
Bounds compute_bounds(const GaussianCloud& cloud);

} // namespace skp
