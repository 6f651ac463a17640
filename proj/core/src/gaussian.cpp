#include "skp/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace skp {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

double inverse_sigmoid(double y) {
    return std::log(y / (1.0 - y));
}

Eigen::Matrix3d rotation_matrix(const Eigen::Vector4d& q) {
    double n = q.norm();
    if (!(n > 1e-12)) {
        throw std::domain_error("rotation_matrix: zero-norm quaternion");
    }
    double w = q[0] / n, x = q[1] / n, y = q[2] / n, z = q[3] / n;
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d covariance(const GaussianSplat& splat) {
    Eigen::Matrix3d r = rotation_matrix(splat.rotation);
    Eigen::Vector3d s2 = (2.0 * splat.log_scale).array().exp();
    return r * s2.asDiagonal() * r.transpose();
}

double evaluate_density(const GaussianSplat& splat, const Eigen::Vector3d& x) {
    Eigen::Matrix3d r = rotation_matrix(splat.rotation);
    Eigen::Vector3d inv_s2;
    for (int i = 0; i < 3; ++i) {
        double s = std::max(std::exp(splat.log_scale[i]), 1e-8);
        inv_s2[i] = 1.0 / (s * s);
    }
    Eigen::Vector3d d = r.transpose() * (x - splat.position);
    double q = d.dot(inv_s2.asDiagonal() * d);
    return std::exp(-0.5 * q);
}

Bounds compute_bounds(const GaussianCloud& cloud) {
    Bounds b;
    if (cloud.splats.empty()) return b;
    b.min = b.max = cloud.splats[0].position;
    for (const auto& s : cloud.splats) {
        b.min = b.min.cwiseMin(s.position);
        b.max = b.max.cwiseMax(s.position);
    }
    return b;
}

} // namespace skp
