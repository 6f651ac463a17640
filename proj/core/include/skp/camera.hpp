#pragma once

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace skp {

// Pinhole camera, x-right / y-down / z-forward. world_to_camera is a rigid
// transform applied as X_cam = R * X_world + t.
struct Camera {
    Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();
    double fx = 0.0, fy = 0.0;
    double cx = 0.0, cy = 0.0;
    int width = 0, height = 0;

    Eigen::Matrix3d rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Eigen::Vector3d translation() const { return world_to_camera.topRightCorner<3, 1>(); }
    // Camera origin in world coordinates.
    Eigen::Vector3d center() const { return -rotation().transpose() * translation(); }

    // Throws std::invalid_argument unless the rotation block is orthonormal
    // within 1e-6 and the intrinsics are positive.
    void validate() const;
};

Camera make_lookat(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                   double focal, int width, int height);

// JSON list of records: {"world_to_camera": [16 row-major], "fx": ..,
// "fy": .., "cx": .., "cy": .., "width": .., "height": ..}
std::vector<Camera> load_cameras(const std::string& path);
void save_cameras(const std::vector<Camera>& cameras, const std::string& path);

} // namespace skp
