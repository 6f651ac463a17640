#include "skp/camera.hpp"

#include <json.hpp>

#include <fstream>
#include <stdexcept>

namespace skp {

using json = nlohmann::ordered_json;

void Camera::validate() const {
    Eigen::Matrix3d r = rotation();
    double err = (r * r.transpose() - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
    if (err > 1e-6) {
        throw std::invalid_argument("camera rotation block is not orthonormal (max deviation " +
                                    std::to_string(err) + ")");
    }
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw std::invalid_argument("camera focal lengths must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw std::invalid_argument("camera image size must be positive");
    }
}

Camera make_lookat(const Eigen::Vector3d& eye, const Eigen::Vector3d& target,
                   double focal, int width, int height) {
    Eigen::Vector3d z = (target - eye).normalized();
    // y-down frame: world +Y maps toward image-down
    Eigen::Vector3d x = Eigen::Vector3d(0, 1, 0).cross(z).normalized();
    Eigen::Vector3d y = z.cross(x);
    Eigen::Matrix3d r;
    r.row(0) = x;
    r.row(1) = y;
    r.row(2) = z;

    Camera cam;
    cam.world_to_camera.topLeftCorner<3, 3>() = r;
    cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
    cam.fx = cam.fy = focal;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    cam.width = width;
    cam.height = height;
    return cam;
}

std::vector<Camera> load_cameras(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open camera file: " + path);
    json doc = json::parse(f);
    if (!doc.is_array()) throw std::runtime_error("camera file must hold a JSON array");

    std::vector<Camera> cams;
    cams.reserve(doc.size());
    for (const auto& rec : doc) {
        Camera cam;
        const auto& m = rec.at("world_to_camera");
        if (!m.is_array() || m.size() != 16) {
            throw std::runtime_error("world_to_camera must be 16 row-major numbers");
        }
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) {
                cam.world_to_camera(i, j) = m[4 * i + j].get<double>();
            }
        }
        cam.fx = rec.at("fx").get<double>();
        cam.fy = rec.at("fy").get<double>();
        cam.cx = rec.at("cx").get<double>();
        cam.cy = rec.at("cy").get<double>();
        cam.width = rec.at("width").get<int>();
        cam.height = rec.at("height").get<int>();
        cam.validate();
        cams.push_back(cam);
    }
    return cams;
}

void save_cameras(const std::vector<Camera>& cameras, const std::string& path) {
    json doc = json::array();
    for (const auto& cam : cameras) {
        json m = json::array();
        for (int i = 0; i < 4; ++i) {
            for (int j = 0; j < 4; ++j) m.push_back(cam.world_to_camera(i, j));
        }
        doc.push_back({{"world_to_camera", m},
                       {"fx", cam.fx},
                       {"fy", cam.fy},
                       {"cx", cam.cx},
                       {"cy", cam.cy},
                       {"width", cam.width},
                       {"height", cam.height}});
    }
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open camera file for writing: " + path);
    f << doc.dump(2) << "\n";
}

} // namespace skp
