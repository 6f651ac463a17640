#include "skp/renderer.hpp"

#include "render_internal.hpp"
#include "skp/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace skp {

namespace detail {

namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

} // namespace

int sh_rest_basis(const Eigen::Vector3d& dir, int degree, double* basis,
                  Eigen::Vector3d* dbasis) {
    const double x = dir.x(), y = dir.y(), z = dir.z();
    int n = 0;
    if (degree >= 1) {
        basis[0] = -kC1 * y;
        basis[1] = kC1 * z;
        basis[2] = -kC1 * x;
        if (dbasis) {
            dbasis[0] = {0.0, -kC1, 0.0};
            dbasis[1] = {0.0, 0.0, kC1};
            dbasis[2] = {-kC1, 0.0, 0.0};
        }
        n = 3;
    }
    if (degree >= 2) {
        const double xx = x * x, yy = y * y, zz = z * z;
        basis[3] = kC2[0] * x * y;
        basis[4] = kC2[1] * y * z;
        basis[5] = kC2[2] * (2.0 * zz - xx - yy);
        basis[6] = kC2[3] * x * z;
        basis[7] = kC2[4] * (xx - yy);
        if (dbasis) {
            dbasis[3] = kC2[0] * Eigen::Vector3d(y, x, 0.0);
            dbasis[4] = kC2[1] * Eigen::Vector3d(0.0, z, y);
            dbasis[5] = kC2[2] * Eigen::Vector3d(-2.0 * x, -2.0 * y, 4.0 * z);
            dbasis[6] = kC2[3] * Eigen::Vector3d(z, 0.0, x);
            dbasis[7] = kC2[4] * Eigen::Vector3d(2.0 * x, -2.0 * y, 0.0);
        }
        n = 8;
    }
    if (degree >= 3) {
        const double xx = x * x, yy = y * y, zz = z * z;
        basis[8] = kC3[0] * y * (3.0 * xx - yy);
        basis[9] = kC3[1] * x * y * z;
        basis[10] = kC3[2] * y * (4.0 * zz - xx - yy);
        basis[11] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
        basis[12] = kC3[4] * x * (4.0 * zz - xx - yy);
        basis[13] = kC3[5] * z * (xx - yy);
        basis[14] = kC3[6] * x * (xx - 3.0 * yy);
        if (dbasis) {
            dbasis[8] = kC3[0] * Eigen::Vector3d(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
            dbasis[9] = kC3[1] * Eigen::Vector3d(y * z, x * z, x * y);
            dbasis[10] = kC3[2] * Eigen::Vector3d(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy,
                                                  8.0 * y * z);
            dbasis[11] = kC3[3] * Eigen::Vector3d(-6.0 * x * z, -6.0 * y * z,
                                                  6.0 * zz - 3.0 * xx - 3.0 * yy);
            dbasis[12] = kC3[4] * Eigen::Vector3d(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y,
                                                  8.0 * x * z);
            dbasis[13] = kC3[5] * Eigen::Vector3d(2.0 * x * z, -2.0 * y * z, xx - yy);
            dbasis[14] = kC3[6] * Eigen::Vector3d(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
        }
        n = 15;
    }
    return n;
}

Eigen::Vector3d splat_color(const GaussianSplat& splat, int sh_degree,
                            const Eigen::Vector3d& dir) {
    double basis[kShCoeffsPerChannel];
    const int n = sh_rest_basis(dir, sh_degree, basis, nullptr);
    Eigen::Vector3d color;
    for (int ch = 0; ch < 3; ++ch) {
        double c = 0.5 + kShDcFactor * splat.sh_dc[ch];
        for (int k = 0; k < n; ++k)
            c += basis[k] * splat.sh_rest[ch * kShCoeffsPerChannel + k];
        color[ch] = c;
    }
    return color;
}

bool project_splat(const GaussianSplat& splat, int sh_degree, const Camera& cam,
                   uint32_t index, ProjectedSplat& out) {
    const Eigen::Matrix3d W = cam.rotation();
    const Eigen::Vector3d x_cam = W * splat.position + cam.translation();
    const double z = x_cam.z();
    if (!(z > kNearPlane))
        return false;

    const double u = cam.fx * x_cam.x() / z + cam.cx;
    const double v = cam.fy * x_cam.y() / z + cam.cy;

    const Eigen::Matrix3d cov_world = covariance(splat);
    const Eigen::Matrix3d cov_cam = W * cov_world * W.transpose();

    Eigen::Matrix<double, 2, 3> J;
    J << cam.fx / z, 0.0, -cam.fx * x_cam.x() / (z * z),
         0.0, cam.fy / z, -cam.fy * x_cam.y() / (z * z);
    const Eigen::Matrix2d cov2 =
        J * cov_cam * J.transpose() + kCovarianceDilation * Eigen::Matrix2d::Identity();

    const double a = cov2(0, 0), b = cov2(0, 1), c = cov2(1, 1);
    const double det = a * c - b * b;
    if (!(det > 0.0) || !std::isfinite(det))
        return false;

    const double mid = 0.5 * (a + c);
    const double lam_max = mid + std::sqrt(std::max(mid * mid - det, 0.0));
    const double radius = 3.0 * std::sqrt(lam_max);
    if (u + radius < 0.0 || u - radius > static_cast<double>(cam.width) ||
        v + radius < 0.0 || v - radius > static_cast<double>(cam.height))
        return false;

    Eigen::Vector3d dir = splat.position - cam.center();
    double dist = dir.norm();
    if (dist < 1e-12) {
        dir = Eigen::Vector3d(0.0, 0.0, 1.0);
        dist = 1.0;
    } else {
        dir /= dist;
    }

    out.index = index;
    out.depth = z;
    out.u = u;
    out.v = v;
    out.ca = a;
    out.cb = b;
    out.cc = c;
    out.ia = c / det;
    out.ib = -b / det;
    out.ic = a / det;
    out.alpha0 = sigmoid(splat.opacity_logit);
    out.color = splat_color(splat, sh_degree, dir);
    out.x_cam = x_cam;
    out.view_dir = dir;
    out.view_dist = dist;
    out.radius = radius;
    return true;
}

ContributionMap build_contributions(const GaussianCloud& cloud, const Camera& cam) {
    cam.validate();
    ContributionMap cm;
    cm.width = cam.width;
    cm.height = cam.height;
    cm.visible.reserve(cloud.splats.size());
    for (size_t i = 0; i < cloud.splats.size(); ++i) {
        ProjectedSplat p;
        if (project_splat(cloud.splats[i], cloud.sh_degree, cam,
                          static_cast<uint32_t>(i), p))
            cm.visible.push_back(p);
    }
    std::sort(cm.visible.begin(), cm.visible.end(),
              [](const ProjectedSplat& a, const ProjectedSplat& b) {
                  if (a.depth != b.depth)
                      return a.depth < b.depth;
                  return a.index < b.index;
              });

    cm.per_pixel.assign(static_cast<size_t>(cm.width) * cm.height, {});
    for (uint32_t k = 0; k < cm.visible.size(); ++k) {
        const ProjectedSplat& p = cm.visible[k];
        const int x0 = std::max(0, static_cast<int>(std::floor(p.u - p.radius)));
        const int x1 = std::min(cm.width - 1, static_cast<int>(std::ceil(p.u + p.radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(p.v - p.radius)));
        const int y1 = std::min(cm.height - 1, static_cast<int>(std::ceil(p.v + p.radius)));
        for (int y = y0; y <= y1; ++y) {
            const double dy = (y + 0.5) - p.v;
            for (int x = x0; x <= x1; ++x) {
                const double dx = (x + 0.5) - p.u;
                const double q = p.ia * dx * dx + 2.0 * p.ib * dx * dy + p.ic * dy * dy;
                if (q <= kFootprintQ)
                    cm.per_pixel[static_cast<size_t>(y) * cm.width + x].push_back(k);
            }
        }
    }
    return cm;
}

} // namespace detail

Image render(const GaussianCloud& cloud, const Camera& cam, int threads) {
    const detail::ContributionMap cm = detail::build_contributions(cloud, cam);
    Image img(cam.width, cam.height);
    parallel_for(static_cast<size_t>(cam.height), threads, [&](size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < cam.width; ++x) {
            double T = 1.0;
            Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
            for (uint32_t k : cm.per_pixel[row * cm.width + x]) {
                if (T < detail::kTransmittanceCutoff)
                    break;
                const detail::ProjectedSplat& p = cm.visible[k];
                const double dx = (x + 0.5) - p.u;
                const double dy = (y + 0.5) - p.v;
                const double q = p.ia * dx * dx + 2.0 * p.ib * dx * dy + p.ic * dy * dy;
                const double alpha = p.alpha0 * std::exp(-0.5 * q);
                rgb += (T * alpha) * p.color;
                T *= 1.0 - alpha;
            }
            for (int c = 0; c < 3; ++c)
                img.at(y, x, c) = std::clamp(rgb[c], 0.0, 1.0);
        }
    });
    return img;
}

namespace {

void require_same_shape(const Image& a, const Image& b) {
    if (a.width != b.width || a.height != b.height || a.width <= 0 || a.height <= 0)
        throw std::invalid_argument("image shape mismatch");
}

struct SsimSetup {
    int win = 11;
    int half = 5;
    std::vector<double> kernel;
    double c1 = 1e-4;
    double c2 = 9e-4;
};

SsimSetup make_ssim_setup(const LossConfig& cfg, int width, int height) {
    SsimSetup s;
    s.win = cfg.ssim_window;
    const int cap = std::min(width, height);
    if (s.win > cap)
        s.win = cap;
    if (s.win % 2 == 0)
        s.win -= 1;
    if (s.win < 1)
        s.win = 1;
    s.half = s.win / 2;
    s.kernel.resize(s.win);
    double sum = 0.0;
    for (int i = 0; i < s.win; ++i) {
        const double d = i - s.half;
        s.kernel[i] = std::exp(-d * d / (2.0 * cfg.ssim_sigma * cfg.ssim_sigma));
        sum += s.kernel[i];
    }
    for (double& w : s.kernel)
        w /= sum;
    s.c1 = cfg.ssim_k1 * cfg.ssim_k1;
    s.c2 = cfg.ssim_k2 * cfg.ssim_k2;
    return s;
}

// Windowed moments at window centers [half, H-half) x [half, W-half);
// entries outside that region are unspecified.
std::vector<double> filter_valid(const std::vector<double>& plane, int W, int H,
                                 const std::vector<double>& kernel) {
    const int win = static_cast<int>(kernel.size());
    const int half = win / 2;
    std::vector<double> tmp(plane.size(), 0.0), out(plane.size(), 0.0);
    for (int y = 0; y < H; ++y)
        for (int x = half; x < W - half; ++x) {
            double s = 0.0;
            for (int k = 0; k < win; ++k)
                s += kernel[k] * plane[static_cast<size_t>(y) * W + x + k - half];
            tmp[static_cast<size_t>(y) * W + x] = s;
        }
    for (int y = half; y < H - half; ++y)
        for (int x = half; x < W - half; ++x) {
            double s = 0.0;
            for (int k = 0; k < win; ++k)
                s += kernel[k] * tmp[static_cast<size_t>(y + k - half) * W + x];
            out[static_cast<size_t>(y) * W + x] = s;
        }
    return out;
}

// Adjoint of filter_valid: input is zero outside the valid region, output is
// defined everywhere (zero-padded correlation, vertical then horizontal).
std::vector<double> filter_adjoint(const std::vector<double>& plane, int W, int H,
                                   const std::vector<double>& kernel) {
    const int win = static_cast<int>(kernel.size());
    const int half = win / 2;
    std::vector<double> tmp(plane.size(), 0.0), out(plane.size(), 0.0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int k = 0; k < win; ++k) {
                const int yy = y + k - half;
                if (yy >= 0 && yy < H)
                    s += kernel[k] * plane[static_cast<size_t>(yy) * W + x];
            }
            tmp[static_cast<size_t>(y) * W + x] = s;
        }
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double s = 0.0;
            for (int k = 0; k < win; ++k) {
                const int xx = x + k - half;
                if (xx >= 0 && xx < W)
                    s += kernel[k] * tmp[static_cast<size_t>(y) * W + xx];
            }
            out[static_cast<size_t>(y) * W + x] = s;
        }
    return out;
}

std::vector<double> channel_plane(const Image& img, int ch) {
    std::vector<double> plane(static_cast<size_t>(img.width) * img.height);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            plane[static_cast<size_t>(y) * img.width + x] = img.at(y, x, ch);
    return plane;
}

} // namespace

double psnr(const Image& a, const Image& b) {
    require_same_shape(a, b);
    double sq = 0.0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        sq += d * d;
    }
    const double mse = sq / static_cast<double>(a.pixels.size());
    if (mse < 1e-10)
        return 100.0;
    return 10.0 * std::log10(1.0 / mse);
}

double ssim(const Image& a, const Image& b, const LossConfig& cfg) {
    require_same_shape(a, b);
    const int W = a.width, H = a.height;
    const SsimSetup s = make_ssim_setup(cfg, W, H);

    double total = 0.0;
    size_t count = 0;
    for (int ch = 0; ch < 3; ++ch) {
        const std::vector<double> x = channel_plane(a, ch);
        const std::vector<double> y = channel_plane(b, ch);
        std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
        for (size_t i = 0; i < x.size(); ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, W, H, s.kernel);
        const auto my = filter_valid(y, W, H, s.kernel);
        const auto mxx = filter_valid(xx, W, H, s.kernel);
        const auto myy = filter_valid(yy, W, H, s.kernel);
        const auto mxy = filter_valid(xy, W, H, s.kernel);
        for (int py = s.half; py < H - s.half; ++py)
            for (int px = s.half; px < W - s.half; ++px) {
                const size_t i = static_cast<size_t>(py) * W + px;
                const double sx = mxx[i] - mx[i] * mx[i];
                const double sy = myy[i] - my[i] * my[i];
                const double sxy = mxy[i] - mx[i] * my[i];
                const double a1 = 2.0 * mx[i] * my[i] + s.c1;
                const double a2 = 2.0 * sxy + s.c2;
                const double b1 = mx[i] * mx[i] + my[i] * my[i] + s.c1;
                const double b2 = sx + sy + s.c2;
                total += (a1 * a2) / (b1 * b2);
                ++count;
            }
    }
    return count ? total / static_cast<double>(count) : 1.0;
}

double loss(const Image& rendered, const Image& truth, const LossConfig& cfg) {
    require_same_shape(rendered, truth);
    double abs_sum = 0.0;
    for (size_t i = 0; i < rendered.pixels.size(); ++i)
        abs_sum += std::abs(rendered.pixels[i] - truth.pixels[i]);
    const double l1 = abs_sum / static_cast<double>(rendered.pixels.size());
    return cfg.lambda * l1 + (1.0 - cfg.lambda) * (1.0 - ssim(rendered, truth, cfg));
}

Image loss_gradient(const Image& rendered, const Image& truth, const LossConfig& cfg) {
    require_same_shape(rendered, truth);
    const int W = rendered.width, H = rendered.height;
    const SsimSetup s = make_ssim_setup(cfg, W, H);
    const size_t n_pix = static_cast<size_t>(W) * H;

    Image grad(W, H);
    const double l1_w = cfg.lambda / static_cast<double>(3 * n_pix);
    const double valid_count =
        3.0 * static_cast<double>(std::max(0, H - 2 * s.half)) *
        static_cast<double>(std::max(0, W - 2 * s.half));

    for (int ch = 0; ch < 3; ++ch) {
        const std::vector<double> x = channel_plane(rendered, ch);
        const std::vector<double> y = channel_plane(truth, ch);
        std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
        for (size_t i = 0; i < x.size(); ++i) {
            xx[i] = x[i] * x[i];
            yy[i] = y[i] * y[i];
            xy[i] = x[i] * y[i];
        }
        const auto mx = filter_valid(x, W, H, s.kernel);
        const auto my = filter_valid(y, W, H, s.kernel);
        const auto mxx = filter_valid(xx, W, H, s.kernel);
        const auto myy = filter_valid(yy, W, H, s.kernel);
        const auto mxy = filter_valid(xy, W, H, s.kernel);

        std::vector<double> g_mean(n_pix, 0.0), g_xx(n_pix, 0.0), g_xy(n_pix, 0.0);
        for (int py = s.half; py < H - s.half; ++py)
            for (int px = s.half; px < W - s.half; ++px) {
                const size_t i = static_cast<size_t>(py) * W + px;
                const double sx = mxx[i] - mx[i] * mx[i];
                const double sy = myy[i] - my[i] * my[i];
                const double sxy = mxy[i] - mx[i] * my[i];
                const double a1 = 2.0 * mx[i] * my[i] + s.c1;
                const double a2 = 2.0 * sxy + s.c2;
                const double b1 = mx[i] * mx[i] + my[i] * my[i] + s.c1;
                const double b2 = sx + sy + s.c2;
                const double d = b1 * b2;
                const double f = (a1 * a2) / d;
                g_mean[i] = (2.0 * my[i] * (a2 - a1) / d +
                             2.0 * mx[i] * (f / b2 - f / b1)) / valid_count;
                g_xx[i] = (-f / b2) / valid_count;
                g_xy[i] = (2.0 * a1 / d) / valid_count;
            }
        const auto s_mean = filter_adjoint(g_mean, W, H, s.kernel);
        const auto s_xx = filter_adjoint(g_xx, W, H, s.kernel);
        const auto s_xy = filter_adjoint(g_xy, W, H, s.kernel);

        for (int py = 0; py < H; ++py)
            for (int px = 0; px < W; ++px) {
                const size_t i = static_cast<size_t>(py) * W + px;
                const double dssim = s_mean[i] + 2.0 * x[i] * s_xx[i] + y[i] * s_xy[i];
                const double diff = x[i] - y[i];
                const double sign = (diff > 0.0) ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
                grad.at(py, px, ch) = l1_w * sign - (1.0 - cfg.lambda) * dssim;
            }
    }
    return grad;
}

} // namespace skp
