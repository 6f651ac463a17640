#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "skp/pipeline.hpp"
#include "skp/ply_io.hpp"
#include "skp/renderer.hpp"
#include "skp/rng.hpp"
#include "skp/synth.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>
#include <vector>

using namespace skp;

namespace {

constexpr double kDcFactor = 0.28209479177387814; // 1 / (2 sqrt(pi))

Camera identity_camera(int size = 32, double focal = 32.0) {
    Camera cam;
    cam.world_to_camera = Eigen::Matrix4d::Identity();
    cam.fx = cam.fy = focal;
    cam.cx = cam.cy = size / 2.0;
    cam.width = cam.height = size;
    return cam;
}

GaussianSplat isotropic_splat(const Eigen::Vector3d& pos, double sigma, double opacity_logit,
                              const Eigen::Vector3d& dc) {
    GaussianSplat s;
    s.position = pos;
    s.log_scale = Eigen::Vector3d::Constant(std::log(sigma));
    s.opacity_logit = opacity_logit;
    s.sh_dc = dc;
    return s;
}

// Screen-space quantities of an isotropic splat under the identity camera,
// computed from the projection formulas in scalar form.
struct ScreenState {
    double u, v;
    double ia, ib, ic; // inverse 2D covariance
    double alpha0;
    Eigen::Vector3d color;
};

ScreenState project_scalar(const GaussianSplat& s, const Camera& cam) {
    ScreenState st;
    const double x = s.position[0], y = s.position[1], z = s.position[2];
    const double f = cam.fx;
    st.u = f * x / z + cam.cx;
    st.v = f * y / z + cam.cy;

    const double sigma2 = std::exp(2.0 * s.log_scale[0]);
    // J = [[f/z, 0, -f x / z^2], [0, f/z, -f y / z^2]]; Sigma2d = sigma^2 J J^T + 0.3 I.
    const double j02 = -f * x / (z * z);
    const double j12 = -f * y / (z * z);
    const double a = sigma2 * (f * f / (z * z) + j02 * j02) + 0.3;
    const double b = sigma2 * (j02 * j12);
    const double c = sigma2 * (f * f / (z * z) + j12 * j12) + 0.3;
    const double det = a * c - b * b;
    st.ia = c / det;
    st.ib = -b / det;
    st.ic = a / det;
    st.alpha0 = sigmoid(s.opacity_logit);
    st.color = Eigen::Vector3d::Constant(0.5) + kDcFactor * s.sh_dc;
    return st;
}

double falloff(const ScreenState& st, int px, int py) {
    const double dx = px + 0.5 - st.u;
    const double dy = py + 0.5 - st.v;
    const double q = st.ia * dx * dx + 2.0 * st.ib * dx * dy + st.ic * dy * dy;
    REQUIRE(q <= 9.0); // probe pixels must be inside the footprint
    return std::exp(-0.5 * q);
}

// Direct "valid"-window SSIM, independent dense reimplementation.
double ssim_oracle(const Image& a, const Image& b, const LossConfig& cfg) {
    int win = std::min(cfg.ssim_window, std::min(a.width, a.height));
    if (win % 2 == 0) win -= 1;
    if (win < 1) win = 1;
    const int half = win / 2;
    std::vector<double> kernel(win);
    double ksum = 0.0;
    for (int i = 0; i < win; ++i) {
        double d = i - half;
        kernel[i] = std::exp(-d * d / (2.0 * cfg.ssim_sigma * cfg.ssim_sigma));
        ksum += kernel[i];
    }
    for (double& k : kernel) k /= ksum;
    const double c1 = cfg.ssim_k1 * cfg.ssim_k1;
    const double c2 = cfg.ssim_k2 * cfg.ssim_k2;

    double total = 0.0;
    size_t count = 0;
    for (int ch = 0; ch < 3; ++ch) {
        for (int cy = half; cy < a.height - half; ++cy) {
            for (int cx = half; cx < a.width - half; ++cx) {
                double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
                for (int i = 0; i < win; ++i) {
                    for (int j = 0; j < win; ++j) {
                        double w = kernel[i] * kernel[j];
                        double va = a.at(cy + i - half, cx + j - half, ch);
                        double vb = b.at(cy + i - half, cx + j - half, ch);
                        mx += w * va;
                        my += w * vb;
                        mxx += w * va * va;
                        myy += w * vb * vb;
                        mxy += w * va * vb;
                    }
                }
                double sx = mxx - mx * mx;
                double sy = myy - my * my;
                double sxy = mxy - mx * my;
                total += ((2 * mx * my + c1) * (2 * sxy + c2)) /
                         ((mx * mx + my * my + c1) * (sx + sy + c2));
                ++count;
            }
        }
    }
    return count ? total / static_cast<double>(count) : 1.0;
}

GaussianCloud small_random_scene(Rng& rng, int n_splats, int sh_degree) {
    GaussianCloud cloud;
    cloud.sh_degree = sh_degree;
    for (int i = 0; i < n_splats; ++i) {
        GaussianSplat s;
        s.position = Eigen::Vector3d(rng.uniform(-0.45, 0.45), rng.uniform(-0.45, 0.45),
                                     rng.uniform(0.8, 2.2));
        for (int k = 0; k < 3; ++k) s.log_scale[k] = rng.uniform(-3.4, -2.2);
        for (int k = 0; k < 4; ++k) s.rotation[k] = rng.normal();
        if (s.rotation.norm() < 0.1) s.rotation = Eigen::Vector4d(1, 0, 0, 0);
        s.opacity_logit = rng.uniform(-1.0, 2.0);
        for (int k = 0; k < 3; ++k) s.sh_dc[k] = rng.uniform(-0.8, 0.8);
        if (sh_degree > 0) {
            for (int k = 0; k < kShRestSize; ++k) s.sh_rest[k] = rng.uniform(-0.2, 0.2);
        }
        cloud.splats.push_back(s);
    }
    return cloud;
}

// Collects every scalar parameter of a splat for finite-difference sweeps.
struct ParamRef {
    double* p;
    double grad;
};

std::vector<ParamRef> splat_params(GaussianSplat& s, const SplatGrad& g) {
    std::vector<ParamRef> out;
    for (int k = 0; k < 3; ++k) out.push_back({&s.position[k], g.position[k]});
    for (int k = 0; k < 3; ++k) out.push_back({&s.log_scale[k], g.log_scale[k]});
    for (int k = 0; k < 4; ++k) out.push_back({&s.rotation[k], g.rotation[k]});
    out.push_back({&s.opacity_logit, g.opacity_logit});
    for (int k = 0; k < 3; ++k) out.push_back({&s.sh_dc[k], g.sh_dc[k]});
    for (int k = 0; k < kShRestSize; ++k) out.push_back({&s.sh_rest[k], g.sh_rest[k]});
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// forward rendering

TEST_CASE("render: empty cloud gives a black image") {
    Camera cam = identity_camera();
    GaussianCloud cloud;
    Image img = render(cloud, cam);
    CHECK(std::all_of(img.pixels.begin(), img.pixels.end(),
                      [](double v) { return v == 0.0; }));
}

TEST_CASE("render: single splat matches the scalar projection formulas") {
    Camera cam = identity_camera();
    GaussianCloud cloud;
    cloud.sh_degree = 0;
    // Center projects exactly onto the center of pixel (16, 16).
    cloud.splats.push_back(
        isotropic_splat(Eigen::Vector3d(0.015625, 0.015625, 1.0), 0.02, 1.0,
                        Eigen::Vector3d(0.2, -0.3, 0.4)));
    Image img = render(cloud, cam, 1);
    ScreenState st = project_scalar(cloud.splats[0], cam);
    CHECK(st.u == doctest::Approx(16.5).epsilon(1e-12));
    CHECK(st.v == doctest::Approx(16.5).epsilon(1e-12));

    for (auto [px, py] : std::vector<std::pair<int, int>>{{16, 16}, {17, 16}, {15, 17}}) {
        double alpha = st.alpha0 * falloff(st, px, py);
        for (int c = 0; c < 3; ++c) {
            double want = std::clamp(alpha * st.color[c], 0.0, 1.0);
            CHECK(img.at(py, px, c) == doctest::Approx(want).epsilon(1e-12));
        }
    }
    // Far corner is outside the footprint.
    CHECK(img.at(0, 0, 0) == 0.0);
}

TEST_CASE("render: two-splat compositing matches the closed form to 1e-9") {
    Camera cam = identity_camera();
    GaussianCloud cloud;
    cloud.sh_degree = 0;
    cloud.splats.push_back(
        isotropic_splat(Eigen::Vector3d(0.015625, 0.015625, 1.0), 0.02, 1.0,
                        Eigen::Vector3d(0.2, -0.3, 0.4)));
    cloud.splats.push_back(
        isotropic_splat(Eigen::Vector3d(0.03125, 0.03125, 2.0), 0.05, 0.5,
                        Eigen::Vector3d(1.5, 0.1, -0.2)));
    Image img = render(cloud, cam, 1);

    ScreenState front = project_scalar(cloud.splats[0], cam);
    ScreenState back = project_scalar(cloud.splats[1], cam);
    for (auto [px, py] : std::vector<std::pair<int, int>>{{16, 16}, {17, 17}, {15, 16}}) {
        double a1 = front.alpha0 * falloff(front, px, py);
        double a2 = back.alpha0 * falloff(back, px, py);
        for (int c = 0; c < 3; ++c) {
            double want =
                std::clamp(a1 * front.color[c] + (1.0 - a1) * a2 * back.color[c], 0.0, 1.0);
            CHECK(img.at(py, px, c) == doctest::Approx(want).epsilon(1e-10));
            CHECK(std::fabs(img.at(py, px, c) - want) <= 1e-9);
        }
    }
}

TEST_CASE("render: compositing order follows center depth, not input order") {
    Camera cam = identity_camera();
    GaussianCloud near_first;
    near_first.sh_degree = 0;
    auto near_splat = isotropic_splat(Eigen::Vector3d(0, 0, 1.0), 0.05, 3.0,
                                      Eigen::Vector3d(1.0, 1.0, 1.0));
    auto far_splat = isotropic_splat(Eigen::Vector3d(0, 0, 2.0), 0.1, 3.0,
                                     Eigen::Vector3d(-1.5, -1.5, -1.5));
    near_first.splats = {near_splat, far_splat};
    GaussianCloud far_first = near_first;
    std::swap(far_first.splats[0], far_first.splats[1]);

    Image a = render(near_first, cam, 1);
    Image b = render(far_first, cam, 1);
    CHECK(a.pixels == b.pixels);
    // The bright near splat dominates the dark far one (far alone would
    // leave this pixel below 0.1).
    CHECK(a.at(16, 16, 0) > 0.65);
}

TEST_CASE("render: splats at or behind the near plane are culled") {
    Camera cam = identity_camera();
    GaussianCloud cloud;
    cloud.sh_degree = 0;
    cloud.splats.push_back(isotropic_splat(Eigen::Vector3d(0, 0, -1.0), 0.05, 5.0,
                                           Eigen::Vector3d(1, 1, 1)));
    cloud.splats.push_back(isotropic_splat(Eigen::Vector3d(0, 0, 0.01), 0.05, 5.0,
                                           Eigen::Vector3d(1, 1, 1)));
    cloud.splats.push_back(isotropic_splat(Eigen::Vector3d(0, 0, 0.0), 0.05, 5.0,
                                           Eigen::Vector3d(1, 1, 1)));
    Image img = render(cloud, cam, 1);
    CHECK(std::all_of(img.pixels.begin(), img.pixels.end(),
                      [](double v) { return v == 0.0; }));
}

TEST_CASE("render: off-screen splats are culled") {
    Camera cam = identity_camera();
    GaussianCloud cloud;
    cloud.sh_degree = 0;
    cloud.splats.push_back(isotropic_splat(Eigen::Vector3d(50.0, 0, 1.0), 0.02, 5.0,
                                           Eigen::Vector3d(1, 1, 1)));
    Image img = render(cloud, cam, 1);
    CHECK(std::all_of(img.pixels.begin(), img.pixels.end(),
                      [](double v) { return v == 0.0; }));
}

TEST_CASE("render: transmittance cutoff stops accumulation") {
    Camera cam = identity_camera();
    GaussianCloud stack;
    stack.sh_degree = 0;
    // Twelve near-opaque white splats drive T below 1e-4.
    for (int i = 0; i < 12; ++i) {
        stack.splats.push_back(isotropic_splat(Eigen::Vector3d(0, 0, 1.0 + 0.05 * i), 0.08,
                                               2.5, Eigen::Vector3d(1, 1, 1)));
    }
    GaussianCloud with_extra = stack;
    with_extra.splats.push_back(isotropic_splat(Eigen::Vector3d(0, 0, 3.0), 0.3, 5.0,
                                                Eigen::Vector3d(-2, -2, -2)));
    Image a = render(stack, cam, 1);
    Image b = render(with_extra, cam, 1);
    // The extra far splat is invisible behind the opaque stack.
    CHECK(a.at(16, 16, 0) == b.at(16, 16, 0));
    CHECK(a.at(16, 16, 1) == b.at(16, 16, 1));
}

TEST_CASE("render: final clamp keeps channels in [0, 1]") {
    Camera cam = identity_camera();
    GaussianCloud cloud;
    cloud.sh_degree = 0;
    cloud.splats.push_back(isotropic_splat(Eigen::Vector3d(0.015625, 0.015625, 1.0), 0.03,
                                           3.0, Eigen::Vector3d(10.0, -10.0, 0.3)));
    Image img = render(cloud, cam, 1);
    ScreenState st = project_scalar(cloud.splats[0], cam);
    double alpha = st.alpha0 * falloff(st, 16, 16);
    CHECK(img.at(16, 16, 0) == 1.0);                       // clamped from above
    CHECK(img.at(16, 16, 1) == 0.0);                       // clamped from below
    CHECK(img.at(16, 16, 2) ==
          doctest::Approx(alpha * st.color[2]).epsilon(1e-12)); // untouched
    for (double v : img.pixels) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }
}

TEST_CASE("render: identical output for any thread count") {
    Rng rng(401);
    GaussianCloud cloud = small_random_scene(rng, 40, 3);
    Camera cam = identity_camera(48, 40.0);
    Image ref = render(cloud, cam, 1);
    for (int threads : {2, 3, 8}) {
        Image img = render(cloud, cam, threads);
        CHECK(img.pixels == ref.pixels);
    }
}

TEST_CASE("render: view-dependent color uses the normalized view direction") {
    // A splat with a strong degree-1 SH coefficient changes color when the
    // camera moves to the other side.
    GaussianCloud cloud;
    cloud.sh_degree = 1;
    GaussianSplat s = isotropic_splat(Eigen::Vector3d(0, 0, 0), 0.05, 3.0,
                                      Eigen::Vector3d(0.5, 0.5, 0.5));
    s.sh_rest[1] = 1.2; // z-direction basis term, red channel
    cloud.splats.push_back(s);

    Camera front = make_lookat(Eigen::Vector3d(0, 0, -2.0), Eigen::Vector3d::Zero(), 32.0,
                               32, 32);
    Camera behind = make_lookat(Eigen::Vector3d(0, 0, 2.0), Eigen::Vector3d::Zero(), 32.0,
                                32, 32);
    Image a = render(cloud, front, 1);
    Image b = render(cloud, behind, 1);
    double red_a = a.at(16, 16, 0), red_b = b.at(16, 16, 0);
    CHECK(std::fabs(red_a - red_b) > 0.2);
    CHECK(a.at(16, 16, 1) == doctest::Approx(b.at(16, 16, 1)).epsilon(1e-9));
}

// ---------------------------------------------------------------------------
// metrics

TEST_CASE("psnr: cap and known values") {
    Image a(8, 8), b(8, 8);
    CHECK(psnr(a, a) == 100.0);
    for (double& v : b.pixels) v = 0.1;
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-12));
    for (double& v : b.pixels) v = 0.5;
    CHECK(psnr(a, b) == doctest::Approx(10.0 * std::log10(1.0 / 0.25)).epsilon(1e-12));
    Image c(4, 4);
    CHECK_THROWS(psnr(a, c));
}

TEST_CASE("ssim: matches a dense reimplementation") {
    Rng rng(409);
    LossConfig cfg;
    for (auto [w, h] : std::vector<std::pair<int, int>>{{16, 16}, {13, 9}, {32, 7}}) {
        Image a(w, h), b(w, h);
        for (double& v : a.pixels) v = rng.uniform(0.0, 1.0);
        for (size_t i = 0; i < b.pixels.size(); ++i) {
            b.pixels[i] = std::clamp(a.pixels[i] + rng.normal(0.0, 0.1), 0.0, 1.0);
        }
        double got = ssim(a, b, cfg);
        double want = ssim_oracle(a, b, cfg);
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
        CHECK(ssim(a, a, cfg) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(got < 1.0);
        CHECK(ssim(a, b, cfg) == doctest::Approx(ssim(b, a, cfg)).epsilon(1e-12));
    }
}

TEST_CASE("ssim: tiny images shrink the window") {
    Rng rng(419);
    Image a(4, 4), b(4, 4);
    for (double& v : a.pixels) v = rng.uniform(0.0, 1.0);
    for (double& v : b.pixels) v = rng.uniform(0.0, 1.0);
    LossConfig cfg; // window 11 > 4: must shrink to 3
    double got = ssim(a, b, cfg);
    double want = ssim_oracle(a, b, cfg);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
    CHECK(std::isfinite(got));
}

TEST_CASE("loss: blends L1 and DSSIM with lambda") {
    Rng rng(421);
    Image a(12, 12), b(12, 12);
    for (double& v : a.pixels) v = rng.uniform(0.0, 1.0);
    for (double& v : b.pixels) v = rng.uniform(0.0, 1.0);
    LossConfig cfg;
    double l1 = 0.0;
    for (size_t i = 0; i < a.pixels.size(); ++i) l1 += std::fabs(a.pixels[i] - b.pixels[i]);
    l1 /= static_cast<double>(a.pixels.size());
    double want = cfg.lambda * l1 + (1.0 - cfg.lambda) * (1.0 - ssim_oracle(a, b, cfg));
    CHECK(loss(a, b, cfg) == doctest::Approx(want).epsilon(1e-12));
    CHECK(loss(a, a, cfg) == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
}

TEST_CASE("loss_gradient: matches per-pixel central differences") {
    Rng rng(431);
    LossConfig cfg;
    Image x(9, 8), y(9, 8);
    for (double& v : x.pixels) v = rng.uniform(0.05, 0.95);
    for (double& v : y.pixels) v = rng.uniform(0.05, 0.95);
    Image g = loss_gradient(x, y, cfg);
    const double h = 1e-6;
    for (size_t i = 0; i < x.pixels.size(); i += 7) {
        Image xp = x, xm = x;
        xp.pixels[i] += h;
        xm.pixels[i] -= h;
        double fd = (loss(xp, y, cfg) - loss(xm, y, cfg)) / (2.0 * h);
        CHECK(g.pixels[i] == doctest::Approx(fd).epsilon(1e-4));
    }
}

TEST_CASE("loss_gradient: vanishes at exact equality") {
    Rng rng(433);
    Image x(16, 11);
    for (double& v : x.pixels) v = rng.uniform(0.0, 1.0);
    Image g = loss_gradient(x, x, {});
    for (double v : g.pixels) CHECK(std::fabs(v) < 1e-14);
}

// ---------------------------------------------------------------------------
// analytic parameter gradients

TEST_CASE("gradients: match central finite differences") {
    Rng rng(443);
    LossConfig cfg;
    Camera cam = identity_camera(24, 24.0);

    size_t total = 0, passed = 0;
    for (int scene = 0; scene < 3; ++scene) {
        GaussianCloud cloud = small_random_scene(rng, 5, scene == 0 ? 0 : 3);
        GaussianCloud truth_cloud = small_random_scene(rng, 5, 3);
        Image truth = render(truth_cloud, cam, 1);

        GradientResult res = gradients(cloud, {}, cam, truth, cfg, 2);
        CHECK(res.loss_value == doctest::Approx(loss(render(cloud, cam, 1), truth, cfg))
                                    .epsilon(1e-12));

        const double h = 1e-5;
        for (size_t si = 0; si < cloud.size(); ++si) {
            auto params = splat_params(cloud.splats[si], res.grads[si]);
            for (auto& pr : params) {
                double saved = *pr.p;
                *pr.p = saved + h;
                double lp = loss(render(cloud, cam, 1), truth, cfg);
                *pr.p = saved - h;
                double lm = loss(render(cloud, cam, 1), truth, cfg);
                *pr.p = saved;
                double fd = (lp - lm) / (2.0 * h);
                ++total;
                double scale = std::max(std::fabs(fd), std::fabs(pr.grad));
                if (std::fabs(pr.grad - fd) <= std::max(1e-2 * scale, 1e-6)) ++passed;
            }
        }
    }
    // Footprint membership can flip under perturbation for a handful of
    // coordinates; everything else must agree.
    CHECK(static_cast<double>(passed) >= 0.99 * static_cast<double>(total));
}

TEST_CASE("gradients: frozen splats receive exactly zero gradient") {
    Rng rng(449);
    GaussianCloud cloud = small_random_scene(rng, 6, 3);
    Camera cam = identity_camera();
    Image truth = render(small_random_scene(rng, 4, 3), cam, 1);
    std::vector<uint8_t> trainable = {1, 0, 1, 0, 0, 1};
    GradientResult res = gradients(cloud, trainable, cam, truth, {}, 2);
    REQUIRE(res.grads.size() == 6);
    for (size_t i = 0; i < 6; ++i) {
        bool zero = res.grads[i].position.isZero(0.0) && res.grads[i].log_scale.isZero(0.0) &&
                    res.grads[i].rotation.isZero(0.0) &&
                    res.grads[i].opacity_logit == 0.0 && res.grads[i].sh_dc.isZero(0.0) &&
                    res.grads[i].sh_rest.isZero(0.0);
        if (trainable[i]) {
            CHECK_FALSE(zero); // overlapping scene: every splat shows up somewhere
        } else {
            CHECK(zero);
        }
    }
}

TEST_CASE("gradients: bitwise identical across thread counts") {
    Rng rng(457);
    GaussianCloud cloud = small_random_scene(rng, 24, 3);
    Camera cam = identity_camera(40, 36.0);
    Image truth = render(small_random_scene(rng, 10, 3), cam, 1);
    GradientResult a = gradients(cloud, {}, cam, truth, {}, 1);
    GradientResult b = gradients(cloud, {}, cam, truth, {}, 8);
    CHECK(a.loss_value == b.loss_value);
    CHECK(a.rendered.pixels == b.rendered.pixels);
    for (size_t i = 0; i < cloud.size(); ++i) {
        CHECK(a.grads[i].position == b.grads[i].position);
        CHECK(a.grads[i].log_scale == b.grads[i].log_scale);
        CHECK(a.grads[i].rotation == b.grads[i].rotation);
        CHECK(a.grads[i].opacity_logit == b.grads[i].opacity_logit);
        CHECK(a.grads[i].sh_dc == b.grads[i].sh_dc);
        CHECK(a.grads[i].sh_rest == b.grads[i].sh_rest);
    }
}

TEST_CASE("gradients: zero when rendering the truth itself") {
    Rng rng(461);
    GaussianCloud cloud = small_random_scene(rng, 8, 3);
    Camera cam = identity_camera();
    Image truth = render(cloud, cam, 1);
    GradientResult res = gradients(cloud, {}, cam, truth, {}, 2);
    CHECK(res.loss_value == doctest::Approx(0.0).scale(1.0).epsilon(1e-15));
    // The structural-loss backward pass cancels its terms only up to
    // floating-point rounding, so "zero" means dust-level magnitudes here.
    const double tol = 1e-12;
    for (const auto& g : res.grads) {
        CHECK(g.position.isZero(tol));
        CHECK(g.log_scale.isZero(tol));
        CHECK(g.rotation.isZero(tol));
        CHECK(std::fabs(g.opacity_logit) <= tol);
        CHECK(g.sh_dc.isZero(tol));
        CHECK(g.sh_rest.isZero(tol));
    }
}

TEST_CASE("gradients: rendered image equals render()") {
    Rng rng(463);
    GaussianCloud cloud = small_random_scene(rng, 12, 3);
    Camera cam = identity_camera();
    Image truth = render(small_random_scene(rng, 4, 3), cam, 1);
    GradientResult res = gradients(cloud, {}, cam, truth, {}, 3);
    Image direct = render(cloud, cam, 3);
    CHECK(res.rendered.pixels == direct.pixels);
}

// ---------------------------------------------------------------------------
// retraining

namespace {

struct RetrainFixture {
    std::vector<GaussianSplat> sketch;
    std::vector<GaussianSplat> patch;
    std::vector<Camera> cameras;
    std::vector<Image> truths;
};

// Truth renders come from the undisturbed scene; the patch splats start from
// perturbed parameters so there is error to optimize away.
RetrainFixture make_retrain_fixture(Rng& rng) {
    RetrainFixture fx;
    GaussianCloud scene = small_random_scene(rng, 8, 3);
    fx.sketch.assign(scene.splats.begin(), scene.splats.begin() + 4);
    fx.patch.assign(scene.splats.begin() + 4, scene.splats.end());

    fx.cameras.push_back(identity_camera());
    fx.cameras.push_back(make_lookat(Eigen::Vector3d(0.4, -0.3, -1.4),
                                     Eigen::Vector3d(0, 0, 1.4), 32.0, 32, 32));
    for (const auto& cam : fx.cameras) fx.truths.push_back(render(scene, cam, 2));

    for (auto& s : fx.patch) {
        for (int k = 0; k < 3; ++k) s.position[k] += rng.normal(0.0, 0.02);
        s.opacity_logit += rng.normal(0.0, 0.3);
        for (int k = 0; k < 3; ++k) s.sh_dc[k] += rng.normal(0.0, 0.1);
    }
    return fx;
}

} // namespace

TEST_CASE("retrain: loss decreases and the step log is complete") {
    Rng rng(467);
    RetrainFixture fx = make_retrain_fixture(rng);
    RetrainConfig cfg;
    cfg.steps = 60;
    cfg.seed = 3;
    cfg.threads = 2;
    RetrainResult res = retrain_patch(fx.sketch, fx.patch, fx.cameras, fx.truths, cfg, {});
    REQUIRE(res.step_losses.size() == 60);
    REQUIRE(res.patch.size() == fx.patch.size());

    // Mean loss over the final epoch-sized stretch beats the initial one.
    double first = res.step_losses[0] + res.step_losses[1];
    double last = res.step_losses[58] + res.step_losses[59];
    CHECK(last < first);
}

TEST_CASE("retrain: deterministic and thread-count independent") {
    Rng rng(479);
    RetrainFixture fx = make_retrain_fixture(rng);
    RetrainConfig cfg;
    cfg.steps = 10;
    cfg.seed = 12;
    cfg.threads = 1;
    RetrainResult a = retrain_patch(fx.sketch, fx.patch, fx.cameras, fx.truths, cfg, {});
    cfg.threads = 6;
    RetrainResult b = retrain_patch(fx.sketch, fx.patch, fx.cameras, fx.truths, cfg, {});
    REQUIRE(a.patch.size() == b.patch.size());
    CHECK(a.step_losses == b.step_losses);
    for (size_t i = 0; i < a.patch.size(); ++i) {
        CHECK(a.patch[i].position == b.patch[i].position);
        CHECK(a.patch[i].log_scale == b.patch[i].log_scale);
        CHECK(a.patch[i].rotation == b.patch[i].rotation);
        CHECK(a.patch[i].opacity_logit == b.patch[i].opacity_logit);
        CHECK(a.patch[i].sh_dc == b.patch[i].sh_dc);
        CHECK(a.patch[i].sh_rest == b.patch[i].sh_rest);
    }
}

TEST_CASE("retrain: empty patch and zero steps return immediately") {
    Rng rng(487);
    RetrainFixture fx = make_retrain_fixture(rng);
    RetrainConfig cfg;
    cfg.steps = 0;
    RetrainResult r0 = retrain_patch(fx.sketch, fx.patch, fx.cameras, fx.truths, cfg, {});
    CHECK(r0.step_losses.empty());
    REQUIRE(r0.patch.size() == fx.patch.size());
    for (size_t i = 0; i < fx.patch.size(); ++i) {
        CHECK(r0.patch[i].position == fx.patch[i].position);
    }

    cfg.steps = 5;
    RetrainResult r1 = retrain_patch(fx.sketch, {}, fx.cameras, fx.truths, cfg, {});
    CHECK(r1.patch.empty());
}

// ---------------------------------------------------------------------------
// synthetic scenes

TEST_CASE("synth: structure, labels, and geometry") {
    SynthConfig cfg;
    cfg.n_lines = 3;
    cfg.splats_per_line = 100;
    cfg.outlier_fraction = 0.1;
    cfg.free_splats = 60;
    cfg.seed = 77;
    SynthScene scene = make_synth_scene(cfg);

    const size_t expected = 3 * 100 + 60;
    REQUIRE(scene.cloud.size() == expected);
    REQUIRE(scene.on_line.size() == expected);
    REQUIRE(scene.is_outlier.size() == expected);
    REQUIRE(scene.lines.size() == 3);
    REQUIRE(scene.cameras.size() == static_cast<size_t>(cfg.n_cameras));

    const double nominal_radius = 0.005 * std::sqrt(3.0) * cfg.extent;
    size_t clean = 0, outliers = 0, free_splats = 0;
    for (size_t i = 0; i < scene.cloud.size(); ++i) {
        CHECK_FALSE((scene.on_line[i] && scene.is_outlier[i]));
        double dist = std::numeric_limits<double>::infinity();
        for (const auto& seg : scene.lines) {
            dist = std::min(dist, project_to_segment(scene.cloud.splats[i].position, seg).distance);
        }
        if (scene.on_line[i] || scene.is_outlier[i]) {
            CHECK(dist <= nominal_radius + 1e-12);
            scene.on_line[i] ? ++clean : ++outliers;
        } else {
            CHECK(dist > 3.0 * nominal_radius);
            ++free_splats;
        }
    }
    CHECK(clean == 3 * 90);
    CHECK(outliers == 3 * 10);
    CHECK(free_splats == 60);

    for (const auto& cam : scene.cameras) CHECK_NOTHROW(cam.validate());
    for (const auto& seg : scene.lines) CHECK(seg.length() >= 0.5 * cfg.extent);
    // Lines are mutually separated.
    for (size_t i = 0; i < scene.lines.size(); ++i) {
        for (size_t j = i + 1; j < scene.lines.size(); ++j) {
            double d = std::min(
                project_to_segment(scene.lines[i].p_start, scene.lines[j]).distance,
                project_to_segment(scene.lines[i].p_end, scene.lines[j]).distance);
            double d2 = std::min(
                project_to_segment(scene.lines[j].p_start, scene.lines[i]).distance,
                project_to_segment(scene.lines[j].p_end, scene.lines[i]).distance);
            CHECK(std::max(d, d2) > 3.0 * nominal_radius);
        }
    }
}

TEST_CASE("synth: seeded scenes reproduce bitwise, different seeds differ") {
    SynthConfig cfg;
    cfg.seed = 31;
    SynthScene a = make_synth_scene(cfg);
    SynthScene b = make_synth_scene(cfg);
    REQUIRE(a.cloud.size() == b.cloud.size());
    for (size_t i = 0; i < a.cloud.size(); ++i) {
        CHECK(a.cloud.splats[i].position == b.cloud.splats[i].position);
        CHECK(a.cloud.splats[i].opacity_logit == b.cloud.splats[i].opacity_logit);
    }
    cfg.seed = 32;
    SynthScene c = make_synth_scene(cfg);
    bool same = true;
    for (size_t i = 0; i < std::min(a.cloud.size(), c.cloud.size()); ++i) {
        if (a.cloud.splats[i].position != c.cloud.splats[i].position) same = false;
    }
    CHECK_FALSE(same);
}

TEST_CASE("synth: cameras see the scene") {
    SynthConfig cfg;
    cfg.seed = 91;
    SynthScene scene = make_synth_scene(cfg);
    Bounds b = compute_bounds(scene.cloud);
    Eigen::Vector3d center = 0.5 * (b.min + b.max);
    for (const auto& cam : scene.cameras) {
        Eigen::Vector3d xc = cam.rotation() * center + cam.translation();
        CHECK(xc[2] > 0.0);
        double u = cam.fx * xc[0] / xc[2] + cam.cx;
        double v = cam.fy * xc[1] / xc[2] + cam.cy;
        CHECK(u >= 0.0);
        CHECK(u <= cam.width);
        CHECK(v >= 0.0);
        CHECK(v <= cam.height);
    }
}

// ---------------------------------------------------------------------------
// pipeline

TEST_CASE("pipeline: select_top_longest keeps the longest, returns id order") {
    std::vector<LineSegment3D> lines(4);
    for (int i = 0; i < 4; ++i) {
        lines[i].id = i;
        lines[i].p_start = Eigen::Vector3d::Zero();
    }
    lines[0].p_end = Eigen::Vector3d(0.5, 0, 0);
    lines[1].p_end = Eigen::Vector3d(2.0, 0, 0);
    lines[2].p_end = Eigen::Vector3d(1.0, 0, 0);
    lines[3].p_end = Eigen::Vector3d(3.0, 0, 0);

    auto all = select_top_longest(lines, 0);
    CHECK(all.size() == 4);
    auto top2 = select_top_longest(lines, 2);
    REQUIRE(top2.size() == 2);
    CHECK(top2[0].id == 1);
    CHECK(top2[1].id == 3);
    auto top9 = select_top_longest(lines, 9);
    CHECK(top9.size() == 4);
}

TEST_CASE("pipeline: encode_scene report is self-consistent") {
    SynthConfig scfg;
    scfg.n_lines = 3;
    scfg.splats_per_line = 80;
    scfg.free_splats = 60;
    scfg.outlier_fraction = 0.1;
    scfg.seed = 10;
    SynthScene scene = make_synth_scene(scfg);

    EncodeConfig cfg;
    cfg.prune_factor = 3.0;
    cfg.partition.seed = 4;
    EncodeReport report;
    HybridModel model = encode_scene(scene.cloud, scene.lines, cfg, &report);

    CHECK(report.total_splats == scene.cloud.size());
    CHECK(report.sketch_splats == model.sketch_splat_count());
    CHECK(report.sketch_splats + report.patch_candidates == report.total_splats);
    CHECK(report.patch_splats ==
          static_cast<size_t>(std::ceil(report.patch_candidates / cfg.prune_factor)));
    CHECK(report.patch_splats == model.patch_splat_count());
    CHECK(report.line_groups == model.sketch_blocks.size());
    CHECK(report.final_groups.size() == model.sketch_blocks.size());
    for (size_t g = 0; g < report.final_groups.size(); ++g) {
        CHECK(report.final_groups[g].member_indices.size() ==
              model.sketch_blocks[g].count());
    }
    auto bytes = write_hybrid(model);
    CHECK(report.sizes.total == bytes.size());

    // Config snapshot carries the knobs needed to reproduce the encode.
    for (const char* key : {"prune_factor", "radius_effective", "eta", "min_group_size",
                            "quant_seed", "partition_seed"}) {
        CHECK(model.config.count(key) == 1);
    }

    // The decoded cloud has the advertised composition.
    GaussianCloud decoded = decode_full(model);
    CHECK(decoded.size() == report.sketch_splats + report.patch_splats);
}

TEST_CASE("pipeline: encode_scene rejects bad prune factors") {
    GaussianCloud cloud;
    cloud.splats.resize(3);
    EncodeConfig cfg;
    cfg.prune_factor = 0.5;
    CHECK_THROWS_AS(encode_scene(cloud, {}, cfg), std::invalid_argument);
}

TEST_CASE("pipeline: evaluate_views self-comparison saturates the metrics") {
    Rng rng(503);
    GaussianCloud cloud = small_random_scene(rng, 20, 3);
    std::vector<Camera> cams = {identity_camera(), identity_camera(24, 20.0)};
    auto metrics = evaluate_views(cloud, cloud, cams, {}, 2);
    REQUIRE(metrics.size() == 2);
    for (const auto& m : metrics) {
        CHECK(m.psnr == 100.0);
        CHECK(m.ssim == doctest::Approx(1.0).epsilon(1e-12));
    }

    // Truth-image overload agrees when truths are the quantized renders.
    std::vector<Image> truths;
    for (const auto& cam : cams) truths.push_back(quantize8(render(cloud, cam, 2)));
    auto vs_truth = evaluate_views(cloud, truths, cams, {}, 2);
    REQUIRE(vs_truth.size() == 2);
    for (const auto& m : vs_truth) {
        CHECK(m.psnr == 100.0);
        CHECK(m.ssim == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("pipeline: sweep produces decreasing sizes as pruning deepens") {
    SynthConfig scfg;
    scfg.n_lines = 2;
    scfg.splats_per_line = 100;
    scfg.free_splats = 120;
    scfg.n_cameras = 2;
    scfg.image_size = 32;
    scfg.seed = 21;
    SynthScene scene = make_synth_scene(scfg);

    EncodeConfig cfg;
    cfg.partition.seed = 2;
    auto points = sweep_prune(scene.cloud, scene.lines, cfg, {1.0, 2.0, 4.0},
                              scene.cameras, 2);
    REQUIRE(points.size() == 3);
    size_t raw = save_ply(scene.cloud).size();
    for (size_t i = 0; i < points.size(); ++i) {
        CHECK(points[i].error.empty());
        CHECK(points[i].line_fraction == 1.0);
        CHECK(points[i].file_bytes > 0);
        CHECK(points[i].sketch_bytes + points[i].patch_bytes < points[i].file_bytes);
        CHECK(points[i].compression_ratio ==
              doctest::Approx(static_cast<double>(raw) / points[i].file_bytes));
        CHECK(points[i].sketch_splats == points[0].sketch_splats);
        if (i > 0) {
            CHECK(points[i].file_bytes < points[i - 1].file_bytes);
            CHECK(points[i].patch_splats <= points[i - 1].patch_splats);
        }
    }
}

TEST_CASE("pipeline: sweep grids line fractions and records bad points") {
    SynthConfig scfg;
    scfg.n_lines = 3;
    scfg.splats_per_line = 60;
    scfg.free_splats = 60;
    scfg.n_cameras = 2;
    scfg.image_size = 32;
    scfg.seed = 23;
    SynthScene scene = make_synth_scene(scfg);

    EncodeConfig cfg;
    cfg.partition.seed = 2;
    // Factor 0.5 is invalid and must be recorded, not thrown.
    auto points = sweep_prune(scene.cloud, scene.lines, cfg, {0.5, 2.0}, scene.cameras,
                              2, {0.5, 1.0});
    REQUIRE(points.size() == 4);
    for (size_t i = 0; i < points.size(); ++i) {
        CHECK(points[i].line_fraction == (i < 2 ? 0.5 : 1.0));
        CHECK(points[i].prune_factor == (i % 2 == 0 ? 0.5 : 2.0));
        CHECK(points[i].error.empty() == (i % 2 == 1));
    }
    // Half the lines means a smaller sketch section for the same factor.
    CHECK(points[1].sketch_bytes < points[3].sketch_bytes);
    CHECK(points[1].sketch_splats < points[3].sketch_splats);

    CHECK_THROWS_AS(sweep_prune(scene.cloud, scene.lines, cfg, {2.0}, scene.cameras, 2,
                                {0.0}),
                    std::invalid_argument);
}

TEST_CASE("pipeline: encode_scene retrains the stored patch when asked") {
    SynthConfig scfg;
    scfg.n_lines = 2;
    scfg.splats_per_line = 60;
    scfg.free_splats = 80;
    scfg.n_cameras = 2;
    scfg.image_size = 32;
    scfg.seed = 27;
    SynthScene scene = make_synth_scene(scfg);
    std::vector<Image> truths;
    for (const Camera& cam : scene.cameras)
        truths.push_back(quantize8(render(scene.cloud, cam, 2)));

    EncodeConfig cfg;
    cfg.partition.seed = 3;
    cfg.prune_factor = 2.0;
    cfg.retrain_cfg.steps = 40;
    cfg.retrain_cfg.threads = 2;

    EncodeReport plain_rep;
    HybridModel plain = encode_scene(scene.cloud, scene.lines, cfg, &plain_rep);
    CHECK(plain.config.at("retrain") == "0");

    cfg.retrain = true;
    CHECK_THROWS_AS(encode_scene(scene.cloud, scene.lines, cfg), std::invalid_argument);
    EncodeReport rep;
    HybridModel model =
        encode_scene(scene.cloud, scene.lines, cfg, &rep, scene.cameras, truths);
    CHECK(model.config.at("retrain") == "1");
    CHECK(model.config.at("retrain_steps") == "40");

    // Same splat accounting and sketch bytes; only patch contents moved.
    CHECK(rep.sketch_splats == plain_rep.sketch_splats);
    CHECK(rep.patch_splats == plain_rep.patch_splats);
    REQUIRE(model.sketch_blocks.size() == plain.sketch_blocks.size());
    for (size_t b = 0; b < model.sketch_blocks.size(); ++b) {
        CHECK(model.sketch_blocks[b].t_q == plain.sketch_blocks[b].t_q);
    }
    bool patch_moved = model.patch_block.positions != plain.patch_block.positions ||
                       model.patch_block.indices != plain.patch_block.indices;
    for (int tag = 0; tag < 6 && !patch_moved; ++tag) {
        patch_moved = model.patch_block.codebooks[tag].entries !=
                      plain.patch_block.codebooks[tag].entries;
    }
    CHECK(patch_moved);

    // Retraining against the truth renders may only help the fit.
    GaussianCloud dec_plain = decode_full(plain);
    GaussianCloud dec_tuned = decode_full(model);
    auto m_plain = evaluate_views(dec_plain, truths, scene.cameras, {}, 2);
    auto m_tuned = evaluate_views(dec_tuned, truths, scene.cameras, {}, 2);
    double p0 = 0.0, p1 = 0.0;
    for (size_t i = 0; i < m_plain.size(); ++i) {
        p0 += m_plain[i].psnr;
        p1 += m_tuned[i].psnr;
    }
    CHECK(p1 > p0);
}

TEST_CASE("pipeline: format_double round trips") {
    CHECK(format_double(1.0) == "1");
    CHECK(format_double(0.5) == "0.5");
    Rng rng(509);
    for (int i = 0; i < 200; ++i) {
        double v = rng.normal(0.0, 100.0);
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(std::stod(format_double(0.1)) == 0.1);
}
