#include "skp/renderer.hpp"

#include "render_internal.hpp"
#include "skp/parallel.hpp"
#include "skp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace skp {

namespace {

using detail::ProjectedSplat;

// Per-splat gradients accumulated over pixels, in screen-space terms.
struct ScreenGrad {
    double u = 0.0, v = 0.0;
    double ia = 0.0, ib = 0.0, ic = 0.0; // d/d(inverse 2D covariance), ib doubled in q
    double alpha0 = 0.0;
    Eigen::Vector3d color = Eigen::Vector3d::Zero();
};

struct Contribution {
    uint32_t k = 0;
    double g = 0.0;
    double alpha = 0.0;
    double t_before = 0.0;
};

void backward_rows(const detail::ContributionMap& cm, const Image& g_img, int y0,
                   int y1, std::vector<ScreenGrad>& acc) {
    std::vector<Contribution> entries;
    for (int y = y0; y < y1; ++y) {
        for (int x = 0; x < cm.width; ++x) {
            const size_t pix = static_cast<size_t>(y) * cm.width + x;
            const auto& list = cm.per_pixel[pix];
            if (list.empty())
                continue;
            const Eigen::Vector3d g(g_img.at(y, x, 0), g_img.at(y, x, 1),
                                    g_img.at(y, x, 2));
            if (g.isZero(0.0))
                continue;

            entries.clear();
            double T = 1.0;
            for (uint32_t k : list) {
                if (T < detail::kTransmittanceCutoff)
                    break;
                const ProjectedSplat& p = cm.visible[k];
                const double dx = (x + 0.5) - p.u;
                const double dy = (y + 0.5) - p.v;
                const double q = p.ia * dx * dx + 2.0 * p.ib * dx * dy + p.ic * dy * dy;
                const double gaussian = std::exp(-0.5 * q);
                const double alpha = p.alpha0 * gaussian;
                entries.push_back({k, gaussian, alpha, T});
                T *= 1.0 - alpha;
            }

            Eigen::Vector3d suffix = Eigen::Vector3d::Zero();
            for (size_t i = entries.size(); i-- > 0;) {
                const Contribution& e = entries[i];
                const ProjectedSplat& p = cm.visible[e.k];
                ScreenGrad& sg = acc[e.k];

                const double weight = e.t_before * e.alpha;
                sg.color += weight * g;
                double d_alpha = 0.0;
                for (int ch = 0; ch < 3; ++ch)
                    d_alpha += g[ch] * (e.t_before * p.color[ch] -
                                        suffix[ch] / (1.0 - e.alpha));
                suffix += weight * p.color;

                sg.alpha0 += d_alpha * e.g;
                const double d_q = d_alpha * p.alpha0 * e.g * -0.5;
                const double dx = (x + 0.5) - p.u;
                const double dy = (y + 0.5) - p.v;
                sg.u -= d_q * 2.0 * (p.ia * dx + p.ib * dy);
                sg.v -= d_q * 2.0 * (p.ib * dx + p.ic * dy);
                sg.ia += d_q * dx * dx;
                sg.ib += d_q * 2.0 * dx * dy;
                sg.ic += d_q * dy * dy;
            }
        }
    }
}

SplatGrad chain_to_parameters(const GaussianSplat& splat, const ProjectedSplat& p,
                              const ScreenGrad& sg, const Camera& cam, int sh_degree) {
    SplatGrad out;

    out.opacity_logit = sg.alpha0 * p.alpha0 * (1.0 - p.alpha0);

    double basis[kShCoeffsPerChannel];
    Eigen::Vector3d dbasis[kShCoeffsPerChannel];
    const int n = detail::sh_rest_basis(p.view_dir, sh_degree, basis, dbasis);
    Eigen::Vector3d d_dir = Eigen::Vector3d::Zero();
    for (int ch = 0; ch < 3; ++ch) {
        out.sh_dc[ch] = detail::kShDcFactor * sg.color[ch];
        for (int k = 0; k < n; ++k) {
            out.sh_rest[ch * kShCoeffsPerChannel + k] = basis[k] * sg.color[ch];
            d_dir += dbasis[k] * (splat.sh_rest[ch * kShCoeffsPerChannel + k] * sg.color[ch]);
        }
    }
    // dir = (pos - center)/dist: project out the radial component.
    Eigen::Vector3d d_pos =
        (d_dir - p.view_dir * p.view_dir.dot(d_dir)) / p.view_dist;

    // Inverse 2D covariance back to the dilated 2D covariance.
    Eigen::Matrix2d m_inv;
    m_inv << p.ia, p.ib, p.ib, p.ic;
    Eigen::Matrix2d g_hat;
    g_hat << sg.ia, 0.5 * sg.ib, 0.5 * sg.ib, sg.ic;
    const Eigen::Matrix2d g_cov2 = -m_inv * g_hat * m_inv;

    const double z = p.x_cam.z();
    const double xc = p.x_cam.x(), yc = p.x_cam.y();
    Eigen::Matrix<double, 2, 3> J;
    J << cam.fx / z, 0.0, -cam.fx * xc / (z * z),
         0.0, cam.fy / z, -cam.fy * yc / (z * z);

    const Eigen::Matrix3d W = cam.rotation();
    const Eigen::Matrix3d cov_world = covariance(splat);
    const Eigen::Matrix3d cov_cam = W * cov_world * W.transpose();

    const Eigen::Matrix3d g_cov_cam = J.transpose() * g_cov2 * J;
    const Eigen::Matrix<double, 2, 3> g_j = 2.0 * g_cov2 * J * cov_cam;
    const Eigen::Matrix3d g_cov_world = W.transpose() * g_cov_cam * W;

    // Covariance factors: R * diag(exp(2 s)) * R^T.
    const double norm = splat.rotation.norm();
    const Eigen::Vector4d qh = splat.rotation / norm;
    const Eigen::Matrix3d R = rotation_matrix(splat.rotation);
    const Eigen::Vector3d axis_var = (2.0 * splat.log_scale.array()).exp();
    const Eigen::Matrix3d g_r = 2.0 * g_cov_world * R * axis_var.asDiagonal();
    const Eigen::Matrix3d g_axis = R.transpose() * g_cov_world * R;
    for (int i = 0; i < 3; ++i)
        out.log_scale[i] = g_axis(i, i) * 2.0 * axis_var[i];

    const double qw = qh[0], qx = qh[1], qy = qh[2], qz = qh[3];
    Eigen::Matrix3d dR[4];
    dR[0] << 0, -2 * qz, 2 * qy, 2 * qz, 0, -2 * qx, -2 * qy, 2 * qx, 0;
    dR[1] << 0, 2 * qy, 2 * qz, 2 * qy, -4 * qx, -2 * qw, 2 * qz, 2 * qw, -4 * qx;
    dR[2] << -4 * qy, 2 * qx, 2 * qw, 2 * qx, 0, 2 * qz, -2 * qw, 2 * qz, -4 * qy;
    dR[3] << -4 * qz, -2 * qw, 2 * qx, 2 * qw, -4 * qz, 2 * qy, 2 * qx, 2 * qy, 0;
    Eigen::Vector4d g_qh;
    for (int c = 0; c < 4; ++c)
        g_qh[c] = (g_r.array() * dR[c].array()).sum();
    out.rotation = (g_qh - qh * qh.dot(g_qh)) / norm;

    // Projection of the center and the Jacobian entries, back to camera space.
    Eigen::Vector3d d_xcam = Eigen::Vector3d::Zero();
    d_xcam.x() += sg.u * cam.fx / z;
    d_xcam.z() -= sg.u * cam.fx * xc / (z * z);
    d_xcam.y() += sg.v * cam.fy / z;
    d_xcam.z() -= sg.v * cam.fy * yc / (z * z);

    const double z2 = z * z, z3 = z2 * z;
    d_xcam.x() += g_j(0, 2) * (-cam.fx / z2);
    d_xcam.y() += g_j(1, 2) * (-cam.fy / z2);
    d_xcam.z() += g_j(0, 0) * (-cam.fx / z2) + g_j(0, 2) * (2.0 * cam.fx * xc / z3) +
                  g_j(1, 1) * (-cam.fy / z2) + g_j(1, 2) * (2.0 * cam.fy * yc / z3);

    d_pos += W.transpose() * d_xcam;
    out.position = d_pos;
    return out;
}

void accumulate(ScreenGrad& into, const ScreenGrad& from) {
    into.u += from.u;
    into.v += from.v;
    into.ia += from.ia;
    into.ib += from.ib;
    into.ic += from.ic;
    into.alpha0 += from.alpha0;
    into.color += from.color;
}

} // namespace

GradientResult gradients(const GaussianCloud& cloud, const std::vector<uint8_t>& trainable,
                         const Camera& cam, const Image& truth, const LossConfig& cfg,
                         int threads) {
    if (!trainable.empty() && trainable.size() != cloud.splats.size())
        throw std::invalid_argument("trainable mask size mismatch");
    if (truth.width != cam.width || truth.height != cam.height)
        throw std::invalid_argument("truth image does not match camera size");

    const detail::ContributionMap cm = detail::build_contributions(cloud, cam);
    const int W = cam.width, H = cam.height;

    Image raw(W, H);
    Image rendered(W, H);
    parallel_for(static_cast<size_t>(H), threads, [&](size_t row) {
        const int y = static_cast<int>(row);
        for (int x = 0; x < W; ++x) {
            double T = 1.0;
            Eigen::Vector3d rgb = Eigen::Vector3d::Zero();
            for (uint32_t k : cm.per_pixel[row * W + x]) {
                if (T < detail::kTransmittanceCutoff)
                    break;
                const ProjectedSplat& p = cm.visible[k];
                const double dx = (x + 0.5) - p.u;
                const double dy = (y + 0.5) - p.v;
                const double q = p.ia * dx * dx + 2.0 * p.ib * dx * dy + p.ic * dy * dy;
                const double alpha = p.alpha0 * std::exp(-0.5 * q);
                rgb += (T * alpha) * p.color;
                T *= 1.0 - alpha;
            }
            for (int c = 0; c < 3; ++c) {
                raw.at(y, x, c) = rgb[c];
                rendered.at(y, x, c) = std::clamp(rgb[c], 0.0, 1.0);
            }
        }
    });

    GradientResult result;
    result.loss_value = loss(rendered, truth, cfg);
    result.rendered = rendered;

    Image g_img = loss_gradient(rendered, truth, cfg);
    for (size_t i = 0; i < g_img.pixels.size(); ++i)
        if (raw.pixels[i] < 0.0 || raw.pixels[i] > 1.0)
            g_img.pixels[i] = 0.0; // clamped channel: zero slope

    const int blocks = std::max(1, std::min(detail::kGradRowBlocks, H));
    std::vector<std::vector<ScreenGrad>> partial(blocks);
    parallel_for(static_cast<size_t>(blocks), threads, [&](size_t b) {
        partial[b].assign(cm.visible.size(), {});
        const int y0 = static_cast<int>(b * H / blocks);
        const int y1 = static_cast<int>((b + 1) * H / blocks);
        backward_rows(cm, g_img, y0, y1, partial[b]);
    });

    std::vector<ScreenGrad> acc(cm.visible.size());
    for (int b = 0; b < blocks; ++b)
        for (size_t k = 0; k < acc.size(); ++k)
            accumulate(acc[k], partial[b][k]);

    result.grads.assign(cloud.splats.size(), {});
    parallel_for(cm.visible.size(), threads, [&](size_t k) {
        const ProjectedSplat& p = cm.visible[k];
        if (!trainable.empty() && !trainable[p.index])
            return;
        result.grads[p.index] = chain_to_parameters(cloud.splats[p.index], p, acc[k],
                                                    cam, cloud.sh_degree);
    });
    return result;
}

namespace {

void adam_step(double& theta, double g, double& m, double& v, double lr, double bc1,
               double bc2, const RetrainConfig& cfg) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    theta -= lr * (m / bc1) / (std::sqrt(v / bc2) + cfg.epsilon);
}

} // namespace

RetrainResult retrain_patch(const std::vector<GaussianSplat>& sketch_decoded,
                            const std::vector<GaussianSplat>& patch,
                            const std::vector<Camera>& cameras,
                            const std::vector<Image>& truths,
                            const RetrainConfig& cfg, const LossConfig& loss_cfg) {
    if (cameras.empty() || cameras.size() != truths.size())
        throw std::invalid_argument("retraining needs matching cameras and images");
    RetrainResult result;
    result.patch = patch;
    if (patch.empty() || cfg.steps <= 0)
        return result;

    GaussianCloud cloud;
    cloud.sh_degree = cfg.sh_degree;
    cloud.splats = sketch_decoded;
    cloud.splats.insert(cloud.splats.end(), patch.begin(), patch.end());
    std::vector<uint8_t> trainable(cloud.splats.size(), 0);
    std::fill(trainable.begin() + sketch_decoded.size(), trainable.end(), 1);

    const Bounds bounds = compute_bounds(cloud);
    double extent = (bounds.max - bounds.min).norm();
    if (!(extent > 1e-12))
        extent = 1.0;
    const double lr_pos = cfg.lr_position < 0.0 ? 1.6e-4 * extent : cfg.lr_position;

    const size_t base = sketch_decoded.size();
    std::vector<SplatGrad> m(patch.size()), v(patch.size());
    std::vector<size_t> order(cameras.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng(cfg.seed);

    for (int step = 0; step < cfg.steps; ++step) {
        const size_t slot = static_cast<size_t>(step) % order.size();
        if (slot == 0)
            rng.shuffle(order);
        const size_t view = order[slot];

        GradientResult res = gradients(cloud, trainable, cameras[view], truths[view],
                                       loss_cfg, cfg.threads);
        result.step_losses.push_back(res.loss_value);

        const double bc1 = 1.0 - std::pow(cfg.beta1, step + 1);
        const double bc2 = 1.0 - std::pow(cfg.beta2, step + 1);
        for (size_t i = 0; i < patch.size(); ++i) {
            GaussianSplat& s = cloud.splats[base + i];
            const SplatGrad& g = res.grads[base + i];
            for (int c = 0; c < 3; ++c) {
                adam_step(s.position[c], g.position[c], m[i].position[c],
                          v[i].position[c], lr_pos, bc1, bc2, cfg);
                adam_step(s.log_scale[c], g.log_scale[c], m[i].log_scale[c],
                          v[i].log_scale[c], cfg.lr_scale, bc1, bc2, cfg);
                adam_step(s.sh_dc[c], g.sh_dc[c], m[i].sh_dc[c], v[i].sh_dc[c],
                          cfg.lr_sh_dc, bc1, bc2, cfg);
            }
            for (int c = 0; c < 4; ++c)
                adam_step(s.rotation[c], g.rotation[c], m[i].rotation[c],
                          v[i].rotation[c], cfg.lr_rotation, bc1, bc2, cfg);
            adam_step(s.opacity_logit, g.opacity_logit, m[i].opacity_logit,
                      v[i].opacity_logit, cfg.lr_opacity, bc1, bc2, cfg);
            for (int c = 0; c < kShRestSize; ++c)
                adam_step(s.sh_rest[c], g.sh_rest[c], m[i].sh_rest[c], v[i].sh_rest[c],
                          cfg.lr_sh_rest, bc1, bc2, cfg);
        }
    }

    result.patch.assign(cloud.splats.begin() + base, cloud.splats.end());
    return result;
}

} // namespace skp
