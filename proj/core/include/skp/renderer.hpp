#pragma once

#include "skp/camera.hpp"
#include "skp/gaussian.hpp"
#include "skp/image.hpp"

#include <cstdint>
#include <vector>

namespace skp {

struct LossConfig {
    double lambda = 0.8; // loss = lambda * L1 + (1 - lambda) * (1 - SSIM)
    int ssim_window = 11;
    double ssim_sigma = 1.5;
    double ssim_k1 = 0.01;
    double ssim_k2 = 0.03;
};

// Software splatting: perspective projection, first-order 2D covariance with
// a 0.3-pixel dilation, front-to-back alpha compositing in center-depth order
// (ties by splat index), 3-sigma footprint clip, 1e-4 transmittance cutoff,
// black background. Deterministic for identical inputs.
Image render(const GaussianCloud& cloud, const Camera& cam, int threads = 0);

// 10*log10(1/MSE) over all channels, capped at 100 when MSE < 1e-10.
double psnr(const Image& a, const Image& b);

// Mean SSIM over channels, Gaussian window (shrunk to fit tiny images).
double ssim(const Image& a, const Image& b, const LossConfig& cfg = {});

double loss(const Image& rendered, const Image& truth, const LossConfig& cfg = {});

// dLoss/dPixel of `rendered`, same shape as the inputs.
Image loss_gradient(const Image& rendered, const Image& truth, const LossConfig& cfg = {});

struct SplatGrad {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();
    Eigen::Vector3d log_scale = Eigen::Vector3d::Zero();
    Eigen::Vector4d rotation = Eigen::Vector4d::Zero();
    double opacity_logit = 0.0;
    Eigen::Vector3d sh_dc = Eigen::Vector3d::Zero();
    Eigen::Matrix<double, kShRestSize, 1> sh_rest =
        Eigen::Matrix<double, kShRestSize, 1>::Zero();
};

struct GradientResult {
    double loss_value = 0.0;
    Image rendered; // clamped, identical to render()
    std::vector<SplatGrad> grads; // per splat; zero for frozen splats
};

// Analytic dLoss/dParameter for every splat with trainable[i] != 0.
// `trainable` may be empty (everything trainable) or cloud-sized.
GradientResult gradients(const GaussianCloud& cloud, const std::vector<uint8_t>& trainable,
                         const Camera& cam, const Image& truth,
                         const LossConfig& cfg = {}, int threads = 0);

struct RetrainConfig {
    int steps = 500;
    int sh_degree = 3;
    double lr_position = -1.0; // < 0: 1.6e-4 x scene bounds diagonal
    double lr_opacity = 0.05;
    double lr_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_sh_dc = 2.5e-3;
    double lr_sh_rest = 1.25e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-15;
    uint64_t seed = 1;
    int threads = 0;
};

struct RetrainResult {
    std::vector<GaussianSplat> patch;
    std::vector<double> step_losses;
};

// Adaptive-moment updates on the patch splats only; the decoded sketch splats
// participate in the forward pass but stay frozen. Views cycle in seeded
// random order, reshuffled each epoch.
RetrainResult retrain_patch(const std::vector<GaussianSplat>& sketch_decoded,
                            const std::vector<GaussianSplat>& patch,
                            const std::vector<Camera>& cameras,
                            const std::vector<Image>& truths,
                            const RetrainConfig& cfg = {},
                            const LossConfig& loss_cfg = {});

} // namespace skp
