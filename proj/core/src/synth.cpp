#include "skp/synth.hpp"

#include "skp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace skp {

namespace {

double segment_distance(const LineSegment3D& a, const LineSegment3D& b) {
    double best = std::numeric_limits<double>::max();
    constexpr int kSamples = 33;
    for (int i = 0; i < kSamples; ++i) {
        const double t = static_cast<double>(i) / (kSamples - 1);
        best = std::min(best, project_to_segment(a.point_at(t), b).distance);
        best = std::min(best, project_to_segment(b.point_at(t), a).distance);
    }
    return best;
}

double point_line_clearance(const std::vector<LineSegment3D>& lines,
                            const Eigen::Vector3d& p) {
    double best = std::numeric_limits<double>::max();
    for (const LineSegment3D& seg : lines)
        best = std::min(best, project_to_segment(p, seg).distance);
    return best;
}

Eigen::Vector3d random_in_box(Rng& rng, double lo, double hi) {
    return {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
}

// One polynomial per channel component, evaluated with Horner.
struct ChannelPoly {
    std::vector<Eigen::VectorXd> comps; // ascending powers

    double eval(int c, double t) const {
        const Eigen::VectorXd& a = comps[c];
        double v = 0.0;
        for (int i = static_cast<int>(a.size()) - 1; i >= 0; --i)
            v = v * t + a[i];
        return v;
    }
};

ChannelPoly random_poly(Rng& rng, int comps, int degree, double const_lo,
                        double const_hi, double coeff_amp) {
    ChannelPoly p;
    p.comps.resize(comps);
    for (int c = 0; c < comps; ++c) {
        Eigen::VectorXd a(degree + 1);
        a[0] = rng.uniform(const_lo, const_hi);
        for (int i = 1; i <= degree; ++i)
            a[i] = rng.uniform(-coeff_amp, coeff_amp);
        p.comps[c] = a;
    }
    return p;
}

Eigen::Vector3d perpendicular_jitter(Rng& rng, const Eigen::Vector3d& dir,
                                     double max_len) {
    for (int attempt = 0; attempt < 64; ++attempt) {
        Eigen::Vector3d v(rng.normal(), rng.normal(), rng.normal());
        v -= dir * dir.dot(v);
        const double n = v.norm();
        if (n > 1e-9)
            return v * (rng.uniform(0.0, max_len) / n);
    }
    return Eigen::Vector3d::Zero();
}

} // namespace

SynthScene make_synth_scene(const SynthConfig& cfg) {
    if (cfg.n_lines < 0 || cfg.splats_per_line < 0 || cfg.free_splats < 0 ||
        !(cfg.extent > 0.0) || cfg.n_cameras < 0 || cfg.image_size < 8 ||
        cfg.sh_degree < 0 || cfg.sh_degree > kMaxShDegree)
        throw std::invalid_argument("invalid synthetic scene configuration");

    Rng rng(cfg.seed);
    SynthScene scene;
    scene.cloud.sh_degree = cfg.sh_degree;
    const double extent = cfg.extent;
    // The partitioner derives its radius from the cloud bounds diagonal; the
    // splats fill the scene box, so this estimate tracks it closely.
    const double nominal_radius = 0.005 * std::sqrt(3.0) * extent;

    for (int j = 0; j < cfg.n_lines; ++j) {
        LineSegment3D seg;
        seg.id = static_cast<uint32_t>(j);
        bool placed = false;
        for (int attempt = 0; attempt < 1000 && !placed; ++attempt) {
            seg.p_start = random_in_box(rng, 0.1 * extent, 0.9 * extent);
            seg.p_end = random_in_box(rng, 0.1 * extent, 0.9 * extent);
            if (seg.length() < 0.5 * extent)
                continue;
            placed = true;
            for (const LineSegment3D& other : scene.lines)
                if (segment_distance(seg, other) < 0.12 * extent)
                    placed = false;
        }
        if (!placed)
            throw std::runtime_error("failed to place separated line segments");
        scene.lines.push_back(seg);
    }

    const double scale_lo = std::log(0.015 * extent);
    const double scale_hi = std::log(0.04 * extent);
    for (const LineSegment3D& seg : scene.lines) {
        const ChannelPoly opacity = random_poly(rng, 1, 1, 0.5, 2.0, 0.8);
        const ChannelPoly color = random_poly(rng, 3, 3, -1.0, 1.0, 0.3);
        const ChannelPoly log_scale =
            random_poly(rng, 3, 3, scale_lo, scale_hi, 0.05);
        ChannelPoly rotation;
        for (int attempt = 0; attempt < 100; ++attempt) {
            Eigen::Vector4d q0(rng.normal(), rng.normal(), rng.normal(), rng.normal());
            if (q0.norm() < 1e-6)
                continue;
            q0.normalize();
            rotation = random_poly(rng, 4, 3, 0.0, 0.0, 0.1);
            for (int c = 0; c < 4; ++c)
                rotation.comps[c][0] = q0[c];
            double min_norm = std::numeric_limits<double>::max();
            for (int i = 0; i < 33; ++i) {
                const double t = i / 32.0;
                Eigen::Vector4d q;
                for (int c = 0; c < 4; ++c)
                    q[c] = rotation.eval(c, t);
                min_norm = std::min(min_norm, q.norm());
            }
            if (min_norm > 0.3)
                break;
        }

        const Eigen::Vector3d dir = seg.direction();
        const int n_outliers = static_cast<int>(
            std::lround(cfg.outlier_fraction * cfg.splats_per_line));
        for (int i = 0; i < cfg.splats_per_line; ++i) {
            const double t = rng.uniform();
            GaussianSplat s;
            s.position = seg.point_at(t) +
                         perpendicular_jitter(rng, dir, cfg.offset_scale * nominal_radius);
            s.opacity_logit = opacity.eval(0, t) + cfg.attribute_noise * rng.normal();
            for (int c = 0; c < 3; ++c) {
                s.sh_dc[c] = color.eval(c, t) + cfg.attribute_noise * rng.normal();
                s.log_scale[c] = log_scale.eval(c, t) + cfg.attribute_noise * rng.normal();
            }
            for (int c = 0; c < 4; ++c)
                s.rotation[c] = rotation.eval(c, t) + cfg.attribute_noise * rng.normal();

            const bool outlier = i < n_outliers;
            if (outlier) {
                auto kick = [&rng](double magnitude_lo, double magnitude_hi) {
                    const double m = rng.uniform(magnitude_lo, magnitude_hi);
                    return rng.uniform() < 0.5 ? -m : m;
                };
                s.opacity_logit += kick(1.0, 2.5);
                for (int c = 0; c < 3; ++c) {
                    s.sh_dc[c] += kick(0.4, 1.0);
                    s.log_scale[c] += kick(0.4, 1.0);
                }
                for (int c = 0; c < 4; ++c)
                    s.rotation[c] += kick(0.4, 1.0);
            }
            scene.cloud.splats.push_back(s);
            scene.on_line.push_back(outlier ? 0 : 1);
            scene.is_outlier.push_back(outlier ? 1 : 0);
        }
    }

    for (int i = 0; i < cfg.free_splats; ++i) {
        GaussianSplat s;
        for (int attempt = 0; attempt < 1000; ++attempt) {
            s.position = random_in_box(rng, 0.0, extent);
            if (point_line_clearance(scene.lines, s.position) > 3.0 * nominal_radius)
                break;
        }
        s.opacity_logit = rng.uniform(-1.0, 2.0);
        for (int c = 0; c < 3; ++c) {
            s.sh_dc[c] = rng.uniform(-1.0, 1.0);
            s.log_scale[c] = rng.uniform(scale_lo, scale_hi);
        }
        Eigen::Vector4d q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        if (q.norm() < 1e-6)
            q = Eigen::Vector4d(1, 0, 0, 0);
        s.rotation = q.normalized();
        for (int c = 0; c < kShRestSize; ++c)
            s.sh_rest[c] = rng.uniform(-0.05, 0.05);
        scene.cloud.splats.push_back(s);
        scene.on_line.push_back(0);
        scene.is_outlier.push_back(0);
    }

    // Shuffle so nothing downstream can rely on generation order.
    std::vector<size_t> perm(scene.cloud.splats.size());
    for (size_t i = 0; i < perm.size(); ++i)
        perm[i] = i;
    rng.shuffle(perm);
    SynthScene shuffled;
    shuffled.cloud.sh_degree = scene.cloud.sh_degree;
    shuffled.lines = scene.lines;
    shuffled.cloud.splats.reserve(perm.size());
    shuffled.on_line.reserve(perm.size());
    shuffled.is_outlier.reserve(perm.size());
    for (size_t i : perm) {
        shuffled.cloud.splats.push_back(scene.cloud.splats[i]);
        shuffled.on_line.push_back(scene.on_line[i]);
        shuffled.is_outlier.push_back(scene.is_outlier[i]);
    }

    const Eigen::Vector3d center(0.5 * extent, 0.5 * extent, 0.5 * extent);
    const double ring = 1.9 * extent;
    const double focal = 0.65 * cfg.image_size;
    for (int i = 0; i < cfg.n_cameras; ++i) {
        const double theta = 2.0 * M_PI * i / std::max(1, cfg.n_cameras) + 0.5;
        const Eigen::Vector3d eye = center + Eigen::Vector3d(ring * std::cos(theta),
                                                             -0.5 * extent,
                                                             ring * std::sin(theta));
        shuffled.cameras.push_back(
            make_lookat(eye, center, focal, cfg.image_size, cfg.image_size));
    }
    return shuffled;
}

} // namespace skp
