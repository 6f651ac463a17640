#include "skp/partition.hpp"

#include "skp/parallel.hpp"
#include "skp/polyfit.hpp"
#include "skp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace skp {

namespace {

double median_of(std::vector<double> v) {
    size_t n = v.size();
    std::sort(v.begin(), v.end());
    if (n % 2 == 1) return v[n / 2];
    return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double percentile_sorted(const std::vector<double>& sorted, double q) {
    double idx = q * static_cast<double>(sorted.size() - 1);
    auto lo = static_cast<size_t>(std::floor(idx));
    auto hi = static_cast<size_t>(std::ceil(idx));
    double frac = idx - static_cast<double>(lo);
    return sorted[lo] * (1.0 - frac) + sorted[hi] * frac;
}

// eta * MAD threshold over the residual population, floored.
double residual_threshold(const std::vector<double>& residuals, double eta) {
    double med = median_of(residuals);
    std::vector<double> dev(residuals.size());
    for (size_t i = 0; i < residuals.size(); ++i) dev[i] = std::fabs(residuals[i] - med);
    double mad = median_of(dev);
    return std::max(eta * mad, kResidualFloor);
}

std::vector<double> model_residuals(const PolyModel& model, const std::vector<double>& t,
                                    const std::vector<Eigen::VectorXd>& values) {
    std::vector<double> r(t.size());
    for (size_t i = 0; i < t.size(); ++i) {
        r[i] = (values[i] - model.evaluate(t[i])).norm();
    }
    return r;
}

} // namespace

double PartitionConfig::effective_radius(const GaussianCloud& cloud) const {
    if (radius_r > 0.0) return radius_r;
    return 0.005 * compute_bounds(cloud).diagonal();
}

std::vector<std::pair<size_t, double>> radius_search(const GaussianCloud& cloud,
                                                     const LineSegment3D& seg, double r) {
    std::vector<std::pair<size_t, double>> hits;
    Eigen::Vector3d mid = 0.5 * (seg.p_start + seg.p_end);
    double half_len = 0.5 * seg.length();
    // Conservative bounding-sphere reject before the exact projection.
    double reach = r + half_len;
    reach += 1e-12 * (reach + 1.0);
    double reach2 = reach * reach;
    for (size_t i = 0; i < cloud.splats.size(); ++i) {
        const Eigen::Vector3d& p = cloud.splats[i].position;
        if ((p - mid).squaredNorm() > reach2) continue;
        LineProjection proj = project_to_segment(p, seg);
        if (proj.distance <= r) hits.emplace_back(i, proj.t);
    }
    return hits;
}

RansacResult ransac_attribute(const std::vector<double>& t,
                              const std::vector<Eigen::VectorXd>& values,
                              const PartitionConfig& cfg) {
    return ransac_attribute(t, values, cfg, cfg.seed);
}

RansacResult ransac_attribute(const std::vector<double>& t,
                              const std::vector<Eigen::VectorXd>& values,
                              const PartitionConfig& cfg, uint64_t seed) {
    if (t.size() != values.size()) {
        throw std::invalid_argument("ransac_attribute: mismatched input lengths");
    }
    const size_t n = t.size();
    const size_t sample_size = static_cast<size_t>(cfg.fit_degree) + 1;

    RansacResult result;
    if (n < sample_size) {
        result.degenerate = true;
        result.inliers.resize(n);
        for (size_t i = 0; i < n; ++i) result.inliers[i] = i;
        return result;
    }

    Rng rng(seed);
    // Candidate selection is least-median-of-squares: an adaptive MAD
    // threshold cannot rank candidates (a bad model widens its own band and
    // claims the most points), but the median residual is monotone in model
    // quality for any outlier share below one half.
    double best_median = std::numeric_limits<double>::infinity();
    std::vector<double> best_residuals;

    std::vector<double> sample_t(sample_size);
    std::vector<Eigen::VectorXd> sample_v(sample_size);
    for (int iter = 0; iter < cfg.ransac_iters; ++iter) {
        auto pick = rng.sample_distinct(n, sample_size);
        for (size_t j = 0; j < sample_size; ++j) {
            sample_t[j] = t[pick[j]];
            sample_v[j] = values[pick[j]];
        }
        PolyModel model = fit_poly(sample_t, sample_v, cfg.fit_degree);
        std::vector<double> residuals = model_residuals(model, t, values);
        double med = median_of(residuals);
        if (med < best_median) {
            best_median = med;
            best_residuals = std::move(residuals);
        }
    }
    if (best_residuals.empty()) return result;

    // Inliers of the winning candidate under the MAD band, then one refit on
    // them and one recompute against the refit model.
    double eps = residual_threshold(best_residuals, cfg.eta);
    std::vector<size_t> best_inliers;
    for (size_t i = 0; i < n; ++i) {
        if (best_residuals[i] <= eps) best_inliers.push_back(i);
    }
    if (best_inliers.empty()) return result;

    std::vector<double> fit_t;
    std::vector<Eigen::VectorXd> fit_v;
    fit_t.reserve(best_inliers.size());
    fit_v.reserve(best_inliers.size());
    for (size_t i : best_inliers) {
        fit_t.push_back(t[i]);
        fit_v.push_back(values[i]);
    }
    PolyModel refit = fit_poly(fit_t, fit_v, cfg.fit_degree);
    std::vector<double> residuals = model_residuals(refit, t, values);
    eps = residual_threshold(residuals, cfg.eta);
    for (size_t i = 0; i < n; ++i) {
        if (residuals[i] <= eps) result.inliers.push_back(i);
    }
    return result;
}

std::vector<size_t> intersect_inliers(const std::array<std::vector<size_t>, 4>& sets) {
    std::vector<size_t> out = sets[0];
    for (int s = 1; s < 4; ++s) {
        std::vector<size_t> next;
        std::set_intersection(out.begin(), out.end(), sets[s].begin(), sets[s].end(),
                              std::back_inserter(next));
        out.swap(next);
    }
    return out;
}

std::vector<Eigen::Vector4d> align_quaternion_signs(const std::vector<double>& t,
                                                    const std::vector<Eigen::Vector4d>& quats) {
    if (t.size() != quats.size()) {
        throw std::invalid_argument("align_quaternion_signs: mismatched input lengths");
    }
    if (quats.empty()) return {};

    // Each member is flipped into the hemisphere of a shared reference
    // direction: the dominant eigenvector of the second-moment matrix. The
    // second moment is sign-invariant (q and -q contribute the same qq^T),
    // so the reference depends only on the rotations, not on the stored
    // signs, and a few aberrant members cannot drag it far. Chaining flips
    // member-to-member along t would let a single aberrant quaternion flip
    // everything after it.
    Eigen::Matrix4d second_moment = Eigen::Matrix4d::Zero();
    for (const Eigen::Vector4d& q : quats) second_moment += q * q.transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4d> es(second_moment);
    Eigen::Vector4d ref = es.eigenvectors().col(3); // largest eigenvalue
    int pivot;
    ref.cwiseAbs().maxCoeff(&pivot);
    if (ref[pivot] < 0.0) ref = -ref; // canonical sign keeps output deterministic

    std::vector<Eigen::Vector4d> aligned = quats;
    for (Eigen::Vector4d& q : aligned) {
        if (q.dot(ref) < 0.0) q = -q;
    }
    return aligned;
}

IqrSplit iqr_scale_filter(const SketchGroup& group,
                          const std::vector<GaussianSplat>& decoded,
                          const LineSegment3D& seg, const PartitionConfig& cfg) {
    if (decoded.size() != group.member_indices.size()) {
        throw std::invalid_argument("iqr_scale_filter: decoded size mismatch");
    }
    IqrSplit split;
    const size_t m = decoded.size();
    if (m < 4) {
        split.kept = group.member_indices;
        return split;
    }

    std::vector<double> max_scale(m);
    for (size_t i = 0; i < m; ++i) {
        max_scale[i] = std::exp(decoded[i].log_scale.maxCoeff());
    }
    std::vector<double> sorted = max_scale;
    std::sort(sorted.begin(), sorted.end());
    double q1 = percentile_sorted(sorted, 0.25);
    double q3 = percentile_sorted(sorted, 0.75);
    double threshold = q3 + cfg.iqr_multiplier * (q3 - q1);

    Eigen::Vector3d dir = seg.direction();
    for (size_t i = 0; i < m; ++i) {
        bool keep = true;
        if (max_scale[i] > threshold) {
            Eigen::Matrix3d r = rotation_matrix(decoded[i].rotation);
            int longest;
            decoded[i].log_scale.maxCoeff(&longest);
            double cos = std::fabs(r.col(longest).dot(dir));
            keep = cos >= cfg.alignment_cos_min;
        }
        (keep ? split.kept : split.reclassified).push_back(group.member_indices[i]);
    }
    return split;
}

PartitionResult partition(const GaussianCloud& cloud, const std::vector<LineSegment3D>& lines,
                          const PartitionConfig& cfg) {
    const double r = cfg.effective_radius(cloud);
    const size_t n = cloud.size();

    // Assign each splat to its nearest line within the radius (ties keep the
    // earlier line in file order), then fan candidates out per line.
    std::vector<std::vector<std::pair<size_t, double>>> candidates(lines.size());
    for (size_t i = 0; i < n; ++i) {
        double best_d = std::numeric_limits<double>::infinity();
        size_t best_line = SIZE_MAX;
        double best_t = 0.0;
        for (size_t j = 0; j < lines.size(); ++j) {
            LineProjection proj = project_to_segment(cloud.splats[i].position, lines[j]);
            if (proj.distance <= r && proj.distance < best_d) {
                best_d = proj.distance;
                best_line = j;
                best_t = proj.t;
            }
        }
        if (best_line != SIZE_MAX) candidates[best_line].emplace_back(i, best_t);
    }

    // Per-line outcome; splats not claimed by any group fall through to Patch.
    std::vector<SketchGroup> outcomes(lines.size());

    parallel_for(lines.size(), cfg.threads, [&](size_t j) {
        const auto& cand = candidates[j];
        if (cand.size() < static_cast<size_t>(cfg.min_group_size)) return;

        std::vector<double> t(cand.size());
        std::vector<Eigen::VectorXd> opacity(cand.size()), color(cand.size()),
            scale(cand.size()), rotation(cand.size());
        std::vector<Eigen::Vector4d> quats(cand.size());
        for (size_t i = 0; i < cand.size(); ++i) {
            const GaussianSplat& s = cloud.splats[cand[i].first];
            t[i] = cand[i].second;
            opacity[i] = Eigen::VectorXd::Constant(1, s.opacity_logit);
            color[i] = s.sh_dc;
            scale[i] = s.log_scale;
            quats[i] = s.rotation;
        }
        std::vector<Eigen::Vector4d> aligned = align_quaternion_signs(t, quats);
        for (size_t i = 0; i < cand.size(); ++i) rotation[i] = aligned[i];

        std::array<std::vector<size_t>, 4> inlier_sets;
        const std::vector<Eigen::VectorXd>* channels[4] = {&opacity, &color, &scale, &rotation};
        for (int c = 0; c < 4; ++c) {
            inlier_sets[c] =
                ransac_attribute(t, *channels[c], cfg, derive_seed(cfg.seed, 4 * j + c))
                    .inliers;
        }
        std::vector<size_t> joint = intersect_inliers(inlier_sets);

        if (joint.size() >= static_cast<size_t>(cfg.min_group_size)) {
            outcomes[j].line_id = lines[j].id;
            for (size_t i : joint) {
                outcomes[j].member_indices.push_back(cand[i].first);
                outcomes[j].member_t.push_back(cand[i].second);
            }
        }
    });

    PartitionResult result;
    std::vector<uint8_t> in_group(n, 0);
    for (auto& group : outcomes) {
        if (!group.member_indices.empty()) {
            for (size_t idx : group.member_indices) in_group[idx] = 1;
            result.groups.push_back(std::move(group));
        }
    }
    for (size_t i = 0; i < n; ++i) {
        if (!in_group[i]) result.patch_indices.push_back(i);
    }
    return result;
}

} // namespace skp
