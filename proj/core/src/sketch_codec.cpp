#include "skp/sketch_codec.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace skp {

namespace {

constexpr double kTScale = 65535.0;

double round_f32(double x) {
    return static_cast<double>(static_cast<float>(x));
}

void round_model_f32(PolyModel& model) {
    for (Eigen::Index i = 0; i < model.coeffs.size(); ++i) {
        model.coeffs(i) = round_f32(model.coeffs(i));
    }
}

PolyModel fit_attribute(const std::vector<double>& t,
                        const std::vector<Eigen::VectorXd>& values) {
    PolyModel model = fit_poly(t, values, select_degree(t, values));
    round_model_f32(model);
    return model;
}

} // namespace

size_t SketchLineBlock::byte_size() const {
    size_t bytes = 4 + 6 * 4 + 4 + 2 * t_q.size(); // id, endpoints, count, t_q
    for (const PolyModel* m : {&opacity_model, &color_model, &scale_model, &rotation_model}) {
        bytes += 2 + 4 * static_cast<size_t>(m->coeffs.size());
    }
    return bytes;
}

SketchLineBlock encode_group(const GaussianCloud& cloud, const SketchGroup& group,
                             const LineSegment3D& seg) {
    const size_t n = group.member_indices.size();
    if (n < 2) throw std::invalid_argument("encode_group: group below minimum size");
    if (group.member_t.size() != n) {
        throw std::invalid_argument("encode_group: member_t size mismatch");
    }

    SketchLineBlock block;
    block.line_id = static_cast<uint32_t>(seg.id);
    block.p_start = seg.p_start.cast<float>().cast<double>();
    block.p_end = seg.p_end.cast<float>().cast<double>();

    block.t_q.resize(n);
    std::vector<double> t(n);
    for (size_t i = 0; i < n; ++i) {
        double tq = std::nearbyint(group.member_t[i] * kTScale);
        block.t_q[i] = static_cast<uint16_t>(std::clamp(tq, 0.0, kTScale));
        t[i] = static_cast<double>(block.t_q[i]) / kTScale;
    }

    std::vector<Eigen::VectorXd> opacity(n), color(n), scale(n), rotation(n);
    std::vector<Eigen::Vector4d> quats(n);
    for (size_t i = 0; i < n; ++i) {
        const GaussianSplat& s = cloud.splats[group.member_indices[i]];
        opacity[i] = Eigen::VectorXd::Constant(1, s.opacity_logit);
        color[i] = s.sh_dc;
        scale[i] = s.log_scale;
        quats[i] = s.rotation;
    }
    std::vector<Eigen::Vector4d> aligned = align_quaternion_signs(t, quats);
    for (size_t i = 0; i < n; ++i) rotation[i] = aligned[i];

    block.opacity_model = fit_attribute(t, opacity);
    block.color_model = fit_attribute(t, color);
    block.scale_model = fit_attribute(t, scale);
    block.rotation_model = fit_attribute(t, rotation);
    return block;
}

std::vector<GaussianSplat> decode_group(const SketchLineBlock& block, DecodeStats* stats) {
    std::vector<GaussianSplat> out(block.count());
    for (size_t i = 0; i < block.count(); ++i) {
        double t = static_cast<double>(block.t_q[i]) / kTScale;
        GaussianSplat& s = out[i];
        s.position = (1.0 - t) * block.p_start + t * block.p_end;
        s.opacity_logit = block.opacity_model.evaluate(t)[0];
        s.sh_dc = block.color_model.evaluate(t);
        s.log_scale = block.scale_model.evaluate(t);
        Eigen::Vector4d q = block.rotation_model.evaluate(t);
        double norm = q.norm();
        if (norm > 1e-12) {
            s.rotation = q / norm;
        } else {
            s.rotation = Eigen::Vector4d(1, 0, 0, 0);
            if (stats) ++stats->zero_norm_quaternions;
        }
        s.sh_rest.setZero();
    }
    return out;
}

} // namespace skp
