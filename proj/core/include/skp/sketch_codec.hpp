#pragma once

#include "skp/gaussian.hpp"
#include "skp/lines.hpp"
#include "skp/partition.hpp"
#include "skp/polyfit.hpp"

#include <cstdint>
#include <vector>

namespace skp {

// One encoded line group. Endpoints and model coefficients are kept
// binary32-representable so the in-memory block always matches its wire form.
// The per-splat payload is the 16-bit fixed-point line parameter
// t_q = round(t * 65535); models are fit and evaluated at t_q / 65535.
struct SketchLineBlock {
    uint32_t line_id = 0;
    Eigen::Vector3d p_start = Eigen::Vector3d::Zero();
    Eigen::Vector3d p_end = Eigen::Vector3d::Zero();
    std::vector<uint16_t> t_q;
    PolyModel opacity_model;  // k=1, opacity logit
    PolyModel color_model;    // k=3, SH DC
    PolyModel scale_model;    // k=3, log scales
    PolyModel rotation_model; // k=4, sign-aligned quaternion

    size_t count() const { return t_q.size(); }
    size_t byte_size() const; // serialized size of this block
};

struct DecodeStats {
    size_t zero_norm_quaternions = 0; // replaced by identity during decode
};

// Fits the four per-attribute models for one group. Quaternions are
// sign-aligned before fitting; degrees come from select_degree on the
// dequantized parameters. Throws std::invalid_argument for groups smaller
// than two members.
SketchLineBlock encode_group(const GaussianCloud& cloud, const SketchGroup& group,
                             const LineSegment3D& seg);

// Reconstructs the group's splats in member order: positions exactly on the
// segment, attributes from the models, sh_rest zeroed, quaternions
// renormalized (zero-norm evaluations fall back to identity and are counted
// in stats).
std::vector<GaussianSplat> decode_group(const SketchLineBlock& block,
                                        DecodeStats* stats = nullptr);

} // namespace skp
