#pragma once

#include "skp/camera.hpp"
#include "skp/gaussian.hpp"
#include "skp/lines.hpp"

#include <cstdint>
#include <vector>

namespace skp {

// Synthetic scene with known structure: a few well-separated line segments
// carrying splats whose attributes follow low-degree polynomials in the
// normalized position along the line, plus attribute outliers riding the same
// lines and free splats away from every line.
struct SynthConfig {
    int n_lines = 3;
    int splats_per_line = 200;
    double outlier_fraction = 0.05; // of each line's members
    int free_splats = 150;
    double extent = 1.0;            // scene box side length
    double attribute_noise = 1e-7;  // sigma on every clean attribute channel
    double offset_scale = 0.5;      // perpendicular jitter, fraction of the
                                    // nominal partition radius
    int sh_degree = 3;
    int n_cameras = 5;
    int image_size = 64;
    uint64_t seed = 42;
};

struct SynthScene {
    GaussianCloud cloud;
    std::vector<LineSegment3D> lines;
    std::vector<Camera> cameras;
    std::vector<uint8_t> on_line;    // clean line member
    std::vector<uint8_t> is_outlier; // line-adjacent attribute outlier
};

SynthScene make_synth_scene(const SynthConfig& cfg);

} // namespace skp
