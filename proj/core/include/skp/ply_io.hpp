#pragma once

#include "skp/gaussian.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace skp {

struct PlyError : std::runtime_error {
    size_t offset; // byte offset of the failure in the input
    PlyError(const std::string& message, size_t offset);
};

// Binary little-endian PLY with the usual splat vertex schema: x y z,
// nx ny nz, f_dc_0..2, f_rest_0..44, opacity, scale_0..2, rot_0..3, all
// float32. Normals are discarded on load and written as zeros on save, so
// save(load(bytes)) reproduces canonical files byte for byte.
GaussianCloud load_ply(const std::vector<uint8_t>& bytes);
std::vector<uint8_t> save_ply(const GaussianCloud& cloud);

GaussianCloud load_ply_file(const std::string& path);
void save_ply_file(const GaussianCloud& cloud, const std::string& path);

std::vector<uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<uint8_t>& bytes);

} // namespace skp
