#pragma once

#include "skp/gaussian.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace skp {

// Codebook attribute pools, in wire order.
enum class AttributeTag : uint8_t {
    opacity = 0,   // 1 component per splat
    scale = 1,     // 3
    rot_real = 2,  // 1
    rot_imag = 3,  // 3
    color_dc = 4,  // 3
    color_rest = 5 // 45
};

constexpr std::array<AttributeTag, 6> kAllAttributeTags = {
    AttributeTag::opacity,  AttributeTag::scale,    AttributeTag::rot_real,
    AttributeTag::rot_imag, AttributeTag::color_dc, AttributeTag::color_rest};

size_t components_per_splat(AttributeTag tag);

constexpr size_t kCodebookSize = 256;

// Scalar codebook; entries are sorted ascending, unique, and
// binary16-representable.
struct Codebook {
    AttributeTag tag = AttributeTag::opacity;
    std::vector<double> entries;
};

// Patch splats after scalar vector quantization. Positions are stored as
// half-floats and never codebook-quantized; every other attribute component
// becomes a one-byte index into its codebook.
struct QuantizedPatchBlock {
    std::vector<Eigen::Vector3d> positions; // binary16-representable components
    std::array<Codebook, 6> codebooks;      // indexed by AttributeTag
    std::array<std::vector<uint8_t>, 6> indices;

    size_t count() const { return positions.size(); }
    size_t byte_size() const; // serialized size of this block
};

// Keeps ceil(n / factor) of the given splat indices, selected uniformly
// without replacement, returned ascending. factor < 1 is invalid; factor == 1
// keeps everything.
std::vector<size_t> prune_uniform(const std::vector<size_t>& indices, double factor,
                                  uint64_t seed);

struct KmeansResult {
    std::vector<double> centroids;      // sorted ascending
    std::vector<uint16_t> assignments;  // nearest-centroid index per input value
};

// Seeded 1D k-means: k-means++ initialization, Lloyd iterations, empty
// clusters reseeded to the value farthest from its centroid. When the input
// has <= k distinct values, every distinct value becomes a centroid.
KmeansResult kmeans_1d(const std::vector<double>& values, size_t k, int iterations,
                       uint64_t seed);

// Builds the six codebooks (k-means over each attribute pool, centroids
// rounded to half precision and deduplicated) and assigns every component the
// index of its nearest entry. Ties go to the smaller entry.
QuantizedPatchBlock quantize_patch(const std::vector<GaussianSplat>& splats, uint64_t seed,
                                   int kmeans_iterations = 25);
QuantizedPatchBlock quantize_patch(const GaussianCloud& cloud,
                                   const std::vector<size_t>& indices, uint64_t seed,
                                   int kmeans_iterations = 25);

// Reconstructs splats from codebook entries; sh_rest beyond the block's reach
// stays zero. Decoded splats appear in stored order.
std::vector<GaussianSplat> dequantize_patch(const QuantizedPatchBlock& block);

} // namespace skp
