#include "skp/patch_codec.hpp"

#include "skp/half.hpp"
#include "skp/rng.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace skp {

size_t components_per_splat(AttributeTag tag) {
    switch (tag) {
        case AttributeTag::opacity: return 1;
        case AttributeTag::scale: return 3;
        case AttributeTag::rot_real: return 1;
        case AttributeTag::rot_imag: return 3;
        case AttributeTag::color_dc: return 3;
        case AttributeTag::color_rest: return 45;
    }
    throw std::invalid_argument("components_per_splat: bad tag");
}

size_t QuantizedPatchBlock::byte_size() const {
    size_t bytes = 4 + 6 * positions.size();
    for (const auto& cb : codebooks) bytes += 1 + 2 + 2 * cb.entries.size();
    for (const auto& idx : indices) bytes += idx.size();
    return bytes;
}

std::vector<size_t> prune_uniform(const std::vector<size_t>& indices, double factor,
                                  uint64_t seed) {
    if (!(factor >= 1.0)) throw std::invalid_argument("prune_uniform: factor must be >= 1");
    if (indices.empty()) return {};
    auto keep = static_cast<size_t>(
        std::ceil(static_cast<double>(indices.size()) / factor));
    Rng rng(seed);
    std::vector<size_t> picked = rng.sample_distinct(indices.size(), keep);
    std::vector<size_t> out;
    out.reserve(keep);
    for (size_t p : picked) out.push_back(indices[p]);
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

// Index of the nearest entry in a sorted list; exact ties take the smaller
// entry.
size_t nearest_entry(const std::vector<double>& entries, double v) {
    auto it = std::lower_bound(entries.begin(), entries.end(), v);
    if (it == entries.begin()) return 0;
    if (it == entries.end()) return entries.size() - 1;
    size_t hi = static_cast<size_t>(it - entries.begin());
    size_t lo = hi - 1;
    return (v - entries[lo]) <= (entries[hi] - v) ? lo : hi;
}

} // namespace

KmeansResult kmeans_1d(const std::vector<double>& values, size_t k, int iterations,
                       uint64_t seed) {
    if (k == 0 || k > kCodebookSize) {
        throw std::invalid_argument("kmeans_1d: k out of range");
    }
    KmeansResult result;
    if (values.empty()) return result;

    std::vector<double> sorted = values;
    std::sort(sorted.begin(), sorted.end());
    std::vector<double> distinct = sorted;
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    std::vector<double> centroids;
    if (distinct.size() <= k) {
        centroids = distinct; // exact cover, zero distortion
    } else {
        const size_t n = sorted.size();
        Rng rng(seed);

        // k-means++ seeding over the sorted multiset.
        centroids.reserve(k);
        centroids.push_back(sorted[rng.below(n)]);
        std::vector<double> d2(n);
        for (size_t i = 0; i < n; ++i) {
            double d = sorted[i] - centroids[0];
            d2[i] = d * d;
        }
        while (centroids.size() < k) {
            double total = 0.0;
            for (double d : d2) total += d;
            size_t pick = 0;
            if (total > 0.0) {
                double target = rng.uniform() * total;
                double run = 0.0;
                for (size_t i = 0; i < n; ++i) {
                    run += d2[i];
                    if (run >= target) {
                        pick = i;
                        break;
                    }
                    pick = i;
                }
            } else {
                pick = rng.below(n);
            }
            double c = sorted[pick];
            centroids.push_back(c);
            for (size_t i = 0; i < n; ++i) {
                double d = sorted[i] - c;
                d2[i] = std::min(d2[i], d * d);
            }
        }
        std::sort(centroids.begin(), centroids.end());

        std::vector<double> prefix(n + 1, 0.0);
        for (size_t i = 0; i < n; ++i) prefix[i + 1] = prefix[i] + sorted[i];

        std::vector<size_t> start(k + 1);
        for (int iter = 0; iter < iterations; ++iter) {
            // Cluster ranges from centroid midpoints; a value exactly on a
            // boundary joins the lower cluster.
            start[0] = 0;
            for (size_t c = 0; c + 1 < k; ++c) {
                double boundary = 0.5 * (centroids[c] + centroids[c + 1]);
                start[c + 1] = static_cast<size_t>(
                    std::upper_bound(sorted.begin(), sorted.end(), boundary) -
                    sorted.begin());
            }
            start[k] = n;

            std::vector<double> updated(k);
            std::vector<size_t> empties;
            for (size_t c = 0; c < k; ++c) {
                size_t lo = start[c], hi = start[c + 1];
                if (hi > lo) {
                    updated[c] = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
                } else {
                    updated[c] = centroids[c];
                    empties.push_back(c);
                }
            }
            if (!empties.empty()) {
                // Reseed each empty cluster to the value farthest from its
                // currently assigned centroid.
                std::vector<double> dist(n);
                for (size_t c = 0; c < k; ++c) {
                    for (size_t i = start[c]; i < start[c + 1]; ++i) {
                        dist[i] = std::fabs(sorted[i] - centroids[c]);
                    }
                }
                for (size_t e : empties) {
                    size_t far = static_cast<size_t>(
                        std::max_element(dist.begin(), dist.end()) - dist.begin());
                    updated[e] = sorted[far];
                    dist[far] = -1.0;
                }
            }
            std::sort(updated.begin(), updated.end());
            if (updated == centroids) break;
            centroids.swap(updated);
        }
        centroids.erase(std::unique(centroids.begin(), centroids.end()), centroids.end());
    }

    result.centroids = centroids;
    result.assignments.resize(values.size());
    for (size_t i = 0; i < values.size(); ++i) {
        result.assignments[i] = static_cast<uint16_t>(nearest_entry(centroids, values[i]));
    }
    return result;
}

namespace {

void gather_components(const GaussianSplat& s, AttributeTag tag, double* out) {
    switch (tag) {
        case AttributeTag::opacity:
            out[0] = s.opacity_logit;
            break;
        case AttributeTag::scale:
            for (int i = 0; i < 3; ++i) out[i] = s.log_scale[i];
            break;
        case AttributeTag::rot_real:
            out[0] = s.rotation[0];
            break;
        case AttributeTag::rot_imag:
            for (int i = 0; i < 3; ++i) out[i] = s.rotation[i + 1];
            break;
        case AttributeTag::color_dc:
            for (int i = 0; i < 3; ++i) out[i] = s.sh_dc[i];
            break;
        case AttributeTag::color_rest:
            for (int i = 0; i < kShRestSize; ++i) out[i] = s.sh_rest[i];
            break;
    }
}

void scatter_components(GaussianSplat& s, AttributeTag tag, const double* in) {
    switch (tag) {
        case AttributeTag::opacity:
            s.opacity_logit = in[0];
            break;
        case AttributeTag::scale:
            for (int i = 0; i < 3; ++i) s.log_scale[i] = in[i];
            break;
        case AttributeTag::rot_real:
            s.rotation[0] = in[0];
            break;
        case AttributeTag::rot_imag:
            for (int i = 0; i < 3; ++i) s.rotation[i + 1] = in[i];
            break;
        case AttributeTag::color_dc:
            for (int i = 0; i < 3; ++i) s.sh_dc[i] = in[i];
            break;
        case AttributeTag::color_rest:
            for (int i = 0; i < kShRestSize; ++i) s.sh_rest[i] = in[i];
            break;
    }
}

} // namespace

QuantizedPatchBlock quantize_patch(const std::vector<GaussianSplat>& splats, uint64_t seed,
                                   int kmeans_iterations) {
    QuantizedPatchBlock block;
    block.positions.reserve(splats.size());
    for (const auto& s : splats) {
        Eigen::Vector3d p;
        for (int i = 0; i < 3; ++i) p[i] = from_half(to_half(s.position[i]));
        block.positions.push_back(p);
    }

    std::vector<double> pool;
    std::vector<double> scratch(kShRestSize);
    for (AttributeTag tag : kAllAttributeTags) {
        size_t comps = components_per_splat(tag);
        size_t ti = static_cast<size_t>(tag);
        pool.clear();
        pool.reserve(comps * splats.size());
        for (const auto& s : splats) {
            gather_components(s, tag, scratch.data());
            pool.insert(pool.end(), scratch.begin(), scratch.begin() + comps);
        }

        Codebook& cb = block.codebooks[ti];
        cb.tag = tag;
        cb.entries.clear();
        block.indices[ti].clear();
        if (pool.empty()) continue;

        KmeansResult km = kmeans_1d(pool, kCodebookSize, kmeans_iterations,
                                    derive_seed(seed, ti));
        cb.entries.reserve(km.centroids.size());
        for (double c : km.centroids) cb.entries.push_back(from_half(to_half(c)));
        std::sort(cb.entries.begin(), cb.entries.end());
        cb.entries.erase(std::unique(cb.entries.begin(), cb.entries.end()),
                         cb.entries.end());

        block.indices[ti].resize(pool.size());
        for (size_t i = 0; i < pool.size(); ++i) {
            block.indices[ti][i] = static_cast<uint8_t>(nearest_entry(cb.entries, pool[i]));
        }
    }
    return block;
}

QuantizedPatchBlock quantize_patch(const GaussianCloud& cloud,
                                   const std::vector<size_t>& indices, uint64_t seed,
                                   int kmeans_iterations) {
    std::vector<GaussianSplat> splats;
    splats.reserve(indices.size());
    for (size_t i : indices) splats.push_back(cloud.splats.at(i));
    return quantize_patch(splats, seed, kmeans_iterations);
}

std::vector<GaussianSplat> dequantize_patch(const QuantizedPatchBlock& block) {
    const size_t n = block.count();
    for (AttributeTag tag : kAllAttributeTags) {
        size_t ti = static_cast<size_t>(tag);
        if (block.indices[ti].size() != n * components_per_splat(tag)) {
            throw std::invalid_argument("dequantize_patch: index array size mismatch");
        }
    }

    std::vector<GaussianSplat> out(n);
    std::vector<double> scratch(kShRestSize);
    for (size_t i = 0; i < n; ++i) {
        out[i].position = block.positions[i];
        for (AttributeTag tag : kAllAttributeTags) {
            size_t ti = static_cast<size_t>(tag);
            size_t comps = components_per_splat(tag);
            const Codebook& cb = block.codebooks[ti];
            for (size_t c = 0; c < comps; ++c) {
                uint8_t idx = block.indices[ti][i * comps + c];
                if (idx >= cb.entries.size()) {
                    throw std::invalid_argument("dequantize_patch: index out of range");
                }
                scratch[c] = cb.entries[idx];
            }
            scatter_components(out[i], tag, scratch.data());
        }
    }
    return out;
}

} // namespace skp
