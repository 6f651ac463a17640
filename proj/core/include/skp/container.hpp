#pragma once

#include "skp/patch_codec.hpp"
#include "skp/sketch_codec.hpp"

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace skp {

struct ContainerError : std::runtime_error {
    enum class Kind { bad_magic, bad_version, crc_mismatch, truncated, malformed };
    Kind kind;
    size_t offset;
    ContainerError(Kind kind, const std::string& message, size_t offset);
};

// Full hybrid model as carried by a container file. The textual header
// snapshot holds configuration as canonical key-sorted "key=value" lines.
struct HybridModel {
    uint8_t version = 1;
    int sh_degree = 3;
    std::map<std::string, std::string> config;
    std::vector<SketchLineBlock> sketch_blocks;
    QuantizedPatchBlock patch_block;

    size_t sketch_splat_count() const;
    size_t patch_splat_count() const { return patch_block.count(); }
};

struct SizeBreakdown {
    size_t header_bytes = 0; // version, sh_degree, length field, payload
    size_t sketch_bytes = 0; // block count field plus all blocks
    size_t patch_bytes = 0;
    size_t total = 0;        // header + sketch + patch + magic + CRC
};

// Serializes to the binary little-endian layout documented in format.md:
// "SKPH" magic, version, sh_degree, textual header, sketch blocks, patch
// block, trailing CRC32 of all preceding bytes.
std::vector<uint8_t> write_hybrid(const HybridModel& model,
                                  SizeBreakdown* breakdown = nullptr);

// Parses and validates a container: magic and version first, then the
// trailing CRC over the full prefix, then bounds-checked sections. Every
// failure throws ContainerError with the offending byte offset.
HybridModel read_hybrid(const std::vector<uint8_t>& bytes);

// Decoded cloud: all sketch groups in block order, then the patch splats.
GaussianCloud decode_full(const HybridModel& model, DecodeStats* stats = nullptr);

// CRC-32 (IEEE 802.3, reflected 0xEDB88320 polynomial).
uint32_t crc32(const uint8_t* data, size_t size);

} // namespace skp
