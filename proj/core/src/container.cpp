#include "skp/container.hpp"

#include "skp/half.hpp"

#include <array>
#include <bit>
#include <cstring>

namespace skp {

namespace {

constexpr char kMagic[4] = {'S', 'K', 'P', 'H'};
constexpr uint8_t kVersion = 1;

const char* kind_name(ContainerError::Kind kind) {
    switch (kind) {
        case ContainerError::Kind::bad_magic: return "bad magic";
        case ContainerError::Kind::bad_version: return "bad version";
        case ContainerError::Kind::crc_mismatch: return "CRC mismatch";
        case ContainerError::Kind::truncated: return "truncated";
        case ContainerError::Kind::malformed: return "malformed";
    }
    return "unknown";
}

struct Writer {
    std::vector<uint8_t> bytes;

    void u8(uint8_t v) { bytes.push_back(v); }
    void u16(uint16_t v) {
        bytes.push_back(static_cast<uint8_t>(v));
        bytes.push_back(static_cast<uint8_t>(v >> 8));
    }
    void u32(uint32_t v) {
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<uint8_t>(v >> (8 * i)));
    }
    void f32(double v) { u32(std::bit_cast<uint32_t>(static_cast<float>(v))); }
    void raw(const void* data, size_t size) {
        const auto* p = static_cast<const uint8_t*>(data);
        bytes.insert(bytes.end(), p, p + size);
    }
};

struct Reader {
    const std::vector<uint8_t>& bytes;
    size_t pos = 0;

    void require(size_t n) const {
        if (bytes.size() - pos < n) {
            throw ContainerError(ContainerError::Kind::truncated,
                                 "unexpected end of data", pos);
        }
    }
    uint8_t u8() {
        require(1);
        return bytes[pos++];
    }
    uint16_t u16() {
        require(2);
        uint16_t v = static_cast<uint16_t>(bytes[pos]) |
                     static_cast<uint16_t>(bytes[pos + 1]) << 8;
        pos += 2;
        return v;
    }
    uint32_t u32() {
        require(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(bytes[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    double f32() { return static_cast<double>(std::bit_cast<float>(u32())); }
};

void write_model(Writer& w, const PolyModel& model, int expected_k) {
    if (model.degree < 0 || model.degree > 10 ||
        model.coeffs.rows() != model.degree + 1 || model.coeffs.cols() != expected_k) {
        throw std::invalid_argument("write_hybrid: inconsistent polynomial model");
    }
    w.u8(static_cast<uint8_t>(model.degree));
    w.u8(static_cast<uint8_t>(expected_k));
    for (Eigen::Index j = 0; j <= model.degree; ++j) {
        for (Eigen::Index c = 0; c < expected_k; ++c) w.f32(model.coeffs(j, c));
    }
}

PolyModel read_model(Reader& r, int expected_k) {
    size_t at = r.pos;
    int degree = r.u8();
    int k = r.u8();
    if (degree > 10) {
        throw ContainerError(ContainerError::Kind::malformed,
                             "polynomial degree out of range", at);
    }
    if (k != expected_k) {
        throw ContainerError(ContainerError::Kind::malformed,
                             "unexpected component count in model", at + 1);
    }
    PolyModel model;
    model.degree = degree;
    model.coeffs.resize(degree + 1, k);
    for (int j = 0; j <= degree; ++j) {
        for (int c = 0; c < k; ++c) model.coeffs(j, c) = r.f32();
    }
    return model;
}

constexpr std::array<int, 4> kModelComponents = {1, 3, 3, 4};

} // namespace

ContainerError::ContainerError(Kind kind_in, const std::string& message, size_t offset_in)
    : std::runtime_error(std::string(kind_name(kind_in)) + ": " + message + " (byte " +
                         std::to_string(offset_in) + ")"),
      kind(kind_in),
      offset(offset_in) {}

size_t HybridModel::sketch_splat_count() const {
    size_t n = 0;
    for (const auto& b : sketch_blocks) n += b.count();
    return n;
}

uint32_t crc32(const uint8_t* data, size_t size) {
    static const auto table = [] {
        std::array<uint32_t, 256> t{};
        for (uint32_t i = 0; i < 256; ++i) {
            uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    uint32_t crc = 0xFFFFFFFFu;
    for (size_t i = 0; i < size; ++i) {
        crc = table[(crc ^ data[i]) & 0xFFu] ^ (crc >> 8);
    }
    return crc ^ 0xFFFFFFFFu;
}

std::vector<uint8_t> write_hybrid(const HybridModel& model, SizeBreakdown* breakdown) {
    std::string payload;
    for (const auto& [key, value] : model.config) {
        if (key.empty() || key.find('=') != std::string::npos ||
            key.find('\n') != std::string::npos || value.find('\n') != std::string::npos) {
            throw std::invalid_argument("write_hybrid: config keys/values must be "
                                        "newline-free and keys must not contain '='");
        }
        payload += key;
        payload += '=';
        payload += value;
        payload += '\n';
    }
    if (payload.size() > 0xFFFF) {
        throw std::invalid_argument("write_hybrid: config snapshot exceeds 64 KiB");
    }
    if (model.sh_degree < 0 || model.sh_degree > 3) {
        throw std::invalid_argument("write_hybrid: sh_degree out of range");
    }

    Writer w;
    w.raw(kMagic, 4);
    w.u8(model.version);
    w.u8(static_cast<uint8_t>(model.sh_degree));
    w.u16(static_cast<uint16_t>(payload.size()));
    w.raw(payload.data(), payload.size());
    size_t header_end = w.bytes.size();

    w.u32(static_cast<uint32_t>(model.sketch_blocks.size()));
    for (const auto& block : model.sketch_blocks) {
        w.u32(block.line_id);
        for (int i = 0; i < 3; ++i) w.f32(block.p_start[i]);
        for (int i = 0; i < 3; ++i) w.f32(block.p_end[i]);
        w.u32(static_cast<uint32_t>(block.t_q.size()));
        for (uint16_t t : block.t_q) w.u16(t);
        const PolyModel* models[4] = {&block.opacity_model, &block.color_model,
                                      &block.scale_model, &block.rotation_model};
        for (int m = 0; m < 4; ++m) write_model(w, *models[m], kModelComponents[m]);
    }
    size_t sketch_end = w.bytes.size();

    const QuantizedPatchBlock& patch = model.patch_block;
    w.u32(static_cast<uint32_t>(patch.count()));
    for (const auto& p : patch.positions) {
        for (int i = 0; i < 3; ++i) w.u16(to_half(p[i]));
    }
    for (AttributeTag tag : kAllAttributeTags) {
        const Codebook& cb = patch.codebooks[static_cast<size_t>(tag)];
        if (cb.entries.size() > kCodebookSize) {
            throw std::invalid_argument("write_hybrid: codebook exceeds 256 entries");
        }
        w.u8(static_cast<uint8_t>(tag));
        w.u16(static_cast<uint16_t>(cb.entries.size()));
        for (double e : cb.entries) w.u16(to_half(e));
    }
    for (AttributeTag tag : kAllAttributeTags) {
        size_t ti = static_cast<size_t>(tag);
        const auto& idx = patch.indices[ti];
        if (idx.size() != patch.count() * components_per_splat(tag)) {
            throw std::invalid_argument("write_hybrid: index array size mismatch");
        }
        size_t entries = patch.codebooks[ti].entries.size();
        for (uint8_t i : idx) {
            if (i >= entries) throw std::invalid_argument("write_hybrid: index out of range");
        }
        w.raw(idx.data(), idx.size());
    }
    size_t patch_end = w.bytes.size();

    w.u32(crc32(w.bytes.data(), w.bytes.size()));

    if (breakdown) {
        breakdown->header_bytes = header_end - 4;
        breakdown->sketch_bytes = sketch_end - header_end;
        breakdown->patch_bytes = patch_end - sketch_end;
        breakdown->total = w.bytes.size();
    }
    return w.bytes;
}

HybridModel read_hybrid(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw ContainerError(ContainerError::Kind::bad_magic,
                             "not a hybrid splat container", 0);
    }
    if (bytes.size() < 12) {
        throw ContainerError(ContainerError::Kind::truncated,
                             "too short for any valid container", bytes.size());
    }
    uint32_t stored_crc = 0;
    std::memcpy(&stored_crc, bytes.data() + bytes.size() - 4, 4);
    uint32_t actual = crc32(bytes.data(), bytes.size() - 4);
    if (stored_crc != actual) {
        throw ContainerError(ContainerError::Kind::crc_mismatch,
                             "stored CRC does not match content",
                             bytes.size() - 4);
    }

    Reader r{bytes};
    r.pos = 4;
    HybridModel model;
    size_t version_at = r.pos;
    model.version = r.u8();
    if (model.version != kVersion) {
        throw ContainerError(ContainerError::Kind::bad_version,
                             "unsupported version " + std::to_string(model.version),
                             version_at);
    }
    size_t degree_at = r.pos;
    model.sh_degree = r.u8();
    if (model.sh_degree > 3) {
        throw ContainerError(ContainerError::Kind::malformed, "sh_degree out of range",
                             degree_at);
    }

    size_t payload_len = r.u16();
    size_t payload_at = r.pos;
    r.require(payload_len);
    std::string payload(reinterpret_cast<const char*>(bytes.data() + r.pos), payload_len);
    r.pos += payload_len;
    size_t line_start = 0;
    std::string last_key;
    while (line_start < payload.size()) {
        size_t eol = payload.find('\n', line_start);
        if (eol == std::string::npos) {
            throw ContainerError(ContainerError::Kind::malformed,
                                 "config line without newline terminator",
                                 payload_at + line_start);
        }
        std::string line = payload.substr(line_start, eol - line_start);
        size_t eq = line.find('=');
        if (eq == std::string::npos || eq == 0) {
            throw ContainerError(ContainerError::Kind::malformed,
                                 "config line is not key=value", payload_at + line_start);
        }
        std::string key = line.substr(0, eq);
        if (!last_key.empty() && !(last_key < key)) {
            throw ContainerError(ContainerError::Kind::malformed,
                                 "config keys not in canonical sorted order",
                                 payload_at + line_start);
        }
        model.config[key] = line.substr(eq + 1);
        last_key = key;
        line_start = eol + 1;
    }

    uint32_t block_count = r.u32();
    model.sketch_blocks.reserve(std::min<size_t>(block_count, 1 << 20));
    for (uint32_t b = 0; b < block_count; ++b) {
        SketchLineBlock block;
        block.line_id = r.u32();
        for (int i = 0; i < 3; ++i) block.p_start[i] = r.f32();
        for (int i = 0; i < 3; ++i) block.p_end[i] = r.f32();
        uint32_t count = r.u32();
        r.require(2 * static_cast<size_t>(count));
        block.t_q.resize(count);
        for (uint32_t i = 0; i < count; ++i) block.t_q[i] = r.u16();
        PolyModel* models[4] = {&block.opacity_model, &block.color_model,
                                &block.scale_model, &block.rotation_model};
        for (int m = 0; m < 4; ++m) *models[m] = read_model(r, kModelComponents[m]);
        model.sketch_blocks.push_back(std::move(block));
    }

    QuantizedPatchBlock& patch = model.patch_block;
    uint32_t patch_count = r.u32();
    r.require(6 * static_cast<size_t>(patch_count));
    patch.positions.resize(patch_count);
    for (uint32_t i = 0; i < patch_count; ++i) {
        for (int c = 0; c < 3; ++c) patch.positions[i][c] = from_half(r.u16());
    }
    for (AttributeTag tag : kAllAttributeTags) {
        size_t at = r.pos;
        uint8_t wire_tag = r.u8();
        if (wire_tag != static_cast<uint8_t>(tag)) {
            throw ContainerError(ContainerError::Kind::malformed,
                                 "codebooks out of tag order", at);
        }
        uint16_t size = r.u16();
        if (size > kCodebookSize) {
            throw ContainerError(ContainerError::Kind::malformed,
                                 "codebook exceeds 256 entries", at + 1);
        }
        Codebook& cb = patch.codebooks[static_cast<size_t>(tag)];
        cb.tag = tag;
        cb.entries.resize(size);
        for (uint16_t i = 0; i < size; ++i) cb.entries[i] = from_half(r.u16());
        for (size_t i = 1; i < cb.entries.size(); ++i) {
            if (!(cb.entries[i - 1] < cb.entries[i])) {
                throw ContainerError(ContainerError::Kind::malformed,
                                     "codebook entries not strictly ascending", at);
            }
        }
    }
    for (AttributeTag tag : kAllAttributeTags) {
        size_t ti = static_cast<size_t>(tag);
        size_t n = static_cast<size_t>(patch_count) * components_per_splat(tag);
        size_t at = r.pos;
        r.require(n);
        auto& idx = patch.indices[ti];
        idx.assign(bytes.begin() + static_cast<ptrdiff_t>(r.pos),
                   bytes.begin() + static_cast<ptrdiff_t>(r.pos + n));
        r.pos += n;
        size_t entries = patch.codebooks[ti].entries.size();
        for (size_t i = 0; i < idx.size(); ++i) {
            if (idx[i] >= entries) {
                throw ContainerError(ContainerError::Kind::malformed,
                                     "codebook index out of range", at + i);
            }
        }
    }

    if (r.pos != bytes.size() - 4) {
        throw ContainerError(ContainerError::Kind::malformed,
                             "trailing bytes between payload and CRC", r.pos);
    }
    return model;
}

GaussianCloud decode_full(const HybridModel& model, DecodeStats* stats) {
    GaussianCloud cloud;
    cloud.sh_degree = model.sh_degree;
    cloud.splats.reserve(model.sketch_splat_count() + model.patch_splat_count());
    for (const auto& block : model.sketch_blocks) {
        std::vector<GaussianSplat> group = decode_group(block, stats);
        cloud.splats.insert(cloud.splats.end(), group.begin(), group.end());
    }
    std::vector<GaussianSplat> patch = dequantize_patch(model.patch_block);
    cloud.splats.insert(cloud.splats.end(), patch.begin(), patch.end());
    return cloud;
}

} // namespace skp
