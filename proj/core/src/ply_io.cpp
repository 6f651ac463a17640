#include "skp/ply_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace skp {

static_assert(std::endian::native == std::endian::little,
              "PLY and container serialization assume a little-endian host");

namespace {

constexpr size_t kFloatsPerVertex = 62;

const char* kPropertyNames[kFloatsPerVertex] = {
    "x", "y", "z", "nx", "ny", "nz",
    "f_dc_0", "f_dc_1", "f_dc_2",
    "f_rest_0", "f_rest_1", "f_rest_2", "f_rest_3", "f_rest_4", "f_rest_5",
    "f_rest_6", "f_rest_7", "f_rest_8", "f_rest_9", "f_rest_10", "f_rest_11",
    "f_rest_12", "f_rest_13", "f_rest_14", "f_rest_15", "f_rest_16",
    "f_rest_17", "f_rest_18", "f_rest_19", "f_rest_20", "f_rest_21",
    "f_rest_22", "f_rest_23", "f_rest_24", "f_rest_25", "f_rest_26",
    "f_rest_27", "f_rest_28", "f_rest_29", "f_rest_30", "f_rest_31",
    "f_rest_32", "f_rest_33", "f_rest_34", "f_rest_35", "f_rest_36",
    "f_rest_37", "f_rest_38", "f_rest_39", "f_rest_40", "f_rest_41",
    "f_rest_42", "f_rest_43", "f_rest_44",
    "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3"};

// Reads one header line (up to '\n'), returning false at end of input.
bool next_line(const std::vector<uint8_t>& bytes, size_t& pos, std::string& line) {
    if (pos >= bytes.size()) return false;
    size_t start = pos;
    while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
    if (pos >= bytes.size()) return false; // header line without terminator
    line.assign(reinterpret_cast<const char*>(bytes.data() + start), pos - start);
    ++pos;
    return true;
}

} // namespace

PlyError::PlyError(const std::string& message, size_t offset_in)
    : std::runtime_error(message + " (byte " + std::to_string(offset_in) + ")"),
      offset(offset_in) {}

GaussianCloud load_ply(const std::vector<uint8_t>& bytes) {
    size_t pos = 0;
    std::string line;

    if (!next_line(bytes, pos, line) || line != "ply") {
        throw PlyError("malformed header: missing 'ply' magic", 0);
    }
    size_t format_at = pos;
    if (!next_line(bytes, pos, line) || line != "format binary_little_endian 1.0") {
        throw PlyError("malformed header: expected 'format binary_little_endian 1.0'",
                       format_at);
    }

    size_t vertex_count = 0;
    bool have_element = false;
    size_t next_property = 0;
    while (true) {
        size_t line_at = pos;
        if (!next_line(bytes, pos, line)) {
            throw PlyError("malformed header: missing 'end_header'", line_at);
        }
        if (line == "end_header") break;
        if (line.rfind("comment", 0) == 0) continue;

        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "element") {
            std::string name;
            ss >> name >> vertex_count;
            if (ss.fail() || name != "vertex" || have_element) {
                throw PlyError("malformed header: bad element declaration", line_at);
            }
            have_element = true;
        } else if (word == "property") {
            std::string type, name;
            ss >> type >> name;
            if (ss.fail() || !have_element) {
                throw PlyError("malformed header: bad property declaration", line_at);
            }
            if (next_property >= kFloatsPerVertex) {
                throw PlyError("malformed header: unexpected extra property '" + name + "'",
                               line_at);
            }
            if (type != "float" || name != kPropertyNames[next_property]) {
                throw PlyError("malformed header: expected 'property float " +
                                   std::string(kPropertyNames[next_property]) +
                                   "', got '" + line + "'",
                               line_at);
            }
            ++next_property;
        } else {
            throw PlyError("malformed header: unrecognized line '" + line + "'", line_at);
        }
    }
    if (!have_element) {
        throw PlyError("malformed header: no vertex element", pos);
    }
    if (next_property < kFloatsPerVertex) {
        throw PlyError("missing property '" +
                           std::string(kPropertyNames[next_property]) + "'",
                       pos);
    }

    size_t payload = vertex_count * kFloatsPerVertex * sizeof(float);
    if (bytes.size() - pos < payload) {
        throw PlyError("truncated payload: need " + std::to_string(payload) +
                           " bytes, have " + std::to_string(bytes.size() - pos),
                       bytes.size());
    }

    GaussianCloud cloud;
    cloud.sh_degree = 3;
    cloud.splats.resize(vertex_count);
    const uint8_t* p = bytes.data() + pos;
    for (size_t i = 0; i < vertex_count; ++i) {
        float v[kFloatsPerVertex];
        std::memcpy(v, p, sizeof(v));
        p += sizeof(v);
        GaussianSplat& s = cloud.splats[i];
        s.position = Eigen::Vector3d(v[0], v[1], v[2]);
        // v[3..5] are normals, always zero in splat files; dropped.
        s.sh_dc = Eigen::Vector3d(v[6], v[7], v[8]);
        for (int k = 0; k < kShRestSize; ++k) s.sh_rest[k] = v[9 + k];
        s.opacity_logit = v[54];
        s.log_scale = Eigen::Vector3d(v[55], v[56], v[57]);
        s.rotation = Eigen::Vector4d(v[58], v[59], v[60], v[61]);
    }
    return cloud;
}

std::vector<uint8_t> save_ply(const GaussianCloud& cloud) {
    std::string header = "ply\nformat binary_little_endian 1.0\nelement vertex " +
                         std::to_string(cloud.splats.size()) + "\n";
    for (const char* name : kPropertyNames) {
        header += "property float ";
        header += name;
        header += "\n";
    }
    header += "end_header\n";

    std::vector<uint8_t> out(header.size() +
                             cloud.splats.size() * kFloatsPerVertex * sizeof(float));
    std::memcpy(out.data(), header.data(), header.size());
    uint8_t* p = out.data() + header.size();
    for (const auto& s : cloud.splats) {
        float v[kFloatsPerVertex] = {};
        v[0] = static_cast<float>(s.position[0]);
        v[1] = static_cast<float>(s.position[1]);
        v[2] = static_cast<float>(s.position[2]);
        v[6] = static_cast<float>(s.sh_dc[0]);
        v[7] = static_cast<float>(s.sh_dc[1]);
        v[8] = static_cast<float>(s.sh_dc[2]);
        for (int k = 0; k < kShRestSize; ++k) v[9 + k] = static_cast<float>(s.sh_rest[k]);
        v[54] = static_cast<float>(s.opacity_logit);
        v[55] = static_cast<float>(s.log_scale[0]);
        v[56] = static_cast<float>(s.log_scale[1]);
        v[57] = static_cast<float>(s.log_scale[2]);
        v[58] = static_cast<float>(s.rotation[0]);
        v[59] = static_cast<float>(s.rotation[1]);
        v[60] = static_cast<float>(s.rotation[2]);
        v[61] = static_cast<float>(s.rotation[3]);
        std::memcpy(p, v, sizeof(v));
        p += sizeof(v);
    }
    return out;
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open file: " + path);
    f.seekg(0, std::ios::end);
    std::vector<uint8_t> bytes(static_cast<size_t>(f.tellg()));
    f.seekg(0);
    f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("cannot read file: " + path);
    return bytes;
}

void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open file for writing: " + path);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("cannot write file: " + path);
}

GaussianCloud load_ply_file(const std::string& path) {
    return load_ply(read_file(path));
}

void save_ply_file(const GaussianCloud& cloud, const std::string& path) {
    write_file(path, save_ply(cloud));
}

} // namespace skp
