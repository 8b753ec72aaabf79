#pragma once

// Minimal NRRD0004 reader/writer: 3D, raw encoding, little-endian,
// float (images) or unsigned short (instance masks). Instance records are
// kept as key/value pairs `instance.<id>.label` / `instance.<id>.complete`.

#include <cctype>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "iterseg/volume.hpp"

namespace iterseg {

class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

namespace nrrd_detail {

struct Header {
    std::string type;
    int dimension = 0;
    Vec3i sizes;
    Vec3d spacing{1, 1, 1};
    Vec3d origin{0, 0, 0};
    std::string encoding;
    std::string endian;
    std::map<std::string, std::string> keyvalues;
    std::streampos data_start = 0;
};

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string lower(std::string s) {
    for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return s;
}

// Parses "(a,b,c)" into three doubles.
inline bool parse_vector3(const std::string& text, double out[3]) {
    std::string t = trim(text);
    if (t.size() < 2 || t.front() != '(' || t.back() != ')') return false;
    std::istringstream ss(t.substr(1, t.size() - 2));
    std::string part;
    for (int i = 0; i < 3; ++i) {
        if (!std::getline(ss, part, ',')) return false;
        try {
            out[i] = std::stod(trim(part));
        } catch (const std::exception&) {
            return false;
        }
    }
    return true;
}

inline Header read_header(std::istream& in, const std::string& path) {
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path + ": empty file");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.rfind("NRRD000", 0) != 0 || line.size() != 8 || !std::isdigit(static_cast<unsigned char>(line[7])))
        throw FormatError(path + ": missing NRRD magic");

    Header h;
    bool have_sizes = false, have_dirs = false, have_type = false, have_encoding = false;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) break;  // header/data separator
        if (line[0] == '#') continue;

        const auto kv = line.find(":=");
        if (kv != std::string::npos) {
            h.keyvalues[trim(line.substr(0, kv))] = trim(line.substr(kv + 2));
            continue;
        }
        const auto sep = line.find(':');
        if (sep == std::string::npos) throw FormatError(path + ": malformed header line '" + line + "'");
        const std::string field = lower(trim(line.substr(0, sep)));
        const std::string value = trim(line.substr(sep + 1));

        if (field == "type") {
            h.type = lower(value);
            have_type = true;
        } else if (field == "dimension") {
            h.dimension = std::stoi(value);
        } else if (field == "sizes") {
            std::istringstream ss(value);
            long sx = 0, sy = 0, sz = 0;
            if (!(ss >> sx >> sy >> sz)) throw FormatError(path + ": bad field 'sizes'");
            h.sizes = {static_cast<int>(sx), static_cast<int>(sy), static_cast<int>(sz)};
            have_sizes = true;
        } else if (field == "space directions") {
            std::istringstream ss(value);
            std::string tok;
            double rows[3][3];
            for (int r = 0; r < 3; ++r) {
                if (!(ss >> tok) || !parse_vector3(tok, rows[r]))
                    throw FormatError(path + ": bad field 'space directions'");
            }
            for (int r = 0; r < 3; ++r)
                for (int c = 0; c < 3; ++c)
                    if (r != c && rows[r][c] != 0.0)
                        throw FormatError(path + ": non-diagonal 'space directions' not supported");
            h.spacing = {rows[0][0], rows[1][1], rows[2][2]};
            have_dirs = true;
        } else if (field == "space origin") {
            double o[3];
            if (!parse_vector3(value, o)) throw FormatError(path + ": bad field 'space origin'");
            h.origin = {o[0], o[1], o[2]};
        } else if (field == "encoding") {
            h.encoding = lower(value);
            have_encoding = true;
        } else if (field == "endian") {
            h.endian = lower(value);
        }
        // other fields (space dimension, content, ...) are accepted and ignored
    }

    if (!have_type) throw FormatError(path + ": missing field 'type'");
    if (h.dimension != 3) throw FormatError(path + ": field 'dimension' must be 3");
    if (!have_sizes) throw FormatError(path + ": missing field 'sizes'");
    if (!have_encoding) throw FormatError(path + ": missing field 'encoding'");
    if (h.encoding != "raw") throw FormatError(path + ": unsupported 'encoding' (only raw)");
    if (h.endian != "little") throw FormatError(path + ": field 'endian' must be little");
    if (h.sizes.x < 1 || h.sizes.y < 1 || h.sizes.z < 1)
        throw FormatError(path + ": field 'sizes' must be positive");
    if (have_dirs && (!(h.spacing.x > 0) || !(h.spacing.y > 0) || !(h.spacing.z > 0)))
        throw FormatError(path + ": 'space directions' must have positive diagonal");
    h.data_start = in.tellg();
    return h;
}

template <typename T>
std::vector<T> read_raw(std::istream& in, std::size_t count, const std::string& path) {
    std::vector<T> data(count);
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(T)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(T))
        throw FormatError(path + ": raw data shorter than 'sizes' implies");
    return data;
}

inline void write_common_header(std::ostream& out, const std::string& type, Vec3i dims, Vec3d spacing,
                                Vec3d origin) {
    char buf[256];
    out << "NRRD0004\n";
    out << "type: " << type << "\n";
    out << "dimension: 3\n";
    std::snprintf(buf, sizeof(buf), "sizes: %d %d %d\n", dims.x, dims.y, dims.z);
    out << buf;
    out << "space dimension: 3\n";
    std::snprintf(buf, sizeof(buf), "space directions: (%.17g,0,0) (0,%.17g,0) (0,0,%.17g)\n",
                  spacing.x, spacing.y, spacing.z);
    out << buf;
    std::snprintf(buf, sizeof(buf), "space origin: (%.17g,%.17g,%.17g)\n", origin.x, origin.y, origin.z);
    out << buf;
    out << "endian: little\n";
    out << "encoding: raw\n";
}

}  // namespace nrrd_detail

inline VoxelGrid read_nrrd_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open file");
    const auto h = nrrd_detail::read_header(in, path);
    if (h.type != "float")
        throw FormatError(path + ": field 'type' must be float for images, got '" + h.type + "'");
    VoxelGrid grid(h.sizes, 0.0f, h.spacing, h.origin);
    grid.values = nrrd_detail::read_raw<float>(in, grid.voxel_count(), path);
    return grid;
}

inline InstanceMask read_nrrd_mask(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError(path + ": cannot open file");
    const auto h = nrrd_detail::read_header(in, path);
    if (h.type != "unsigned short" && h.type != "ushort" && h.type != "uint16" && h.type != "uint16_t")
        throw FormatError(path + ": field 'type' must be unsigned short for masks, got '" + h.type + "'");
    InstanceMask mask(h.sizes, h.spacing, h.origin);
    mask.ids = nrrd_detail::read_raw<std::uint16_t>(in, mask.voxel_count(), path);

    for (const auto& [key, value] : h.keyvalues) {
        if (key.rfind("instance.", 0) != 0) continue;
        const auto second_dot = key.find('.', 9);
        if (second_dot == std::string::npos) throw FormatError(path + ": malformed record key '" + key + "'");
        const int id = std::stoi(key.substr(9, second_dot - 9));
        const std::string field = key.substr(second_dot + 1);
        auto& rec = mask.records[static_cast<std::uint16_t>(id)];
        if (field == "label")
            rec.anatomical_label = std::stoi(value);
        else if (field == "complete")
            rec.complete = (value != "0");
        else
            throw FormatError(path + ": unknown record field '" + key + "'");
    }
    try {
        mask.check_records();
    } catch (const std::invalid_argument& e) {
        throw FormatError(path + ": " + e.what());
    }
    return mask;
}

inline void write_nrrd(const VoxelGrid& grid, const std::string& path) {
    validate_grid(grid);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open file for writing");
    nrrd_detail::write_common_header(out, "float", grid.dims, grid.spacing, grid.origin);
    out << "\n";
    out.write(reinterpret_cast<const char*>(grid.values.data()),
              static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
    if (!out) throw FormatError(path + ": write failed");
}

inline void write_nrrd(const InstanceMask& mask, const std::string& path) {
    mask.check_records();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError(path + ": cannot open file for writing");
    nrrd_detail::write_common_header(out, "unsigned short", mask.dims, mask.spacing, mask.origin);
    for (const auto& [id, rec] : mask.records) {
        out << "instance." << id << ".label:=" << rec.anatomical_label << "\n";
        out << "instance." << id << ".complete:=" << (rec.complete ? 1 : 0) << "\n";
    }
    out << "\n";
    out.write(reinterpret_cast<const char*>(mask.ids.data()),
              static_cast<std::streamsize>(mask.ids.size() * sizeof(std::uint16_t)));
    if (!out) throw FormatError(path + ": write failed");
}

}  // namespace iterseg
