#ifndef STPDE_IO_HPP
#define STPDE_IO_HPP

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "stpde/field.hpp"

namespace stpde {

namespace detail {

inline bool little_endian() {
    std::uint16_t x = 1;
    char c;
    std::memcpy(&c, &x, 1);
    return c == 1;
}

inline void put_le_u32(std::ostream& os, std::uint32_t x) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = char((x >> (8 * i)) & 0xff);
    os.write(b, 4);
}

inline std::uint32_t get_le_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t x = 0;
    for (int i = 0; i < 4; ++i) x |= std::uint32_t(b[i]) << (8 * i);
    return x;
}

inline void put_le_f64(std::ostream& os, double d) {
    std::uint64_t u;
    std::memcpy(&u, &d, 8);
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = char((u >> (8 * i)) & 0xff);
    os.write(b, 8);
}

inline double get_le_f64(std::istream& is) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= std::uint64_t(b[i]) << (8 * i);
    double d;
    std::memcpy(&d, &u, 8);
    return d;
}

}  // namespace detail

/// Column CSV: node index, coordinates, value. Readable back only against a
/// matching geometry.
inline void save_field_csv(const Field& f, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw UsageError("cannot open " + path + " for writing");
    os.precision(17);
    const Geometry& g = *f.geo;
    os << (g.dim() == 2 ? "index,x,y,value\n" : "index,x,value\n");
    int ny = g.dim() == 2 ? g.nodes(1) : 1;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < g.nodes(0); ++i) {
            std::size_t idx = g.index(i, j);
            os << idx << "," << g.coord(0, i);
            if (g.dim() == 2) os << "," << g.coord(1, j);
            os << "," << f.v[idx] << "\n";
        }
}

inline Field load_field_csv(GeometryPtr geo, Space space, const std::string& path) {
    std::ifstream is(path);
    if (!is) throw UsageError("cannot open " + path);
    Field f(std::move(geo), space);
    std::string line;
    int lineno = 0;
    std::size_t seen = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        if (lineno == 1 && line.find("index") != std::string::npos) continue;
        std::istringstream ss(line);
        std::string tok;
        std::vector<double> row;
        while (std::getline(ss, tok, ',')) {
            try {
                row.push_back(std::stod(tok));
            } catch (...) {
                throw UsageError("field CSV parse error at line " + std::to_string(lineno));
            }
        }
        std::size_t want = f.geo->dim() == 2 ? 4 : 3;
        if (row.size() != want) throw UsageError("field CSV: wrong column count at line " + std::to_string(lineno));
        std::size_t idx = std::size_t(row[0]);
        if (idx >= f.size()) throw UsageError("field CSV: node index out of range at line " + std::to_string(lineno));
        f.v[idx] = row.back();
        ++seen;
    }
    if (seen != f.size()) throw UsageError("field CSV: expected " + std::to_string(f.size()) + " rows");
    return f;
}

/// Compact binary field dump. Layout: magic "STFD1", then u32 dim, u32
/// nodes per axis, u32 space tag, then the raw values; all doubles
/// little-endian.
inline void save_field_binary(const Field& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw UsageError("cannot open " + path + " for writing");
    os.write("STFD1", 5);
    const Geometry& g = *f.geo;
    detail::put_le_u32(os, std::uint32_t(g.dim()));
    detail::put_le_u32(os, std::uint32_t(g.nodes(0)));
    detail::put_le_u32(os, std::uint32_t(g.dim() == 2 ? g.nodes(1) : 1));
    detail::put_le_u32(os, f.space == Space::L2 ? 0u : 1u);
    if (detail::little_endian()) {
        os.write(reinterpret_cast<const char*>(f.v.data()), std::streamsize(f.v.size() * 8));
    } else {
        for (double d : f.v) detail::put_le_f64(os, d);
    }
    if (!os) throw UsageError("write failed: " + path);
}

inline Field load_field_binary(GeometryPtr geo, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw UsageError("cannot open " + path);
    char magic[5];
    is.read(magic, 5);
    if (!is || std::strncmp(magic, "STFD1", 5) != 0) throw UsageError(path + ": bad magic, not a field dump");
    std::uint32_t dim = detail::get_le_u32(is);
    std::uint32_t nx = detail::get_le_u32(is);
    std::uint32_t ny = detail::get_le_u32(is);
    std::uint32_t sp = detail::get_le_u32(is);
    const Geometry& g = *geo;
    if (int(dim) != g.dim() || int(nx) != g.nodes(0) || int(ny) != (g.dim() == 2 ? g.nodes(1) : 1))
        throw UsageError(path + ": field shape does not match geometry");
    Field f(std::move(geo), sp == 0 ? Space::L2 : Space::Hminus1);
    if (detail::little_endian()) {
        is.read(reinterpret_cast<char*>(f.v.data()), std::streamsize(f.v.size() * 8));
    } else {
        for (double& d : f.v) d = detail::get_le_f64(is);
    }
    if (!is) throw UsageError(path + ": truncated field dump");
    return f;
}

}  // namespace stpde

#endif
