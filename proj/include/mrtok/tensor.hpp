#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "mrtok/errors.hpp"

namespace mrtok {

/// Dense row-major float tensor plus its binary container format:
/// magic "MTOK1", u8 rank, rank x u32 little-endian dims, f32 LE payload.
struct TensorF {
    std::vector<std::uint32_t> dims;
    std::vector<float> data;

    TensorF() = default;
    TensorF(std::vector<std::uint32_t> d, std::vector<float> values) : dims(std::move(d)), data(std::move(values)) {
        require(element_count(dims) == data.size(), "TensorF: payload size does not match dims");
    }

    static std::size_t element_count(const std::vector<std::uint32_t>& dims) {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return n;
    }

    std::size_t size() const { return data.size(); }
    bool operator==(const TensorF& o) const = default;
};

namespace detail {

inline void write_u32_le(std::ostream& out, std::uint32_t v) {
    const std::uint8_t b[4] = {static_cast<std::uint8_t>(v), static_cast<std::uint8_t>(v >> 8),
                               static_cast<std::uint8_t>(v >> 16), static_cast<std::uint8_t>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32_le(std::istream& in, const char* what) {
    std::uint8_t b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) throw format_error(std::string("tensor: truncated ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_tensor(const TensorF& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw format_error("tensor: cannot open " + path.string() + " for writing");
    out.write("MTOK1", 5);
    require(t.dims.size() <= 255, "tensor: rank too large");
    const std::uint8_t rank = static_cast<std::uint8_t>(t.dims.size());
    out.write(reinterpret_cast<const char*>(&rank), 1);
    for (auto d : t.dims) detail::write_u32_le(out, d);
    static_assert(sizeof(float) == 4);
    // Assumes little-endian IEEE-754 floats, which holds on every target here.
    out.write(reinterpret_cast<const char*>(t.data.data()), static_cast<std::streamsize>(t.data.size() * 4));
    if (!out) throw format_error("tensor: write failed for " + path.string());
}

inline TensorF load_tensor(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw format_error("tensor: cannot open " + path.string());
    char magic[5] = {};
    in.read(magic, 5);
    if (in.gcount() != 5 || std::memcmp(magic, "MTOK1", 5) != 0)
        throw format_error("tensor: bad magic in " + path.string());
    std::uint8_t rank = 0;
    in.read(reinterpret_cast<char*>(&rank), 1);
    if (in.gcount() != 1) throw format_error("tensor: truncated rank in " + path.string());
    TensorF t;
    t.dims.resize(rank);
    for (auto& d : t.dims) {
        d = detail::read_u32_le(in, "dims");
        if (d == 0) throw format_error("tensor: zero dim in " + path.string());
    }
    const std::size_t n = TensorF::element_count(t.dims);
    t.data.resize(n);
    in.read(reinterpret_cast<char*>(t.data.data()), static_cast<std::streamsize>(n * 4));
    if (static_cast<std::size_t>(in.gcount()) != n * 4)
        throw format_error("tensor: truncated payload in " + path.string());
    return t;
}

}  // namespace mrtok
