#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "elmnet/error.hpp"

namespace elmnet::training {

/// Single-file parameter snapshot: "ELMC", u32 version, u64 config length,
/// config text, u64 count, little-endian float64 values.
struct Checkpoint {
    std::string config_echo;
    std::vector<double> params;
};

namespace detail {

inline std::uint64_t le64(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap64(v);
    return v;
}

inline void put64(std::ostream& os, std::uint64_t v) {
    v = le64(v);
    os.write(reinterpret_cast<const char*>(&v), 8);
}

inline std::uint64_t get64(std::istream& is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 8);
    if (!is) throw IoError("truncated checkpoint");
    return le64(v);
}

}  // namespace detail

inline void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    os.write("ELMC", 4);
    os.write("\x01\x00\x00\x00", 4);  // version
    detail::put64(os, ck.config_echo.size());
    os.write(ck.config_echo.data(), static_cast<std::streamsize>(ck.config_echo.size()));
    detail::put64(os, ck.params.size());
    for (double v : ck.params) detail::put64(os, std::bit_cast<std::uint64_t>(v));
    if (!os) throw IoError("failed writing checkpoint '" + path.string() + "'");
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint '" + path.string() + "'");
    char magic[4] = {};
    is.read(magic, 4);
    char version[4] = {};
    is.read(version, 4);
    if (!is || std::string(magic, 4) != "ELMC") throw IoError("not a checkpoint file");
    if (std::string(version, 4) != std::string("\x01\x00\x00\x00", 4)) throw IoError("unsupported checkpoint version");
    Checkpoint ck;
    ck.config_echo.resize(detail::get64(is));
    is.read(ck.config_echo.data(), static_cast<std::streamsize>(ck.config_echo.size()));
    ck.params.resize(detail::get64(is));
    for (auto& v : ck.params) v = std::bit_cast<double>(detail::get64(is));
    return ck;
}

}  // namespace elmnet::training
