#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "elmnet/error.hpp"
#include "elmnet/network.hpp"

namespace elmnet {

/// Per-neuron traces of several trajectories, [traj][t][neuron], float32.
/// `steps` counts retained steps; `burn_in` steps were run and discarded
/// before them.
struct Recording {
    std::uint32_t n_rec = 0;
    std::uint32_t steps = 0;
    std::uint32_t n_traj = 0;
    std::uint32_t burn_in = 0;
    std::vector<float> data;

    std::size_t samples() const noexcept { return static_cast<std::size_t>(steps) * n_traj; }
    float at(std::size_t traj, std::size_t t, std::size_t i) const { return data[(traj * steps + t) * n_rec + i]; }
    std::span<const float> row(std::size_t traj, std::size_t t) const {
        return std::span<const float>(data).subspan((traj * steps + t) * n_rec, n_rec);
    }

    void check() const {
        if (data.size() != static_cast<std::size_t>(n_rec) * steps * n_traj)
            throw ShapeError("recording payload size does not match its header");
    }
};

inline constexpr std::array<char, 4> kRecordingMagic{'E', 'L', 'M', 'R'};
inline constexpr std::uint32_t kRecordingVersion = 1;

namespace detail {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) v = __builtin_bswap32(v);
    return v;
}

inline void put_u32(std::ostream& os, std::uint32_t v) {
    v = to_le(v);
    os.write(reinterpret_cast<const char*>(&v), 4);
}

inline std::uint32_t get_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw IoError("truncated recording header");
    return to_le(v);
}

}  // namespace detail

inline void write_recording(std::ostream& os, const Recording& rec) {
    rec.check();
    os.write(kRecordingMagic.data(), 4);
    detail::put_u32(os, kRecordingVersion);
    detail::put_u32(os, rec.n_rec);
    detail::put_u32(os, rec.steps);
    detail::put_u32(os, rec.n_traj);
    detail::put_u32(os, rec.burn_in);
    for (float f : rec.data) {
        std::uint32_t bits = detail::to_le(std::bit_cast<std::uint32_t>(f));
        os.write(reinterpret_cast<const char*>(&bits), 4);
    }
    if (!os) throw IoError("failed writing recording");
}

inline void write_recording(const std::filesystem::path& path, const Recording& rec) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
    write_recording(os, rec);
}

inline Recording read_recording(std::istream& is) {
    std::array<char, 4> magic{};
    is.read(magic.data(), 4);
    if (!is || magic != kRecordingMagic) throw IoError("not a recording file (bad magic)");
    const auto version = detail::get_u32(is);
    if (version != kRecordingVersion) throw IoError("unsupported recording version " + std::to_string(version));
    Recording rec;
    rec.n_rec = detail::get_u32(is);
    rec.steps = detail::get_u32(is);
    rec.n_traj = detail::get_u32(is);
    rec.burn_in = detail::get_u32(is);
    rec.data.resize(static_cast<std::size_t>(rec.n_rec) * rec.steps * rec.n_traj);
    for (auto& f : rec.data) {
        std::uint32_t bits = 0;
        is.read(reinterpret_cast<char*>(&bits), 4);
        if (!is) throw IoError("truncated recording payload");
        f = std::bit_cast<float>(detail::to_le(bits));
    }
    return rec;
}

inline Recording read_recording(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open recording '" + path.string() + "'");
    return read_recording(is);
}

enum class TapPoint { memory_readout, activity };

/// Runs each input from a zero state, drops the first `burn_in` steps and
/// records the chosen hidden-layer tap.
inline Recording record_network(const Network& net, std::span<const double> params, std::span<const InputSequence> inputs,
                                int burn_in, TapPoint tap) {
    if (inputs.empty()) throw DomainError("record_network: no trajectories");
    const int T = inputs.front().steps;
    if (burn_in < 0 || burn_in >= T) throw DomainError("record_network: burn-in must lie in [0, steps)");
    const int N = net.config().n_rec;
    Recording rec;
    rec.n_rec = static_cast<std::uint32_t>(N);
    rec.steps = static_cast<std::uint32_t>(T - burn_in);
    rec.n_traj = static_cast<std::uint32_t>(inputs.size());
    rec.burn_in = static_cast<std::uint32_t>(burn_in);
    rec.data.reserve(rec.samples() * rec.n_rec);
    NetworkTaps taps;
    taps.record = true;
    ForwardOptions fo;
    fo.taps = &taps;
    for (const auto& in : inputs) {
        if (in.steps != T) throw ShapeError("record_network: trajectories must share one length");
        auto st = net.zero_state();
        net.forward(params, in, st, fo);
        const auto& src = tap == TapPoint::memory_readout ? taps.readout : taps.activity;
        for (std::size_t k = static_cast<std::size_t>(burn_in) * N; k < src.size(); ++k) rec.data.push_back(static_cast<float>(src[k]));
    }
    return rec;
}

}  // namespace elmnet
