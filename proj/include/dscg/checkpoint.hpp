#pragma once

// Versioned binary checkpoint container.
//
//   "DSCGCKPT"                         8-byte magic
//   u32 format_version
//   u64 header length, header JSON     {format_version, config, seed, ...}
//   u64 array count, then per array:
//     u32 name length, name bytes
//     u32 rank, u64 dims[rank]
//     f64 values[prod(dims)]           IEEE-754 bit patterns
//
// All integers and floats are little-endian regardless of host order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "dscg/gnn.hpp"

namespace dscg {

inline constexpr std::uint32_t kCheckpointVersion = 1;
inline constexpr char kCheckpointMagic[8] = {'D', 'S', 'C', 'G', 'C', 'K', 'P', 'T'};

struct Checkpoint {
    ModelParams model;
    /// Free-form metadata stored next to config and seed (training state, KB paths).
    nlohmann::json meta = nlohmann::json::object();
    /// Additional named arrays, e.g. optimiser moments.
    ParamSet extra;
};

namespace detail {

template <class T>
void put_le(std::ostream& os, T v) {
    static_assert(std::is_integral_v<T>);
    unsigned char b[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i) b[i] = static_cast<unsigned char>((static_cast<std::uint64_t>(v) >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <class T>
T get_le(std::istream& is) {
    unsigned char b[sizeof(T)];
    if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw ParseError("checkpoint: truncated file");
    std::uint64_t v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return static_cast<T>(v);
}

inline void put_array(std::ostream& os, const std::string& name, const Tensor& t) {
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    put_le<std::uint32_t>(os, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put_le<std::uint64_t>(os, d);
    for (double x : t.data()) put_le<std::uint64_t>(os, std::bit_cast<std::uint64_t>(x));
}

} // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
    nlohmann::json header = ck.meta;
    header["format_version"] = kCheckpointVersion;
    header["config"] = to_json(ck.model.config);
    header["seed"] = ck.model.seed;
    const std::string h = header.dump();

    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("checkpoint: cannot write " + path.string());
    os.write(kCheckpointMagic, sizeof kCheckpointMagic);
    detail::put_le<std::uint32_t>(os, kCheckpointVersion);
    detail::put_le<std::uint64_t>(os, h.size());
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    const ParamSet params = ck.model.to_map();
    detail::put_le<std::uint64_t>(os, params.size() + ck.extra.size());
    for (const auto& [name, t] : params) detail::put_array(os, "param/" + name, t);
    for (const auto& [name, t] : ck.extra) detail::put_array(os, "extra/" + name, t);
    if (!os) throw IoError("checkpoint: write failed for " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open " + path.string());
    char magic[8];
    if (!is.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0)
        throw ParseError("checkpoint: " + path.string() + " is not a checkpoint file");
    const auto version = detail::get_le<std::uint32_t>(is);
    if (version != kCheckpointVersion)
        throw ParseError("checkpoint: unsupported format_version " + std::to_string(version));
    const auto hlen = detail::get_le<std::uint64_t>(is);
    std::string h(hlen, '\0');
    if (!is.read(h.data(), static_cast<std::streamsize>(hlen))) throw ParseError("checkpoint: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(h);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint: bad header: ") + e.what());
    }

    Checkpoint ck;
    const ModelConfig config = model_config_from_json(header.at("config"));
    ck.model = init_model(config, header.at("seed").get<std::uint64_t>());
    ParamSet params;
    const auto count = detail::get_le<std::uint64_t>(is);
    for (std::uint64_t k = 0; k < count; ++k) {
        const auto nlen = detail::get_le<std::uint32_t>(is);
        std::string name(nlen, '\0');
        if (!is.read(name.data(), nlen)) throw ParseError("checkpoint: truncated array name");
        const auto rank = detail::get_le<std::uint32_t>(is);
        if (rank == 0 || rank > 8) throw ParseError("checkpoint: bad rank for '" + name + "'");
        Shape shape(rank);
        for (auto& d : shape) d = detail::get_le<std::uint64_t>(is);
        std::vector<double> data(shape_size(shape));
        for (auto& x : data) x = std::bit_cast<double>(detail::get_le<std::uint64_t>(is));
        Tensor t(shape, std::move(data));
        if (name.starts_with("param/"))
            params.emplace(name.substr(6), std::move(t));
        else if (name.starts_with("extra/"))
            ck.extra.emplace(name.substr(6), std::move(t));
        else
            throw ParseError("checkpoint: unknown array namespace in '" + name + "'");
    }
    ck.model.assign(params);
    header.erase("format_version");
    header.erase("config");
    header.erase("seed");
    ck.meta = std::move(header);
    return ck;
}

} // namespace dscg
