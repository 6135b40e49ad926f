#pragma once

// Trace container:
//   [0, 8)        "HEROTRC\0"
//   [8, 12)       u32 little-endian header length H
//   [12, 12 + H)  UTF-8 JSON header
//   payload       starts at the first 64-byte boundary at or after 12 + H
//
// Tensor offsets in the header are relative to the payload start and are
// multiples of 64; gaps are zero-filled. Floats are little-endian binary32.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hero/error.hpp"
#include "hero/tensor.hpp"
#include "hero/trace.hpp"
#include "json.hpp"

namespace hero {

inline constexpr std::array<std::uint8_t, 8> kTraceMagic = {'H', 'E', 'R', 'O', 'T', 'R', 'C', 0};
inline constexpr std::size_t kTracePreambleSize = 12;
inline constexpr std::size_t kPayloadAlignment = 64;
inline constexpr int kTraceFormatVersion = 1;

namespace detail {

constexpr std::size_t align_up(std::size_t n, std::size_t a) noexcept { return (n + a - 1) / a * a; }

inline void put_u32_le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32_le(std::span<const std::uint8_t> in) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(in[i]) << (8 * i);
    return v;
}

struct NamedTensor {
    std::string name;
    const Tensor* tensor;
};

inline std::vector<NamedTensor> container_layout(const ImageTrace& t) {
    std::vector<NamedTensor> out;
    auto add_region = [&](const std::string& prefix, const RegionTrace& r) {
        out.push_back({prefix + "/cls_attn", &r.cls_attn});
        out.push_back({prefix + "/cls_embed", &r.cls_embed});
        if (r.clip_embed) out.push_back({prefix + "/clip_embed", &*r.clip_embed});
    };
    for (std::size_t i = 0; i < t.tiles.size(); ++i) add_region("tile/" + std::to_string(i), t.tiles[i]);
    add_region("global", t.thumbnail);
    if (t.text_embed) out.push_back({"text/clip_embed", &*t.text_embed});
    return out;
}

}  // namespace detail

/// Serializes a trace. Output is a pure function of the trace contents.
inline std::vector<std::uint8_t> write_trace(const ImageTrace& trace) {
    validate(trace, Errc::InvariantViolation);

    const auto layout = detail::container_layout(trace);
    nlohmann::ordered_json header;
    header["version"] = kTraceFormatVersion;
    header["image_id"] = trace.image_id;
    header["grid"] = {trace.grid_rows, trace.grid_cols};
    header["N"] = trace.N;
    header["num_layers"] = trace.num_layers;
    header["tensors"] = nlohmann::ordered_json::array();
    std::size_t offset = 0;
    for (const auto& [name, tensor] : layout) {
        const std::size_t nbytes = tensor->data.size() * sizeof(float);
        header["tensors"].push_back({{"name", name},
                                     {"dtype", "f32"},
                                     {"shape", tensor->dims},
                                     {"offset", offset},
                                     {"nbytes", nbytes}});
        offset = detail::align_up(offset + nbytes, kPayloadAlignment);
    }
    const std::string text = header.dump();

    std::vector<std::uint8_t> out(kTraceMagic.begin(), kTraceMagic.end());
    detail::put_u32_le(out, static_cast<std::uint32_t>(text.size()));
    out.insert(out.end(), text.begin(), text.end());
    for (const auto& [name, tensor] : layout) {
        out.resize(detail::align_up(out.size(), kPayloadAlignment), 0);
        for (float v : tensor->data) detail::put_u32_le(out, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

/// Parses and fully validates a trace container.
inline ImageTrace read_trace(std::span<const std::uint8_t> bytes) {
    using nlohmann::json;
    if (bytes.size() < kTraceMagic.size() || !std::equal(kTraceMagic.begin(), kTraceMagic.end(), bytes.begin())) {
        throw Error(Errc::BadMagic, "input does not start with HEROTRC\\0");
    }
    if (bytes.size() < kTracePreambleSize) throw Error(Errc::CorruptHeader, "truncated before header length");
    const std::size_t header_len = detail::get_u32_le(bytes.subspan(8, 4));
    if (header_len > bytes.size() - kTracePreambleSize) {
        throw Error(Errc::CorruptHeader, "header length " + std::to_string(header_len) + " exceeds input size");
    }
    const auto header_bytes = bytes.subspan(kTracePreambleSize, header_len);
    const std::size_t payload_start = detail::align_up(kTracePreambleSize + header_len, kPayloadAlignment);

    json header;
    try {
        header = json::parse(header_bytes.begin(), header_bytes.end());
    } catch (const json::exception& e) {
        throw Error(Errc::CorruptHeader, std::string("header is not valid JSON: ") + e.what());
    }

    ImageTrace trace;
    std::map<std::string, Tensor> tensors;
    try {
        if (header.at("version").get<int>() != kTraceFormatVersion) {
            throw Error(Errc::CorruptHeader, "unsupported version " + header.at("version").dump());
        }
        trace.image_id = header.at("image_id").get<std::string>();
        const auto grid = header.at("grid").get<std::vector<std::int64_t>>();
        const auto n = header.at("N").get<std::int64_t>();
        const auto layers = header.at("num_layers").get<std::int64_t>();
        if (grid.size() != 2 || grid[0] <= 0 || grid[1] <= 0 || n <= 0 || layers <= 0) {
            throw Error(Errc::CorruptHeader, "grid, N and num_layers must be positive");
        }
        trace.grid_rows = static_cast<std::size_t>(grid[0]);
        trace.grid_cols = static_cast<std::size_t>(grid[1]);
        trace.N = static_cast<std::size_t>(n);
        trace.num_layers = static_cast<std::size_t>(layers);

        for (const auto& entry : header.at("tensors")) {
            const auto name = entry.at("name").get<std::string>();
            if (entry.at("dtype").get<std::string>() != "f32") {
                throw Error(Errc::CorruptHeader, name + ": unsupported dtype " + entry.at("dtype").dump());
            }
            const auto shape = entry.at("shape").get<std::vector<std::int64_t>>();
            const auto offset = entry.at("offset").get<std::int64_t>();
            const auto nbytes = entry.at("nbytes").get<std::int64_t>();
            if (offset < 0 || nbytes < 0 || offset % static_cast<std::int64_t>(kPayloadAlignment) != 0) {
                throw Error(Errc::CorruptHeader, name + ": offset must be a non-negative multiple of 64");
            }
            std::vector<std::size_t> dims;
            for (auto d : shape) {
                if (d <= 0) throw Error(Errc::ShapeMismatch, name + ": non-positive dimension");
                dims.push_back(static_cast<std::size_t>(d));
            }
            const std::size_t count = Tensor::element_count(dims);
            if (static_cast<std::size_t>(nbytes) != count * sizeof(float)) {
                throw Error(Errc::ShapeMismatch, name + ": nbytes " + std::to_string(nbytes) +
                                                     " does not match shape (" + std::to_string(count) + " f32)");
            }
            const std::size_t begin = payload_start + static_cast<std::size_t>(offset);
            if (begin > bytes.size() || static_cast<std::size_t>(nbytes) > bytes.size() - begin) {
                throw Error(Errc::CorruptHeader, name + ": payload range out of bounds");
            }
            std::vector<float> data(count);
            for (std::size_t i = 0; i < count; ++i) {
                data[i] = std::bit_cast<float>(detail::get_u32_le(bytes.subspan(begin + 4 * i, 4)));
            }
            if (!tensors.emplace(name, Tensor(std::move(dims), std::move(data))).second) {
                throw Error(Errc::CorruptHeader, name + ": duplicate tensor name");
            }
        }
    } catch (const json::exception& e) {
        throw Error(Errc::CorruptHeader, std::string("malformed header: ") + e.what());
    }

    auto take = [&](const std::string& name) -> Tensor {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw Error(Errc::CorruptHeader, name + ": required tensor missing");
        Tensor t = std::move(it->second);
        tensors.erase(it);
        return t;
    };
    auto take_optional = [&](const std::string& name) -> std::optional<Tensor> {
        if (!tensors.contains(name)) return std::nullopt;
        return take(name);
    };
    auto take_region = [&](const std::string& prefix) {
        RegionTrace r;
        r.cls_attn = take(prefix + "/cls_attn");
        r.cls_embed = take(prefix + "/cls_embed");
        r.clip_embed = take_optional(prefix + "/clip_embed");
        return r;
    };
    for (std::size_t i = 0; i < trace.K(); ++i) trace.tiles.push_back(take_region("tile/" + std::to_string(i)));
    trace.thumbnail = take_region("global");
    trace.text_embed = take_optional("text/clip_embed");
    if (!tensors.empty()) {
        throw Error(Errc::CorruptHeader, tensors.begin()->first + ": unexpected tensor name");
    }

    validate(trace, Errc::ShapeMismatch);
    return trace;
}

inline ImageTrace read_trace_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return read_trace(bytes);
}

inline void write_trace_file(const std::filesystem::path& path, const ImageTrace& trace) {
    const auto bytes = write_trace(trace);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error(Errc::IoError, "write failed for " + path.string());
}

}  // namespace hero
