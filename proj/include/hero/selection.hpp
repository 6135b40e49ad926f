#pragma once

#include <algorithm>
#include <charconv>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "hero/budgeting.hpp"
#include "hero/error.hpp"
#include "hero/trace.hpp"
#include "json.hpp"

namespace hero {

/// Nonempty, strictly ascending set of 1-based encoder layer indices.
class LayerSet {
public:
    LayerSet() = default;
    explicit LayerSet(std::vector<std::size_t> indices) : m_indices(std::move(indices)) {
        if (m_indices.empty()) throw Error(Errc::InvalidConfig, "layer set must not be empty");
        for (std::size_t i = 0; i < m_indices.size(); ++i) {
            if (m_indices[i] == 0) throw Error(Errc::LayerOutOfRange, "layer indices are 1-based");
            if (i > 0 && m_indices[i] <= m_indices[i - 1]) {
                throw Error(Errc::InvalidConfig, "layer indices must be strictly ascending");
            }
        }
    }

    static LayerSet range(std::size_t first, std::size_t last) {
        if (first == 0 || last < first) throw Error(Errc::InvalidConfig, "bad layer range");
        std::vector<std::size_t> v(last - first + 1);
        std::iota(v.begin(), v.end(), first);
        return LayerSet(std::move(v));
    }

    /// Accepts "a..b", "a,b,c" or a mix ("1..3,7").
    static LayerSet parse(std::string_view text) {
        std::vector<std::size_t> out;
        auto number = [&](std::string_view s) {
            std::size_t v = 0;
            auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
            if (ec != std::errc{} || p != s.data() + s.size() || s.empty()) {
                throw Error(Errc::InvalidConfig, "bad layer index '" + std::string(s) + "'");
            }
            return v;
        };
        while (!text.empty()) {
            const auto comma = text.find(',');
            const auto item = text.substr(0, comma);
            if (const auto dots = item.find(".."); dots != std::string_view::npos) {
                const auto a = number(item.substr(0, dots)), b = number(item.substr(dots + 2));
                if (a == 0 || b < a) throw Error(Errc::InvalidConfig, "bad layer range '" + std::string(item) + "'");
                for (auto l = a; l <= b; ++l) out.push_back(l);
            } else {
                out.push_back(number(item));
            }
            if (comma == std::string_view::npos) break;
            text.remove_prefix(comma + 1);
        }
        return LayerSet(std::move(out));
    }

    [[nodiscard]] const std::vector<std::size_t>& indices() const noexcept { return m_indices; }
    [[nodiscard]] std::size_t size() const noexcept { return m_indices.size(); }
    [[nodiscard]] std::size_t max() const { return m_indices.back(); }

    friend bool operator==(const LayerSet&, const LayerSet&) = default;

private:
    std::vector<std::size_t> m_indices;
};

/// Default low-to-middle layers used for tiles.
inline LayerSet default_tile_layers() { return LayerSet::range(6, 10); }
/// Default late layer used for the thumbnail.
inline LayerSet default_thumbnail_layers() { return LayerSet({22}); }

struct RetentionMask {
    std::vector<bool> keep;
    std::vector<std::size_t> kept_indices;  // ascending, i.e. spatial order
    std::vector<double> scores;

    friend bool operator==(const RetentionMask&, const RetentionMask&) = default;
};

/// Mean of the CLS attention rows over `layers`.
inline std::vector<double> aggregate_attention(const RegionTrace& region, const LayerSet& layers) {
    if (layers.size() == 0) throw Error(Errc::InvalidConfig, "empty layer set");
    if (layers.max() > region.num_layers()) {
        throw Error(Errc::LayerOutOfRange, "layer " + std::to_string(layers.max()) + " exceeds encoder depth " +
                                               std::to_string(region.num_layers()));
    }
    std::vector<double> acc(region.num_patches(), 0.0);
    for (std::size_t l : layers.indices()) {
        const auto row = region.cls_attn.row(l - 1);
        for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += static_cast<double>(row[j]);
    }
    const double inv = 1.0 / static_cast<double>(layers.size());
    for (auto& v : acc) v *= inv;
    return acc;
}

/// Keeps the `quota` highest scores; equal scores favour the lower index.
inline RetentionMask select_topk(std::span<const double> scores, std::size_t quota) {
    if (quota > scores.size()) {
        throw Error(Errc::QuotaExceedsN, "quota " + std::to_string(quota) + " exceeds " + std::to_string(scores.size()));
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto by_score = [&](std::size_t a, std::size_t b) {
        return scores[a] > scores[b] || (scores[a] == scores[b] && a < b);
    };
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(quota), order.end(), by_score);

    RetentionMask mask;
    mask.scores.assign(scores.begin(), scores.end());
    mask.keep.assign(scores.size(), false);
    mask.kept_indices.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(quota));
    std::sort(mask.kept_indices.begin(), mask.kept_indices.end());
    for (auto j : mask.kept_indices) mask.keep[j] = true;
    return mask;
}

/// Masks for every region: K tiles (low/middle layers) followed by the
/// thumbnail (late layers).
inline std::vector<RetentionMask> select_all(const ImageTrace& trace, const BudgetAllocation& alloc,
                                             const LayerSet& tile_layers, const LayerSet& thumbnail_layers) {
    if (alloc.K != trace.K() || alloc.N != trace.N || alloc.per_tile.size() != trace.K()) {
        throw Error(Errc::DimensionMismatch, trace.image_id + ": allocation does not match trace geometry");
    }
    std::vector<RetentionMask> masks;
    masks.reserve(trace.K() + 1);
    for (std::size_t i = 0; i < trace.K(); ++i) {
        try {
            masks.push_back(select_topk(aggregate_attention(trace.tiles[i], tile_layers), alloc.per_tile[i]));
        } catch (const Error& e) {
            throw Error(e.code(), "tile/" + std::to_string(i) + "/cls_attn: " + e.detail());
        }
    }
    try {
        masks.push_back(select_topk(aggregate_attention(trace.thumbnail, thumbnail_layers), alloc.N_global));
    } catch (const Error& e) {
        throw Error(e.code(), "global/cls_attn: " + e.detail());
    }
    return masks;
}

/// Packs masks into one flat bitmap: regions back to back, each padded to a
/// whole byte, bit j of a region at byte j/8, bit position j%8 (LSB first).
inline std::vector<std::uint8_t> pack_bitmap(std::span<const RetentionMask> masks) {
    std::vector<std::uint8_t> out;
    for (const auto& m : masks) {
        const std::size_t base = out.size();
        out.resize(base + (m.keep.size() + 7) / 8, 0);
        for (std::size_t j = 0; j < m.keep.size(); ++j) {
            if (m.keep[j]) out[base + j / 8] |= static_cast<std::uint8_t>(1u << (j % 8));
        }
    }
    return out;
}

inline std::vector<std::vector<bool>> unpack_bitmap(std::span<const std::uint8_t> bytes, std::size_t regions,
                                                    std::size_t n) {
    const std::size_t stride = (n + 7) / 8;
    if (bytes.size() != regions * stride) throw Error(Errc::DimensionMismatch, "bitmap size does not match geometry");
    std::vector<std::vector<bool>> out(regions, std::vector<bool>(n));
    for (std::size_t r = 0; r < regions; ++r) {
        for (std::size_t j = 0; j < n; ++j) out[r][j] = (bytes[r * stride + j / 8] >> (j % 8)) & 1u;
    }
    return out;
}

inline void to_json(nlohmann::json& j, const RetentionMask& m) {
    j = nlohmann::json{{"n", m.keep.size()}, {"kept", m.kept_indices.size()}, {"kept_indices", m.kept_indices}};
}

}  // namespace hero
