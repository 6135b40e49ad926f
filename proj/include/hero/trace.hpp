#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "hero/error.hpp"
#include "hero/tensor.hpp"

namespace hero {

inline constexpr double kAttentionRowSlack = 1e-4;
inline constexpr double kUnitNormTolerance = 1e-3;

/// Encoder outputs for one region (a tile or the thumbnail).
struct RegionTrace {
    Tensor cls_attn;                 // [num_layers, N], head-averaged CLS->patch attention
    Tensor cls_embed;                // [D_v]
    std::optional<Tensor> clip_embed;  // [D_clip], unit norm

    [[nodiscard]] std::size_t num_layers() const { return cls_attn.dims.at(0); }
    [[nodiscard]] std::size_t num_patches() const { return cls_attn.dims.at(1); }

    friend bool operator==(const RegionTrace&, const RegionTrace&) = default;
};

/// Everything the pruner needs to know about one image.
struct ImageTrace {
    std::string image_id;
    std::size_t grid_rows = 1;
    std::size_t grid_cols = 1;
    std::size_t N = 0;
    std::size_t num_layers = 0;
    std::vector<RegionTrace> tiles;  // row-major, K = grid_rows * grid_cols
    RegionTrace thumbnail;
    std::optional<Tensor> text_embed;

    [[nodiscard]] std::size_t K() const noexcept { return grid_rows * grid_cols; }

    [[nodiscard]] bool has_clip_embeddings() const {
        return !tiles.empty() &&
               std::all_of(tiles.begin(), tiles.end(), [](const RegionTrace& r) { return r.clip_embed.has_value(); });
    }

    friend bool operator==(const ImageTrace&, const ImageTrace&) = default;
};

namespace detail {

inline void check_tensor(const Tensor& t, const std::string& name, Errc shape_code) {
    if (Tensor::element_count(t.dims) != t.data.size()) {
        throw Error(shape_code, name + ": data length does not match shape");
    }
    if (!t.all_finite()) {
        throw Error(Errc::NonFiniteValue, name + ": contains NaN or Inf");
    }
}

inline void check_unit_vector(const Tensor& t, const std::string& name, Errc shape_code) {
    check_tensor(t, name, shape_code);
    if (t.rank() != 1) throw Error(shape_code, name + ": expected rank 1");
    const double norm = l2_norm(t.data);
    if (std::abs(norm - 1.0) > kUnitNormTolerance) {
        throw Error(shape_code, name + ": norm " + std::to_string(norm) + " is not within 1e-3 of 1");
    }
}

inline void check_region(const RegionTrace& r, const std::string& prefix, std::size_t layers,
                         std::size_t n, std::optional<std::size_t> embed_dim, Errc shape_code) {
    const std::string attn = prefix + "/cls_attn";
    check_tensor(r.cls_attn, attn, shape_code);
    if (r.cls_attn.dims != std::vector<std::size_t>{layers, n}) {
        throw Error(shape_code, attn + ": expected shape [" + std::to_string(layers) + ", " +
                                    std::to_string(n) + "]");
    }
    for (std::size_t l = 0; l < layers; ++l) {
        double sum = 0.0;
        for (float v : r.cls_attn.row(l)) {
            if (v < 0.0f) throw Error(shape_code, attn + ": negative attention in row " + std::to_string(l));
            sum += v;
        }
        if (sum > 1.0 + kAttentionRowSlack) {
            throw Error(shape_code, attn + ": row " + std::to_string(l) + " sums to " + std::to_string(sum) +
                                        " (> 1 + 1e-4)");
        }
    }
    const std::string embed = prefix + "/cls_embed";
    check_tensor(r.cls_embed, embed, shape_code);
    if (r.cls_embed.rank() != 1 || r.cls_embed.size() == 0) {
        throw Error(shape_code, embed + ": expected a non-empty vector");
    }
    if (embed_dim && r.cls_embed.size() != *embed_dim) {
        throw Error(shape_code, embed + ": embedding width differs from the other regions");
    }
    if (r.clip_embed) check_unit_vector(*r.clip_embed, prefix + "/clip_embed", shape_code);
}

}  // namespace detail

/// Checks every ImageTrace invariant. `shape_code` is the error code used for
/// structural and range violations so callers can report them in their own
/// vocabulary (readers say ShapeMismatch, writers say InvariantViolation).
inline void validate(const ImageTrace& t, Errc shape_code = Errc::InvariantViolation) {
    if (t.grid_rows == 0 || t.grid_cols == 0) throw Error(shape_code, "grid dimensions must be positive");
    if (t.N == 0 || t.num_layers == 0) throw Error(shape_code, "N and num_layers must be positive");
    if (t.tiles.size() != t.K()) {
        throw Error(shape_code, "expected " + std::to_string(t.K()) + " tiles, found " + std::to_string(t.tiles.size()));
    }
    detail::check_region(t.thumbnail, "global", t.num_layers, t.N, std::nullopt, shape_code);
    const std::size_t embed_dim = t.thumbnail.cls_embed.size();
    std::optional<std::size_t> clip_dim;
    const bool any_clip =
        std::any_of(t.tiles.begin(), t.tiles.end(), [](const RegionTrace& r) { return r.clip_embed.has_value(); });
    for (std::size_t i = 0; i < t.tiles.size(); ++i) {
        const std::string prefix = "tile/" + std::to_string(i);
        detail::check_region(t.tiles[i], prefix, t.num_layers, t.N, embed_dim, shape_code);
        if (any_clip && !t.tiles[i].clip_embed) {
            throw Error(shape_code, prefix + "/clip_embed: missing while other tiles carry one");
        }
        if (t.tiles[i].clip_embed) {
            if (clip_dim && *clip_dim != t.tiles[i].clip_embed->size()) {
                throw Error(shape_code, prefix + "/clip_embed: width differs from other tiles");
            }
            clip_dim = t.tiles[i].clip_embed->size();
        }
    }
    if (t.thumbnail.clip_embed && clip_dim && t.thumbnail.clip_embed->size() != *clip_dim) {
        throw Error(shape_code, "global/clip_embed: width differs from tiles");
    }
    if (t.text_embed) {
        detail::check_unit_vector(*t.text_embed, "text/clip_embed", shape_code);
        if (clip_dim && t.text_embed->size() != *clip_dim) {
            throw Error(shape_code, "text/clip_embed: width differs from tile clip embeddings");
        }
    }
}

}  // namespace hero
