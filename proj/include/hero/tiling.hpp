#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hero/error.hpp"
#include "json.hpp"

namespace hero {

inline constexpr std::size_t kTileSize = 336;
inline constexpr std::size_t kPatchSize = 14;

/// Integer pixel box (x, y, width, height).
struct PixelBox {
    std::size_t x = 0, y = 0, w = 0, h = 0;
    friend bool operator==(const PixelBox&, const PixelBox&) = default;
};

/// Half-open rectangle [x0, x1) x [y0, y1) in source-image pixels.
struct SourceRect {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    [[nodiscard]] bool empty() const noexcept { return !(x1 > x0) || !(y1 > y0); }
    [[nodiscard]] double width() const noexcept { return empty() ? 0.0 : x1 - x0; }
    [[nodiscard]] double height() const noexcept { return empty() ? 0.0 : y1 - y0; }
    [[nodiscard]] bool contains(double x, double y) const noexcept {
        return x >= x0 && x < x1 && y >= y0 && y < y1;
    }
    friend bool operator==(const SourceRect&, const SourceRect&) = default;
};

/// Pad-then-resize geometry taking an image onto a grid of encoder tiles.
struct TilingPlan {
    std::size_t image_w = 0, image_h = 0;
    std::size_t target_w = 0, target_h = 0;
    std::size_t grid_cols = 0, grid_rows = 0;
    std::size_t pad_left = 0, pad_right = 0, pad_top = 0, pad_bottom = 0;
    double scale_x = 1.0, scale_y = 1.0;
    std::size_t tile_size = kTileSize;
    std::size_t patch_size = kPatchSize;
    std::vector<PixelBox> tile_rects;

    [[nodiscard]] std::size_t num_tiles() const noexcept { return grid_cols * grid_rows; }
    [[nodiscard]] std::size_t patches_per_side() const noexcept { return tile_size / patch_size; }
    [[nodiscard]] std::size_t patches_per_tile() const noexcept { return patches_per_side() * patches_per_side(); }
    [[nodiscard]] std::size_t padded_w() const noexcept { return image_w + pad_left + pad_right; }
    [[nodiscard]] std::size_t padded_h() const noexcept { return image_h + pad_top + pad_bottom; }

    friend bool operator==(const TilingPlan&, const TilingPlan&) = default;
};

struct Resolution {
    std::size_t width, height;  // pixels
    std::size_t cols, rows;     // tile grid
};

/// Candidate target resolutions in precedence order (ties go to the earlier entry).
inline constexpr std::array<Resolution, 5> kAnyresResolutions = {{
    {336, 672, 1, 2},
    {672, 336, 2, 1},
    {672, 672, 2, 2},
    {1008, 336, 3, 1},
    {336, 1008, 1, 3},
}};

namespace detail {

inline TilingPlan make_plan(std::size_t image_w, std::size_t image_h, const Resolution& res, std::size_t tile_size) {
    TilingPlan plan;
    plan.image_w = image_w;
    plan.image_h = image_h;
    plan.target_w = res.width;
    plan.target_h = res.height;
    plan.grid_cols = res.cols;
    plan.grid_rows = res.rows;
    plan.tile_size = tile_size;

    // Compare w/h against tw/th without leaving the integers.
    const std::uint64_t lhs = static_cast<std::uint64_t>(image_w) * res.height;
    const std::uint64_t rhs = static_cast<std::uint64_t>(image_h) * res.width;
    std::size_t padded_w = image_w, padded_h = image_h;
    if (lhs < rhs) {
        padded_w = static_cast<std::size_t>((2 * rhs + res.height) / (2 * res.height));
        const std::size_t pad = padded_w - image_w;
        plan.pad_left = pad / 2;
        plan.pad_right = pad - plan.pad_left;
    } else if (lhs > rhs) {
        padded_h = static_cast<std::size_t>((2 * lhs + res.width) / (2 * res.width));
        const std::size_t pad = padded_h - image_h;
        plan.pad_top = pad / 2;
        plan.pad_bottom = pad - plan.pad_top;
    }
    plan.scale_x = static_cast<double>(res.width) / static_cast<double>(padded_w);
    plan.scale_y = static_cast<double>(res.height) / static_cast<double>(padded_h);

    for (std::size_t r = 0; r < res.rows; ++r) {
        for (std::size_t c = 0; c < res.cols; ++c) {
            plan.tile_rects.push_back({c * tile_size, r * tile_size, tile_size, tile_size});
        }
    }
    return plan;
}

}  // namespace detail

/// Picks the target resolution closest in log-aspect to the image and derives
/// the padding, resize factors and tile grid.
inline TilingPlan plan_tiling(std::size_t image_w, std::size_t image_h) {
    if (image_w == 0 || image_h == 0) {
        throw Error(Errc::InvalidConfig, "plan_tiling: image dimensions must be positive");
    }
    const double aspect = std::log(static_cast<double>(image_w) / static_cast<double>(image_h));
    std::size_t best = 0;
    double best_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < kAnyresResolutions.size(); ++i) {
        const auto& r = kAnyresResolutions[i];
        const double dist =
            std::abs(aspect - std::log(static_cast<double>(r.width) / static_cast<double>(r.height)));
        // Strictly smaller (beyond rounding noise) wins; equal keeps the earlier entry.
        if (dist < best_dist - 1e-12) {
            best = i;
            best_dist = dist;
        }
    }
    return detail::make_plan(image_w, image_h, kAnyresResolutions[best], kTileSize);
}

/// The global thumbnail: the whole image resized (without padding) to one tile.
inline TilingPlan thumbnail_plan(std::size_t image_w, std::size_t image_h) {
    if (image_w == 0 || image_h == 0) {
        throw Error(Errc::InvalidConfig, "thumbnail_plan: image dimensions must be positive");
    }
    TilingPlan plan;
    plan.image_w = image_w;
    plan.image_h = image_h;
    plan.target_w = plan.target_h = kTileSize;
    plan.grid_cols = plan.grid_rows = 1;
    plan.scale_x = static_cast<double>(kTileSize) / static_cast<double>(image_w);
    plan.scale_y = static_cast<double>(kTileSize) / static_cast<double>(image_h);
    plan.tile_rects.push_back({0, 0, kTileSize, kTileSize});
    return plan;
}

/// Source-image rectangle covered by one encoder patch. Patches that land in
/// padding come back empty; partially padded patches are clipped.
inline SourceRect map_patch_to_image(const TilingPlan& plan, std::size_t tile_index, std::size_t patch_index) {
    if (tile_index >= plan.num_tiles()) {
        throw Error(Errc::IndexOutOfRange, "tile index " + std::to_string(tile_index) + " out of range");
    }
    if (patch_index >= plan.patches_per_tile()) {
        throw Error(Errc::IndexOutOfRange, "patch index " + std::to_string(patch_index) + " out of range");
    }
    const auto& tile = plan.tile_rects[tile_index];
    const std::size_t side = plan.patches_per_side();
    const std::size_t tx0 = tile.x + (patch_index % side) * plan.patch_size;
    const std::size_t ty0 = tile.y + (patch_index / side) * plan.patch_size;

    // Target pixel -> padded pixel -> source pixel. Each boundary is a function
    // of one integer coordinate so neighbouring patches share edges exactly.
    const auto to_src_x = [&](std::size_t x) {
        return static_cast<double>(x) * static_cast<double>(plan.padded_w()) / static_cast<double>(plan.target_w) -
               static_cast<double>(plan.pad_left);
    };
    const auto to_src_y = [&](std::size_t y) {
        return static_cast<double>(y) * static_cast<double>(plan.padded_h()) / static_cast<double>(plan.target_h) -
               static_cast<double>(plan.pad_top);
    };
    SourceRect r{to_src_x(tx0), to_src_y(ty0), to_src_x(tx0 + plan.patch_size), to_src_y(ty0 + plan.patch_size)};
    const double w = static_cast<double>(plan.image_w), h = static_cast<double>(plan.image_h);
    r.x0 = std::clamp(r.x0, 0.0, w);
    r.x1 = std::clamp(r.x1, 0.0, w);
    r.y0 = std::clamp(r.y0, 0.0, h);
    r.y1 = std::clamp(r.y1, 0.0, h);
    if (r.empty()) return SourceRect{};
    return r;
}

inline void to_json(nlohmann::json& j, const PixelBox& b) { j = {b.x, b.y, b.w, b.h}; }

inline void to_json(nlohmann::json& j, const TilingPlan& p) {
    j = nlohmann::json{{"image_w", p.image_w},     {"image_h", p.image_h},       {"target_w", p.target_w},
                       {"target_h", p.target_h},   {"grid_cols", p.grid_cols},   {"grid_rows", p.grid_rows},
                       {"pad_left", p.pad_left},   {"pad_right", p.pad_right},   {"pad_top", p.pad_top},
                       {"pad_bottom", p.pad_bottom}, {"scale_x", p.scale_x},     {"scale_y", p.scale_y},
                       {"tile_size", p.tile_size}, {"patch_size", p.patch_size}, {"tile_rects", p.tile_rects}};
}

}  // namespace hero
