#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hero/error.hpp"
#include "hero/tensor.hpp"
#include "hero/trace.hpp"
#include "json.hpp"

namespace hero {

inline constexpr double kDefaultAlpha = 0.5;

/// Per-tile importance, both raw similarities and the softmaxed shares.
struct TileScores {
    std::vector<double> cls_sim;
    std::optional<std::vector<double>> clip_score;
    std::vector<double> s_v;
    std::optional<std::vector<double>> s_t;
    std::vector<double> s;
    double alpha = kDefaultAlpha;        // as applied
    double requested_alpha = kDefaultAlpha;
    bool alpha_fallback = false;         // text signal missing, alpha forced to 1
};

inline std::vector<double> cls_similarities(const ImageTrace& trace) {
    std::vector<double> sims;
    sims.reserve(trace.tiles.size());
    for (std::size_t i = 0; i < trace.tiles.size(); ++i) {
        try {
            sims.push_back(cosine_similarity(trace.tiles[i].cls_embed, trace.thumbnail.cls_embed));
        } catch (const Error& e) {
            throw Error(e.code(), "tile/" + std::to_string(i) + "/cls_embed vs global/cls_embed: " + e.detail());
        }
    }
    return sims;
}

inline std::vector<double> clip_scores(const ImageTrace& trace) {
    if (!trace.text_embed) throw Error(Errc::MissingTextEmbedding, trace.image_id + ": no text/clip_embed");
    std::vector<double> scores;
    scores.reserve(trace.tiles.size());
    for (std::size_t i = 0; i < trace.tiles.size(); ++i) {
        const auto& clip = trace.tiles[i].clip_embed;
        if (!clip) {
            throw Error(Errc::MissingClipEmbedding, trace.image_id + ": tile/" + std::to_string(i) + "/clip_embed missing");
        }
        scores.push_back(cosine_similarity(*clip, *trace.text_embed));
    }
    return scores;
}

/// Softmax over tiles of the tile-vs-thumbnail CLS cosine.
inline std::vector<double> visual_saliency(const ImageTrace& trace) { return softmax(cls_similarities(trace)); }

/// Softmax over tiles of the tile-vs-instruction cosine in the joint embedding space.
inline std::vector<double> textual_relevance(const ImageTrace& trace) { return softmax(clip_scores(trace)); }

/// alpha * s_v + (1 - alpha) * s_t. Without s_t the visual share is returned as-is.
inline std::vector<double> combine(std::span<const double> s_v, std::optional<std::span<const double>> s_t,
                                   double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw Error(Errc::AlphaOutOfRange, "alpha " + std::to_string(alpha) + " not in [0, 1]");
    }
    if (!s_t) return {s_v.begin(), s_v.end()};
    if (s_t->size() != s_v.size()) {
        throw Error(Errc::DimensionMismatch, "combine: score vectors differ in length");
    }
    std::vector<double> s(s_v.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = alpha * s_v[i] + (1.0 - alpha) * (*s_t)[i];
    return s;
}

/// Full tile scoring. When the trace carries no text/clip embeddings the
/// visual share is used alone and `alpha_fallback` is set (unless alpha was
/// already 1, in which case nothing was lost).
inline TileScores score_tiles(const ImageTrace& trace, double alpha = kDefaultAlpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
        throw Error(Errc::AlphaOutOfRange, "alpha " + std::to_string(alpha) + " not in [0, 1]");
    }
    TileScores out;
    out.requested_alpha = alpha;
    out.cls_sim = cls_similarities(trace);
    out.s_v = softmax(out.cls_sim);
    if (trace.text_embed && trace.has_clip_embeddings()) {
        out.clip_score = clip_scores(trace);
        out.s_t = softmax(*out.clip_score);
        out.alpha = alpha;
        out.s = combine(out.s_v, std::span<const double>(*out.s_t), alpha);
    } else {
        out.alpha = 1.0;
        out.alpha_fallback = alpha < 1.0;
        out.s = out.s_v;
    }
    return out;
}

inline void to_json(nlohmann::json& j, const TileScores& t) {
    j = nlohmann::json{{"cls_sim", t.cls_sim},
                       {"s_v", t.s_v},
                       {"s", t.s},
                       {"alpha", t.alpha},
                       {"requested_alpha", t.requested_alpha},
                       {"alpha_fallback", t.alpha_fallback}};
    j["clip_score"] = t.clip_score ? nlohmann::json(*t.clip_score) : nlohmann::json(nullptr);
    j["s_t"] = t.s_t ? nlohmann::json(*t.s_t) : nlohmann::json(nullptr);
}

}  // namespace hero
