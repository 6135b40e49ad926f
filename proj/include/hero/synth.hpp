#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "hero/error.hpp"
#include "hero/tensor.hpp"
#include "hero/trace.hpp"
#include "json.hpp"

namespace hero {

/// SplitMix64 (Steele, Lea & Flood): the n-th output is a pure function of
/// seed + n·γ, so streams are reproducible on any platform.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : m_state(seed) {}

    std::uint64_t next() noexcept {
        std::uint64_t z = (m_state += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Slightly biased for huge n; irrelevant at test sizes.
    std::uint64_t below(std::uint64_t n) noexcept { return n == 0 ? 0 : next() % n; }

private:
    std::uint64_t m_state;
};

/// Parameters of a planted two-stage synthetic trace.
struct SynthSpec {
    std::uint64_t seed = 0;
    std::size_t K = 4;
    std::size_t grid_rows = 0, grid_cols = 0;  // 0 = derive from K
    std::size_t N = 576;
    std::size_t num_layers = 24;
    std::size_t stage_boundary = 12;  // last layer of the first stage, 1-based
    std::vector<std::vector<std::size_t>> planted_primary;  // one set per tile, or a single shared set
    std::vector<std::size_t> planted_shortcut;
    double noise_scale = 0.0;
    std::size_t embed_dim = 32;
    std::size_t clip_dim = 16;
    bool with_text = true;
    std::string image_id = "synth";

    /// Planted primary set for tile `i` (the thumbnail uses tile 0's set).
    [[nodiscard]] const std::vector<std::size_t>& primary_for(std::size_t i) const {
        return planted_primary.size() == 1 ? planted_primary.front() : planted_primary.at(i);
    }
};

// Attention mass per row: planted tokens share kPlantedMass, every token
// shares kBackgroundMass, the remainder is the CLS token's self-attention.
inline constexpr double kPlantedMass = 0.85;
inline constexpr double kBackgroundMass = 0.10;

inline void validate(const SynthSpec& s) {
    auto fail = [](const std::string& why) { throw Error(Errc::InvalidSpec, why); };
    if (s.K == 0 || s.N == 0) fail("K and N must be positive");
    if (s.num_layers < 2) fail("num_layers must be at least 2");
    if (s.stage_boundary < 1 || s.stage_boundary >= s.num_layers) fail("stage_boundary must lie in [1, num_layers-1]");
    if ((s.grid_rows == 0) != (s.grid_cols == 0)) fail("grid must give both rows and cols");
    if (s.grid_rows != 0 && s.grid_rows * s.grid_cols != s.K) fail("grid does not multiply to K");
    if (!(s.noise_scale >= 0.0) || !std::isfinite(s.noise_scale)) fail("noise_scale must be finite and >= 0");
    if (s.embed_dim == 0 || s.clip_dim == 0) fail("embedding widths must be positive");
    if (s.planted_primary.size() != 1 && s.planted_primary.size() != s.K) {
        fail("planted_primary needs one set per tile or a single shared set");
    }
    auto check_set = [&](const std::vector<std::size_t>& set, const std::string& what) {
        if (set.empty()) fail(what + " is empty");
        std::set<std::size_t> seen;
        for (auto j : set) {
            if (j >= s.N) fail(what + " index " + std::to_string(j) + " >= N");
            if (!seen.insert(j).second) fail(what + " repeats index " + std::to_string(j));
        }
    };
    for (std::size_t i = 0; i < s.planted_primary.size(); ++i) check_set(s.planted_primary[i], "planted_primary[" + std::to_string(i) + "]");
    check_set(s.planted_shortcut, "planted_shortcut");
}

namespace detail {

inline std::pair<std::size_t, std::size_t> default_grid(std::size_t K) {
    std::size_t rows = 1;
    for (std::size_t r = 1; r * r <= K; ++r) {
        if (K % r == 0) rows = r;
    }
    return {rows, K / rows};
}

inline Tensor random_unit_vector(SplitMix64& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double sq = 0.0;
    do {
        sq = 0.0;
        for (auto& x : v) {
            x = rng.uniform(-1.0, 1.0);
            sq += x * x;
        }
    } while (!(sq > 1e-12));
    const double norm = std::sqrt(sq);
    std::vector<float> out(dim);
    for (std::size_t i = 0; i < dim; ++i) out[i] = static_cast<float>(v[i] / norm);
    return Tensor({dim}, std::move(out));
}

inline void fill_row(std::span<float> row, const std::vector<std::size_t>& planted, double noise, SplitMix64& rng) {
    const std::size_t n = row.size();
    std::vector<double> bg(n), fg(planted.size());
    double bg_sum = 0.0, fg_sum = 0.0;
    for (auto& w : bg) bg_sum += (w = 1.0 + noise * rng.uniform());
    for (auto& w : fg) fg_sum += (w = 1.0 + noise * rng.uniform());
    std::vector<double> row_d(n);
    for (std::size_t j = 0; j < n; ++j) row_d[j] = kBackgroundMass * bg[j] / bg_sum;
    for (std::size_t k = 0; k < planted.size(); ++k) row_d[planted[k]] += kPlantedMass * fg[k] / fg_sum;
    for (std::size_t j = 0; j < n; ++j) row[j] = static_cast<float>(row_d[j]);
}

inline RegionTrace make_region(const SynthSpec& s, const std::vector<std::size_t>& primary, SplitMix64& rng, bool clip) {
    RegionTrace r;
    r.cls_attn = Tensor::zeros({s.num_layers, s.N});
    for (std::size_t l = 0; l < s.num_layers; ++l) {
        const auto& planted = (l + 1 <= s.stage_boundary) ? primary : s.planted_shortcut;
        fill_row(r.cls_attn.row(l), planted, s.noise_scale, rng);
    }
    r.cls_embed = random_unit_vector(rng, s.embed_dim);
    if (clip) r.clip_embed = random_unit_vector(rng, s.clip_dim);
    return r;
}

}  // namespace detail

/// Builds a trace whose attention concentrates on planted_primary in layers
/// 1..stage_boundary and on planted_shortcut afterwards.
inline ImageTrace generate(const SynthSpec& spec) {
    validate(spec);
    SplitMix64 rng(spec.seed);
    ImageTrace t;
    t.image_id = spec.image_id + "-" + std::to_string(spec.seed);
    std::tie(t.grid_rows, t.grid_cols) =
        spec.grid_rows != 0 ? std::pair{spec.grid_rows, spec.grid_cols} : detail::default_grid(spec.K);
    t.N = spec.N;
    t.num_layers = spec.num_layers;
    for (std::size_t i = 0; i < spec.K; ++i) {
        t.tiles.push_back(detail::make_region(spec, spec.primary_for(i), rng, spec.with_text));
    }
    t.thumbnail = detail::make_region(spec, spec.primary_for(0), rng, false);
    if (spec.with_text) t.text_embed = detail::random_unit_vector(rng, spec.clip_dim);
    return t;
}

inline SynthSpec spec_from_json(const nlohmann::json& j) {
    SynthSpec s;
    try {
        s.seed = j.at("seed").get<std::uint64_t>();
        s.K = j.value("K", s.K);
        if (j.contains("grid")) {
            const auto g = j.at("grid").get<std::vector<std::size_t>>();
            if (g.size() != 2) throw Error(Errc::InvalidSpec, "grid must be [rows, cols]");
            s.grid_rows = g[0];
            s.grid_cols = g[1];
        }
        s.N = j.value("N", s.N);
        s.num_layers = j.value("num_layers", s.num_layers);
        s.stage_boundary = j.value("stage_boundary", s.stage_boundary);
        const auto& primary = j.at("planted_primary");
        if (!primary.empty() && primary.front().is_number()) {
            s.planted_primary = {primary.get<std::vector<std::size_t>>()};
        } else {
            s.planted_primary = primary.get<std::vector<std::vector<std::size_t>>>();
        }
        s.planted_shortcut = j.at("planted_shortcut").get<std::vector<std::size_t>>();
        s.noise_scale = j.value("noise_scale", s.noise_scale);
        s.embed_dim = j.value("embed_dim", s.embed_dim);
        s.clip_dim = j.value("clip_dim", s.clip_dim);
        s.with_text = j.value("with_text", s.with_text);
        s.image_id = j.value("image_id", s.image_id);
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidSpec, std::string("synth spec JSON: ") + e.what());
    }
    validate(s);
    return s;
}

inline void to_json(nlohmann::json& j, const SynthSpec& s) {
    j = nlohmann::json{{"seed", s.seed},
                       {"K", s.K},
                       {"N", s.N},
                       {"num_layers", s.num_layers},
                       {"stage_boundary", s.stage_boundary},
                       {"planted_primary", s.planted_primary},
                       {"planted_shortcut", s.planted_shortcut},
                       {"noise_scale", s.noise_scale},
                       {"embed_dim", s.embed_dim},
                       {"clip_dim", s.clip_dim},
                       {"with_text", s.with_text},
                       {"image_id", s.image_id}};
    if (s.grid_rows != 0) j["grid"] = {s.grid_rows, s.grid_cols};
}

/// Exhaustive top-k reference: the maximum-sum subset of size `quota`, the
/// lexicographically smallest one when several tie. Independent of select_topk.
inline std::vector<std::size_t> oracle_topk(std::span<const double> scores, std::size_t quota) {
    const std::size_t n = scores.size();
    if (n > 16) throw Error(Errc::TooLarge, "oracle_topk enumerates subsets; N must be <= 16");
    if (quota > n) throw Error(Errc::QuotaExceedsN, "quota exceeds N");

    std::vector<std::size_t> comb(quota), best;
    std::iota(comb.begin(), comb.end(), std::size_t{0});
    long double best_sum = 0;
    bool have = false;
    // Combinations are visited in lexicographic order, so a strict '>' keeps
    // the smallest maximiser.
    for (;;) {
        long double sum = 0;
        for (auto i : comb) sum += scores[i];
        if (!have || sum > best_sum) {
            best = comb;
            best_sum = sum;
            have = true;
        }
        std::size_t i = quota;
        while (i > 0 && comb[i - 1] == n - quota + (i - 1)) --i;
        if (i == 0) break;
        ++comb[i - 1];
        for (std::size_t k = i; k < quota; ++k) comb[k] = comb[k - 1] + 1;
    }
    return best;
}

}  // namespace hero
