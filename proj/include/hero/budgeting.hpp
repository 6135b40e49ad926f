#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "hero/error.hpp"
#include "json.hpp"

namespace hero {

enum class FloorMode {
    Redistribute,  // hand floor remainders back out by largest fractional part
    StrictFloor,   // per-tile quotas are the bare floors; remainders are dropped
};

/// Token quotas for one image: a reserved thumbnail share plus per-tile shares.
struct BudgetAllocation {
    double R = 1.0;
    std::size_t N = 0;
    std::size_t K = 0;
    std::size_t N_total = 0;   // floor((K+1) * N * R)
    std::size_t N_global = 0;  // floor(N * R)
    std::size_t N_local = 0;   // N_total - N_global
    std::vector<std::size_t> per_tile;
    FloorMode mode = FloorMode::Redistribute;

    /// Tokens actually kept. Equals N_total unless strict-floor mode stranded some.
    [[nodiscard]] std::size_t retained() const {
        return N_global + std::accumulate(per_tile.begin(), per_tile.end(), std::size_t{0});
    }
    [[nodiscard]] std::size_t stranded() const { return N_total - retained(); }
};

namespace detail {

// (K+1)*N*R is computed in binary floating point; a product that should land
// exactly on an integer may come out a hair below it (0.29 * 100).
inline constexpr double kFloorSlack = 1e-9;

inline std::size_t budget_floor(double x) { return static_cast<std::size_t>(std::floor(x + kFloorSlack)); }

}  // namespace detail

inline BudgetAllocation allocate(std::size_t K, std::size_t N, double R, std::span<const double> s,
                                 FloorMode mode = FloorMode::Redistribute) {
    if (K == 0 || N == 0) throw Error(Errc::InvalidConfig, "allocate: K and N must be positive");
    if (!(R > 0.0 && R <= 1.0)) throw Error(Errc::RatioOutOfRange, "ratio " + std::to_string(R) + " not in (0, 1]");
    if (s.size() != K) {
        throw Error(Errc::DimensionMismatch, "allocate: " + std::to_string(s.size()) + " scores for " +
                                                 std::to_string(K) + " tiles");
    }
    double total = 0.0;
    for (double v : s) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(Errc::ScoresNotNormalized, "allocate: negative or non-finite score");
        total += v;
    }
    if (std::abs(total - 1.0) > 1e-4) {
        throw Error(Errc::ScoresNotNormalized, "allocate: scores sum to " + std::to_string(total));
    }

    BudgetAllocation a;
    a.R = R;
    a.N = N;
    a.K = K;
    a.mode = mode;
    a.N_total = std::min(detail::budget_floor(static_cast<double>((K + 1) * N) * R), (K + 1) * N);
    a.N_global = std::min(detail::budget_floor(static_cast<double>(N) * R), N);
    a.N_local = a.N_total - a.N_global;

    std::vector<double> frac(K);
    a.per_tile.resize(K);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < K; ++i) {
        // Renormalise so tolerated drift in sum(s) cannot over-commit the budget.
        const double share = static_cast<double>(a.N_local) * (s[i] / total);
        const double fl = std::floor(share);
        frac[i] = share - fl;
        a.per_tile[i] = std::min(static_cast<std::size_t>(fl), N);
        assigned += a.per_tile[i];
    }
    if (mode == FloorMode::StrictFloor) {
        // Bare floors, except that renormalisation rounding must never exceed N_local.
        for (std::size_t i = K; assigned > a.N_local && i-- > 0;) {
            const std::size_t take = std::min(a.per_tile[i], assigned - a.N_local);
            a.per_tile[i] -= take;
            assigned -= take;
        }
        return a;
    }

    // Largest fractional part first, ties to the lower index.
    std::vector<std::size_t> order(K);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return frac[x] > frac[y]; });

    while (assigned > a.N_local) {
        // Only reachable through rounding; take back from the least-deserving tile.
        for (auto it = order.rbegin(); it != order.rend() && assigned > a.N_local; ++it) {
            if (a.per_tile[*it] > 0) {
                --a.per_tile[*it];
                --assigned;
            }
        }
    }
    // Hand out the remainder (floor leftovers plus anything clipped at N) one
    // token per pass, skipping tiles already at capacity.
    while (assigned < a.N_local) {
        bool progressed = false;
        for (std::size_t idx : order) {
            if (assigned == a.N_local) break;
            if (a.per_tile[idx] < N) {
                ++a.per_tile[idx];
                ++assigned;
                progressed = true;
            }
        }
        if (!progressed) throw Error(Errc::InvariantViolation, "allocate: local budget exceeds tile capacity");
    }
    return a;
}

/// N_total / ((K+1) * N).
inline double effective_ratio(const BudgetAllocation& a) {
    return static_cast<double>(a.N_total) / static_cast<double>((a.K + 1) * a.N);
}

inline void to_json(nlohmann::json& j, const BudgetAllocation& a) {
    j = nlohmann::json{{"R", a.R},
                       {"N", a.N},
                       {"K", a.K},
                       {"N_total", a.N_total},
                       {"N_global", a.N_global},
                       {"N_local", a.N_local},
                       {"per_tile", a.per_tile},
                       {"retained", a.retained()},
                       {"effective_ratio", effective_ratio(a)},
                       {"mode", a.mode == FloorMode::StrictFloor ? "strict-floor" : "redistribute"}};
}

}  // namespace hero
