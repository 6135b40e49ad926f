#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "json.hpp"
#include "test_support.hpp"

using namespace hero;
using namespace hero::testing;

namespace {

const std::vector<double> kUniform4{0.25, 0.25, 0.25, 0.25};

std::size_t local_sum(const BudgetAllocation& a) {
    return std::accumulate(a.per_tile.begin(), a.per_tile.end(), std::size_t{0});
}

Errc allocate_error(std::size_t K, std::size_t N, double R, std::vector<double> s) {
    try {
        allocate(K, N, R, s);
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "allocate accepted the input";
    return Errc::IoError;
}

}  // namespace

TEST(Budget, TwentyPercentOfFourTiles) {
    const auto a = allocate(4, 576, 0.2, kUniform4);
    EXPECT_EQ(a.N_total, 576u);
    EXPECT_EQ(a.N_global, 115u);
    EXPECT_EQ(a.N_local, 461u);
}

TEST(Budget, UniformRemainderGoesToFirstTile) {
    const auto a = allocate(4, 576, 0.2, kUniform4);
    EXPECT_EQ(a.per_tile, (std::vector<std::size_t>{116, 115, 115, 115}));
    EXPECT_EQ(a.retained(), 576u);
    EXPECT_EQ(a.stranded(), 0u);
}

TEST(Budget, StrictFloorStrandsRemainder) {
    const auto a = allocate(4, 576, 0.2, kUniform4, FloorMode::StrictFloor);
    EXPECT_EQ(a.per_tile, (std::vector<std::size_t>{115, 115, 115, 115}));
    EXPECT_EQ(a.N_total, 576u);
    EXPECT_EQ(a.retained(), 575u);
    EXPECT_EQ(a.stranded(), 1u);
}

TEST(Budget, FullRetention) {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 100; ++i) {
        const std::size_t k = 1 + rng() % 9;
        const auto a = allocate(k, 576, 1.0, random_simplex(rng, k));
        EXPECT_EQ(a.N_global, 576u);
        EXPECT_EQ(local_sum(a), k * 576);
        for (auto q : a.per_tile) EXPECT_EQ(q, 576u);
    }
}

TEST(Budget, CapacityOverflowIsRedistributed) {
    const std::vector<double> s{0.9, 0.1};
    const auto a = allocate(2, 10, 1.0, s);
    EXPECT_EQ(a.per_tile, (std::vector<std::size_t>{10, 10}));
}

TEST(Budget, TinyShareCanBeZero) {
    const std::vector<double> s{0.99, 0.01};
    const auto a = allocate(2, 10, 0.1, s);
    EXPECT_EQ(a.N_total, 3u);
    EXPECT_EQ(a.N_global, 1u);
    EXPECT_EQ(a.per_tile, (std::vector<std::size_t>{2, 0}));
}

TEST(Budget, DecimalRatioIsNotUnderCounted) {
    // 0.29 * 200 and 0.29 * 100 land just below 58 and 29 in binary floating point.
    const std::vector<double> s{1.0};
    const auto a = allocate(1, 100, 0.29, s);
    EXPECT_EQ(a.N_total, 58u);
    EXPECT_EQ(a.N_global, 29u);
    // Exact rational reference over a range of percentage ratios.
    for (std::size_t pct = 1; pct <= 100; ++pct) {
        for (std::size_t n : {100u, 576u, 577u}) {
            const auto b = allocate(4, n, static_cast<double>(pct) / 100.0, kUniform4);
            EXPECT_EQ(b.N_total, 5 * n * pct / 100) << pct << "% of " << n;
            EXPECT_EQ(b.N_global, n * pct / 100) << pct << "% of " << n;
        }
    }
}

TEST(Budget, EffectiveRatio) {
    EXPECT_EQ(effective_ratio(allocate(4, 576, 1.0, kUniform4)), 1.0);
    EXPECT_DOUBLE_EQ(effective_ratio(allocate(4, 576, 0.2, kUniform4)), 0.2);
    const std::vector<double> half{0.5, 0.5};
    EXPECT_DOUBLE_EQ(effective_ratio(allocate(2, 576, 0.5, half)), 0.5);
}

TEST(Budget, Errors) {
    EXPECT_EQ(allocate_error(4, 576, 0.0, kUniform4), Errc::RatioOutOfRange);
    EXPECT_EQ(allocate_error(4, 576, 1.5, kUniform4), Errc::RatioOutOfRange);
    EXPECT_EQ(allocate_error(4, 576, std::nan(""), kUniform4), Errc::RatioOutOfRange);
    EXPECT_EQ(allocate_error(2, 576, 0.2, {0.6, 0.6}), Errc::ScoresNotNormalized);
    EXPECT_EQ(allocate_error(2, 576, 0.2, {1.2, -0.2}), Errc::ScoresNotNormalized);
    EXPECT_EQ(allocate_error(3, 576, 0.2, {0.5, 0.5}), Errc::DimensionMismatch);
}

TEST(Budget, ConservationAndBounds) {
    std::mt19937_64 rng(555);
    std::uniform_real_distribution<double> ratio(0.0, 1.0);
    for (int trial = 0; trial < 3000; ++trial) {
        const std::size_t k = 1 + rng() % 9, n = 1 + rng() % 576;
        double r = ratio(rng);
        if (r == 0.0) r = 1.0;
        const auto s = random_simplex(rng, k);
        const auto a = allocate(k, n, r, s);
        ASSERT_EQ(a.N_global + local_sum(a), a.N_total);
        for (auto q : a.per_tile) ASSERT_LE(q, n);
        // Without capacity clipping each quota is its proportional share rounded up or down.
        bool clipped = false;
        for (double si : s) clipped = clipped || static_cast<double>(a.N_local) * si > static_cast<double>(n) - 1;
        if (!clipped) {
            for (std::size_t i = 0; i < k; ++i) {
                ASSERT_LT(std::abs(static_cast<double>(a.per_tile[i]) - static_cast<double>(a.N_local) * s[i]), 1.0);
            }
        }
        const auto strict = allocate(k, n, r, s, FloorMode::StrictFloor);
        ASSERT_LE(strict.retained(), strict.N_total);
        ASSERT_EQ(strict.retained() + strict.stranded(), strict.N_total);
    }
}

TEST(Budget, TotalsMonotoneInRatio) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t k = 1 + rng() % 9, n = 1 + rng() % 576;
        const auto s = random_simplex(rng, k);
        std::size_t prev = 0;
        for (int step = 1; step <= 20; ++step) {
            const auto a = allocate(k, n, step / 20.0, s);
            EXPECT_GE(a.N_total, prev);
            prev = a.N_total;
        }
    }
}

TEST(Budget, HigherScoreNeverGetsFewerTokens) {
    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = 2 + rng() % 8, n = 1 + rng() % 576;
        const auto s = random_simplex(rng, k);
        const auto a = allocate(k, n, 0.05 + 0.95 * (rng() % 1000) / 1000.0, s);
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                if (s[i] > s[j]) {
                    ASSERT_GE(a.per_tile[i], a.per_tile[j]);
                }
    }
}

TEST(Budget, JsonReport) {
    const nlohmann::json j = allocate(4, 576, 0.2, kUniform4, FloorMode::StrictFloor);
    EXPECT_EQ(j["N_total"], 576);
    EXPECT_EQ(j["retained"], 575);
    EXPECT_EQ(j["per_tile"], nlohmann::json({115, 115, 115, 115}));
    EXPECT_TRUE(j.contains("effective_ratio"));
    EXPECT_TRUE(j.contains("mode"));
}
