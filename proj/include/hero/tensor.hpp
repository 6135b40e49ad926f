#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <ranges>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "hero/error.hpp"

namespace hero {

/// Dense row-major f32 tensor.
struct Tensor {
    std::vector<std::size_t> dims;
    std::vector<float> data;

    Tensor() = default;
    Tensor(std::vector<std::size_t> shape, std::vector<float> values)
        : dims(std::move(shape)), data(std::move(values)) {
        if (element_count(dims) != data.size()) {
            throw Error(Errc::ShapeMismatch, "tensor data length " + std::to_string(data.size()) +
                                                 " does not match shape product " +
                                                 std::to_string(element_count(dims)));
        }
    }

    static Tensor zeros(std::vector<std::size_t> shape) {
        const auto n = element_count(shape);
        return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
    }

    [[nodiscard]] std::size_t rank() const noexcept { return dims.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return data.size(); }

    /// Row `r` of a rank-2 tensor.
    [[nodiscard]] std::span<const float> row(std::size_t r) const {
        const std::size_t cols = dims.at(1);
        return std::span<const float>(data).subspan(r * cols, cols);
    }
    [[nodiscard]] std::span<float> row(std::size_t r) {
        const std::size_t cols = dims.at(1);
        return std::span<float>(data).subspan(r * cols, cols);
    }

    [[nodiscard]] bool all_finite() const noexcept {
        return std::all_of(data.begin(), data.end(), [](float v) { return std::isfinite(v); });
    }

    friend bool operator==(const Tensor&, const Tensor&) = default;
};

template <typename R>
concept NumericRange = std::ranges::sized_range<R> &&
                       std::is_arithmetic_v<std::ranges::range_value_t<R>>;

template <NumericRange R>
double l2_norm(const R& v) {
    double sq = 0.0;
    for (auto x : v) sq += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(sq);
}

/// dot(a,b) / (|a|·|b|), accumulated in double and clamped to [-1, 1].
template <NumericRange A, NumericRange B>
double cosine_similarity(const A& a, const B& b) {
    if (std::ranges::size(a) != std::ranges::size(b)) {
        throw Error(Errc::DimensionMismatch, "cosine_similarity: lengths " +
                                                 std::to_string(std::ranges::size(a)) + " and " +
                                                 std::to_string(std::ranges::size(b)));
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    auto ib = std::ranges::begin(b);
    for (auto x : a) {
        const double xa = static_cast<double>(x);
        const double xb = static_cast<double>(*ib++);
        dot += xa * xb;
        na += xa * xa;
        nb += xb * xb;
    }
    if (!(na > 0.0) || !(nb > 0.0)) {
        throw Error(Errc::ZeroNorm, "cosine_similarity: zero-norm operand");
    }
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

inline double cosine_similarity(const Tensor& a, const Tensor& b) {
    if (a.dims != b.dims) {
        throw Error(Errc::DimensionMismatch, "cosine_similarity: tensor shapes differ");
    }
    return cosine_similarity(a.data, b.data);
}

/// Numerically stable softmax (max-subtracted).
template <NumericRange R>
std::vector<double> softmax(const R& scores) {
    if (std::ranges::size(scores) == 0) {
        throw Error(Errc::EmptyInput, "softmax: empty input");
    }
    double hi = -std::numeric_limits<double>::infinity();
    for (auto x : scores) {
        if (!std::isfinite(static_cast<double>(x))) {
            throw Error(Errc::NonFiniteValue, "softmax: non-finite score");
        }
        hi = std::max(hi, static_cast<double>(x));
    }
    std::vector<double> out;
    out.reserve(std::ranges::size(scores));
    double total = 0.0;
    for (auto x : scores) {
        out.push_back(std::exp(static_cast<double>(x) - hi));
        total += out.back();
    }
    for (auto& v : out) v /= total;
    return out;
}

}  // namespace hero
