#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>

#include "hero/budgeting.hpp"
#include "hero/error.hpp"
#include "json.hpp"

namespace hero {

/// Decoder-side dimensions that drive prefill cost.
struct LlmProfile {
    std::string name;
    std::uint64_t d = 0;            // hidden size
    std::uint64_t m = 0;            // MLP intermediate size
    std::uint64_t num_layers = 0;
    std::uint64_t kv_bytes_per_element = 2;

    friend bool operator==(const LlmProfile&, const LlmProfile&) = default;
};

inline LlmProfile vicuna_7b() { return {"vicuna-7b", 4096, 11008, 32, 2}; }
inline LlmProfile vicuna_13b() { return {"vicuna-13b", 5120, 13824, 40, 2}; }

inline std::optional<LlmProfile> builtin_profile(std::string_view name) {
    if (name == "vicuna-7b") return vicuna_7b();
    if (name == "vicuna-13b") return vicuna_13b();
    return std::nullopt;
}

inline LlmProfile profile_from_json(const nlohmann::json& j) {
    LlmProfile p;
    try {
        p.name = j.value("name", std::string("custom"));
        p.d = j.at("d").get<std::uint64_t>();
        p.m = j.at("m").get<std::uint64_t>();
        p.num_layers = j.at("num_layers").get<std::uint64_t>();
        p.kv_bytes_per_element = j.value("kv_bytes_per_element", std::uint64_t{2});
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidProfile, std::string("profile JSON: ") + e.what());
    }
    if (p.d == 0 || p.m == 0 || p.num_layers == 0 || p.kv_bytes_per_element == 0) {
        throw Error(Errc::InvalidProfile, "profile dimensions must be positive");
    }
    return p;
}

/// Built-in profile name, or a path to a JSON profile.
inline LlmProfile resolve_profile(const std::string& name_or_path) {
    if (auto p = builtin_profile(name_or_path)) return *p;
    std::ifstream in(name_or_path);
    if (!in) throw Error(Errc::InvalidProfile, "unknown profile '" + name_or_path + "'");
    try {
        return profile_from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidProfile, name_or_path + ": " + e.what());
    }
}

struct EfficiencyReport {
    std::uint64_t n_visual = 0;
    std::uint64_t n_text = 0;
    double per_layer_flops = 0.0;
    double tflops = 0.0;
    double kv_cache_mib = 0.0;
    std::string profile;
};

/// Prefill cost for T = n_visual + n_text tokens:
///   per layer  8·T·d² + 4·T²·d + 6·T·d·m  FLOPs
///   KV cache   2·layers·T·d·bytes          (reported in MiB)
inline EfficiencyReport prefill_flops(std::uint64_t n_visual, std::uint64_t n_text, const LlmProfile& profile) {
    const std::uint64_t T = n_visual + n_text;
    const std::uint64_t d = profile.d;
    // Exact in 64-bit integers for any realistic T, d, m.
    const std::uint64_t per_layer = 8 * T * d * d + 4 * T * T * d + 6 * T * d * profile.m;
    const std::uint64_t kv_bytes = 2 * profile.num_layers * T * d * profile.kv_bytes_per_element;

    EfficiencyReport r;
    r.n_visual = n_visual;
    r.n_text = n_text;
    r.per_layer_flops = static_cast<double>(per_layer);
    r.tflops = static_cast<double>(profile.num_layers) * r.per_layer_flops / 1e12;
    r.kv_cache_mib = static_cast<double>(kv_bytes) / static_cast<double>(1u << 20);
    r.profile = profile.name;
    return r;
}

/// Cost after pruning: the visual count is the allocation's exact retained
/// token count rather than R·N_v.
inline EfficiencyReport pruned_flops(const BudgetAllocation& alloc, std::uint64_t n_text, const LlmProfile& profile) {
    return prefill_flops(alloc.retained(), n_text, profile);
}

inline void to_json(nlohmann::json& j, const EfficiencyReport& r) {
    j = nlohmann::json{{"n_visual", r.n_visual},
                       {"n_text", r.n_text},
                       {"tflops", r.tflops},
                       {"kv_cache_mib", r.kv_cache_mib},
                       {"profile", r.profile}};
}

inline void to_json(nlohmann::json& j, const LlmProfile& p) {
    j = nlohmann::json{{"name", p.name},
                       {"d", p.d},
                       {"m", p.m},
                       {"num_layers", p.num_layers},
                       {"kv_bytes_per_element", p.kv_bytes_per_element}};
}

}  // namespace hero
