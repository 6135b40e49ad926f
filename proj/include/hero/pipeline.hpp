#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "hero/analysis.hpp"
#include "hero/budgeting.hpp"
#include "hero/efficiency.hpp"
#include "hero/error.hpp"
#include "hero/scoring.hpp"
#include "hero/selection.hpp"
#include "hero/synth.hpp"
#include "hero/tiling.hpp"
#include "hero/trace.hpp"
#include "hero/trace_io.hpp"
#include "json.hpp"

namespace hero {

inline constexpr const char* kTraceExtension = ".herotrc";

enum ExitCode : int { kExitOk = 0, kExitInput = 1, kExitInternal = 2 };

struct PipelineConfig {
    std::optional<double> ratio;  // required by prune
    double alpha = kDefaultAlpha;
    LayerSet tile_layers = default_tile_layers();
    LayerSet thumbnail_layers = default_thumbnail_layers();
    std::string profile = "vicuna-7b";
    bool strict_floor = false;
    std::uint64_t n_text = 0;
    std::string out = ".";  // "-" sends the machine-readable result to stdout
    bool fail_fast = false;
    std::size_t jobs = 1;

    // analyze
    RegionSelector region = RegionSelector::Thumbnail;
    std::size_t iou_k = 50;
    std::optional<std::string> mask_dir;
};

inline RegionSelector parse_region(const std::string& s) {
    if (s == "thumbnail" || s == "global") return RegionSelector::Thumbnail;
    if (s == "tiles") return RegionSelector::Tiles;
    if (s == "all") return RegionSelector::All;
    throw Error(Errc::InvalidConfig, "region must be thumbnail, tiles or all (got '" + s + "')");
}

inline std::string to_string(RegionSelector r) {
    switch (r) {
        case RegionSelector::Thumbnail: return "thumbnail";
        case RegionSelector::Tiles: return "tiles";
        case RegionSelector::All: return "all";
    }
    return "thumbnail";
}

/// Overlays keys from a JSON config file. Layer sets may be given as strings
/// ("6..10") or arrays of indices.
inline void apply_config_json(PipelineConfig& cfg, const nlohmann::json& j) {
    auto layers = [](const nlohmann::json& v) {
        return v.is_string() ? LayerSet::parse(v.get<std::string>()) : LayerSet(v.get<std::vector<std::size_t>>());
    };
    try {
        if (!j.is_object()) throw Error(Errc::InvalidConfig, "config must be a JSON object");
        for (const auto& [key, v] : j.items()) {
            if (key == "ratio") cfg.ratio = v.get<double>();
            else if (key == "alpha") cfg.alpha = v.get<double>();
            else if (key == "layers_low") cfg.tile_layers = layers(v);
            else if (key == "layers_high") cfg.thumbnail_layers = layers(v);
            else if (key == "profile") cfg.profile = v.get<std::string>();
            else if (key == "strict_floor") cfg.strict_floor = v.get<bool>();
            else if (key == "n_text") cfg.n_text = v.get<std::uint64_t>();
            else if (key == "out") cfg.out = v.get<std::string>();
            else if (key == "fail_fast") cfg.fail_fast = v.get<bool>();
            else if (key == "jobs") cfg.jobs = v.get<std::size_t>();
            else if (key == "region") cfg.region = parse_region(v.get<std::string>());
            else if (key == "k") cfg.iou_k = v.get<std::size_t>();
            else if (key == "masks") cfg.mask_dir = v.get<std::string>();
            else throw Error(Errc::InvalidConfig, "unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::InvalidConfig, std::string("config: ") + e.what());
    }
}

inline PipelineConfig load_config_file(const std::filesystem::path& path, PipelineConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw Error(Errc::IoError, "cannot open config " + path.string());
    try {
        apply_config_json(base, nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::InvalidConfig, path.string() + ": " + e.what());
    }
    return base;
}

/// Everything produced for one trace.
struct PruneResult {
    std::string image_id;
    TileScores scores;
    BudgetAllocation allocation;
    std::vector<RetentionMask> masks;  // tiles, then thumbnail
    EfficiencyReport full;
    EfficiencyReport pruned;
};

inline PruneResult prune_trace(const ImageTrace& trace, const PipelineConfig& cfg, const LlmProfile& profile) {
    if (!cfg.ratio) throw Error(Errc::RatioOutOfRange, "a retention ratio is required");
    PruneResult r;
    r.image_id = trace.image_id;
    r.scores = score_tiles(trace, cfg.alpha);
    r.allocation = allocate(trace.K(), trace.N, *cfg.ratio, r.scores.s,
                            cfg.strict_floor ? FloorMode::StrictFloor : FloorMode::Redistribute);
    r.masks = select_all(trace, r.allocation, cfg.tile_layers, cfg.thumbnail_layers);
    r.full = prefill_flops((trace.K() + 1) * trace.N, cfg.n_text, profile);
    r.pruned = pruned_flops(r.allocation, cfg.n_text, profile);
    return r;
}

inline nlohmann::json masks_json(const PruneResult& r) {
    nlohmann::json tiles = nlohmann::json::array();
    for (std::size_t i = 0; i + 1 < r.masks.size(); ++i) tiles.push_back(r.masks[i]);
    return {{"image_id", r.image_id}, {"tiles", tiles}, {"thumbnail", r.masks.back()}};
}

inline nlohmann::json report_json(const PruneResult& r) {
    return {{"image_id", r.image_id},
            {"scores", r.scores},
            {"allocation", r.allocation},
            {"efficiency", {{"full", r.full}, {"pruned", r.pruned}}}};
}

namespace detail {

struct TraceOutcome {
    std::filesystem::path path;
    std::optional<PruneResult> result;
    std::string error;
    bool internal = false;
};

template <typename Fn>
auto run_ordered(const std::vector<std::filesystem::path>& paths, std::size_t jobs, Fn fn) {
    using R = decltype(fn(paths.front()));
    std::vector<R> out(paths.size());
    jobs = std::max<std::size_t>(1, std::min(jobs, paths.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < paths.size(); ++i) out[i] = fn(paths[i]);
        return out;
    }
    // Strided partition; each slot is written by exactly one worker.
    std::vector<std::future<void>> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
        workers.push_back(std::async(std::launch::async, [&, w] {
            for (std::size_t i = w; i < paths.size(); i += jobs) out[i] = fn(paths[i]);
        }));
    }
    for (auto& f : workers) f.get();
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    out << text;
}

inline void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace detail

/// Expands directories into their trace files; the result is sorted so batch
/// output does not depend on argument or directory order.
inline std::vector<std::filesystem::path> collect_traces(const std::vector<std::string>& inputs) {
    std::vector<std::filesystem::path> out;
    for (const auto& in : inputs) {
        const std::filesystem::path p(in);
        if (std::filesystem::is_directory(p)) {
            for (const auto& e : std::filesystem::directory_iterator(p)) {
                if (e.is_regular_file() && e.path().extension() == kTraceExtension) out.push_back(e.path());
            }
        } else {
            out.push_back(p);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

/// Prunes every trace and writes per-trace artifacts plus summary.json.
/// Human-readable diagnostics go to `diag` only.
inline int run_prune(const PipelineConfig& cfg, const std::vector<std::string>& inputs, std::ostream& stdout_sink,
                     std::ostream& diag) {
    if (!cfg.ratio) {
        diag << "error: --ratio is required\n";
        return kExitInput;
    }
    LlmProfile profile;
    try {
        if (!(*cfg.ratio > 0.0 && *cfg.ratio <= 1.0)) throw Error(Errc::RatioOutOfRange, "ratio must be in (0, 1]");
        if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw Error(Errc::AlphaOutOfRange, "alpha must be in [0, 1]");
        profile = resolve_profile(cfg.profile);
    } catch (const Error& e) {
        diag << "error: " << e.what() << '\n';
        return kExitInput;
    }
    const auto paths = collect_traces(inputs);
    if (paths.empty()) {
        diag << "error: no trace files given\n";
        return kExitInput;
    }
    const bool to_stdout = cfg.out == "-";
    const std::filesystem::path out_dir(cfg.out);
    if (!to_stdout) std::filesystem::create_directories(out_dir);

    auto work = [&](const std::filesystem::path& path) {
        detail::TraceOutcome o{path, std::nullopt, {}, false};
        try {
            o.result = prune_trace(read_trace_file(path), cfg, profile);
        } catch (const Error& e) {
            o.error = e.what();
        } catch (const std::exception& e) {
            o.error = e.what();
            o.internal = true;
        }
        return o;
    };
    // Fail-fast needs the first failure in path order, so it runs sequentially.
    std::vector<detail::TraceOutcome> outcomes;
    if (cfg.fail_fast) {
        for (const auto& p : paths) {
            outcomes.push_back(work(p));
            if (!outcomes.back().result) break;
        }
    } else {
        outcomes = detail::run_ordered(paths, cfg.jobs, work);
    }

    nlohmann::json per_trace = nlohmann::json::array();
    nlohmann::json stdout_traces = nlohmann::json::array();
    std::size_t ok = 0, failed = 0, fallbacks = 0, retained = 0, full_tokens = 0;
    double full_tflops = 0.0, pruned_tflops = 0.0;
    bool internal = false;
    for (const auto& o : outcomes) {
        nlohmann::json entry{{"path", o.path.generic_string()}};
        if (!o.result) {
            ++failed;
            internal = internal || o.internal;
            entry["status"] = "error";
            entry["error"] = o.error;
            diag << "error: " << o.path.string() << ": " << o.error << '\n';
            per_trace.push_back(entry);
            continue;
        }
        const auto& r = *o.result;
        ++ok;
        if (r.scores.alpha_fallback) {
            ++fallbacks;
            diag << "warning: " << o.path.string() << ": no text embedding; alpha " << r.scores.requested_alpha
                 << " -> 1 (visual saliency only)\n";
        }
        retained += r.allocation.retained();
        full_tokens += (r.allocation.K + 1) * r.allocation.N;
        full_tflops += r.full.tflops;
        pruned_tflops += r.pruned.tflops;
        entry["status"] = "ok";
        entry["image_id"] = r.image_id;
        entry["retained"] = r.allocation.retained();
        entry["alpha_fallback"] = r.scores.alpha_fallback;
        per_trace.push_back(entry);

        if (to_stdout) {
            auto j = report_json(r);
            j["masks"] = masks_json(r);
            stdout_traces.push_back(j);
        } else {
            const auto stem = o.path.stem().string();
            try {
                detail::write_text(out_dir / (stem + ".report.json"), report_json(r).dump(2) + "\n");
                detail::write_text(out_dir / (stem + ".masks.json"), masks_json(r).dump() + "\n");
                detail::write_bytes(out_dir / (stem + ".masks.bin"), pack_bitmap(r.masks));
            } catch (const Error& e) {
                diag << "error: " << e.what() << '\n';
                return kExitInput;
            }
        }
    }

    nlohmann::json summary{{"traces", per_trace},
                           {"ok", ok},
                           {"failed", failed},
                           {"alpha_fallbacks", fallbacks},
                           {"ratio", *cfg.ratio},
                           {"alpha", cfg.alpha},
                           {"layers_low", cfg.tile_layers.indices()},
                           {"layers_high", cfg.thumbnail_layers.indices()},
                           {"strict_floor", cfg.strict_floor},
                           {"profile", profile},
                           {"visual_tokens_full", full_tokens},
                           {"visual_tokens_retained", retained},
                           {"tflops_full", full_tflops},
                           {"tflops_pruned", pruned_tflops}};
    if (to_stdout) {
        stdout_sink << nlohmann::json{{"summary", summary}, {"results", stdout_traces}}.dump(2) << '\n';
    } else {
        try {
            detail::write_text(out_dir / "summary.json", summary.dump(2) + "\n");
        } catch (const Error& e) {
            diag << "error: " << e.what() << '\n';
            return kExitInput;
        }
    }
    diag << "pruned " << ok << " trace(s), " << failed << " failed";
    if (fallbacks) diag << ", " << fallbacks << " alpha fallback(s)";
    diag << "; visual tokens " << retained << "/" << full_tokens << '\n';
    if (failed == 0) return kExitOk;
    return internal ? kExitInternal : kExitInput;
}

/// Layer-similarity study, stage boundary and (with a mask directory) the
/// per-layer saliency IoU curve.
inline int run_analyze(const PipelineConfig& cfg, const std::vector<std::string>& inputs, std::ostream& stdout_sink,
                       std::ostream& diag) {
    const auto paths = collect_traces(inputs);
    if (paths.empty()) {
        diag << "error: " << to_string(Errc::EmptyCorpus) << ": no traces in corpus\n";
        return kExitInput;
    }
    std::vector<ImageTrace> corpus;
    bool failed = false;
    for (const auto& p : paths) {
        try {
            corpus.push_back(read_trace_file(p));
        } catch (const Error& e) {
            diag << "error: " << p.string() << ": " << e.what() << '\n';
            failed = true;
            if (cfg.fail_fast) return kExitInput;
        }
    }
    if (corpus.empty()) {
        diag << "error: " << to_string(Errc::EmptyCorpus) << ": no readable traces\n";
        return kExitInput;
    }

    LayerSimilarityMatrix matrix;
    std::size_t boundary = 0;
    try {
        matrix = layer_similarity(corpus, cfg.region);
        boundary = detect_stages(matrix);
    } catch (const Error& e) {
        diag << "error: " << e.what() << '\n';
        return kExitInput;
    }
    diag << "corpus: " << corpus.size() << " trace(s), " << matrix.regions << " region(s), " << matrix.num_layers
         << " layers\n";
    diag << "stage boundary: layer " << boundary << '\n';

    std::optional<std::vector<double>> iou_curve;
    std::size_t iou_images = 0;
    if (!cfg.mask_dir) {
        diag << "notice: no mask directory given; IoU step skipped\n";
    } else {
        std::vector<double> sums(matrix.num_layers, 0.0);
        for (const auto& t : corpus) {
            const auto mask_path = std::filesystem::path(*cfg.mask_dir) / (t.image_id + ".pgm");
            if (!std::filesystem::exists(mask_path)) {
                diag << "notice: no mask for " << t.image_id << "; skipped\n";
                continue;
            }
            try {
                const auto mask = read_pgm_file(mask_path);
                const auto plan = thumbnail_plan(mask.width, mask.height);
                std::vector<double> row(matrix.num_layers);
                for (std::size_t l = 1; l <= matrix.num_layers; ++l) row[l - 1] = saliency_iou(t, plan, mask, l, cfg.iou_k);
                for (std::size_t l = 0; l < row.size(); ++l) sums[l] += row[l];
                ++iou_images;
            } catch (const Error& e) {
                diag << "error: " << t.image_id << ": " << e.what() << '\n';
                failed = true;
                if (cfg.fail_fast) return kExitInput;
            }
        }
        if (iou_images == 0) {
            diag << "notice: no usable masks; IoU step skipped\n";
        } else {
            for (auto& s : sums) s /= static_cast<double>(iou_images);
            iou_curve = std::move(sums);
        }
    }

    nlohmann::json summary{{"corpus_size", corpus.size()},
                           {"regions", matrix.regions},
                           {"region", to_string(cfg.region)},
                           {"num_layers", matrix.num_layers},
                           {"stage_boundary", boundary},
                           {"iou_images", iou_images},
                           {"iou_k", cfg.iou_k}};
    if (cfg.out == "-") {
        write_similarity_csv(stdout_sink, matrix);
        if (iou_curve) write_iou_csv(stdout_sink, *iou_curve);
        stdout_sink << summary.dump() << '\n';
    } else {
        const std::filesystem::path out_dir(cfg.out);
        std::filesystem::create_directories(out_dir);
        std::ostringstream sim;
        write_similarity_csv(sim, matrix);
        try {
            detail::write_text(out_dir / "layer_similarity.csv", sim.str());
            if (iou_curve) {
                std::ostringstream iou;
                write_iou_csv(iou, *iou_curve);
                detail::write_text(out_dir / "iou.csv", iou.str());
            }
            detail::write_text(out_dir / "analysis.json", summary.dump(2) + "\n");
        } catch (const Error& e) {
            diag << "error: " << e.what() << '\n';
            return kExitInput;
        }
    }
    return failed ? kExitInput : kExitOk;
}

/// Writes `count` traces for seeds spec.seed, spec.seed + 1, ...
inline int run_synth(const std::filesystem::path& spec_path, const std::filesystem::path& out_dir, std::size_t count,
                     std::ostream& diag) {
    try {
        std::ifstream in(spec_path);
        if (!in) throw Error(Errc::IoError, "cannot open spec " + spec_path.string());
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw Error(Errc::InvalidSpec, spec_path.string() + ": " + e.what());
        }
        auto spec = spec_from_json(j);
        std::filesystem::create_directories(out_dir);
        const auto base = spec.seed;
        for (std::size_t i = 0; i < count; ++i) {
            spec.seed = base + i;
            const auto trace = generate(spec);
            write_trace_file(out_dir / (trace.image_id + kTraceExtension), trace);
        }
        diag << "wrote " << count << " trace(s) to " << out_dir.string() << '\n';
        return kExitOk;
    } catch (const Error& e) {
        diag << "error: " << e.what() << '\n';
        return kExitInput;
    }
}

}  // namespace hero
