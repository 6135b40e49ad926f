// hero: prune / analyze / synth driver over trace containers.

#include <cstddef>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hero/hero.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<double> ratio;
    std::optional<double> alpha;
    std::optional<std::string> layers_low;
    std::optional<std::string> layers_high;
    std::optional<std::string> profile;
    std::optional<std::string> out;
    std::optional<std::uint64_t> n_text;
    std::optional<std::size_t> jobs;
    std::optional<std::string> region;
    std::optional<std::size_t> k;
    std::optional<std::string> masks;
    bool strict_floor = false;
    bool fail_fast = false;
};

// Precedence: flags > config file > built-in defaults.
hero::PipelineConfig resolve(const CommonFlags& f) {
    hero::PipelineConfig cfg;
    if (!f.config_path.empty()) cfg = hero::load_config_file(f.config_path);
    if (f.ratio) cfg.ratio = *f.ratio;
    if (f.alpha) cfg.alpha = *f.alpha;
    if (f.layers_low) cfg.tile_layers = hero::LayerSet::parse(*f.layers_low);
    if (f.layers_high) cfg.thumbnail_layers = hero::LayerSet::parse(*f.layers_high);
    if (f.profile) cfg.profile = *f.profile;
    if (f.out) cfg.out = *f.out;
    if (f.n_text) cfg.n_text = *f.n_text;
    if (f.jobs) cfg.jobs = *f.jobs;
    if (f.region) cfg.region = hero::parse_region(*f.region);
    if (f.k) cfg.iou_k = *f.k;
    if (f.masks) cfg.mask_dir = *f.masks;
    if (f.strict_floor) cfg.strict_floor = true;
    if (f.fail_fast) cfg.fail_fast = true;
    return cfg;
}

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON config file (flags override it)");
    cmd->add_option("--out", f.out, "Output directory, or - for standard output");
    cmd->add_flag("--fail-fast", f.fail_fast, "Stop at the first failing trace");
    cmd->add_option("--jobs", f.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Visual-token budget allocation and selection over encoder traces"};
    app.require_subcommand(1);

    CommonFlags prune_flags;
    std::vector<std::string> prune_inputs;
    auto* prune = app.add_subcommand("prune", "Allocate budgets and select tokens for each trace");
    add_common(prune, prune_flags);
    prune->add_option("--ratio", prune_flags.ratio, "Retention ratio R in (0, 1]");
    prune->add_option("--alpha", prune_flags.alpha, "Visual/text balance in [0, 1] (default 0.5)");
    prune->add_option("--layers-low", prune_flags.layers_low, "Tile layer set, e.g. 6..10 (default 6..10)");
    prune->add_option("--layers-high", prune_flags.layers_high, "Thumbnail layer set, e.g. 22 or 22,23 (default 22)");
    prune->add_option("--profile", prune_flags.profile, "vicuna-7b, vicuna-13b or a JSON profile path");
    prune->add_option("--n-text", prune_flags.n_text, "Text tokens added to the cost model (default 0)");
    prune->add_flag("--strict-floor", prune_flags.strict_floor, "Drop floor remainders instead of redistributing");
    prune->add_option("traces", prune_inputs, "Trace files or directories")->required();

    CommonFlags analyze_flags;
    std::vector<std::string> analyze_inputs;
    auto* analyze = app.add_subcommand("analyze", "Layer similarity, stage boundary and saliency IoU");
    add_common(analyze, analyze_flags);
    analyze->add_option("--masks", analyze_flags.masks, "Directory of <image_id>.pgm saliency masks");
    analyze->add_option("--region", analyze_flags.region, "thumbnail (default), tiles or all");
    analyze->add_option("--k", analyze_flags.k, "Top-k patches for IoU (default 50)");
    analyze->add_option("corpus", analyze_inputs, "Trace files or directories")->required();

    std::string spec_path, synth_out = ".";
    std::size_t count = 1;
    auto* synth = app.add_subcommand("synth", "Generate synthetic traces from a JSON spec");
    synth->add_option("spec", spec_path, "SynthSpec JSON")->required();
    synth->add_option("--out", synth_out, "Output directory");
    synth->add_option("--count", count, "Number of traces (seeds seed..seed+count-1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // CLI11 prints help to stdout; everything human-readable belongs on stderr.
        return app.exit(e, std::cerr, std::cerr) == 0 ? hero::kExitOk : hero::kExitInput;
    }

    try {
        if (*prune) return hero::run_prune(resolve(prune_flags), prune_inputs, std::cout, std::cerr);
        if (*analyze) return hero::run_analyze(resolve(analyze_flags), analyze_inputs, std::cout, std::cerr);
        if (*synth) return hero::run_synth(spec_path, synth_out, count, std::cerr);
    } catch (const hero::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return hero::kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return hero::kExitInternal;
    }
    return hero::kExitInternal;
}
