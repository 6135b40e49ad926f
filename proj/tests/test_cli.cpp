// Drives the installed `hero` binary end to end.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <sys/wait.h>

#include "json.hpp"
#include "test_support.hpp"

#ifndef HERO_BIN
#error "HERO_BIN must point at the hero executable"
#endif

using namespace hero;
using namespace hero::testing;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
    int status;
    std::string out, err;
};

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Run hero_cli(const std::string& args, const fs::path& dir) {
    const auto out = dir / "stdout.txt", err = dir / "stderr.txt";
    const std::string cmd = std::string("'") + HERO_BIN + "' " + args + " > '" + out.string() + "' 2> '" + err.string() + "'";
    const int raw = std::system(cmd.c_str());
    return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, slurp(out), slurp(err)};
}

void write_spec(const fs::path& path) {
    std::ofstream(path) << R"({"seed": 7, "K": 4, "planted_primary": [[1, 2], [30], [200, 201, 202], [575]],
                              "planted_shortcut": [9, 10], "noise_scale": 0.2})";
}

}  // namespace

TEST(Cli, SynthPruneAnalyze) {
    const auto dir = scratch_dir("cli");
    write_spec(dir / "spec.json");
    auto r = hero_cli("synth '" + (dir / "spec.json").string() + "' --out '" + (dir / "traces").string() + "' --count 3", dir);
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_TRUE(r.out.empty());
    for (int s : {7, 8, 9}) EXPECT_TRUE(fs::exists(dir / "traces" / ("synth-" + std::to_string(s) + ".herotrc")));

    r = hero_cli("prune --ratio 0.2 --out '" + (dir / "pruned").string() + "' '" + (dir / "traces").string() + "'", dir);
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_TRUE(r.out.empty());
    const auto summary = json::parse(slurp(dir / "pruned" / "summary.json"));
    EXPECT_EQ(summary["visual_tokens_retained"], 3 * 576);
    EXPECT_EQ(summary["ok"], 3);

    r = hero_cli("analyze --out - '" + (dir / "traces").string() + "'", dir);
    ASSERT_EQ(r.status, 0) << r.err;
    EXPECT_EQ(r.out.rfind("layer_p,layer_q,value\n", 0), 0u);
    EXPECT_NE(r.err.find("stage boundary: layer 12"), std::string::npos);
    EXPECT_NE(r.err.find("IoU step skipped"), std::string::npos);
}

TEST(Cli, PruneToStdoutIsPureJson) {
    const auto dir = scratch_dir("cli-stdout");
    write_spec(dir / "spec.json");
    ASSERT_EQ(hero_cli("synth '" + (dir / "spec.json").string() + "' --out '" + dir.string() + "'", dir).status, 0);
    const auto r = hero_cli("prune --ratio 0.5 --alpha 0.3 --layers-low 1..4 --layers-high 20,21 --n-text 40 --out - '" +
                                (dir / "synth-7.herotrc").string() + "'",
                            dir);
    ASSERT_EQ(r.status, 0) << r.err;
    const auto doc = json::parse(r.out);
    EXPECT_EQ(doc["summary"]["alpha"], 0.3);
    EXPECT_EQ(doc["summary"]["layers_low"], json({1, 2, 3, 4}));
    EXPECT_EQ(doc["summary"]["layers_high"], json({20, 21}));
    EXPECT_EQ(doc["results"][0]["efficiency"]["pruned"]["n_text"], 40);
}

TEST(Cli, FlagsOverrideConfig) {
    const auto dir = scratch_dir("cli-config");
    write_spec(dir / "spec.json");
    ASSERT_EQ(hero_cli("synth '" + (dir / "spec.json").string() + "' --out '" + dir.string() + "'", dir).status, 0);
    std::ofstream(dir / "cfg.json") << R"({"ratio": 0.5, "alpha": 0.9, "strict_floor": true})";
    const auto trace = "'" + (dir / "synth-7.herotrc").string() + "'";
    const auto cfg = "--config '" + (dir / "cfg.json").string() + "'";

    auto r = hero_cli("prune " + cfg + " --out - " + trace, dir);
    ASSERT_EQ(r.status, 0) << r.err;
    auto doc = json::parse(r.out);
    EXPECT_EQ(doc["summary"]["ratio"], 0.5);
    EXPECT_EQ(doc["summary"]["alpha"], 0.9);
    EXPECT_EQ(doc["summary"]["strict_floor"], true);

    r = hero_cli("prune " + cfg + " --ratio 0.25 --out - " + trace, dir);
    ASSERT_EQ(r.status, 0) << r.err;
    doc = json::parse(r.out);
    EXPECT_EQ(doc["summary"]["ratio"], 0.25);
    EXPECT_EQ(doc["summary"]["alpha"], 0.9);
}

TEST(Cli, InputErrorsExitOne) {
    const auto dir = scratch_dir("cli-errors");
    auto r = hero_cli("prune '" + dir.string() + "'", dir);
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("--ratio"), std::string::npos);
    EXPECT_TRUE(r.out.empty());

    EXPECT_EQ(hero_cli("prune --ratio 2 '" + dir.string() + "'", dir).status, 1);
    EXPECT_EQ(hero_cli("frobnicate", dir).status, 1);
    EXPECT_EQ(hero_cli("", dir).status, 1);
    EXPECT_EQ(hero_cli("analyze '" + dir.string() + "'", dir).status, 1);

    std::ofstream(dir / "bad.json") << R"({"seed": 1, "planted_primary": [999], "planted_shortcut": [1]})";
    r = hero_cli("synth '" + (dir / "bad.json").string() + "' --out '" + dir.string() + "'", dir);
    EXPECT_EQ(r.status, 1);
    EXPECT_NE(r.err.find("InvalidSpec"), std::string::npos);

    std::ofstream(dir / "cfg.json") << R"({"ratoi": 0.5})";
    EXPECT_EQ(hero_cli("prune --config '" + (dir / "cfg.json").string() + "' '" + dir.string() + "'", dir).status, 1);
}

TEST(Cli, HelpGoesToStderr) {
    const auto dir = scratch_dir("cli-help");
    const auto r = hero_cli("--help", dir);
    EXPECT_EQ(r.status, 0);
    EXPECT_TRUE(r.out.empty());
    EXPECT_NE(r.err.find("prune"), std::string::npos);
}
