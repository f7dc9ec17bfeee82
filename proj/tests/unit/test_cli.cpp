#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "doctest.h"
#include "fracsynth/cli.hpp"

using namespace fracsynth;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("fracsynth_cli_" + name);
    fs::remove_all(p);
    return p;
}

std::size_t line_count(const fs::path& p) {
    std::ifstream is(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(is, line)) ++n;
    return n;
}

}  // namespace

TEST_CASE("usage and unknown commands exit 64") {
    auto r = run({});
    CHECK(r.code == kExitUsage);
    CHECK(r.err.find("usage: fracsynth") != std::string::npos);
    CHECK(run({"frobnicate"}).code == kExitUsage);
    CHECK(run({"blocks"}).code == kExitUsage);
    auto sub = run({"blocks", "shuffle", "--out", "x"});
    CHECK(sub.code == kExitUsage);
    CHECK(sub.err.find("'shuffle'") != std::string::npos);
    CHECK(run({"--help"}).code == kExitOk);
    CHECK(run({"render", "--help"}).code == kExitOk);
}

TEST_CASE("blocks sample writes 8192 rows and a provenance record") {
    auto dir = scratch("blocks");
    auto r = run({"blocks", "sample", "--n", "8192", "--seed", "7", "--out", dir.string()});
    REQUIRE(r.code == kExitOk);
    CHECK(line_count(dir / "blocks.csv") == 8193);
    std::ifstream is(dir / "provenance_blocks_sample.json");
    auto j = nlohmann::json::parse(is);
    CHECK(j["seed"] == 7);
    CHECK(j["command"] == "blocks sample");
    CHECK(j["parameters"]["n"] == 8192);
    CHECK(j["outputs"] == nlohmann::json::array({"blocks.csv"}));
    CHECK(j["config_hash"].get<std::string>().size() == 16);
    CHECK(j.contains("libraries"));

    auto again = scratch("blocks2");
    REQUIRE(run({"blocks", "sample", "--n", "8192", "--seed", "7", "--out", again.string()}).code == 0);
    auto slurp = [](const fs::path& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), {});
    };
    CHECK(slurp(dir / "blocks.csv") == slurp(again / "blocks.csv"));
    CHECK(slurp(dir / "provenance_blocks_sample.json") == slurp(again / "provenance_blocks_sample.json"));
}

TEST_CASE("validation errors exit 2 with a JSON report") {
    auto dir = scratch("noseed");
    ::unsetenv("FRACSYNTH_SEED");
    auto r = run({"blocks", "sample", "--n", "5", "--out", dir.string()});
    CHECK(r.code == kExitValidation);
    auto j = nlohmann::json::parse(r.err);
    CHECK(j["status"] == "error");
    CHECK(j["kind"] == "validation");
    CHECK(j["exit_code"] == 2);
    CHECK(fs::exists(dir / "error.json"));

    ::setenv("FRACSYNTH_SEED", "11", 1);
    CHECK(run({"blocks", "sample", "--n", "5", "--out", dir.string()}).code == kExitOk);
    CHECK_FALSE(fs::exists(dir / "error.json"));
    ::unsetenv("FRACSYNTH_SEED");

    CHECK(run({"blocks", "sample", "--n", "5", "--seed", "-3", "--out", dir.string()}).code == kExitValidation);
    CHECK(run({"blocks", "sample", "--seed", "1"}).code == kExitValidation);  // no --out

    auto cfg = dir / "bad.toml";
    std::ofstream(cfg) << "[blocks]\nflatnes = [1, 4]\n";
    auto bad = run({"blocks", "sample", "--n", "5", "--seed", "1", "--config", cfg.string(), "--out", dir.string()});
    CHECK(bad.code == kExitValidation);
    CHECK(bad.err.find("blocks.flatnes") != std::string::npos);
}

TEST_CASE("render with zero poses is an empty-output error") {
    auto dir = scratch("render0");
    auto r = run({"render", "--mesh", "m.obj", "--traces", "t.jsonl", "--poses", "0", "--seed", "1", "--out",
                  dir.string()});
    CHECK(r.code == kExitValidation);
    CHECK(r.err.find("no poses") != std::string::npos);
}

TEST_CASE("box scene through render, manifest and eval") {
    auto dir = scratch("box");
    auto s = (dir / "scene").string(), img = (dir / "render").string();
    REQUIRE(run({"scene", "box", "--out", s}).code == 0);
    auto cfg = dir / "render.toml";
    std::ofstream(cfg) << "[render]\nwidth = 96\nheight = 96\ndist_min = 1.5\ndist_max = 2.5\n";
    REQUIRE(run({"render", "--config", cfg.string(), "--mesh", s + "/box.obj", "--traces", s + "/box_traces.jsonl",
                 "--poses", "2", "--textures", "0", "--seed", "5", "--out", img})
                .code == 0);
    CHECK(fs::exists(dir / "render/images/box_t0_p0001_mask.png"));

    auto m = (dir / "manifest").string();
    REQUIRE(run({"dataset", "manifest", "--root", img + "/images:synthetic:box", "--out", m}).code == 0);
    CHECK(line_count(dir / "manifest/manifest.jsonl") == 2);

    auto e = (dir / "eval").string();
    REQUIRE(run({"eval", "--pred", img + "/images", "--label", img + "/images", "--aggregate", "pixel",
                 "--out", e})
                .code == 0);
    std::ifstream is(dir / "eval/eval_summary.csv");
    std::string header, row;
    std::getline(is, header);
    std::getline(is, row);
    CHECK(row.find(",pixel,2,1.000000,1.000000,1.000000,1.000000") != std::string::npos);
}
