#include <catch2/catch_amalgamated.hpp>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(BBM2LAB_EXE) + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    const auto p = fs::temp_directory_path() / ("bbm2lab_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

std::size_t data_rows(const fs::path& csv) {
    std::ifstream in(csv);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) n += line.empty() ? 0 : 1;
    return n - 1;
}

}  // namespace

TEST_CASE("phase sweep writes grid^2 rows and a manifest") {
    const auto out = scratch("phase");
    REQUIRE(run("phase --grid 7 --out " + out.string()) == 0);
    CHECK(data_rows(out / "phase_surfaces.csv") == 49);
    const auto manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest.at("config").at("grid") == 7);
    CHECK(manifest.contains("config_hash"));
    CHECK(manifest.contains("version"));
}

TEST_CASE("bad parameters and bad config exit with 2") {
    const auto out = scratch("bad");
    CHECK(run("simulate --beta -1 --out " + out.string()) == 2);
    CHECK(run("simulate --sigma2 0 --out " + out.string()) == 2);
    CHECK(run("simulate --no-such-flag") == 2);
    std::ofstream(out / "broken.json") << "{ not json";
    CHECK(run("simulate --config " + (out / "broken.json").string()) == 2);
    std::ofstream(out / "wrong.json") << R"({"model": {"beta": "fast"}})";
    CHECK(run("simulate --config " + (out / "wrong.json").string()) == 2);
    CHECK(run("run --task nonsense --out " + out.string()) == 2);
}

TEST_CASE("flags override the config file") {
    const auto out = scratch("override");
    std::ofstream(out / "cfg.json") << R"({"grid": 3, "seed": 5})";
    REQUIRE(run("phase --config " + (out / "cfg.json").string() + " --grid 4 --out " + out.string()) == 0);
    CHECK(data_rows(out / "phase_surfaces.csv") == 16);
    const auto manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest.at("config").at("grid") == 4);
    CHECK(manifest.at("seed") == 5);
}

TEST_CASE("same seed gives byte-identical artifacts") {
    const auto a = scratch("det_a");
    const auto b = scratch("det_b");
    const std::string common =
        "martingales --beta 1.8 --sigma2 0.5 --alpha 1 --horizon 3 --checkpoints 1,2,3 --replicas 20 --seed 9";
    REQUIRE(run(common + " --out " + a.string()) == 0);
    REQUIRE(run(common + " --out " + b.string()) == 0);
    std::size_t compared = 0;
    for (const auto& entry : fs::directory_iterator(a)) {
        const auto other = b / entry.path().filename();
        REQUIRE(fs::exists(other));
        CHECK(slurp(entry.path()) == slurp(other));
        ++compared;
    }
    CHECK(compared >= 2);

    const auto c = scratch("det_c");
    REQUIRE(run("martingales --beta 1.8 --sigma2 0.5 --alpha 1 --horizon 3 --checkpoints 1,2,3 --replicas 20 --seed 10 "
                "--out " +
                c.string()) == 0);
    CHECK(slurp(a / "martingales.csv") != slurp(c / "martingales.csv"));
}

TEST_CASE("strict mode exits 3 when replicas hit the population cap") {
    const auto out = scratch("strict");
    std::ofstream(out / "cfg.json") << R"({"sim": {"max_particles": 50}})";
    const std::string args = "simulate --config " + (out / "cfg.json").string() +
                             " --beta 1.8 --sigma2 0.5 --alpha 1 --horizon 6 --replicas 5 --barrier none --out " +
                             out.string();
    CHECK(run(args) == 0);
    const auto manifest = json::parse(slurp(out / "manifest.json"));
    CHECK(manifest.at("truncated_replicas").get<int>() > 0);
    CHECK(run(args + " --strict") == 3);
}
