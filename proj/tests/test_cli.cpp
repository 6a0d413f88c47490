#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "pinning/cli.hpp"
#include "pinning/report.hpp"

namespace fs = std::filesystem;
using namespace pinning;

namespace {

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("pinning_cli_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = run_cli(args, out, err);
    return {code, out.str(), err.str()};
}

std::size_t csv_rows(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) ++n;
    return n - 1;
}

}  // namespace

TEST_CASE("plan-thm2 emits the planner values") {
    const auto dir = scratch("plan");
    const auto r = run({"plan-thm2", "--out", dir.string(), "--set", "beta=3.5", "epsilon=0.5", "law=gaussian"});
    REQUIRE(r.code == kExitOk);
    const auto j = nlohmann::json::parse(slurp(dir / "plan-thm2.json"));
    CHECK(j.contains("header"));
    CHECK(j.contains("rows"));
    CHECK(j.contains("footer"));
    CHECK(j["footer"]["feasible"].get<bool>());
    CHECK(j["footer"]["chain_ok"].get<bool>());
    const auto& plan = j["header"]["plan"];
    CHECK(plan["m"].get<int>() == 383);
    CHECK(plan["gamma"].get<double>() == doctest::Approx(0.158138893148468785).epsilon(1e-9));
    CHECK(plan["kappa"].get<double>() == doctest::Approx(0.0104664264885428969).epsilon(1e-8));
    CHECK(j["header"]["config"]["beta"] == "3.5");
    CHECK(csv_rows(dir / "plan-thm2.csv") == 1);
}

TEST_CASE("config files and flag overrides") {
    const auto dir = scratch("config");
    {
        std::ofstream cfg(dir / "run.cfg");
        cfg << "# planner run\nbeta = 2.0\nepsilon = 0.5\n";
    }
    auto r = run({"plan-thm2", "--config", (dir / "run.cfg").string(), "--out", dir.string()});
    REQUIRE(r.code == kExitOk);
    CHECK_FALSE(nlohmann::json::parse(slurp(dir / "plan-thm2.json"))["footer"]["feasible"].get<bool>());
    r = run({"plan-thm2", "--config", (dir / "run.cfg").string(), "--out", dir.string(), "--beta", "4"});
    REQUIRE(r.code == kExitOk);
    CHECK(nlohmann::json::parse(slurp(dir / "plan-thm2.json"))["footer"]["feasible"].get<bool>());
}

TEST_CASE("identical seeds give byte-identical reports") {
    const auto a = scratch("det_a"), b = scratch("det_b");
    const std::vector<std::string> common = {"--seed", "77", "n_grid=100,200", "N_grid=5,10,50", "replicas=6"};
    auto args_a = std::vector<std::string>{"tightness", "--out", a.string()};
    auto args_b = std::vector<std::string>{"tightness", "--out", b.string(), "--threads", "3"};
    args_a.insert(args_a.end(), common.begin(), common.end());
    args_b.insert(args_b.end(), common.begin(), common.end());
    REQUIRE(run(args_a).code == kExitOk);
    REQUIRE(run(args_b).code == kExitOk);
    auto ja = nlohmann::json::parse(slurp(a / "tightness.json"));
    auto jb = nlohmann::json::parse(slurp(b / "tightness.json"));
    // the resolved config differs only in the thread count
    ja["header"]["config"].erase("threads");
    jb["header"]["config"].erase("threads");
    CHECK(ja.dump() == jb.dump());
    CHECK(slurp(a / "tightness.csv") == slurp(b / "tightness.csv"));
    CHECK(csv_rows(a / "tightness.csv") == 6);
    CHECK(csv_rows(a / "tightness_replicas.csv") == 36);
    CHECK(fs::exists(a / "tightness.svg"));

    const auto c = scratch("det_c");
    REQUIRE(run({"tightness", "--out", c.string(), "--seed", "77", "n_grid=100,200", "N_grid=5,10,50", "replicas=6"}).code == kExitOk);
    CHECK(slurp(a / "tightness.json") == slurp(c / "tightness.json"));
}

TEST_CASE("validation, budget and usage errors map to exit codes") {
    const auto dir = scratch("errors");
    auto r = run({"plan-thm2", "--out", dir.string(), "alpha=-1"});
    CHECK(r.code == kExitInvalid);
    CHECK(r.err.find("alpha") != std::string::npos);
    r = run({"partition", "--out", dir.string(), "n=abc"});
    CHECK(r.code == kExitInvalid);
    CHECK(r.err.find("n:") != std::string::npos);
    r = run({"partition", "--out", dir.string(), "bogus_key=1"});
    CHECK(r.code == kExitInvalid);
    CHECK(r.err.find("bogus_key") != std::string::npos);
    r = run({"no-such-command"});
    CHECK(r.code == kExitInvalid);
    r = run({"tightness", "--out", dir.string(), "h=5"});
    CHECK(r.code == kExitInvalid);
    r = run({"partition", "--out", dir.string(), "n=2000", "--budget", "1000"});
    CHECK(r.code == kExitBudget);
    r = run({"decay-check", "--out", dir.string(), "n_grid=4000", "count_cells=100"});
    CHECK(r.code == kExitBudget);
    {
        std::ofstream blocker(dir / "file");
        blocker << "x";
    }
    r = run({"plan-thm2", "--out", (dir / "file" / "sub").string()});
    CHECK(r.code == kExitFailure);
}

TEST_CASE("every command writes CSV and JSON with the documented row counts") {
    const auto dir = scratch("all");
    struct Case {
        std::vector<std::string> args;
        std::string stem;
        std::size_t rows;
    };
    const std::vector<Case> cases = {
        {{"kernel-check", "rows=10", "samples=1000"}, "kernel-check", 10},
        {{"partition", "n=30", "beta=1", "h=-0.3"}, "partition", 31},
        {{"sample-paths", "n=30", "samples=50"}, "sample-paths", 50},
        {{"tightness-constrained", "n_grid=60", "N_grid=5,10", "M_grid=5", "replicas=3"}, "tightness-constrained", 2},
        {{"tightness-constrained", "n_grid=60", "N_grid=5,10", "M_grid=5", "replicas=3"}, "tightness-constrained_replicas", 6},
        {{"log-returns", "n_grid=100,200", "replicas=4"}, "log-returns", 8},
        {{"decay-check", "n_grid=100,200,400"}, "decay-check", 3},
        {{"free-energy", "n_grid=128,256", "beta=0.5", "replicas=3"}, "free-energy", 2},
        {{"series", "n_grid=100,200", "replicas=3", "depth=50"}, "series", 6},
    };
    for (const auto& c : cases) {
        auto args = c.args;
        args.insert(args.begin() + 1, {"--out", dir.string()});
        const auto r = run(args);
        INFO(c.stem, ": ", r.err);
        REQUIRE(r.code == kExitOk);
        CHECK(csv_rows(dir / (c.stem + ".csv")) == c.rows);
        const auto j = nlohmann::json::parse(slurp(dir / (c.stem + ".json")));
        CHECK(j["rows"].size() == c.rows);
        CHECK(j["header"]["code_version"] == kCodeVersion);
    }
    CHECK(command_names().size() == 10);
}
