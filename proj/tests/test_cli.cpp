#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cli.hpp"
#include "fpdrl/train/trainer.hpp"
#include "fpdrl/verify/registry.hpp"

using namespace fpdrl;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result invoke(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

fs::path fresh_root(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("fpdrl_test_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    setenv(cli::kRunRootEnv, dir.c_str(), 1);
    return dir;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Small enough that a run takes well under a second.
std::vector<std::pair<std::string, std::string>> tiny_pairs() {
    return {{"--steps", "200"},         {"--warmup", "100"},       {"--batch", "16"},
            {"--d_model", "8"},         {"--heads", "2"},          {"--layers", "1"},
            {"--critic_hidden", "16"},  {"--quantiles", "8"},      {"--eval_interval", "100"},
            {"--eval_episodes", "1"},   {"--gaussian_hidden", "16"}};
}

std::vector<std::string> flatten(const std::vector<std::pair<std::string, std::string>>& pairs) {
    std::vector<std::string> a;
    for (const auto& [k, v] : pairs) {
        a.push_back(k);
        a.push_back(v);
    }
    return a;
}

std::vector<std::string> tiny(std::vector<std::string> extra = {}) {
    std::vector<std::string> a = flatten(tiny_pairs());
    a.push_back("--quiet");
    a.insert(a.end(), extra.begin(), extra.end());
    return a;
}

std::vector<std::string> cat(std::vector<std::string> head, const std::vector<std::string>& tail) {
    head.insert(head.end(), tail.begin(), tail.end());
    return head;
}

void write_metrics(const fs::path& dir, const std::vector<std::uint64_t>& steps, const std::vector<double>& evals) {
    fs::create_directories(dir);
    std::ofstream out(dir / "metrics.jsonl");
    for (std::size_t i = 0; i < steps.size(); ++i) {
        train::MetricsRow r;
        r.step = steps[i];
        r.eval_mean = evals[i];
        out << r.to_json_line() << "\n";
    }
}

std::vector<std::vector<std::string>> tsv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, '\t')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace

TEST_CASE("train smoke run writes a complete run directory") {
    const fs::path root = fresh_root("smoke");
    const Result r = invoke({"train", "--env", "bimodal_bandit", "--steps", "500", "--seed", "1", "--quiet"});
    REQUIRE(r.code == cli::kSuccess);
    std::vector<fs::path> dirs(fs::directory_iterator(root), fs::directory_iterator{});
    REQUIRE(dirs.size() == 1);
    const fs::path dir = dirs[0];
    CHECK(dir.filename().string().rfind("bimodal_bandit-", 0) == 0);
    for (const char* f : {"manifest.json", "config.txt", "metrics.jsonl", "summary.json", "checkpoints/final.ckpt"})
        CHECK_MESSAGE(fs::exists(dir / f), f);
    const json m = json::parse(slurp(dir / "manifest.json"));
    CHECK(m["status"] == "completed");
    CHECK(m["seeds"] == json::array({1}));
    CHECK(m["version"] == cli::version());
    CHECK(m["finished_at"].is_string());
    CHECK(m["wall_clock_seconds"].get<double>() >= 0.0);
    CHECK(m["config_hash"].get<std::string>().substr(0, 12) == dir.filename().string().substr(15));
}

TEST_CASE("train rejects bad configs and occupied run directories") {
    const fs::path root = fresh_root("reject");
    SUBCASE("gamma outside (0,1)") {
        const Result r = invoke({"train", "--gamma", "1.5"});
        CHECK(r.code == cli::kUsage);
        CHECK(r.err.find("gamma must lie in (0,1)") != std::string::npos);
    }
    SUBCASE("unknown key in a config file") {
        std::ofstream(root / "bad.cfg") << "steps = 10\nlearning_rate = 3\n";
        const Result r = invoke({"train", "--config", (root / "bad.cfg").string()});
        CHECK(r.code == cli::kUsage);
        CHECK(r.err.find("learning_rate") != std::string::npos);
    }
    SUBCASE("existing directory without --resume") {
        const std::string dir = (root / "run").string();
        REQUIRE(invoke(cat({"train", "--env", "bimodal_bandit", "--run-dir", dir}, tiny())).code == cli::kSuccess);
        const Result again = invoke(cat({"train", "--env", "bimodal_bandit", "--run-dir", dir}, tiny()));
        CHECK(again.code == cli::kUsage);
        CHECK(again.err.find("--resume") != std::string::npos);
    }
}

TEST_CASE("run id does not depend on flag order or spelling") {
    const fs::path root = fresh_root("hash");
    REQUIRE(invoke(cat({"train", "--env", "bimodal_bandit", "--seed", "3", "--lr_actor", "0.001"}, tiny())).code ==
            cli::kSuccess);
    auto pairs = tiny_pairs();
    std::reverse(pairs.begin(), pairs.end());
    const Result second =
        invoke(cat({"train", "--quiet", "--lr-actor", "1e-3", "--seed", "3", "--env", "bimodal_bandit"}, flatten(pairs)));
    CHECK(second.code == cli::kUsage);  // same run id, so the directory is already taken
    std::size_t n = 0;
    for ([[maybe_unused]] const auto& e : fs::directory_iterator(root)) ++n;
    CHECK(n == 1);
}

TEST_CASE("config file values can be overridden by flags") {
    const fs::path root = fresh_root("override");
    std::ofstream(root / "run.cfg") << "# desk preset\nenv = bimodal_bandit\nseed = 4\nsteps = 999\n";
    const std::string dir = (root / "run").string();
    const Result r =
        invoke(cat({"train", "--config", (root / "run.cfg").string(), "--run-dir", dir}, tiny({"--seed", "6"})));
    REQUIRE(r.code == cli::kSuccess);
    const auto cfg = train::TrainConfig::parse(slurp(fs::path(dir) / "config.txt"));
    CHECK(cfg.env == "bimodal_bandit");
    CHECK(cfg.seed == 6);
    CHECK(cfg.steps == 200);
}

TEST_CASE("eval") {
    const fs::path root = fresh_root("eval");
    const std::string dir = (root / "run").string();
    REQUIRE(invoke(cat({"train", "--env", "bimodal_bandit", "--run-dir", dir}, tiny())).code == cli::kSuccess);
    const std::string ckpt = (fs::path(dir) / "checkpoints" / "final.ckpt").string();

    SUBCASE("one episode has zero spread") {
        const fs::path record = root / "eval.json";
        const Result r = invoke({"eval", "--checkpoint", ckpt, "--episodes", "1", "--output", record.string()});
        REQUIRE(r.code == cli::kSuccess);
        const json j = json::parse(slurp(record));
        CHECK(j["std"].get<double>() == 0.0);
        CHECK(j["returns"].size() == 1);
        CHECK(j["env"] == "bimodal_bandit");
    }
    SUBCASE("repeatable for a fixed seed") {
        const Result a = invoke({"eval", "--checkpoint", ckpt, "--episodes", "3", "--seed", "9"});
        const Result b = invoke({"eval", "--checkpoint", ckpt, "--episodes", "3", "--seed", "9", "--threads", "3"});
        CHECK(a.code == cli::kSuccess);
        CHECK(a.out == b.out);
    }
    SUBCASE("corrupt checkpoint") {
        const fs::path bad = root / "bad.ckpt";
        std::ofstream(bad) << "not a checkpoint";
        const Result r = invoke({"eval", "--checkpoint", bad.string()});
        CHECK(r.code == cli::kRuntime);
        CHECK(r.err.find("cannot load checkpoint") != std::string::npos);
    }
    SUBCASE("environment with other dimensions") {
        const Result r = invoke({"eval", "--checkpoint", ckpt, "--env", "pendulum_swingup"});
        CHECK(r.code == cli::kRuntime);
        CHECK(r.err.find("bimodal_bandit") != std::string::npos);
        CHECK(r.err.find("pendulum_swingup") != std::string::npos);
    }
}

TEST_CASE("ablate tabulates one row per axis value") {
    fresh_root("ablate");
    const auto rows_for = [](const std::string& axis, std::size_t expected_rows) {
        const Result r = invoke(cat({"ablate", "--axis", axis, "--seeds", "0,1", "--env", "bimodal_bandit"},
                                    tiny()));
        REQUIRE(r.code == cli::kSuccess);
        const auto table = tsv(r.out);
        REQUIRE(table.size() == expected_rows + 1);
        CHECK(table[0] == std::vector<std::string>{axis, "mean", "std", "seed0", "seed1"});
        const auto values = cli::default_axis_values(axis);
        for (std::size_t i = 0; i < values.size(); ++i) {
            CHECK(table[i + 1][0] == values[i]);
            const double s0 = std::stod(table[i + 1][3]);
            const double s1 = std::stod(table[i + 1][4]);
            CHECK(std::stod(table[i + 1][1]) == doctest::Approx(0.5 * (s0 + s1)).epsilon(1e-12));
            CHECK(std::stod(table[i + 1][2]) == doctest::Approx(0.5 * std::fabs(s0 - s1)).epsilon(1e-12));
        }
    };
    SUBCASE("N") { rows_for("N", 3); }
    SUBCASE("K") { rows_for("K", 4); }
    SUBCASE("policy") { rows_for("policy", 2); }
    SUBCASE("unknown axis") {
        const Result r = invoke({"ablate", "--axis", "depth"});
        CHECK(r.code == cli::kUsage);
        CHECK(r.err.find("depth") != std::string::npos);
    }
}

TEST_CASE("verify") {
    SUBCASE("lists every registered suite exactly once") {
        const Result r = invoke({"verify", "--list"});
        REQUIRE(r.code == cli::kSuccess);
        const auto lines = tsv(r.out);
        REQUIRE(lines.size() == verify::suites().size());
        for (std::size_t i = 0; i < lines.size(); ++i) CHECK(lines[i][0] == verify::suites()[i].name);
    }
    SUBCASE("full run passes and reports each suite once") {
        const Result r = invoke({"verify"});
        CHECK(r.code == cli::kSuccess);
        const json j = json::parse(r.out);
        CHECK(j["passed"] == true);
        REQUIRE(j["suites"].size() == verify::suites().size());
        for (std::size_t i = 0; i < j["suites"].size(); ++i) {
            CHECK(j["suites"][i]["name"] == verify::suites()[i].name);
            CHECK(j["suites"][i]["checks"].size() > 0);
        }
    }
    SUBCASE("an injected Huber sign flip is caught") {
        const Result r =
            invoke({"verify", "--suite", "quantile-loss", "--suite", "contraction", "--inject-fault", "huber-sign"});
        CHECK(r.code == cli::kVerification);
        const json j = json::parse(r.out);
        CHECK(j["fault"] == "huber-sign");
        CHECK(j["suites"][0]["passed"] == false);
        CHECK(j["suites"][1]["passed"] == true);
        CHECK(r.err.find("FAIL quantile-loss") != std::string::npos);
        // The fault is cleared afterwards.
        CHECK(invoke({"verify", "--suite", "quantile-loss"}).code == cli::kSuccess);
    }
    SUBCASE("unknown suite") { CHECK(invoke({"verify", "--suite", "nope"}).code == cli::kUsage); }
}

TEST_CASE("plotdata") {
    const fs::path root = fresh_root("plot");
    const std::vector<std::uint64_t> steps{100, 200, 300, 400, 500};
    const std::vector<std::vector<double>> evals{
        {1.0, 2.0, 3.0, 4.0, 5.0}, {2.0, 2.5, 1.0, 4.0, -5.0}, {0.5, 3.5, 2.0, 4.0, 0.25}};
    std::vector<std::string> dirs;
    for (std::size_t k = 0; k < evals.size(); ++k) {
        dirs.push_back((root / ("r" + std::to_string(k))).string());
        write_metrics(dirs.back(), steps, evals[k]);
    }

    SUBCASE("mean and standard error across three runs") {
        const Result r = invoke(cat({"plotdata"}, dirs));
        REQUIRE(r.code == cli::kSuccess);
        const auto table = tsv(r.out);
        REQUIRE(table.size() == 6);
        CHECK(table[0] == std::vector<std::string>{"step", "mean", "sem", "r0", "r1", "r2"});
        for (std::size_t i = 0; i < steps.size(); ++i) {
            const double a = evals[0][i], b = evals[1][i], c = evals[2][i];
            const double mean = (a + b + c) / 3.0;
            const double var = ((a - mean) * (a - mean) + (b - mean) * (b - mean) + (c - mean) * (c - mean)) / 2.0;
            CHECK(std::stoull(table[i + 1][0]) == steps[i]);
            CHECK(std::stod(table[i + 1][1]) == doctest::Approx(mean).epsilon(1e-14));
            CHECK(std::stod(table[i + 1][2]) == doctest::Approx(std::sqrt(var / 3.0)).epsilon(1e-14));
            CHECK(std::stod(table[i + 1][4]) == b);
        }
        // Row 4 has identical values in every run.
        CHECK(table[4][2] == "0");
    }
    SUBCASE("a single run has zero standard error") {
        const Result r = invoke({"plotdata", dirs[0], "--metric", "eval_mean"});
        REQUIRE(r.code == cli::kSuccess);
        const auto table = tsv(r.out);
        REQUIRE(table.size() == 6);
        for (std::size_t i = 1; i < table.size(); ++i) CHECK(table[i][2] == "0");
    }
    SUBCASE("output file") {
        const fs::path file = root / "curve.tsv";
        REQUIRE(invoke(cat({"plotdata", "--output", file.string()}, dirs)).code == cli::kSuccess);
        CHECK(tsv(slurp(file)).size() == 6);
    }
    SUBCASE("misaligned schedules") {
        write_metrics(root / "short", {100, 200, 300, 450, 500}, {0, 0, 0, 0, 0});
        const Result r = invoke({"plotdata", dirs[0], (root / "short").string()});
        CHECK(r.code == cli::kRuntime);
        CHECK(r.err.find("400") != std::string::npos);
        CHECK(r.err.find("450") != std::string::npos);
    }
    SUBCASE("unknown metric") { CHECK(invoke({"plotdata", dirs[0], "--metric", "reward"}).code == cli::kUsage); }
}

TEST_CASE("usage errors") {
    CHECK(invoke({}).code == cli::kUsage);
    CHECK(invoke({"frobnicate"}).code == cli::kUsage);
    CHECK(invoke({"train", "--steps", "many"}).code == cli::kUsage);
    const Result v = invoke({"--version"});
    CHECK(v.code == cli::kSuccess);
    CHECK(v.out.find(cli::version()) != std::string::npos);
}
