#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "cli/config.hpp"
#include "cli/report.hpp"
#include "cli/stages.hpp"
#include "doctest.h"
#include "temp_dir.hpp"

using namespace cdra;
using namespace cdra::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_config(const fs::path& out) {
    auto doc = json::parse(R"({
        "schema_version": 1,
        "seed": 3,
        "data": {"source": "synthetic",
                 "synthetic": {"users_per_domain": 300, "items_per_domain": 120, "latent_dim": 4,
                               "positive_quantile": 0.1}},
        "prepare": {"clamp_negatives": true, "negatives": 99},
        "bpr": {"dim": 8, "epochs": 10},
        "adapter": {"optim": {"max_epochs": 3, "patience": 0}},
        "emcdr": {"optim": {"max_epochs": 3, "patience": 0}},
        "etas": [0.5, 1.0]
    })");
    doc["out"] = out.string();
    return doc;
}

ExperimentConfig small(const fs::path& out) { return parse_config(small_config(out)); }

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void run_all(const ExperimentConfig& cfg) {
    cmd_synth(cfg);
    cmd_prepare(cfg);
    cmd_pretrain(cfg);
    cmd_train(cfg, Method::Adapter);
    cmd_train(cfg, Method::Emcdr);
    cmd_evaluate(cfg, Method::Adapter);
    cmd_evaluate(cfg, Method::Emcdr);
    cmd_sweep(cfg);
    cmd_analyze(cfg);
}

int run_binary(const std::string& args) {
    const std::string cmd = std::string(CDRA_BINARY) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("defaults parse and round-trip through the canonical form") {
    const auto cfg = parse_config(json{{"schema_version", 1}});
    CHECK(cfg.data.synthetic);
    CHECK(cfg.etas == std::vector<double>{0.05, 0.2, 0.5, 1.0});
    CHECK(cfg.ks == std::vector<std::size_t>{10, 20});
    const auto again = parse_config(to_json(cfg));
    CHECK(to_json(again) == to_json(cfg));
}

TEST_CASE("every violation is reported, unknown keys included") {
    const auto doc = json::parse(R"({
        "schema_version": 2,
        "bogus": 1,
        "prepare": {"eta": 1.5, "coldstart_frac": 0, "typo": true},
        "bpr": {"dim": "large"},
        "adapter": {"lambdas": [1, -1, 0], "optim": {"batch_size": 1}},
        "etas": []
    })");
    try {
        parse_config(doc);
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        const auto& v = e.violations();
        auto has = [&](const std::string& prefix) {
            for (const auto& line : v)
                if (line.rfind(prefix, 0) == 0) return true;
            return false;
        };
        CHECK(v.size() == 9);
        CHECK(has("schema_version: unsupported version 2"));
        CHECK(has("bogus: unknown key"));
        CHECK(has("prepare.eta:"));
        CHECK(has("prepare.coldstart_frac:"));
        CHECK(has("prepare.typo: unknown key"));
        CHECK(has("bpr.dim: expected"));
        CHECK(has("adapter.lambdas:"));
        CHECK(has("adapter.optim.batch_size:"));
        CHECK(has("etas:"));
    }
}

TEST_CASE("schema version is required and file data needs both paths") {
    CHECK_THROWS_AS(parse_config(json::object()), ConfigError);
    try {
        parse_config(json{{"schema_version", 1}, {"data", {{"source", "files"}, {"x", {{"path", "a.csv"}}}}}});
        FAIL("expected a config error");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("data.y: required") != std::string::npos);
    }
    const auto cfg = parse_config(json{{"schema_version", 1},
                                       {"data",
                                        {{"source", "files"},
                                         {"x", {{"path", "a.csv"}, {"domain", "Book"}}},
                                         {"y", {{"path", "b.csv"}, {"domain", "Movie"}}}}}});
    CHECK(cfg.name_x() == "Book");
    CHECK(cfg.name_y() == "Movie");
}

TEST_CASE("downstream commands name the missing prerequisite") {
    testing::TempDir dir;
    const auto cfg = small(dir.path());
    auto message = [&](auto&& fn) {
        try {
            fn();
        } catch (const PrerequisiteError& e) {
            return std::string(e.what());
        }
        return std::string("no error");
    };
    CHECK(message([&] { cmd_prepare(cfg); }).find("cdra synth") != std::string::npos);
    cmd_synth(cfg);
    CHECK(message([&] { cmd_pretrain(cfg); }).find("cdra prepare") != std::string::npos);
    cmd_prepare(cfg);
    CHECK(message([&] { cmd_train(cfg, Method::Adapter); }).find("cdra pretrain") != std::string::npos);
    cmd_pretrain(cfg);
    CHECK(message([&] { cmd_evaluate(cfg, Method::Adapter); }).find("cdra train --method adapter") !=
          std::string::npos);
    cmd_train(cfg, Method::Adapter);
    CHECK(message([&] { cmd_analyze(cfg); }).find("cdra train --method emcdr") != std::string::npos);
}

TEST_CASE("two full runs of the same config produce identical trees") {
    testing::TempDir a, b;
    run_all(small(a.path()));
    run_all(small(b.path()));
    std::size_t files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
        if (!entry.is_regular_file()) continue;
        const auto rel = fs::relative(entry.path(), a.path());
        REQUIRE(fs::exists(b.path() / rel));
        CHECK_MESSAGE(slurp(entry.path()) == slurp(b.path() / rel), rel.string());
        ++files;
    }
    CHECK(files == 31);
    const auto manifest = json::parse(slurp(a.path() / "pretrain" / "manifest.json"));
    CHECK(manifest.at("inputs").contains("prepare/split.json"));
    CHECK(manifest.at("outputs").contains("pretrain/x.emb"));
    CHECK_FALSE(manifest.dump().find("time") != std::string::npos);

    const auto csv = slurp(a.path() / "sweep" / "sweep.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * 2 * 3);
    const auto report = json::parse(slurp(a.path() / "evaluate" / "adapter.json"));
    CHECK(report.at("version") == version_string());
    CHECK(report.at("config").at("seed") == 3);
}

TEST_CASE("a different seed changes the artifacts") {
    testing::TempDir a, b;
    auto cfg = small(a.path());
    cmd_synth(cfg);
    cfg.out = b.path();
    cfg.seed = 4;
    cmd_synth(cfg);
    CHECK(slurp(a.path() / "synth" / "D0.tsv") != slurp(b.path() / "synth" / "D0.tsv"));
}

TEST_CASE("report formatting") {
    RankingMetrics m;
    m.hr = {{10, 0.2522}, {20, 0.2798}};
    m.ndcg = {{10, 0.2267}, {20, 0.2489}};
    m.mrr = 0.1203;
    m.n_users = 4;
    const ReportRow row{"adapter", 1.0, {m, m, m}};
    const std::vector<std::size_t> ks{10, 20};
    const auto csv = metrics_csv(std::span(&row, 1), ks, "Book", "Movie");
    CHECK(csv.rfind("method,eta,source,target,n_users,hr@10,hr@20,ndcg@10,ndcg@20,mrr\n", 0) == 0);
    CHECK(csv.find("adapter,1.0000,Book,Movie,4,0.252200,0.279800,0.226700,0.248900,0.120300\n") !=
          std::string::npos);
    CHECK(csv.find("adapter,1.0000,Movie,Book,4,") != std::string::npos);
}

TEST_CASE("exit codes: 0 success, 1 usage or config error, 2 runtime error") {
    testing::TempDir dir;
    CHECK(run_binary("--help") == 0);
    CHECK(run_binary("") == 1);
    CHECK(run_binary("frobnicate") == 1);
    const auto good = dir.write("good.json", small_config(dir.path() / "out").dump());
    const auto bad = dir.write("bad.json", R"({"schema_version": 1, "seeds": 3})");
    CHECK(run_binary("train --config " + good.string()) == 1);
    CHECK(run_binary("synth --config " + bad.string()) == 1);
    CHECK(run_binary("evaluate --method adapter --config " + good.string()) == 2);
    CHECK(run_binary("synth --config " + good.string()) == 0);
    CHECK(fs::exists(dir.path() / "out" / "synth" / "manifest.json"));
    CHECK(run_binary("synth --seed 9 --out " + (dir.path() / "o2").string() + " --config " + good.string()) == 0);
    CHECK(json::parse(slurp(dir.path() / "o2" / "synth" / "manifest.json")).at("seed") == 9);
    CHECK(run_binary("sweep --eta 1.5 --config " + good.string()) == 1);
}

}  // TEST_SUITE
