#include <sstream>

#include "cli.hpp"
#include "doctest.h"
#include "kgh/io.hpp"
#include "kgh/paraphraser.hpp"
#include "support.hpp"

using namespace kgh;
using namespace kgh::test;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run invoke(const std::vector<std::string>& args) {
    std::ostringstream out;
    std::ostringstream err;
    const int code = cli::run(args, out, err);
    return {code, out.str(), err.str()};
}

std::string fx(const char* name) { return fixture(name).string(); }

std::string mock(const char* table) { return "mock:" + fx(table); }

// Writes a risk prompt set into dir and returns its path.
std::string risk_prompts(const TempDir& dir, const std::string& extra_seed = "7") {
    const auto path = (dir / "prompts.json").string();
    const auto r = invoke({"prompts", "--relation", fx("risk.rel"), "--paraphraser", fx("risk_transcript.json"), "--out",
                        path, "--scorer", mock("risk_mock.json"), "--seed", extra_seed});
    REQUIRE(r.code == cli::kOk);
    return path;
}

} // namespace

TEST_CASE("usage errors exit with 2 and help exits with 0") {
    CHECK(invoke({}).code == cli::kInvalid);
    CHECK(invoke({"frobnicate"}).code == cli::kInvalid);
    CHECK(invoke({"stats", "--kg"}).code == cli::kInvalid);
    CHECK(invoke({"stats", "--kg", "x", "--bogus"}).code == cli::kInvalid);
    const auto missing = invoke({"stats", "--kg", "/nonexistent/kg.json"});
    CHECK(missing.code == cli::kInvalid);
    CHECK(missing.err.find("/nonexistent/kg.json") != std::string::npos);

    const auto help = invoke({"--help"});
    CHECK(help.code == cli::kOk);
    for (const char* cmd : {"prompts", "harvest", "eval", "stats"}) CHECK(help.out.find(cmd) != std::string::npos);
    const auto sub = invoke({"harvest", "--help"});
    CHECK(sub.code == cli::kOk);
    for (const char* flag : {"--top", "--max-candidates", "--lmax", "--entity-cap", "--resume", "--scorer"}) {
        CHECK(sub.out.find(flag) != std::string::npos);
    }
}

TEST_CASE("prompts collects and weights") {
    TempDir dir;
    const auto path = risk_prompts(dir);
    const auto set = read_prompts(path);
    CHECK(set.relation == "potential_risk");
    CHECK(set.size() >= 10);
    CHECK(set.rng_seed == 7);
    CHECK(set.prompts.front().prompt.text() == "The potential risk of {A} is {B}");
    double sum = 0.0;
    for (const auto& p : set.prompts) sum += p.weight;
    CHECK(std::abs(sum - 1.0) <= 1e-9);

    const auto one = (dir / "one.json").string();
    const auto r = invoke({"prompts", "--relation", fx("risk.rel"), "--paraphraser", fx("risk_transcript.json"), "--out",
                        one, "--scorer", mock("risk_mock.json"), "--min-count", "1"});
    CHECK(r.code == cli::kOk);
    const auto single = read_prompts(one);
    REQUIRE(single.size() == 1);
    CHECK(single.prompts[0].weight == 1.0);

    const auto rec = (dir / "rec.json").string();
    CHECK(invoke({"prompts", "--relation", fx("risk.rel"), "--paraphraser", fx("risk_transcript.json"), "--out",
               (dir / "again.json").string(), "--scorer", mock("risk_mock.json"), "--seed", "7", "--record", rec})
              .code == cli::kOk);
    CHECK(read_file(dir / "again.json") == read_file(path));
    CHECK_FALSE(read_transcript(rec).empty());

    CHECK(invoke({"prompts", "--relation", fx("risk.rel"), "--paraphraser", fx("risk_transcript.json"), "--out", one,
               "--scorer", "bogus:thing"})
              .code == cli::kInvalid);
    CHECK(invoke({"prompts", "--relation", fx("risk.rel"), "--paraphraser", fx("risk_transcript.json"), "--out", one,
               "--scorer", mock("risk_mock.json"), "--alpha", "2"})
              .code == cli::kInvalid);
}

TEST_CASE("harvest writes a knowledge graph and resumes from checkpoints") {
    TempDir dir;
    const auto prompts = risk_prompts(dir);
    const auto kg_path = (dir / "kg.json").string();
    const auto cp = (dir / "cp.jsonl").string();
    std::vector<std::string> base{"harvest", "--relation", fx("risk.rel"), "--prompts", prompts, "--scorer",
                                  mock("risk_mock.json"), "--max-candidates", "100", "--lmax", "2",
                                  "--entity-cap", "1000"};
    auto args = base;
    for (const char* a : {"--top", "top-half", "--out"}) args.push_back(a);
    args.push_back(kg_path);
    args.push_back("--checkpoint");
    args.push_back(cp);
    const auto r = invoke(args);
    REQUIRE(r.code == cli::kOk);
    const auto kg = read_kg(kg_path);
    CHECK(kg.tuples.size() == 50);
    CHECK(kg.provenance.selection == "top-half");

    // byte-identical reruns, with and without threads
    auto again = args;
    again[again.size() - 3] = (dir / "kg2.json").string();
    again.push_back("--workers");
    again.push_back("3");
    REQUIRE(invoke(again).code == cli::kOk);
    CHECK(read_file(dir / "kg2.json") == read_file(kg_path));

    // resuming reselects the same candidates under a new policy
    auto fresh = base;
    for (const char* a : {"--top", "base-k:10", "--out"}) fresh.push_back(a);
    fresh.push_back((dir / "fresh.json").string());
    REQUIRE(invoke(fresh).code == cli::kOk);
    auto resumed = base;
    for (const char* a : {"--top", "base-k:10", "--resume"}) resumed.push_back(a);
    resumed.push_back(cp);
    resumed.push_back("--out");
    resumed.push_back((dir / "resumed.json").string());
    REQUIRE(invoke(resumed).code == cli::kOk);
    CHECK(read_file(dir / "resumed.json") == read_file(dir / "fresh.json"));
    const auto bk = read_kg(dir / "fresh.json");
    CHECK(bk.provenance.selection == "base-k:10:0.1 scale=likelihood");
    CHECK(bk.tuples.size() >= 10);

    // a checkpoint from a different search is refused
    auto wrong = resumed;
    wrong[8] = "50";
    CHECK(invoke(wrong).code == cli::kInvalid);

    const auto stats = invoke({"stats", "--kg", kg_path});
    CHECK(stats.code == cli::kOk);
    const auto doc = nlohmann::json::parse(stats.out);
    CHECK(doc["tuples"] == 50);

    auto bad = base;
    for (const char* a : {"--top", "top-k:0", "--out"}) bad.push_back(a);
    bad.push_back(kg_path);
    CHECK(invoke(bad).code == cli::kInvalid);
}

TEST_CASE("harvest progress and configuration files") {
    TempDir dir;
    const auto prompts = risk_prompts(dir);
    const auto kg_path = (dir / "kg.json").string();
    write_file(dir / "cfg.toml", "[harvest]\nmax-candidates = 20\nlmax = 1\ntop = \"top-k:5\"\n");
    const auto r = invoke({"--config", (dir / "cfg.toml").string(), "harvest", "--relation", fx("risk.rel"), "--prompts",
                        prompts, "--scorer", mock("risk_mock.json"), "--out", kg_path, "--progress"});
    REQUIRE(r.code == cli::kOk);
    CHECK(read_kg(kg_path).tuples.size() == 5);
    CHECK(r.out.find("from 20 candidates") != std::string::npos);
    CHECK(r.err.find("\"stage\"") != std::string::npos);
}

TEST_CASE("eval reports curves for each method") {
    TempDir dir;
    const auto prompts = (dir / "sound.json").string();
    REQUIRE(invoke({"prompts", "--relation", fx("sound.rel"), "--paraphraser", fx("sound_transcript.json"), "--out",
                 prompts, "--scorer", mock("sound_mock.json"), "--min-count", "2", "--min-distance", "1"})
                .code == cli::kOk);
    REQUIRE(read_prompts(prompts).size() == 2);

    const auto csv = (dir / "multi.csv").string();
    const auto multi = invoke({"eval", "--positives", fx("sound_positives.tsv"), "--prompts", prompts, "--scorer",
                            mock("sound_mock.json"), "--method", "multi", "--seed", "3", "--out", csv});
    REQUIRE(multi.code == cli::kOk);
    const auto summary = nlohmann::json::parse(read_file(csv + ".summary.json"));
    CHECK(summary["auc"] == 1.0);
    CHECK(summary["n_pos"] == 6);
    CHECK(summary["n_neg"] == 6);
    CHECK(summary["method"] == "multi");
    CHECK(nlohmann::json::parse(multi.out) == summary);
    CHECK(read_file(csv).rfind("cutoff,score,label,precision,recall\n", 0) == 0);

    const auto rerun = invoke({"eval", "--positives", fx("sound_positives.tsv"), "--prompts", prompts, "--scorer",
                            mock("sound_mock.json"), "--method", "multi", "--seed", "3", "--out",
                            (dir / "again.csv").string()});
    REQUIRE(rerun.code == cli::kOk);
    CHECK(read_file(dir / "again.csv") == read_file(csv));

    // a one-prompt set scores identically under human and top1
    const auto one = (dir / "one.json").string();
    REQUIRE(invoke({"prompts", "--relation", fx("sound.rel"), "--paraphraser", fx("sound_transcript.json"), "--out", one,
                 "--scorer", mock("sound_mock.json"), "--min-count", "1"})
                .code == cli::kOk);
    std::string curves[2];
    int i = 0;
    for (const char* m : {"human", "top1"}) {
        const auto out = (dir / (std::string(m) + ".csv")).string();
        REQUIRE(invoke({"eval", "--positives", fx("sound_positives.tsv"), "--prompts", one, "--scorer",
                     mock("sound_mock.json"), "--method", m, "--out", out})
                    .code == cli::kOk);
        curves[i++] = read_file(out);
    }
    CHECK(curves[0] == curves[1]);

    CHECK(invoke({"eval", "--positives", fx("sound_positives.tsv"), "--out", csv}).code == cli::kInvalid);
    CHECK(invoke({"eval", "--positives", fx("sound_positives.tsv"), "--prompts", one, "--scorer",
               mock("sound_mock.json"), "--method", "best", "--out", csv})
              .code == cli::kInvalid);
}

TEST_CASE("unreachable services exit with 3") {
    TempDir dir;
    const auto prompts = risk_prompts(dir);
    const auto r = invoke({"harvest", "--relation", fx("risk.rel"), "--prompts", prompts, "--scorer",
                        "http://127.0.0.1:1", "--out", (dir / "kg.json").string()});
    CHECK(r.code == cli::kService);
    CHECK_FALSE(r.err.empty());
}
