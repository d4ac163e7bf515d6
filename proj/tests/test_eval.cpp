#include <cmath>
#include <random>
#include <set>

#include "doctest.h"
#include "kgh/error.hpp"
#include "kgh/eval.hpp"
#include "kgh/io.hpp"
#include "kgh/prompt_forge.hpp"
#include "support.hpp"

using namespace kgh;
using namespace kgh::test;

namespace {

EvalSample sample(std::vector<std::string> entities, bool positive, double score, std::string relation = "r") {
    EvalSample s;
    s.tuple.entities = std::move(entities);
    s.relation = std::move(relation);
    s.positive = positive;
    s.score = score;
    return s;
}

std::vector<EvalSample> positives_grid(int heads, int tails) {
    std::vector<EvalSample> out;
    for (int h = 0; h < heads; ++h) {
        EvalSample s;
        s.relation = "r";
        s.tuple.entities = {"h" + std::to_string(h), "t" + std::to_string((h * 7) % tails)};
        out.push_back(s);
    }
    return out;
}

int differing_components(const EvalSample& a, const EvalSample& b) {
    int d = a.relation != b.relation ? 1 : 0;
    for (std::size_t i = 0; i < a.tuple.entities.size(); ++i) d += a.tuple.entities[i] != b.tuple.entities[i] ? 1 : 0;
    return d;
}

} // namespace

TEST_CASE("positives files parse") {
    const auto pos = read_positives(fixture("sound_positives.tsv"));
    REQUIRE(pos.size() == 6);
    CHECK(pos[0].relation == "makes_sound");
    CHECK(pos[0].tuple.entities == std::vector<std::string>{"dog", "bark"});
    CHECK(pos[0].positive);
    CHECK(tuple_id(pos[0]) == "makes_sound:dog|bark");

    TempDir dir;
    write_file(dir / "ok.tsv", "# comment\n\nr\ta\tb\tc\r\n");
    const auto three = read_positives(dir / "ok.tsv");
    REQUIRE(three.size() == 1);
    CHECK(three[0].tuple.arity() == 3);
    write_file(dir / "short.tsv", "r\ta\n");
    CHECK_THROWS_AS(read_positives(dir / "short.tsv"), ParseError);
    write_file(dir / "blank.tsv", "r\ta\t \n");
    CHECK_THROWS_AS(read_positives(dir / "blank.tsv"), ParseError);
    CHECK_THROWS_AS(read_positives(dir / "missing.tsv"), Error);
}

TEST_CASE("negatives corrupt exactly one component") {
    std::vector<EvalSample> one{sample({"dog", "bark"}, true, 0.0)};
    one.push_back(sample({"cat", "meow"}, true, 0.0));
    const auto neg = generate_negatives(one, 3);
    REQUIRE(neg.size() == 2);
    for (std::size_t i = 0; i < neg.size(); ++i) {
        CHECK_FALSE(neg[i].positive);
        CHECK(differing_components(neg[i], one[i]) == 1);
    }

    std::vector<EvalSample> mixed = positives_grid(40, 13);
    for (int i = 0; i < 20; ++i) {
        EvalSample s;
        s.relation = i % 2 ? "q" : "p";
        s.tuple.entities = {"x" + std::to_string(i % 5), "y" + std::to_string(i % 7), "z" + std::to_string(i % 3)};
        mixed.push_back(s);
    }
    std::set<std::pair<std::string, std::vector<std::string>>> known;
    for (const auto& p : mixed) known.insert({p.relation, p.tuple.entities});
    bool swapped_relation = false;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const auto a = generate_negatives(mixed, seed);
        const auto b = generate_negatives(mixed, seed);
        REQUIRE(a.size() == mixed.size());
        for (std::size_t i = 0; i < a.size(); ++i) {
            CHECK(a[i].relation == b[i].relation);
            CHECK(a[i].tuple.entities == b[i].tuple.entities);
            CHECK(differing_components(a[i], mixed[i]) == 1);
            CHECK(known.count({a[i].relation, a[i].tuple.entities}) == 0);
            CHECK(a[i].tuple.arity() == mixed[i].tuple.arity());
            swapped_relation = swapped_relation || a[i].relation != mixed[i].relation;
        }
    }
    // only the ternary relations come in a pair that can be swapped
    CHECK(swapped_relation);

    NegativeOptions no_rel;
    no_rel.corrupt_relations = false;
    for (const auto& n : generate_negatives(mixed, 4, no_rel)) CHECK((n.relation == "r" || n.tuple.arity() == 3));
    const auto fixed = generate_negatives(mixed, 4, no_rel);
    for (std::size_t i = 0; i < fixed.size(); ++i) CHECK(fixed[i].relation == mixed[i].relation);
}

TEST_CASE("negatives fail when every corruption recreates a positive") {
    std::vector<EvalSample> grid;
    for (const char* h : {"a", "b"}) {
        for (const char* t : {"x", "y"}) grid.push_back(sample({h, t}, true, 0.0));
    }
    CHECK_THROWS_AS(generate_negatives(grid, 1), ValidationError);
    std::vector<EvalSample> single{sample({"a", "x"}, true, 0.0)};
    CHECK_THROWS_AS(generate_negatives(single, 1), ValidationError);
    NegativeOptions zero;
    zero.max_retries = 0;
    CHECK_THROWS_AS(generate_negatives(positives_grid(4, 3), 1, zero), ValidationError);
}

TEST_CASE("precision-recall points for a four-sample ranking") {
    const std::vector<EvalSample> s{sample({"a", "1"}, true, 4.0), sample({"b", "2"}, false, 3.0),
                                    sample({"c", "3"}, true, 2.0), sample({"d", "4"}, false, 1.0)};
    const auto c = pr_curve(s);
    REQUIRE(c.points.size() == 4);
    const double recall[] = {0.5, 0.5, 1.0, 1.0};
    const double precision[] = {1.0, 0.5, 2.0 / 3.0, 0.5};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(c.points[i].cutoff == i + 1);
        CHECK(std::abs(c.points[i].recall - recall[i]) <= 1e-12);
        CHECK(std::abs(c.points[i].precision - precision[i]) <= 1e-12);
    }
    CHECK(c.n_pos == 2);
    CHECK(c.n_neg == 2);
    // (1 + 1)/2 + (2/3 + 1/2)/2 over two positives
    CHECK(std::abs(c.auc - (1.0 + (2.0 / 3.0 + 0.5) / 2.0) / 2.0) <= 1e-12);
    CHECK(curve_csv(c) ==
          "cutoff,score,label,precision,recall\n1,4,1,1,0.5\n2,3,0,0.5,0.5\n3,2,1,0.666666666667,1\n4,1,0,0.5,1\n");
    const auto summary = nlohmann::json::parse(curve_summary(c, "multi", 9));
    CHECK(summary["method"] == "multi");
    CHECK(summary["n_pos"] == 2);
    CHECK(summary["seed"] == 9);
}

TEST_CASE("separable and inverted rankings") {
    std::vector<EvalSample> s;
    for (int i = 0; i < 10; ++i) s.push_back(sample({"p" + std::to_string(i), "x"}, true, 10.0 + i));
    for (int i = 0; i < 10; ++i) s.push_back(sample({"n" + std::to_string(i), "x"}, false, -10.0 - i));
    const auto sep = pr_curve(s);
    CHECK(sep.auc == 1.0);
    for (const auto& p : sep.points) {
        if (p.cutoff <= 10) CHECK(p.precision == 1.0);
    }
    for (auto& x : s) x.score = -*x.score;
    const auto inv = pr_curve(s);
    CHECK(inv.points.back().recall == 1.0);
    CHECK(inv.points.back().precision == 0.5);
    CHECK(inv.auc >= 0.0);
    CHECK(inv.auc < 0.5);

    std::vector<EvalSample> unscored{sample({"a", "b"}, true, 0.0)};
    unscored[0].score.reset();
    CHECK_THROWS_AS(pr_curve(unscored), ValidationError);
}

TEST_CASE("curves are invariant under increasing transforms") {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> d(-10.0, 0.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<EvalSample> s;
        const int n = 2 + static_cast<int>(rng() % 40);
        for (int i = 0; i < n; ++i) {
            // coarse scores so ties occur
            const double v = std::round(d(rng) * 4.0) / 4.0;
            s.push_back(sample({"e" + std::to_string(i), "t"}, rng() % 2 == 0, v));
        }
        s[0].positive = true;
        const auto base = pr_curve(s);
        CHECK(base.auc >= 0.0);
        CHECK(base.auc <= 1.0);
        for (int f = 0; f < 3; ++f) {
            auto t = s;
            for (auto& x : t) {
                const double v = *x.score;
                x.score = f == 0 ? std::exp(v) : f == 1 ? 2.5 * v + 7.0 : v * v * v;
            }
            const auto moved = pr_curve(t);
            CHECK(moved.auc == base.auc);
            REQUIRE(moved.points.size() == base.points.size());
            for (std::size_t i = 0; i < base.points.size(); ++i) {
                CHECK(moved.points[i].positive == base.points[i].positive);
                CHECK(moved.points[i].precision == base.points[i].precision);
                CHECK(moved.points[i].recall == base.points[i].recall);
            }
        }
        for (std::size_t i = 1; i < base.points.size(); ++i) CHECK(base.points[i].recall >= base.points[i - 1].recall);
    }
}

TEST_CASE("scoring methods pick their prompts") {
    const auto scorer = MockScorer::from_file(fixture("sound_mock.json"));
    const auto one = make_prompts("makes_sound", 2, {"{A} makes the sound {B}"}, {1.0});
    auto samples = read_positives(fixture("sound_positives.tsv"));
    const auto negs = generate_negatives(samples, 5);
    samples.insert(samples.end(), negs.begin(), negs.end());

    std::vector<std::vector<EvalSample>> by_method;
    for (auto m : {ScoringMethod::kHuman, ScoringMethod::kTop1, ScoringMethod::kMulti}) {
        auto copy = samples;
        score_samples(copy, m, {{"makes_sound", one}}, scorer, 2.0 / 3.0);
        by_method.push_back(copy);
    }
    for (std::size_t i = 0; i < samples.size(); ++i) {
        CHECK(by_method[0][i].score == by_method[1][i].score);
        CHECK(by_method[1][i].score == by_method[2][i].score);
    }

    const auto two = make_prompts("makes_sound", 2, {"{A} makes the sound {B}", "The noise every {A} makes is {B}"},
                                  {0.1, 0.9});
    CHECK(prompts_for(ScoringMethod::kHuman, two).prompts.front().prompt.text() == "{A} makes the sound {B}");
    const auto top = prompts_for(ScoringMethod::kTop1, two);
    REQUIRE(top.size() == 1);
    CHECK(top.prompts[0].prompt.text() == "The noise every {A} makes is {B}");
    CHECK(top.prompts[0].weight == 1.0);
    auto a = samples;
    auto b = samples;
    score_samples(a, ScoringMethod::kTop1, {{"makes_sound", two}}, scorer, 2.0 / 3.0, 3);
    score_samples(b, ScoringMethod::kMulti, {{"makes_sound", top}}, scorer, 2.0 / 3.0);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].score == b[i].score);

    CHECK_THROWS_AS(score_samples(a, ScoringMethod::kMulti, {{"other", two}}, scorer, 2.0 / 3.0), ValidationError);
    CHECK(parse_scoring_method("top1") == ScoringMethod::kTop1);
    CHECK(std::string(to_string(ScoringMethod::kMulti)) == "multi");
    CHECK_THROWS_AS(parse_scoring_method("best"), ValidationError);
}

TEST_CASE("an informative second prompt lifts the multi-prompt curve") {
    const auto scorer = MockScorer::from_file(fixture("sound_mock.json"));
    const auto relation = load_relation(fixture("sound.rel"));
    const auto set = weight_prompts({relation.initial_prompt, PromptTemplate("The noise every {A} makes is {B}")},
                                    relation, scorer, 2.0 / 3.0);
    CHECK(set.prompts[1].weight > set.prompts[0].weight);
    auto samples = read_positives(fixture("sound_positives.tsv"));
    const auto negs = generate_negatives(samples, 11);
    samples.insert(samples.end(), negs.begin(), negs.end());
    double auc[3];
    int i = 0;
    for (auto m : {ScoringMethod::kHuman, ScoringMethod::kTop1, ScoringMethod::kMulti}) {
        auto copy = samples;
        score_samples(copy, m, {{"makes_sound", set}}, scorer, 2.0 / 3.0);
        auc[i++] = pr_curve(copy).auc;
    }
    CHECK(auc[2] == 1.0);
    CHECK(auc[1] == 1.0);
    CHECK(auc[2] >= auc[0]);
    CHECK(auc[0] < 1.0);
}

TEST_CASE("external score files") {
    TempDir dir;
    auto samples = read_positives(fixture("sound_positives.tsv"));
    std::string text = "# id\tscore\n";
    for (std::size_t i = 0; i < samples.size(); ++i) text += tuple_id(samples[i]) + "\t" + std::to_string(-double(i)) + "\n";
    write_file(dir / "ext.tsv", text);
    const auto scores = read_external_scores(dir / "ext.tsv");
    CHECK(scores.size() == samples.size());
    apply_external_scores(samples, scores);
    CHECK(*samples[3].score == -3.0);

    auto extra = samples;
    extra.push_back(sample({"fox", "bark"}, false, 0.0, "makes_sound"));
    CHECK_THROWS_AS(apply_external_scores(extra, scores), ValidationError);
    write_file(dir / "bad.tsv", "makes_sound:dog|bark\tloud\n");
    CHECK_THROWS_AS(read_external_scores(dir / "bad.tsv"), ParseError);
    write_file(dir / "dup.tsv", "a\t1\na\t2\n");
    CHECK_THROWS_AS(read_external_scores(dir / "dup.tsv"), ParseError);
}
