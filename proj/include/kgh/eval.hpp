#pragma once

// Automatic evaluation: corrupt known-true tuples into negatives, rank the
// mix by a scoring method and trace precision/recall along the ranking.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgh/relation.hpp"
#include "kgh/scorer.hpp"

namespace kgh {

struct EvalSample {
    EntityTuple tuple;
    std::string relation;
    bool positive = true;
    std::optional<double> score;
};

// "relation:e1|e2|..." as used by external score files.
std::string tuple_id(const EvalSample& sample);

// One `relation<TAB>entity1<TAB>entity2[...]` line per positive; blank lines
// and lines starting with '#' are skipped.
std::vector<EvalSample> read_positives(const std::filesystem::path& path);

struct NegativeOptions {
    // Relations are only swapped between relations of equal arity, and only
    // when at least two exist.
    bool corrupt_relations = true;
    int max_retries = 100;
};

// One negative per positive: exactly one component (an entity slot or the
// relation, chosen uniformly) is replaced by a different value drawn from the
// dataset pool for that component. Corruptions that reproduce a positive are
// redrawn up to max_retries times.
std::vector<EvalSample> generate_negatives(const std::vector<EvalSample>& positives, std::uint64_t seed,
                                           const NegativeOptions& options = {});

enum class ScoringMethod { kHuman, kTop1, kMulti };

const char* to_string(ScoringMethod method);
ScoringMethod parse_scoring_method(std::string_view text);

// The prompt set a method scores with: the initial prompt alone, the
// highest-weight prompt alone (weight 1 each), or the full weighted set.
WeightedPromptSet prompts_for(ScoringMethod method, const WeightedPromptSet& prompts);

// Scores every sample with the prompt set of its relation. Scores are
// stored at on-disk precision.
void score_samples(std::vector<EvalSample>& samples, ScoringMethod method,
                   const std::map<std::string, WeightedPromptSet>& prompts, const Scorer& scorer, double alpha,
                   std::size_t workers = 1, JointOrder order = JointOrder::kSurface);

// `tuple_id<TAB>score` lines.
std::map<std::string, double> read_external_scores(const std::filesystem::path& path);
void apply_external_scores(std::vector<EvalSample>& samples, const std::map<std::string, double>& scores);

struct PRPoint {
    std::size_t cutoff = 0;
    double score = 0.0;
    bool positive = false;
    double precision = 0.0;
    double recall = 0.0;
};

struct PRCurve {
    std::vector<PRPoint> points; // one per cutoff, best score first
    double auc = 0.0;
    std::size_t n_pos = 0;
    std::size_t n_neg = 0;
};

// Sorted by score descending, ties by entities then relation ascending.
// AUC is the trapezoid area under precision over recall, anchored at
// recall 0 with the first point's precision.
PRCurve pr_curve(const std::vector<EvalSample>& samples);

std::string curve_csv(const PRCurve& curve);
std::string curve_summary(const PRCurve& curve, std::string_view method, std::uint64_t seed);

} // namespace kgh
