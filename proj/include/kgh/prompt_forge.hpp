#pragma once

// Prompt collection: paraphrase the initial prompt, turn paraphrases back
// into templates, keep the structurally distinct ones, and weight each by
// its compatibility with the seed tuples.

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgh/paraphraser.hpp"
#include "kgh/relation.hpp"
#include "kgh/scorer.hpp"

namespace kgh {

// Substitutes the tuple into the template. Throws AmbiguityError when the
// resulting sentence could not be stripped back to the same template.
std::string instantiate(const PromptTemplate& prompt, const EntityTuple& tuple);

// Replaces each entity (whole-word, ASCII case-insensitive) with its slot
// marker. Rejects sentences where any entity is absent, repeated, or
// overlaps another entity.
std::optional<PromptTemplate> strip_entities(std::string_view sentence, const EntityTuple& tuple);

// Levenshtein distance over whitespace-separated tokens.
std::size_t token_edit_distance(std::string_view a, std::string_view b);

// Greedy, in input order: keeps a prompt iff it is at least `min_distance`
// token edits away from every prompt kept before it.
std::vector<PromptTemplate> dedup(const std::vector<PromptTemplate>& prompts, std::size_t min_distance);

struct CollectOptions {
    std::size_t min_count = 10;
    int max_rounds = 5;
    int n_per_call = 5;
    std::size_t min_distance = 3;
    std::uint64_t seed = 0;
};

enum class CollectStatus {
    kComplete,        // min_count reached
    kNoGrowth,        // a round added nothing new
    kRoundsExhausted, // max_rounds used up below min_count
    kServiceFailure,  // the paraphraser failed; result is partial
};

const char* to_string(CollectStatus status);

struct CollectResult {
    std::vector<PromptTemplate> prompts; // initial prompt first
    CollectStatus status = CollectStatus::kComplete;
    std::string warning;
    std::size_t paraphrase_calls = 0;
};

// Throws ValidationError when no paraphrase could be turned into a template
// at all, and propagates ProtocolError from the paraphraser.
CollectResult collect_prompts(const RelationSchema& relation, Paraphraser& paraphraser, const CollectOptions& options);

// Weight of prompt p: softmax over prompts of (mean seed compatibility / tau).
WeightedPromptSet weight_prompts(const std::vector<PromptTemplate>& prompts, const RelationSchema& relation,
                                 const Scorer& scorer, double alpha, double tau = 1.0,
                                 JointOrder order = JointOrder::kSurface);

// softmax(scores / tau); exposed for reuse and testing.
std::vector<double> softmax_weights(const std::vector<double>& scores, double tau);

} // namespace kgh
