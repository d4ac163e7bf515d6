#pragma once

// Domain model shared by every stage: relation definitions, prompt
// templates, entity tuples and the scored knowledge graph.

#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace kgh {

using TokenId = std::int32_t;
using TokenSeq = std::vector<TokenId>;

inline constexpr int kMaxArity = 26;

/// A natural-language pattern with one `{A}`-style marker per entity slot.
///
/// Slots are identified by their canonical index (`{A}` = 0, `{B}` = 1, ...).
/// `slot_order()` lists the slot indices in the order they appear in the text.
class PromptTemplate {
public:
    PromptTemplate() = default;
    // Throws ValidationError when markers are repeated, non-contiguous, or
    // when nothing but markers remains.
    explicit PromptTemplate(std::string text);

    const std::string& text() const noexcept { return text_; }
    int arity() const noexcept { return static_cast<int>(slot_order_.size()); }
    const std::vector<int>& slot_order() const noexcept { return slot_order_; }

    // Replaces every marker with the matching entry of `fills` (indexed by slot).
    std::string fill(const std::vector<std::string>& fills) const;

    static std::string marker(int slot);
    static char slot_letter(int slot) { return static_cast<char>('A' + slot); }

    friend bool operator==(const PromptTemplate& a, const PromptTemplate& b) { return a.text_ == b.text_; }

private:
    struct Span {
        std::size_t offset;
        int slot;
    };

    std::string text_;
    std::vector<int> slot_order_;
    std::vector<Span> markers_; // surface order
};

struct EntityTuple {
    std::vector<std::string> entities;
    // Per-entity token ids under the active scorer; empty until tokenized.
    std::vector<TokenSeq> tokens;

    EntityTuple() = default;
    explicit EntityTuple(std::vector<std::string> e) : entities(std::move(e)) {}
    EntityTuple(std::vector<std::string> e, std::vector<TokenSeq> t) : entities(std::move(e)), tokens(std::move(t)) {}

    int arity() const noexcept { return static_cast<int>(entities.size()); }

    // Identity and ordering are defined on entity strings only.
    friend bool operator==(const EntityTuple& a, const EntityTuple& b) { return a.entities == b.entities; }
    friend std::strong_ordering operator<=>(const EntityTuple& a, const EntityTuple& b) {
        return a.entities <=> b.entities;
    }
};

struct RelationSchema {
    std::string name;
    int arity = 2;
    PromptTemplate initial_prompt;
    std::vector<EntityTuple> seed_tuples;

    friend bool operator==(const RelationSchema&, const RelationSchema&) = default;
};

struct WeightedPrompt {
    PromptTemplate prompt;
    double weight = 1.0;
    // Mean seed compatibility the weight was derived from.
    double mean_score = 0.0;

    friend bool operator==(const WeightedPrompt&, const WeightedPrompt&) = default;
};

// prompts[0] is always the relation's initial prompt.
struct WeightedPromptSet {
    std::string relation;
    int arity = 2;
    std::vector<WeightedPrompt> prompts;
    double tau = 1.0;
    double alpha = 2.0 / 3.0;
    std::uint64_t rng_seed = 0;

    std::size_t size() const noexcept { return prompts.size(); }
    // Index of the highest-weight prompt; lowest index wins ties.
    std::size_t top_prompt() const;

    friend bool operator==(const WeightedPromptSet&, const WeightedPromptSet&) = default;
};

struct PromptScore {
    int prompt = 0;
    double compatibility = 0.0;

    friend bool operator==(const PromptScore&, const PromptScore&) = default;
};

struct ScoredTuple {
    EntityTuple tuple;
    double consistency = 0.0;
    std::vector<PromptScore> per_prompt;
    double proposal_mtl = 0.0;

    friend bool operator==(const ScoredTuple& a, const ScoredTuple& b) {
        return a.tuple == b.tuple && a.consistency == b.consistency && a.per_prompt == b.per_prompt &&
               a.proposal_mtl == b.proposal_mtl;
    }
};

struct Provenance {
    std::string scorer_id;
    std::string prompt_hash;
    std::string config_hash;
    std::string selection;

    friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct KnowledgeGraph {
    RelationSchema relation;
    std::vector<ScoredTuple> tuples;
    Provenance provenance;

    friend bool operator==(const KnowledgeGraph&, const KnowledgeGraph&) = default;
};

// KG order: consistency descending, then entities lexicographically ascending.
bool ranks_before(const ScoredTuple& a, const ScoredTuple& b);
void sort_kg(std::vector<ScoredTuple>& tuples);

// Each throws ValidationError naming the violated invariant.
void validate(const RelationSchema& relation);
void validate(const WeightedPromptSet& prompts);
void validate(const KnowledgeGraph& kg);
void validate_entity(std::string_view entity);

// Strips leading/trailing ASCII whitespace.
std::string trim(std::string_view s);

} // namespace kgh
