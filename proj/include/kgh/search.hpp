#pragma once

// Search-and-rescore harvesting.
//
// Proposal: an exact top-N search over entity tuples ranked by MTL, the
// minimum over all token positions of the prompt-weighted token
// log-probability
//
//     agg(v) = sum_p w_p * log P(v | prompt p, earlier slots filled, current
//                                slot prefix filled, remaining positions masked)
//
// Slots are filled in canonical order ({A}, {B}, ...), token by token, for
// every length vector in {1..lmax}^arity. Since the running minimum can only
// fall as a path grows, a branch whose running minimum is below the N-th best
// MTL seen so far cannot reach the result and is cut. Ties are broken by
// lexicographic order of the token-id sequences, so the result is the unique
// top-N under (MTL desc, tokens asc).
//
// Rescoring: every candidate gets its full consistency (weighted sum of
// compatibilities); the entity cap and the threshold policy then pick the
// output knowledge graph.

#include <cstddef>
#include <exception>
#include <filesystem>
#include <functional>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "kgh/error.hpp"
#include "kgh/paraphraser.hpp"
#include "kgh/prompt_forge.hpp"
#include "kgh/relation.hpp"
#include "kgh/scorer.hpp"

namespace kgh {

struct ThresholdPolicy {
    enum class Kind { kTopHalf, kBaseK, kTopK, kNone };

    Kind kind = Kind::kTopHalf;
    std::size_t k = 10;
    double factor = 0.1;

    // "top-half" | "base-k:K[:FACTOR]" | "top-k:K" | "none"
    static ThresholdPolicy parse(std::string_view text);
    std::string to_string() const;

    friend bool operator==(const ThresholdPolicy&, const ThresholdPolicy&) = default;
};

struct SearchConfig {
    std::size_t max_candidates = 50000;
    int lmax = 3;
    std::size_t entity_cap = 10;
    double alpha = 2.0 / 3.0;
    ThresholdPolicy threshold;
    JointOrder joint_order = JointOrder::kSurface;
    bool pruning = true;
    // Force-expands every pruned branch and checks it holds no tuple at or
    // above the threshold in force when it was cut. Test instrumentation.
    bool audit = false;
    std::size_t workers = 1;
};

void validate(const SearchConfig& config);
// Hash of every field that influences the output knowledge graph.
std::string config_hash(const SearchConfig& config);
// Hash of the fields that influence the proposal stage only.
std::string proposal_hash(const SearchConfig& config, std::string_view scorer_id);

struct Candidate {
    EntityTuple tuple; // carries token ids
    double mtl = 0.0;
};

// Bounded min-heap keyed by (mtl, tokens): the top is the worst kept entry.
class ProposalHeap {
public:
    struct Entry {
        double mtl;
        std::vector<TokenSeq> tokens;
    };

    explicit ProposalHeap(std::size_t capacity);

    // True when the entry was kept.
    bool offer(double mtl, const std::vector<TokenSeq>& tokens);
    bool full() const noexcept { return entries_.size() >= capacity_; }
    std::size_t size() const noexcept { return entries_.size(); }
    // MTL of the worst kept entry once full, -inf before.
    double threshold() const noexcept;
    // Entries best first.
    std::vector<Entry> sorted() const;

    static bool better(double mtl_a, const std::vector<TokenSeq>& a, double mtl_b, const std::vector<TokenSeq>& b);

private:
    std::size_t capacity_;
    std::vector<Entry> entries_;
};

struct SearchStats {
    std::size_t scorer_calls = 0;    // queries issued by the search itself
    std::size_t prune_count = 0;     // branches cut
    std::size_t tuples_proposed = 0; // complete tuples offered to the heap
    std::size_t audit_calls = 0;
    std::size_t audit_tuples = 0;
    std::size_t audit_violations = 0;
    std::size_t dropped_empty = 0; // candidates whose detokenized entity was blank
};

struct ProgressEvent {
    std::string stage;
    std::size_t tuples_proposed = 0;
    std::size_t scorer_calls = 0;
    std::size_t prune_count = 0;
};

using ProgressCallback = std::function<void(const ProgressEvent&)>;

struct ProposalResult {
    std::vector<Candidate> candidates; // MTL descending, token ids ascending
    SearchStats stats;
    bool complete = true;
};

// Raised when the scorer fails mid-search; carries whatever the heap held.
class SearchAborted : public Error {
public:
    SearchAborted(ProposalResult partial, std::exception_ptr cause, const std::string& what)
        : Error(what), partial_(std::move(partial)), cause_(std::move(cause)) {}

    const ProposalResult& partial() const noexcept { return partial_; }
    std::exception_ptr cause() const noexcept { return cause_; }

private:
    ProposalResult partial_;
    std::exception_ptr cause_;
};

ProposalResult propose_candidates(const WeightedPromptSet& prompts, const Scorer& scorer, const SearchConfig& config,
                                  const ProgressCallback& progress = {});

ScoredTuple consistency(const EntityTuple& tuple, const WeightedPromptSet& prompts, const Scorer& scorer, double alpha,
                        JointOrder order = JointOrder::kSurface);

// Greedy pass over a KG-sorted list: drops a tuple when keeping it would put
// any entity string (counted per occurrence) above `cap` among kept tuples.
std::vector<ScoredTuple> apply_entity_cap(const std::vector<ScoredTuple>& sorted, std::size_t cap);
// Applies the policy to a KG-sorted list. base-k compares exp(consistency)
// against factor * exp(consistency of the k-th tuple); lists shorter than k
// are kept whole.
std::vector<ScoredTuple> apply_threshold(const std::vector<ScoredTuple>& sorted, const ThresholdPolicy& policy);

KnowledgeGraph rescore_and_select(const RelationSchema& relation, const std::vector<Candidate>& candidates,
                                  const WeightedPromptSet& prompts, const Scorer& scorer, const SearchConfig& config,
                                  const ProgressCallback& progress = {});

struct HarvestOptions {
    CollectOptions collect;
    double tau = 1.0;
    SearchConfig search;
};

struct HarvestResult {
    CollectResult collected;
    WeightedPromptSet prompts;
    ProposalResult proposal;
    KnowledgeGraph kg;
};

// collect_prompts -> weight_prompts -> propose_candidates -> rescore_and_select.
// Stage failures are rethrown as HarvestError naming the stage.
HarvestResult harvest(const RelationSchema& relation, const Scorer& scorer, Paraphraser& paraphraser,
                      const HarvestOptions& options, const ProgressCallback& progress = {});

class HarvestError : public Error {
public:
    HarvestError(std::string stage, std::exception_ptr cause, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)), cause_(std::move(cause)) {}

    const std::string& stage() const noexcept { return stage_; }
    std::exception_ptr cause() const noexcept { return cause_; }

private:
    std::string stage_;
    std::exception_ptr cause_;
};

struct Checkpoint {
    std::string proposal_hash;
    std::string prompt_hash;
    bool complete = true;
    std::vector<Candidate> candidates;
};

// Header line {format, version, proposal_hash, prompt_hash, complete}, then
// one {entities, tokens, mtl} record per candidate (MTL at full precision).
void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path);
Checkpoint read_checkpoint(const std::filesystem::path& path);

} // namespace kgh
