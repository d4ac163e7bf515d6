#pragma once

// One batched log-probability interface over any fill-in-the-blank LM, plus
// the multi-token entity likelihoods and the prompt/tuple compatibility
// built on top of it.

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgh/relation.hpp"

namespace kgh {

struct SlotState {
    enum class Kind : std::uint8_t { kFilled, kPartial, kMasked };

    Kind kind = Kind::kMasked;
    TokenSeq tokens; // all tokens when filled, the known prefix when partial
    int length = 1;  // total token count of the slot

    static SlotState filled(TokenSeq t) {
        const int n = static_cast<int>(t.size());
        return {Kind::kFilled, std::move(t), n};
    }
    static SlotState partial(TokenSeq prefix, int length) { return {Kind::kPartial, std::move(prefix), length}; }
    static SlotState masked(int length) { return {Kind::kMasked, {}, length}; }

    friend bool operator==(const SlotState&, const SlotState&) = default;
};

struct Focus {
    int slot = 0;
    int index = 0;

    friend bool operator==(const Focus&, const Focus&) = default;
};

// One scoring request: the distribution at `focus` given the template with
// each slot filled, partially filled or masked. `prompt` is non-owning and
// must outlive the call it is passed to.
struct MaskedQuery {
    const PromptTemplate* prompt = nullptr;
    std::vector<SlotState> slots; // indexed by canonical slot
    Focus focus;
};

// Throws ValidationError when the query breaks the MaskedQuery invariants.
void validate_query(const MaskedQuery& query, int lmax);

struct ScorerInfo {
    std::string scorer_id;
    int vocab_size = 0;
    std::string tokenizer_id;
    int lmax = 1;
};

// Row-major [queries x vocab] matrix of log-probabilities.
class LogProbMatrix {
public:
    LogProbMatrix() = default;
    LogProbMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols) {}

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::span<double> row(std::size_t i) noexcept { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const noexcept { return {data_.data() + i * cols_, cols_}; }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Implementations must allow concurrent calls from multiple threads.
class Scorer {
public:
    virtual ~Scorer() = default;

    virtual const ScorerInfo& info() const = 0;
    virtual TokenSeq tokenize(std::string_view text) const = 0;
    virtual std::string detokenize(std::span<const TokenId> tokens) const = 0;
    virtual LogProbMatrix token_logprobs(std::span<const MaskedQuery> batch) const = 0;

    virtual std::vector<TokenSeq> tokenize_batch(std::span<const std::string> texts) const;
    virtual std::vector<std::string> detokenize_batch(std::span<const TokenSeq> seqs) const;
};

// Returns `tuple` with token ids attached (reusing cached ids when present);
// every entity must tokenize to 1..lmax tokens.
EntityTuple tokenized(const Scorer& scorer, EntityTuple tuple, int lmax);

// Sum over target positions i of log P(target[i] | prompt, context, target[<i]
// filled, target[>=i] masked). `context[target_slot]` is ignored.
double entity_logprob(const Scorer& scorer, const PromptTemplate& prompt, const std::vector<SlotState>& context,
                      int target_slot, const TokenSeq& target);

enum class JointOrder { kSurface, kSymmetricMean };

struct CompatibilityBreakdown {
    double joint_ll = 0.0;
    // individual_lls[s] = log P(entity s | prompt, slots before s filled,
    // slots after s masked at their true lengths)
    std::vector<double> individual_lls;
    double score = 0.0;
};

// alpha * joint_ll + (1 - alpha) * min(individual_lls). The tuple is
// tokenized through the scorer when it carries no cached tokens.
CompatibilityBreakdown pair_compatibility(const Scorer& scorer, const PromptTemplate& prompt, const EntityTuple& tuple,
                                          double alpha, JointOrder order = JointOrder::kSurface);

} // namespace kgh
