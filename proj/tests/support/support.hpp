#pragma once

// Shared test helpers and independent reference implementations.

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "kgh/mock_scorer.hpp"
#include "kgh/relation.hpp"
#include "kgh/scorer.hpp"

namespace kgh::test {

std::filesystem::path fixture(const std::string& name);

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

WeightedPromptSet make_prompts(const std::string& relation, int arity, const std::vector<std::string>& texts,
                               const std::vector<double>& weights);

enum class TableKind {
    kHashed, // context-dependent pseudo-random distributions
    kSkewed, // hashed with a steep logit scale
    kTied,   // one context-free distribution over few distinct weights
};

MockTable random_table(std::mt19937_64& rng, int vocab, int lmax, TableKind kind);

// Number of complete tuples over single- to lmax-token entities.
std::uint64_t tuple_space(int vocab, int arity, int lmax);

struct RankedTuple {
    double mtl;
    std::vector<TokenSeq> tokens;
};

// Every tuple over 1..lmax tokens per slot with its MTL, computed position by
// position from single-query scorer calls and sorted by (mtl desc, tokens asc).
std::vector<RankedTuple> oracle_ranking(const WeightedPromptSet& prompts, const Scorer& scorer, int lmax);

struct OracleCompat {
    double joint;
    std::vector<double> individual;
    double score;
};

// Compatibility straight from the definition, one query per token.
OracleCompat oracle_compatibility(const Scorer& scorer, const PromptTemplate& prompt,
                                  const std::vector<TokenSeq>& tuple, double alpha);
double oracle_consistency(const Scorer& scorer, const WeightedPromptSet& prompts,
                          const std::vector<TokenSeq>& tuple, double alpha);

// Delegates to another scorer; token_logprobs throws E after `budget` calls.
template <typename E>
class FailingScorer final : public Scorer {
public:
    FailingScorer(const Scorer& inner, std::size_t budget) : inner_(inner), budget_(budget) {}
    const ScorerInfo& info() const override { return inner_.info(); }
    TokenSeq tokenize(std::string_view t) const override { return inner_.tokenize(t); }
    std::string detokenize(std::span<const TokenId> t) const override { return inner_.detokenize(t); }
    LogProbMatrix token_logprobs(std::span<const MaskedQuery> batch) const override {
        if (calls_.fetch_add(1) >= budget_) throw E("scorer went away");
        return inner_.token_logprobs(batch);
    }

private:
    const Scorer& inner_;
    std::size_t budget_;
    mutable std::atomic<std::size_t> calls_{0};
};

// Counts token_logprobs queries.
class CountingScorer final : public Scorer {
public:
    explicit CountingScorer(const Scorer& inner) : inner_(inner) {}
    const ScorerInfo& info() const override { return inner_.info(); }
    TokenSeq tokenize(std::string_view t) const override { return inner_.tokenize(t); }
    std::string detokenize(std::span<const TokenId> t) const override { return inner_.detokenize(t); }
    LogProbMatrix token_logprobs(std::span<const MaskedQuery> batch) const override {
        queries += batch.size();
        return inner_.token_logprobs(batch);
    }
    mutable std::atomic<std::size_t> queries{0};

private:
    const Scorer& inner_;
};

} // namespace kgh::test
