#pragma once

// Deterministic table-driven scorer. Distributions are looked up by
// (template text, context digest, focus) with `*` wildcards; unmatched
// queries fall back to the table default, a seeded hash-derived
// distribution, or uniform, in that order.
//
// Context digest: slots in canonical order joined by " ; ", each written as
// `<letter>=<tokens>` with "[MASK]" for every unknown position, e.g.
// "A=study [MASK] ; B=[MASK]". Focus: `<letter>.<index>`, e.g. "A.1".
//
// The tokenizer splits on whitespace; every word must be a vocabulary entry.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "kgh/scorer.hpp"

namespace kgh {

struct MockTable {
    struct Entry {
        std::string template_id = "*";
        std::string context_digest = "*";
        std::string focus = "*";
        // Explicit probabilities for listed tokens.
        std::map<std::string, double> probs;
        // Relative weights sharing the leftover mass among unlisted tokens;
        // uniform when empty.
        std::map<std::string, double> rest;
    };

    struct Hashed {
        std::uint64_t seed = 0;
        // Logits are sharpness * U(0,1); larger values skew the distribution.
        double sharpness = 1.0;
    };

    std::string scorer_id = "mock";
    std::vector<std::string> vocab;
    int lmax = 8;
    std::map<std::string, double> default_weights;
    std::optional<Hashed> hashed;
    std::vector<Entry> entries;

    static MockTable from_json(const nlohmann::ordered_json& doc, std::string_view origin);
    nlohmann::ordered_json to_json() const;
};

class MockScorer final : public Scorer {
public:
    explicit MockScorer(MockTable table);
    static MockScorer from_file(const std::filesystem::path& path);

    const ScorerInfo& info() const override { return info_; }
    TokenSeq tokenize(std::string_view text) const override;
    std::string detokenize(std::span<const TokenId> tokens) const override;
    LogProbMatrix token_logprobs(std::span<const MaskedQuery> batch) const override;

    const std::vector<std::string>& vocab() const noexcept { return table_.vocab; }
    TokenId token_id(std::string_view token) const;

    std::string context_digest(const std::vector<SlotState>& slots) const;
    static std::string focus_key(const Focus& focus);

    // Log-distribution for one query (validated).
    void logprobs_into(const MaskedQuery& query, std::span<double> out) const;

private:
    std::vector<double> build_distribution(const std::map<std::string, double>& probs,
                                           const std::map<std::string, double>& rest, const std::string& what) const;
    void hashed_into(const std::string& key, std::span<double> out) const;

    MockTable table_;
    ScorerInfo info_;
    std::unordered_map<std::string, TokenId> ids_;
    std::unordered_map<std::string, std::vector<double>> exact_;
    bool has_wildcards_ = false;
    std::vector<double> default_;
};

} // namespace kgh
