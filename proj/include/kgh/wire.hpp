#pragma once

// JSON encoding of the lm-service protocol.
//
//   GET  /v1/info        -> {scorer_id, vocab_size, tokenizer_id, lmax}
//   POST /v1/tokenize    {texts:[...]}          -> {tokens:[[id,...],...]}
//   POST /v1/detokenize  {tokens:[[id,...],...]} -> {texts:[...]}
//   POST /v1/logprobs    {mode:"full", items:[query,...]} -> {distributions:[[...V...],...]}
//   POST /v1/paraphrase  {sentence, n}          -> {paraphrases:[...]}
//
// A query item is
//   {template, slot_states:[{slot:"A", state:"filled"|"partial"|"masked",
//                            tokens:[...], length:n}, ...],
//    focus:{slot:"B", index:i}}

#include <vector>

#include "json.hpp"
#include "kgh/scorer.hpp"

namespace kgh::wire {

nlohmann::json query_to_json(const MaskedQuery& query);

// Owns the template a decoded query points at.
struct DecodedQuery {
    PromptTemplate prompt;
    std::vector<SlotState> slots;
    Focus focus;

    MaskedQuery view() const { return MaskedQuery{&prompt, slots, focus}; }
};

// Throws ParseError on malformed items.
DecodedQuery query_from_json(const nlohmann::json& item);

nlohmann::json info_to_json(const ScorerInfo& info);
ScorerInfo info_from_json(const nlohmann::json& doc);

} // namespace kgh::wire
