#include "kgh/scorer.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>

#include "kgh/error.hpp"

namespace kgh {

void validate_query(const MaskedQuery& q, int lmax) {
    if (q.prompt == nullptr) throw ValidationError("query has no prompt");
    const int arity = q.prompt->arity();
    if (static_cast<int>(q.slots.size()) != arity) {
        throw ValidationError("query for '" + q.prompt->text() + "' has " + std::to_string(q.slots.size()) +
                              " slot states, template has " + std::to_string(arity));
    }
    for (int s = 0; s < arity; ++s) {
        const auto& st = q.slots[static_cast<std::size_t>(s)];
        const std::string where = "slot " + PromptTemplate::marker(s) + " of '" + q.prompt->text() + "'";
        if (st.length < 1 || st.length > lmax) {
            throw ValidationError(where + ": length " + std::to_string(st.length) + " outside 1.." +
                                  std::to_string(lmax));
        }
        const auto known = static_cast<int>(st.tokens.size());
        switch (st.kind) {
        case SlotState::Kind::kFilled:
            if (known != st.length) throw ValidationError(where + ": filled slot token count mismatch");
            break;
        case SlotState::Kind::kPartial:
            if (known < 1 || known >= st.length) throw ValidationError(where + ": partial prefix out of range");
            break;
        case SlotState::Kind::kMasked:
            if (known != 0) throw ValidationError(where + ": masked slot carries tokens");
            break;
        }
    }
    if (q.focus.slot < 0 || q.focus.slot >= arity) throw ValidationError("query focus names an unknown slot");
    const auto& fs = q.slots[static_cast<std::size_t>(q.focus.slot)];
    if (fs.kind == SlotState::Kind::kFilled) throw ValidationError("query focus is on a filled slot");
    if (q.focus.index != static_cast<int>(fs.tokens.size())) {
        throw ValidationError("query focus must be the first unfilled position of its slot");
    }
}

std::vector<TokenSeq> Scorer::tokenize_batch(std::span<const std::string> texts) const {
    std::vector<TokenSeq> out;
    out.reserve(texts.size());
    for (const auto& t : texts) out.push_back(tokenize(t));
    return out;
}

std::vector<std::string> Scorer::detokenize_batch(std::span<const TokenSeq> seqs) const {
    std::vector<std::string> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(detokenize(s));
    return out;
}

EntityTuple tokenized(const Scorer& scorer, EntityTuple tuple, int lmax) {
    if (tuple.tokens.size() != tuple.entities.size()) {
        tuple.tokens = scorer.tokenize_batch(tuple.entities);
    }
    const int cap = std::min(lmax, scorer.info().lmax);
    for (std::size_t i = 0; i < tuple.tokens.size(); ++i) {
        const auto n = static_cast<int>(tuple.tokens[i].size());
        if (n < 1 || n > cap) {
            throw ValidationError("entity '" + tuple.entities[i] + "' has " + std::to_string(n) +
                                  " tokens; allowed 1.." + std::to_string(cap));
        }
    }
    return tuple;
}

namespace {

// Appends one query per target position; returns the number appended.
std::size_t append_chain_queries(std::vector<MaskedQuery>& batch, const PromptTemplate& prompt,
                                 const std::vector<SlotState>& context, int target_slot, const TokenSeq& target) {
    const int len = static_cast<int>(target.size());
    for (int i = 0; i < len; ++i) {
        MaskedQuery q;
        q.prompt = &prompt;
        q.slots = context;
        auto& st = q.slots[static_cast<std::size_t>(target_slot)];
        st = i == 0 ? SlotState::masked(len) : SlotState::partial(TokenSeq(target.begin(), target.begin() + i), len);
        q.focus = {target_slot, i};
        batch.push_back(std::move(q));
    }
    return static_cast<std::size_t>(len);
}

double sum_chain(const LogProbMatrix& rows, std::size_t first, const TokenSeq& target) {
    double sum = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        const auto row = rows.row(first + i);
        const auto tok = target[i];
        if (tok < 0 || static_cast<std::size_t>(tok) >= row.size()) throw ValidationError("token id out of range");
        sum += row[static_cast<std::size_t>(tok)];
    }
    return sum;
}

} // namespace

double entity_logprob(const Scorer& scorer, const PromptTemplate& prompt, const std::vector<SlotState>& context,
                      int target_slot, const TokenSeq& target) {
    const int lmax = scorer.info().lmax;
    if (target.empty() || static_cast<int>(target.size()) > lmax) {
        throw ValidationError("target length " + std::to_string(target.size()) + " outside 1.." +
                              std::to_string(lmax));
    }
    if (target_slot < 0 || target_slot >= prompt.arity() || static_cast<int>(context.size()) != prompt.arity()) {
        throw ValidationError("entity_logprob: slot/context does not match '" + prompt.text() + "'");
    }
    std::vector<MaskedQuery> batch;
    append_chain_queries(batch, prompt, context, target_slot, target);
    for (const auto& q : batch) validate_query(q, lmax);
    return sum_chain(scorer.token_logprobs(batch), 0, target);
}

CompatibilityBreakdown pair_compatibility(const Scorer& scorer, const PromptTemplate& prompt, const EntityTuple& tuple,
                                          double alpha, JointOrder order) {
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
    const int n = prompt.arity();
    if (tuple.arity() != n) {
        throw ValidationError("tuple arity " + std::to_string(tuple.arity()) + " does not match '" + prompt.text() +
                              "'");
    }
    if (order == JointOrder::kSymmetricMean && n > 8) {
        throw ValidationError("symmetric joint order supports at most 8 slots");
    }
    const EntityTuple t = tokenized(scorer, tuple, scorer.info().lmax);

    // A chain term is the log-likelihood of one slot given which of the other
    // slots are filled (bit set) or masked at their true lengths.
    using TermKey = std::pair<int, unsigned>;
    std::map<TermKey, std::size_t> term_row; // first batch row of each term
    std::vector<MaskedQuery> batch;
    auto need = [&](int slot, unsigned filled) {
        const TermKey key{slot, filled};
        if (term_row.count(key) != 0) return;
        std::vector<SlotState> ctx(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) {
            const auto& tok = t.tokens[static_cast<std::size_t>(j)];
            ctx[static_cast<std::size_t>(j)] =
                (filled >> j) & 1U ? SlotState::filled(tok) : SlotState::masked(static_cast<int>(tok.size()));
        }
        term_row[key] = batch.size();
        append_chain_queries(batch, prompt, ctx, slot, t.tokens[static_cast<std::size_t>(slot)]);
    };

    std::vector<int> canonical(static_cast<std::size_t>(n));
    std::iota(canonical.begin(), canonical.end(), 0);
    auto mask_before = [](const std::vector<int>& perm, std::size_t k) {
        unsigned m = 0;
        for (std::size_t i = 0; i < k; ++i) m |= 1U << perm[i];
        return m;
    };
    auto for_chain = [&](const std::vector<int>& perm, auto&& fn) {
        for (std::size_t k = 0; k < perm.size(); ++k) fn(perm[k], mask_before(perm, k));
    };

    for_chain(canonical, need);
    if (order == JointOrder::kSurface) {
        for_chain(prompt.slot_order(), need);
    } else {
        auto perm = canonical;
        do {
            for_chain(perm, need);
        } while (std::next_permutation(perm.begin(), perm.end()));
    }

    const int lmax = scorer.info().lmax;
    for (const auto& q : batch) validate_query(q, lmax);
    const LogProbMatrix rows = scorer.token_logprobs(batch);
    if (rows.rows() != batch.size()) throw ProtocolError("scorer returned the wrong number of distributions");

    std::map<TermKey, double> term;
    for (const auto& [key, first] : term_row) {
        term[key] = sum_chain(rows, first, t.tokens[static_cast<std::size_t>(key.first)]);
    }
    auto chain_sum = [&](const std::vector<int>& perm) {
        double s = 0.0;
        for_chain(perm, [&](int slot, unsigned filled) { s += term.at({slot, filled}); });
        return s;
    };

    CompatibilityBreakdown out;
    for_chain(canonical, [&](int slot, unsigned filled) { out.individual_lls.push_back(term.at({slot, filled})); });
    if (order == JointOrder::kSurface) {
        out.joint_ll = chain_sum(prompt.slot_order());
    } else {
        double total = 0.0;
        std::size_t count = 0;
        auto perm = canonical;
        do {
            total += chain_sum(perm);
            ++count;
        } while (std::next_permutation(perm.begin(), perm.end()));
        out.joint_ll = total / static_cast<double>(count);
    }
    const double min_individual = *std::min_element(out.individual_lls.begin(), out.individual_lls.end());
    out.score = alpha * out.joint_ll + (1.0 - alpha) * min_individual;
    return out;
}

} // namespace kgh
