#include "support.hpp"

#include <algorithm>
#include <functional>

namespace kgh::test {

std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(KGH_FIXTURE_DIR) / name; }

TempDir::TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("kgh-test-" + std::to_string(rd()) + "-" + std::to_string(counter.fetch_add(1)));
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

WeightedPromptSet make_prompts(const std::string& relation, int arity, const std::vector<std::string>& texts,
                               const std::vector<double>& weights) {
    WeightedPromptSet set;
    set.relation = relation;
    set.arity = arity;
    for (std::size_t i = 0; i < texts.size(); ++i) set.prompts.push_back({PromptTemplate(texts[i]), weights[i], 0.0});
    return set;
}

MockTable random_table(std::mt19937_64& rng, int vocab, int lmax, TableKind kind) {
    MockTable t;
    t.scorer_id = "random";
    t.lmax = lmax;
    for (int i = 0; i < vocab; ++i) t.vocab.push_back("w" + std::to_string(i));
    switch (kind) {
    case TableKind::kHashed:
        t.hashed = MockTable::Hashed{rng(), 1.0 + static_cast<double>(rng() % 300) / 100.0};
        break;
    case TableKind::kSkewed:
        t.hashed = MockTable::Hashed{rng(), 12.0};
        break;
    case TableKind::kTied:
        for (const auto& w : t.vocab) t.default_weights[w] = static_cast<double>(1 + rng() % 3);
        break;
    }
    return t;
}

std::uint64_t tuple_space(int vocab, int arity, int lmax) {
    std::uint64_t per_slot = 0;
    std::uint64_t p = 1;
    for (int l = 1; l <= lmax; ++l) {
        p *= static_cast<std::uint64_t>(vocab);
        per_slot += p;
    }
    std::uint64_t total = 1;
    for (int a = 0; a < arity; ++a) total *= per_slot;
    return total;
}

namespace {

// log P(token at focus) summed over prompts with their weights, from
// individual single-query calls.
std::vector<double> weighted_row(const WeightedPromptSet& prompts, const Scorer& scorer,
                                 const std::vector<SlotState>& slots, Focus focus) {
    std::vector<double> agg(static_cast<std::size_t>(scorer.info().vocab_size), 0.0);
    for (const auto& wp : prompts.prompts) {
        MaskedQuery q{&wp.prompt, slots, focus};
        const auto rows = scorer.token_logprobs(std::span<const MaskedQuery>(&q, 1));
        for (std::size_t v = 0; v < agg.size(); ++v) agg[v] += wp.weight * rows.row(0)[v];
    }
    return agg;
}

} // namespace

std::vector<RankedTuple> oracle_ranking(const WeightedPromptSet& prompts, const Scorer& scorer, int lmax) {
    const int n = prompts.arity;
    const int vocab = scorer.info().vocab_size;
    std::vector<RankedTuple> all;
    std::vector<int> lengths(static_cast<std::size_t>(n), 1);
    std::vector<TokenSeq> cur(static_cast<std::size_t>(n));

    std::function<void(int, int, double)> walk = [&](int slot, int index, double running) {
        if (slot == n) {
            all.push_back({running, cur});
            return;
        }
        std::vector<SlotState> slots;
        for (int s = 0; s < n; ++s) {
            const auto us = static_cast<std::size_t>(s);
            if (s < slot) {
                slots.push_back(SlotState::filled(cur[us]));
            } else if (s == slot && index > 0) {
                slots.push_back(SlotState::partial(cur[us], lengths[us]));
            } else {
                slots.push_back(SlotState::masked(lengths[us]));
            }
        }
        const auto agg = weighted_row(prompts, scorer, slots, {slot, index});
        const bool slot_done = index + 1 == lengths[static_cast<std::size_t>(slot)];
        for (int v = 0; v < vocab; ++v) {
            cur[static_cast<std::size_t>(slot)].push_back(v);
            const double m = std::min(running, agg[static_cast<std::size_t>(v)]);
            if (slot_done) {
                walk(slot + 1, 0, m);
            } else {
                walk(slot, index + 1, m);
            }
            cur[static_cast<std::size_t>(slot)].pop_back();
        }
    };

    for (;;) {
        walk(0, 0, std::numeric_limits<double>::infinity());
        int s = n - 1;
        while (s >= 0 && lengths[static_cast<std::size_t>(s)] == lmax) lengths[static_cast<std::size_t>(s--)] = 1;
        if (s < 0) break;
        ++lengths[static_cast<std::size_t>(s)];
    }
    std::sort(all.begin(), all.end(), [](const RankedTuple& a, const RankedTuple& b) {
        return a.mtl != b.mtl ? a.mtl > b.mtl : a.tokens < b.tokens;
    });
    return all;
}

namespace {

// log P(slot entity | prompt, `filled` slots given, all others masked at
// their true lengths), accumulated token by token.
double chain_term(const Scorer& scorer, const PromptTemplate& prompt, const std::vector<TokenSeq>& tuple, int slot,
                  const std::vector<bool>& filled) {
    const auto& target = tuple[static_cast<std::size_t>(slot)];
    double total = 0.0;
    for (std::size_t i = 0; i < target.size(); ++i) {
        MaskedQuery q;
        q.prompt = &prompt;
        for (std::size_t s = 0; s < tuple.size(); ++s) {
            const int len = static_cast<int>(tuple[s].size());
            if (static_cast<int>(s) == slot) {
                q.slots.push_back(i == 0 ? SlotState::masked(len)
                                         : SlotState::partial(TokenSeq(target.begin(), target.begin() + static_cast<std::ptrdiff_t>(i)), len));
            } else {
                q.slots.push_back(filled[s] ? SlotState::filled(tuple[s]) : SlotState::masked(len));
            }
        }
        q.focus = {slot, static_cast<int>(i)};
        const auto rows = scorer.token_logprobs(std::span<const MaskedQuery>(&q, 1));
        total += rows.row(0)[static_cast<std::size_t>(target[i])];
    }
    return total;
}

} // namespace

OracleCompat oracle_compatibility(const Scorer& scorer, const PromptTemplate& prompt,
                                  const std::vector<TokenSeq>& tuple, double alpha) {
    const std::size_t n = tuple.size();
    OracleCompat out{0.0, {}, 0.0};
    std::vector<bool> filled(n, false);
    for (int s : prompt.slot_order()) {
        out.joint += chain_term(scorer, prompt, tuple, s, filled);
        filled[static_cast<std::size_t>(s)] = true;
    }
    std::fill(filled.begin(), filled.end(), false);
    for (std::size_t s = 0; s < n; ++s) {
        out.individual.push_back(chain_term(scorer, prompt, tuple, static_cast<int>(s), filled));
        filled[s] = true;
    }
    out.score = alpha * out.joint + (1.0 - alpha) * *std::min_element(out.individual.begin(), out.individual.end());
    return out;
}

double oracle_consistency(const Scorer& scorer, const WeightedPromptSet& prompts, const std::vector<TokenSeq>& tuple,
                          double alpha) {
    double total = 0.0;
    for (const auto& wp : prompts.prompts) total += wp.weight * oracle_compatibility(scorer, wp.prompt, tuple, alpha).score;
    return total;
}

} // namespace kgh::test
