#include "kgh/prompt_forge.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "kgh/error.hpp"
#include "kgh/rng.hpp"

namespace kgh {

namespace {

bool is_word_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    return u >= 0x80 || std::isalnum(u) != 0;
}

char fold(char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); }

// Start offsets of whole-word, case-insensitive occurrences of needle.
std::vector<std::size_t> find_word(std::string_view hay, std::string_view needle) {
    std::vector<std::size_t> hits;
    if (needle.empty() || needle.size() > hay.size()) return hits;
    for (std::size_t i = 0; i + needle.size() <= hay.size(); ++i) {
        bool eq = true;
        for (std::size_t k = 0; k < needle.size() && eq; ++k) eq = fold(hay[i + k]) == fold(needle[k]);
        if (!eq) continue;
        const bool left_ok = i == 0 || !is_word_char(hay[i - 1]) || !is_word_char(needle.front());
        const std::size_t end = i + needle.size();
        const bool right_ok = end == hay.size() || !is_word_char(hay[end]) || !is_word_char(needle.back());
        if (left_ok && right_ok) hits.push_back(i);
    }
    return hits;
}

std::vector<std::string> split_tokens(std::string_view s) {
    std::istringstream in{std::string(s)};
    std::vector<std::string> out;
    std::string w;
    while (in >> w) out.push_back(std::move(w));
    return out;
}

} // namespace

std::optional<PromptTemplate> strip_entities(std::string_view sentence, const EntityTuple& tuple) {
    struct Hit {
        std::size_t begin;
        std::size_t end;
        int slot;
    };
    std::vector<Hit> hits;
    for (int s = 0; s < tuple.arity(); ++s) {
        const auto& e = tuple.entities[static_cast<std::size_t>(s)];
        const auto found = find_word(sentence, e);
        if (found.size() != 1) return std::nullopt;
        hits.push_back({found.front(), found.front() + e.size(), s});
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) { return a.begin < b.begin; });
    for (std::size_t i = 1; i < hits.size(); ++i) {
        if (hits[i].begin < hits[i - 1].end) return std::nullopt;
    }
    std::string text;
    std::size_t pos = 0;
    for (const auto& h : hits) {
        text.append(sentence.substr(pos, h.begin - pos));
        text += PromptTemplate::marker(h.slot);
        pos = h.end;
    }
    text.append(sentence.substr(pos));
    try {
        return PromptTemplate(std::move(text));
    } catch (const ValidationError&) {
        return std::nullopt;
    }
}

std::string instantiate(const PromptTemplate& prompt, const EntityTuple& tuple) {
    for (const auto& e : tuple.entities) validate_entity(e);
    std::string sentence = prompt.fill(tuple.entities);
    const auto back = strip_entities(sentence, tuple);
    if (!back || back->text() != prompt.text()) {
        throw AmbiguityError("instantiating '" + prompt.text() + "' gives '" + sentence +
                             "', from which the entities cannot be stripped unambiguously");
    }
    return sentence;
}

std::size_t token_edit_distance(std::string_view a, std::string_view b) {
    const auto x = split_tokens(a);
    const auto y = split_tokens(b);
    std::vector<std::size_t> prev(y.size() + 1);
    std::vector<std::size_t> cur(y.size() + 1);
    for (std::size_t j = 0; j <= y.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= x.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= y.size(); ++j) {
            const std::size_t sub = prev[j - 1] + (x[i - 1] == y[j - 1] ? 0 : 1);
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
        }
        std::swap(prev, cur);
    }
    return prev[y.size()];
}

namespace {

bool far_from_all(const PromptTemplate& p, const std::vector<PromptTemplate>& kept, std::size_t min_distance) {
    return std::all_of(kept.begin(), kept.end(), [&](const PromptTemplate& k) {
        return token_edit_distance(p.text(), k.text()) >= min_distance;
    });
}

} // namespace

std::vector<PromptTemplate> dedup(const std::vector<PromptTemplate>& prompts, std::size_t min_distance) {
    if (min_distance < 1) throw ValidationError("dedup min_distance must be at least 1");
    std::vector<PromptTemplate> kept;
    for (const auto& p : prompts) {
        if (far_from_all(p, kept, min_distance)) kept.push_back(p);
    }
    return kept;
}

const char* to_string(CollectStatus status) {
    switch (status) {
    case CollectStatus::kComplete: return "complete";
    case CollectStatus::kNoGrowth: return "no-growth";
    case CollectStatus::kRoundsExhausted: return "rounds-exhausted";
    case CollectStatus::kServiceFailure: return "service-failure";
    }
    return "unknown";
}

CollectResult collect_prompts(const RelationSchema& relation, Paraphraser& paraphraser, const CollectOptions& options) {
    validate(relation);
    if (options.min_distance < 1) throw ValidationError("min_distance must be at least 1");
    CollectResult result;
    result.prompts.push_back(relation.initial_prompt);
    if (result.prompts.size() >= options.min_count) return result;

    std::mt19937_64 rng(options.seed);
    std::vector<PromptTemplate> frontier{relation.initial_prompt};
    std::size_t accepted = 0; // paraphrases that stripped back to a template

    for (int round = 0; round < options.max_rounds; ++round) {
        std::vector<PromptTemplate> added;
        for (const auto& prompt : frontier) {
            const auto& seed = relation.seed_tuples[uniform_index(rng, relation.seed_tuples.size())];
            std::string sentence;
            try {
                sentence = instantiate(prompt, seed);
            } catch (const AmbiguityError&) {
                continue;
            }
            std::vector<std::string> paraphrases;
            try {
                paraphrases = paraphraser.paraphrase(sentence, options.n_per_call);
            } catch (const ServiceError& e) {
                result.status = CollectStatus::kServiceFailure;
                result.warning = std::string("paraphraser failed; keeping partial prompt set: ") + e.what();
                return result;
            }
            ++result.paraphrase_calls;
            for (const auto& para : paraphrases) {
                auto tmpl = strip_entities(para, seed);
                if (!tmpl || tmpl->arity() != relation.arity) continue;
                ++accepted;
                if (far_from_all(*tmpl, result.prompts, options.min_distance)) {
                    result.prompts.push_back(*tmpl);
                    added.push_back(std::move(*tmpl));
                }
            }
            if (result.prompts.size() >= options.min_count) return result;
        }
        if (added.empty()) {
            if (accepted == 0) {
                throw ValidationError("relation '" + relation.name +
                                      "': no paraphrase could be turned back into a prompt");
            }
            result.status = CollectStatus::kNoGrowth;
            result.warning = "paraphrasing stopped producing new prompts at " +
                             std::to_string(result.prompts.size()) + " of " + std::to_string(options.min_count);
            return result;
        }
        frontier = std::move(added);
    }
    result.status = CollectStatus::kRoundsExhausted;
    result.warning = "max rounds reached with " + std::to_string(result.prompts.size()) + " of " +
                     std::to_string(options.min_count) + " prompts";
    return result;
}

std::vector<double> softmax_weights(const std::vector<double>& scores, double tau) {
    if (scores.empty()) throw ValidationError("softmax over an empty score list");
    if (!(tau > 0.0)) throw ValidationError("softmax temperature must be positive");
    double mx = -std::numeric_limits<double>::infinity();
    for (double s : scores) mx = std::max(mx, s / tau);
    std::vector<double> w(scores.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        // floor keeps every weight strictly positive under underflow
        w[i] = std::max(std::exp(scores[i] / tau - mx), std::numeric_limits<double>::min());
        sum += w[i];
    }
    for (auto& x : w) x /= sum;
    return w;
}

WeightedPromptSet weight_prompts(const std::vector<PromptTemplate>& prompts, const RelationSchema& relation,
                                 const Scorer& scorer, double alpha, double tau, JointOrder order) {
    if (prompts.empty()) throw ValidationError("weight_prompts needs at least one prompt");
    if (relation.seed_tuples.empty()) throw ValidationError("weight_prompts needs at least one seed tuple");
    std::vector<EntityTuple> seeds;
    for (const auto& s : relation.seed_tuples) seeds.push_back(tokenized(scorer, s, scorer.info().lmax));

    std::vector<double> means;
    for (const auto& p : prompts) {
        if (p.arity() != relation.arity) {
            throw ValidationError("prompt '" + p.text() + "' does not match the arity of '" + relation.name + "'");
        }
        double sum = 0.0;
        for (const auto& s : seeds) sum += pair_compatibility(scorer, p, s, alpha, order).score;
        means.push_back(sum / static_cast<double>(seeds.size()));
    }
    const auto weights = softmax_weights(means, tau);

    WeightedPromptSet set;
    set.relation = relation.name;
    set.arity = relation.arity;
    set.tau = tau;
    set.alpha = alpha;
    for (std::size_t i = 0; i < prompts.size(); ++i) set.prompts.push_back({prompts[i], weights[i], means[i]});
    return set;
}

} // namespace kgh
