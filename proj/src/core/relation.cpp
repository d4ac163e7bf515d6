#include "kgh/relation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "kgh/error.hpp"

namespace kgh {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

} // namespace

std::string trim(std::string_view s) {
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_space(s[b])) ++b;
    while (e > b && is_space(s[e - 1])) --e;
    return std::string(s.substr(b, e - b));
}

std::string PromptTemplate::marker(int slot) { return std::string{'{', slot_letter(slot), '}'}; }

PromptTemplate::PromptTemplate(std::string text) : text_(std::move(text)) {
    std::vector<int> seen(kMaxArity, 0);
    for (std::size_t i = 0; i + 2 < text_.size(); ++i) {
        if (text_[i] == '{' && text_[i + 2] == '}' && text_[i + 1] >= 'A' && text_[i + 1] <= 'Z') {
            const int slot = text_[i + 1] - 'A';
            if (++seen[slot] > 1) {
                throw ValidationError("prompt '" + text_ + "': marker " + marker(slot) + " appears more than once");
            }
            markers_.push_back({i, slot});
            slot_order_.push_back(slot);
            i += 2;
        }
    }
    const int arity = static_cast<int>(markers_.size());
    if (arity == 0) throw ValidationError("prompt '" + text_ + "' has no slot markers");
    for (int s = 0; s < arity; ++s) {
        if (seen[s] != 1) {
            throw ValidationError("prompt '" + text_ + "': slot markers must be {A}.." + marker(arity - 1) +
                                  " without gaps");
        }
    }
    if (text_.size() == 3 * markers_.size()) {
        throw ValidationError("prompt '" + text_ + "' contains only slot markers");
    }
}

std::string PromptTemplate::fill(const std::vector<std::string>& fills) const {
    if (static_cast<int>(fills.size()) != arity()) {
        throw ValidationError("prompt '" + text_ + "' expects " + std::to_string(arity()) + " entities, got " +
                              std::to_string(fills.size()));
    }
    std::string out;
    std::size_t pos = 0;
    for (const auto& m : markers_) {
        out.append(text_, pos, m.offset - pos);
        out += fills[static_cast<std::size_t>(m.slot)];
        pos = m.offset + 3;
    }
    out.append(text_, pos, std::string::npos);
    return out;
}

std::size_t WeightedPromptSet::top_prompt() const {
    std::size_t best = 0;
    for (std::size_t i = 1; i < prompts.size(); ++i) {
        if (prompts[i].weight > prompts[best].weight) best = i;
    }
    return best;
}

bool ranks_before(const ScoredTuple& a, const ScoredTuple& b) {
    if (a.consistency != b.consistency) return a.consistency > b.consistency;
    return a.tuple.entities < b.tuple.entities;
}

void sort_kg(std::vector<ScoredTuple>& tuples) { std::sort(tuples.begin(), tuples.end(), ranks_before); }

void validate_entity(std::string_view entity) {
    if (entity.empty()) throw ValidationError("entity must be nonempty");
    if (trim(entity) != entity) {
        throw ValidationError("entity '" + std::string(entity) + "' has surrounding whitespace");
    }
}

void validate(const RelationSchema& relation) {
    if (relation.name.empty()) throw ValidationError("relation name must be nonempty");
    if (relation.arity < 2 || relation.arity > kMaxArity) {
        throw ValidationError("relation '" + relation.name + "': arity must be in 2.." + std::to_string(kMaxArity));
    }
    if (relation.initial_prompt.arity() != relation.arity) {
        throw ValidationError("relation '" + relation.name + "': prompt has " +
                              std::to_string(relation.initial_prompt.arity()) + " slots but arity is " +
                              std::to_string(relation.arity));
    }
    if (relation.seed_tuples.size() < 2) {
        throw ValidationError("relation '" + relation.name + "': at least 2 seed tuples are required");
    }
    std::set<std::vector<std::string>> seen;
    for (const auto& seed : relation.seed_tuples) {
        if (seed.arity() != relation.arity) {
            throw ValidationError("relation '" + relation.name + "': seed tuple with " +
                                  std::to_string(seed.arity()) + " entities, expected " +
                                  std::to_string(relation.arity));
        }
        for (const auto& e : seed.entities) validate_entity(e);
        if (!seen.insert(seed.entities).second) {
            throw ValidationError("relation '" + relation.name + "': duplicate seed tuple");
        }
    }
}

void validate(const WeightedPromptSet& set) {
    if (set.prompts.empty()) throw ValidationError("prompt set '" + set.relation + "' is empty");
    double sum = 0.0;
    for (const auto& p : set.prompts) {
        if (p.prompt.arity() != set.arity) {
            throw ValidationError("prompt '" + p.prompt.text() + "' has arity " + std::to_string(p.prompt.arity()) +
                                  ", expected " + std::to_string(set.arity));
        }
        if (!(p.weight > 0.0)) throw ValidationError("prompt '" + p.prompt.text() + "' has non-positive weight");
        sum += p.weight;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("prompt weights do not sum to 1");
    if (!(set.tau > 0.0)) throw ValidationError("prompt set temperature must be positive");
}

void validate(const KnowledgeGraph& kg) {
    validate(kg.relation);
    std::set<std::vector<std::string>> seen;
    for (std::size_t i = 0; i < kg.tuples.size(); ++i) {
        const auto& t = kg.tuples[i];
        if (t.tuple.arity() != kg.relation.arity) {
            throw ValidationError("knowledge graph tuple " + std::to_string(i) + " has wrong arity");
        }
        for (const auto& e : t.tuple.entities) validate_entity(e);
        if (!seen.insert(t.tuple.entities).second) {
            throw ValidationError("knowledge graph contains duplicate tuple at record " + std::to_string(i));
        }
        if (i > 0 && ranks_before(t, kg.tuples[i - 1])) {
            throw ValidationError("knowledge graph tuples are not sorted at record " + std::to_string(i));
        }
    }
}

} // namespace kgh
