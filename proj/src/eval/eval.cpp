#include "kgh/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "kgh/error.hpp"
#include "kgh/io.hpp"
#include "kgh/rng.hpp"
#include "kgh/search.hpp"

namespace kgh {

namespace {

std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    for (;;) {
        const auto tab = line.find('\t', pos);
        out.push_back(line.substr(pos, tab - pos));
        if (tab == std::string::npos) return out;
        pos = tab + 1;
    }
}

std::string describe(const EvalSample& s) {
    std::string out = s.relation + "(";
    for (std::size_t i = 0; i < s.tuple.entities.size(); ++i) out += (i ? ", " : "") + s.tuple.entities[i];
    return out + ")";
}

// Picks a pool value other than `current`; the pool is sorted and unique.
const std::string& other_than(const std::vector<std::string>& pool, const std::string& current, std::mt19937_64& rng) {
    const auto at = static_cast<std::size_t>(std::lower_bound(pool.begin(), pool.end(), current) - pool.begin());
    const bool present = at < pool.size() && pool[at] == current;
    auto idx = static_cast<std::size_t>(uniform_index(rng, pool.size() - (present ? 1 : 0)));
    if (present && idx >= at) ++idx;
    return pool[idx];
}

std::string fmt(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return buf;
}

} // namespace

std::string tuple_id(const EvalSample& sample) {
    std::string id = sample.relation + ":";
    for (std::size_t i = 0; i < sample.tuple.entities.size(); ++i) id += (i ? "|" : "") + sample.tuple.entities[i];
    return id;
}

std::vector<EvalSample> read_positives(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::vector<EvalSample> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || line.front() == '#') continue;
        const auto where = path.string() + ":" + std::to_string(lineno);
        auto fields = split_tabs(line);
        if (fields.size() < 3) throw ParseError(where + ": expected relation and at least two entities");
        EvalSample s;
        s.relation = trim(fields[0]);
        if (s.relation.empty()) throw ParseError(where + ": empty relation name");
        for (std::size_t i = 1; i < fields.size(); ++i) {
            auto e = trim(fields[i]);
            try {
                validate_entity(e);
            } catch (const ValidationError& err) {
                throw ParseError(where + ": " + err.what());
            }
            s.tuple.entities.push_back(std::move(e));
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<EvalSample> generate_negatives(const std::vector<EvalSample>& positives, std::uint64_t seed,
                                           const NegativeOptions& options) {
    if (options.max_retries < 1) throw ValidationError("max_retries must be at least 1");
    std::map<int, std::set<std::string>> relation_set;
    std::map<std::pair<int, int>, std::set<std::string>> pool_set;
    std::set<std::pair<std::string, std::vector<std::string>>> known;
    for (const auto& p : positives) {
        const int arity = p.tuple.arity();
        relation_set[arity].insert(p.relation);
        for (int s = 0; s < arity; ++s) pool_set[{arity, s}].insert(p.tuple.entities[static_cast<std::size_t>(s)]);
        known.insert({p.relation, p.tuple.entities});
    }
    std::map<int, std::vector<std::string>> relations;
    for (const auto& [a, names] : relation_set) relations[a].assign(names.begin(), names.end());
    std::map<std::pair<int, int>, std::vector<std::string>> pools;
    for (const auto& [key, values] : pool_set) {
        if (values.size() < 2) {
            throw ValidationError("entity pool for slot " + std::string(1, PromptTemplate::slot_letter(key.second)) +
                                  " of arity-" + std::to_string(key.first) +
                                  " tuples has fewer than two distinct entities");
        }
        pools[key].assign(values.begin(), values.end());
    }

    std::mt19937_64 rng(seed);
    std::vector<EvalSample> out;
    out.reserve(positives.size());
    for (const auto& p : positives) {
        const int arity = p.tuple.arity();
        const auto& rels = relations[arity];
        const bool swap_relation = options.corrupt_relations && rels.size() >= 2;
        const auto components = static_cast<std::uint64_t>(arity + (swap_relation ? 1 : 0));
        bool done = false;
        for (int attempt = 0; attempt < options.max_retries && !done; ++attempt) {
            EvalSample neg;
            neg.relation = p.relation;
            neg.tuple.entities = p.tuple.entities;
            neg.positive = false;
            const auto c = static_cast<int>(uniform_index(rng, components));
            if (c == arity) {
                neg.relation = other_than(rels, p.relation, rng);
            } else {
                auto& e = neg.tuple.entities[static_cast<std::size_t>(c)];
                e = other_than(pools[{arity, c}], e, rng);
            }
            if (known.count({neg.relation, neg.tuple.entities}) == 0) {
                out.push_back(std::move(neg));
                done = true;
            }
        }
        if (!done) {
            throw ValidationError("could not corrupt positive " + describe(p) + " into a non-positive after " +
                                  std::to_string(options.max_retries) + " attempts");
        }
    }
    return out;
}

const char* to_string(ScoringMethod method) {
    switch (method) {
    case ScoringMethod::kHuman: return "human";
    case ScoringMethod::kTop1: return "top1";
    case ScoringMethod::kMulti: return "multi";
    }
    return "unknown";
}

ScoringMethod parse_scoring_method(std::string_view text) {
    if (text == "human") return ScoringMethod::kHuman;
    if (text == "top1") return ScoringMethod::kTop1;
    if (text == "multi") return ScoringMethod::kMulti;
    throw ValidationError("unknown scoring method '" + std::string(text) + "' (expected human, top1 or multi)");
}

WeightedPromptSet prompts_for(ScoringMethod method, const WeightedPromptSet& prompts) {
    validate(prompts);
    if (method == ScoringMethod::kMulti) return prompts;
    WeightedPromptSet one = prompts;
    const std::size_t pick = method == ScoringMethod::kHuman ? 0 : prompts.top_prompt();
    one.prompts = {prompts.prompts[pick]};
    one.prompts.front().weight = 1.0;
    return one;
}

void score_samples(std::vector<EvalSample>& samples, ScoringMethod method,
                   const std::map<std::string, WeightedPromptSet>& prompts, const Scorer& scorer, double alpha,
                   std::size_t workers, JointOrder order) {
    std::map<std::string, WeightedPromptSet> chosen;
    for (const auto& [name, set] : prompts) chosen.emplace(name, prompts_for(method, set));
    for (const auto& s : samples) {
        if (chosen.count(s.relation) == 0) {
            throw ValidationError("no prompt set for relation '" + s.relation + "' needed by " + describe(s));
        }
    }
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr failure;
    std::mutex mu;
    auto body = [&] {
        try {
            for (std::size_t i = next.fetch_add(1); i < samples.size() && !failed.load(); i = next.fetch_add(1)) {
                auto& s = samples[i];
                s.score = quantize(consistency(s.tuple, chosen.at(s.relation), scorer, alpha, order).consistency);
            }
        } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
            failed.store(true);
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(workers, samples.size()));
    if (n == 1) {
        body();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < n; ++t) threads.emplace_back(body);
        for (auto& t : threads) t.join();
    }
    if (failure) std::rethrow_exception(failure);
}

std::map<std::string, double> read_external_scores(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::map<std::string, double> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty() || line.front() == '#') continue;
        const auto where = path.string() + ":" + std::to_string(lineno);
        const auto fields = split_tabs(line);
        if (fields.size() != 2) throw ParseError(where + ": expected tuple_id<TAB>score");
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(fields[1], &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != fields[1].size() || !std::isfinite(v)) {
            throw ParseError(where + ": bad score '" + fields[1] + "'");
        }
        if (!out.emplace(fields[0], v).second) throw ParseError(where + ": duplicate tuple id '" + fields[0] + "'");
    }
    return out;
}

void apply_external_scores(std::vector<EvalSample>& samples, const std::map<std::string, double>& scores) {
    for (auto& s : samples) {
        const auto it = scores.find(tuple_id(s));
        if (it == scores.end()) throw ValidationError("external scores lack tuple '" + tuple_id(s) + "'");
        s.score = it->second;
    }
}

PRCurve pr_curve(const std::vector<EvalSample>& samples) {
    std::vector<const EvalSample*> order;
    for (const auto& s : samples) {
        if (!s.score) throw ValidationError("sample " + describe(s) + " has no score");
        order.push_back(&s);
    }
    std::stable_sort(order.begin(), order.end(), [](const EvalSample* a, const EvalSample* b) {
        if (*a->score != *b->score) return *a->score > *b->score;
        if (a->tuple.entities != b->tuple.entities) return a->tuple.entities < b->tuple.entities;
        return a->relation < b->relation;
    });
    PRCurve curve;
    for (const auto* s : order) (s->positive ? curve.n_pos : curve.n_neg) += 1;
    std::size_t tp = 0;
    double area = 0.0;
    double prev_precision = 0.0;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto* s = order[i];
        if (s->positive) ++tp;
        PRPoint pt;
        pt.cutoff = i + 1;
        pt.score = *s->score;
        pt.positive = s->positive;
        pt.precision = static_cast<double>(tp) / static_cast<double>(i + 1);
        pt.recall = curve.n_pos ? static_cast<double>(tp) / static_cast<double>(curve.n_pos) : 0.0;
        if (i == 0) prev_precision = pt.precision;
        if (s->positive) area += (pt.precision + prev_precision) / 2.0;
        prev_precision = pt.precision;
        curve.points.push_back(pt);
    }
    curve.auc = curve.n_pos ? area / static_cast<double>(curve.n_pos) : 0.0;
    return curve;
}

std::string curve_csv(const PRCurve& curve) {
    std::string out = "cutoff,score,label,precision,recall\n";
    for (const auto& p : curve.points) {
        out += std::to_string(p.cutoff) + "," + fmt(p.score) + "," + (p.positive ? "1" : "0") + "," +
               fmt(p.precision) + "," + fmt(p.recall) + "\n";
    }
    return out;
}

std::string curve_summary(const PRCurve& curve, std::string_view method, std::uint64_t seed) {
    nlohmann::ordered_json doc{{"method", method},
                               {"auc", quantize(curve.auc)},
                               {"n_pos", curve.n_pos},
                               {"n_neg", curve.n_neg},
                               {"seed", seed}};
    return doc.dump(2) + "\n";
}

} // namespace kgh
