#include <atomic>
#include <charconv>
#include <cmath>
#include <limits>
#include <mutex>
#include <set>
#include <thread>
#include <unordered_map>

#include "kgh/io.hpp"
#include "kgh/search.hpp"

namespace kgh {

namespace {

std::string shortest(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

std::size_t parse_count(std::string_view text, std::string_view what) {
    std::size_t v = 0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size() || v == 0) {
        throw ValidationError("threshold " + std::string(what) + ": expected a positive integer, got '" +
                              std::string(text) + "'");
    }
    return v;
}

double parse_factor(std::string_view text) {
    double v = 0.0;
    const auto r = std::from_chars(text.data(), text.data() + text.size(), v);
    if (r.ec != std::errc() || r.ptr != text.data() + text.size() || !(v > 0.0) || !std::isfinite(v)) {
        throw ValidationError("threshold factor: expected a positive number, got '" + std::string(text) + "'");
    }
    return v;
}

const char* joint_name(JointOrder order) { return order == JointOrder::kSurface ? "surface" : "symmetric-mean"; }

} // namespace

ThresholdPolicy ThresholdPolicy::parse(std::string_view text) {
    ThresholdPolicy p;
    if (text == "top-half") return p;
    if (text == "none") {
        p.kind = Kind::kNone;
        return p;
    }
    if (text.starts_with("top-k:")) {
        p.kind = Kind::kTopK;
        p.k = parse_count(text.substr(6), "k");
        return p;
    }
    if (text.starts_with("base-k:")) {
        p.kind = Kind::kBaseK;
        auto rest = text.substr(7);
        const auto colon = rest.find(':');
        p.k = parse_count(rest.substr(0, colon), "k");
        if (colon != std::string_view::npos) p.factor = parse_factor(rest.substr(colon + 1));
        return p;
    }
    throw ValidationError("unknown threshold policy '" + std::string(text) +
                          "' (expected top-half, base-k:K[:FACTOR], top-k:K or none)");
}

std::string ThresholdPolicy::to_string() const {
    switch (kind) {
    case Kind::kTopHalf: return "top-half";
    case Kind::kNone: return "none";
    case Kind::kTopK: return "top-k:" + std::to_string(k);
    case Kind::kBaseK: return "base-k:" + std::to_string(k) + ":" + shortest(factor);
    }
    return "unknown";
}

void validate(const SearchConfig& config) {
    if (config.max_candidates < 1) throw ValidationError("max candidates must be at least 1");
    if (config.lmax < 1) throw ValidationError("lmax must be at least 1");
    if (config.entity_cap < 1) throw ValidationError("entity cap must be at least 1");
    if (!(config.alpha >= 0.0 && config.alpha <= 1.0)) throw ValidationError("alpha must lie in [0, 1]");
    if (config.workers < 1) throw ValidationError("workers must be at least 1");
    const auto& t = config.threshold;
    if ((t.kind == ThresholdPolicy::Kind::kBaseK || t.kind == ThresholdPolicy::Kind::kTopK) && t.k < 1) {
        throw ValidationError("threshold k must be at least 1");
    }
    if (t.kind == ThresholdPolicy::Kind::kBaseK && !(t.factor > 0.0 && std::isfinite(t.factor))) {
        throw ValidationError("threshold factor must be positive");
    }
}

std::string config_hash(const SearchConfig& config) {
    const std::string key = "N=" + std::to_string(config.max_candidates) + ";lmax=" + std::to_string(config.lmax) +
                            ";cap=" + std::to_string(config.entity_cap) + ";alpha=" + shortest(config.alpha) +
                            ";threshold=" + config.threshold.to_string() + ";joint=" + joint_name(config.joint_order);
    return hex64(fnv1a64(key));
}

std::string proposal_hash(const SearchConfig& config, std::string_view scorer_id) {
    const std::string key = "N=" + std::to_string(config.max_candidates) + ";lmax=" + std::to_string(config.lmax) +
                            ";scorer=" + std::string(scorer_id);
    return hex64(fnv1a64(key));
}

ScoredTuple consistency(const EntityTuple& tuple, const WeightedPromptSet& prompts, const Scorer& scorer, double alpha,
                        JointOrder order) {
    if (tuple.arity() != prompts.arity) {
        throw ValidationError("tuple arity " + std::to_string(tuple.arity()) + " does not match relation '" +
                              prompts.relation + "' of arity " + std::to_string(prompts.arity));
    }
    ScoredTuple out;
    out.tuple = tokenized(scorer, tuple, scorer.info().lmax);
    for (std::size_t p = 0; p < prompts.size(); ++p) {
        const double c = pair_compatibility(scorer, prompts.prompts[p].prompt, out.tuple, alpha, order).score;
        out.per_prompt.push_back({static_cast<int>(p), c});
        out.consistency += prompts.prompts[p].weight * c;
    }
    return out;
}

std::vector<ScoredTuple> apply_entity_cap(const std::vector<ScoredTuple>& sorted, std::size_t cap) {
    std::unordered_map<std::string, std::size_t> seen;
    std::vector<ScoredTuple> kept;
    for (const auto& t : sorted) {
        std::unordered_map<std::string, std::size_t> here;
        for (const auto& e : t.tuple.entities) ++here[e];
        bool over = false;
        for (const auto& [e, n] : here) over = over || seen[e] + n > cap;
        if (over) continue;
        for (const auto& [e, n] : here) seen[e] += n;
        kept.push_back(t);
    }
    return kept;
}

std::vector<ScoredTuple> apply_threshold(const std::vector<ScoredTuple>& sorted, const ThresholdPolicy& policy) {
    using Kind = ThresholdPolicy::Kind;
    switch (policy.kind) {
    case Kind::kNone: return sorted;
    case Kind::kTopHalf: return {sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2)};
    case Kind::kTopK:
        return {sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(std::min(policy.k, sorted.size()))};
    case Kind::kBaseK: break;
    }
    if (sorted.size() < policy.k) return sorted;
    const double ck = sorted[policy.k - 1].consistency;
    const double base = std::exp(ck);
    const bool linear = base >= std::numeric_limits<double>::min() && std::isfinite(base);
    const double cut = linear ? policy.factor * base : std::log(policy.factor) + ck;
    std::vector<ScoredTuple> kept;
    for (const auto& t : sorted) {
        if ((linear ? std::exp(t.consistency) : t.consistency) >= cut) kept.push_back(t);
    }
    return kept;
}

KnowledgeGraph rescore_and_select(const RelationSchema& relation, const std::vector<Candidate>& candidates,
                                  const WeightedPromptSet& prompts, const Scorer& scorer, const SearchConfig& config,
                                  const ProgressCallback& progress) {
    validate(config);
    validate(prompts);
    if (candidates.empty()) throw ValidationError("no candidates to rescore for relation '" + relation.name + "'");

    std::vector<ScoredTuple> scored(candidates.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr failure;
    std::mutex mu;
    auto body = [&] {
        try {
            for (std::size_t i = next.fetch_add(1); i < candidates.size() && !failed.load(); i = next.fetch_add(1)) {
                ScoredTuple s = consistency(candidates[i].tuple, prompts, scorer, config.alpha, config.joint_order);
                s.consistency = quantize(s.consistency);
                for (auto& p : s.per_prompt) p.compatibility = quantize(p.compatibility);
                s.proposal_mtl = quantize(candidates[i].mtl);
                scored[i] = std::move(s);
            }
        } catch (...) {
            std::lock_guard lock(mu);
            if (!failure) failure = std::current_exception();
            failed.store(true);
        }
    };
    const std::size_t n_threads = std::min(config.workers, candidates.size());
    if (n_threads <= 1) {
        body();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t t = 0; t < n_threads; ++t) threads.emplace_back(body);
        for (auto& t : threads) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    if (progress) progress({"rescore", candidates.size(), candidates.size() * prompts.size(), 0});

    sort_kg(scored);
    std::vector<ScoredTuple> unique;
    std::set<std::vector<std::string>> seen;
    for (auto& s : scored) {
        if (seen.insert(s.tuple.entities).second) unique.push_back(std::move(s));
    }

    KnowledgeGraph kg;
    kg.relation = relation;
    kg.tuples = apply_threshold(apply_entity_cap(unique, config.entity_cap), config.threshold);
    kg.provenance.scorer_id = scorer.info().scorer_id;
    kg.provenance.prompt_hash = prompt_hash(prompts);
    kg.provenance.config_hash = config_hash(config);
    kg.provenance.selection = config.threshold.to_string();
    if (config.threshold.kind == ThresholdPolicy::Kind::kBaseK) kg.provenance.selection += " scale=likelihood";
    return kg;
}

} // namespace kgh
