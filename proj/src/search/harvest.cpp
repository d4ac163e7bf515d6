#include "kgh/search.hpp"

namespace kgh {

namespace {

template <typename F>
auto stage(const char* name, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const std::exception& e) {
        throw HarvestError(name, std::current_exception(), e.what());
    }
}

} // namespace

HarvestResult harvest(const RelationSchema& relation, const Scorer& scorer, Paraphraser& paraphraser,
                      const HarvestOptions& options, const ProgressCallback& progress) {
    validate(relation);
    validate(options.search);

    HarvestResult r;
    r.collected = stage("collect", [&] { return collect_prompts(relation, paraphraser, options.collect); });
    if (progress) progress({"collect", 0, 0, 0});
    r.prompts = stage("weight", [&] {
        return weight_prompts(r.collected.prompts, relation, scorer, options.search.alpha, options.tau,
                              options.search.joint_order);
    });
    r.prompts.rng_seed = options.collect.seed;
    if (progress) progress({"weight", 0, 0, 0});
    r.proposal = stage("propose", [&] { return propose_candidates(r.prompts, scorer, options.search, progress); });
    r.kg = stage("select",
                 [&] { return rescore_and_select(relation, r.proposal.candidates, r.prompts, scorer, options.search, progress); });
    return r;
}

} // namespace kgh
