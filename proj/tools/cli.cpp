#include "cli.hpp"

#include <memory>
#include <ostream>
#include <thread>

#include "CLI11.hpp"
#include "kgh/error.hpp"
#include "kgh/eval.hpp"
#include "kgh/io.hpp"
#include "kgh/mock_scorer.hpp"
#include "kgh/paraphraser.hpp"
#include "kgh/prompt_forge.hpp"
#include "kgh/remote_scorer.hpp"
#include "kgh/search.hpp"

namespace kgh::cli {

namespace {

struct Common {
    std::string scorer;
    std::size_t workers = std::max(1u, std::thread::hardware_concurrency());
    double alpha = 2.0 / 3.0;
    std::string joint_order = "surface";
    bool progress = false;
};

struct PromptsArgs {
    std::string relation;
    std::string paraphraser;
    std::string record;
    std::string out;
    std::uint64_t seed = 0;
    CollectOptions collect;
    double tau = 1.0;
};

struct HarvestArgs {
    std::string relation;
    std::string prompts;
    std::string out;
    std::string top = "top-half";
    std::string checkpoint;
    std::string resume;
    std::size_t max_candidates = 50000;
    int lmax = 3;
    std::size_t entity_cap = 10;
    bool no_pruning = false;
};

struct EvalArgs {
    std::string positives;
    std::vector<std::string> prompts;
    std::string method = "multi";
    std::string external;
    std::string out;
    std::string summary;
    std::uint64_t seed = 0;
    bool no_relation_corruption = false;
    int max_retries = 100;
};

struct StatsArgs {
    std::string kg;
    std::string reference;
    std::string out;
};

// "http://host:port" and "http:<url>" both name a remote endpoint.
std::optional<std::string> http_endpoint(const std::string& spec) {
    if (spec.rfind("http:", 0) != 0 && spec.rfind("https:", 0) != 0) return std::nullopt;
    if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) return spec;
    return spec.substr(5);
}

std::unique_ptr<Scorer> make_scorer(const Common& c) {
    if (c.scorer.empty()) {
        throw ValidationError("no scorer given: pass --scorer mock:<table> or http:<url>, or set KGH_LM_ENDPOINT");
    }
    if (c.scorer.rfind("mock:", 0) == 0) {
        return std::make_unique<MockScorer>(MockScorer::from_file(c.scorer.substr(5)));
    }
    if (auto endpoint = http_endpoint(c.scorer)) {
        RemoteScorerOptions o;
        o.endpoint = *endpoint;
        o.connections = std::max<std::size_t>(c.workers, 1);
        return std::make_unique<RemoteScorer>(o);
    }
    throw ValidationError("unrecognised scorer '" + c.scorer + "' (expected mock:<table> or http:<url>)");
}

JointOrder joint_order(const Common& c) {
    if (c.joint_order == "surface") return JointOrder::kSurface;
    if (c.joint_order == "symmetric-mean") return JointOrder::kSymmetricMean;
    throw ValidationError("unknown joint order '" + c.joint_order + "' (expected surface or symmetric-mean)");
}

ProgressCallback progress_to(const Common& c, std::ostream& err) {
    if (!c.progress) return {};
    return [&err](const ProgressEvent& e) {
        err << nlohmann::ordered_json{{"stage", e.stage},
                                      {"tuples_proposed", e.tuples_proposed},
                                      {"scorer_calls", e.scorer_calls},
                                      {"prune_count", e.prune_count}}
                   .dump()
            << '\n';
    };
}

void add_common(CLI::App* cmd, Common& c, bool search) {
    cmd->add_option("--scorer", c.scorer, "Scorer: mock:<table.json> or http:<url>")->envname("KGH_LM_ENDPOINT");
    cmd->add_option("--alpha", c.alpha, "Balance between joint and per-entity log-likelihood")
        ->check(CLI::Range(0.0, 1.0));
    cmd->add_option("--joint-order", c.joint_order, "Joint log-likelihood order: surface or symmetric-mean");
    cmd->add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
    if (search) cmd->add_flag("--progress", c.progress, "Print progress events to stderr as JSON lines");
}

int cmd_prompts(const PromptsArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    const auto relation = load_relation(a.relation);
    std::unique_ptr<Paraphraser> source;
    if (auto endpoint = http_endpoint(a.paraphraser)) {
        HttpJsonClient::Options o;
        o.endpoint = *endpoint;
        source = std::make_unique<HttpParaphraser>(o);
    } else {
        source = std::make_unique<TranscriptParaphraser>(read_transcript(a.paraphraser));
    }
    RecordingParaphraser recorder(*source);
    auto options = a.collect;
    options.seed = a.seed;
    const auto collected = collect_prompts(relation, recorder, options);
    if (!a.record.empty()) write_transcript(recorder.transcript(), a.record);
    if (collected.status != CollectStatus::kComplete) {
        err << "warning: " << collected.warning << " (" << to_string(collected.status) << ")\n";
    }
    const auto scorer = make_scorer(c);
    auto set = weight_prompts(collected.prompts, relation, *scorer, c.alpha, a.tau, joint_order(c));
    set.rng_seed = a.seed;
    write_prompts(set, a.out);
    out << "wrote " << set.size() << " prompts to " << a.out << '\n';
    return collected.status == CollectStatus::kServiceFailure ? kService : kOk;
}

int cmd_harvest(const HarvestArgs& a, const Common& c, std::ostream& out, std::ostream& err) {
    const auto relation = load_relation(a.relation);
    const auto prompts = read_prompts(a.prompts);
    if (prompts.relation != relation.name || prompts.arity != relation.arity) {
        throw ValidationError("prompt set " + a.prompts + " is for relation '" + prompts.relation +
                              "', not '" + relation.name + "'");
    }
    SearchConfig config;
    config.max_candidates = a.max_candidates;
    config.lmax = a.lmax;
    config.entity_cap = a.entity_cap;
    config.alpha = c.alpha;
    config.threshold = ThresholdPolicy::parse(a.top);
    config.joint_order = joint_order(c);
    config.pruning = !a.no_pruning;
    config.workers = c.workers;
    validate(config);

    const auto scorer = make_scorer(c);
    const auto progress = progress_to(c, err);
    const auto p_hash = proposal_hash(config, scorer->info().scorer_id);
    const auto pr_hash = prompt_hash(prompts);

    std::vector<Candidate> candidates;
    if (!a.resume.empty()) {
        auto cp = read_checkpoint(a.resume);
        if (cp.proposal_hash != p_hash || cp.prompt_hash != pr_hash) {
            throw ValidationError("checkpoint " + a.resume +
                                  " was made with a different prompt set, scorer, --max-candidates or --lmax");
        }
        if (!cp.complete) throw ValidationError("checkpoint " + a.resume + " holds an aborted search");
        candidates = std::move(cp.candidates);
    } else {
        ProposalResult proposal;
        try {
            proposal = propose_candidates(prompts, *scorer, config, progress);
        } catch (const SearchAborted& e) {
            if (!a.checkpoint.empty()) {
                write_checkpoint({p_hash, pr_hash, false, e.partial().candidates}, a.checkpoint);
                err << "partial checkpoint written to " << a.checkpoint << '\n';
            }
            std::rethrow_exception(e.cause());
        }
        if (!a.checkpoint.empty()) write_checkpoint({p_hash, pr_hash, true, proposal.candidates}, a.checkpoint);
        candidates = std::move(proposal.candidates);
    }
    const auto kg = rescore_and_select(relation, candidates, prompts, *scorer, config, progress);
    write_kg(kg, a.out);
    out << "wrote " << kg.tuples.size() << " tuples from " << candidates.size() << " candidates to " << a.out << '\n';
    return kOk;
}

int cmd_eval(const EvalArgs& a, const Common& c, std::ostream& out, std::ostream&) {
    auto samples = read_positives(a.positives);
    if (samples.empty()) throw ValidationError(a.positives + " holds no positives");
    NegativeOptions neg;
    neg.corrupt_relations = !a.no_relation_corruption;
    neg.max_retries = a.max_retries;
    auto negatives = generate_negatives(samples, a.seed, neg);
    samples.insert(samples.end(), negatives.begin(), negatives.end());

    std::string method = a.method;
    if (!a.external.empty()) {
        apply_external_scores(samples, read_external_scores(a.external));
        method = "external";
    } else {
        const auto m = parse_scoring_method(a.method);
        std::map<std::string, WeightedPromptSet> sets;
        for (const auto& path : a.prompts) {
            auto s = read_prompts(path);
            auto name = s.relation;
            if (!sets.emplace(name, std::move(s)).second) {
                throw ValidationError("two prompt sets given for relation '" + name + "'");
            }
        }
        const auto scorer = make_scorer(c);
        score_samples(samples, m, sets, *scorer, c.alpha, c.workers, joint_order(c));
    }
    const auto curve = pr_curve(samples);
    write_file(a.out, curve_csv(curve));
    const auto summary_path = a.summary.empty() ? a.out + ".summary.json" : a.summary;
    const auto summary = curve_summary(curve, method, a.seed);
    write_file(summary_path, summary);
    out << summary;
    return kOk;
}

int cmd_stats(const StatsArgs& a, std::ostream& out) {
    const auto kg = read_kg(a.kg);
    std::optional<std::set<std::string>> ref;
    if (!a.reference.empty()) ref = read_entity_set(a.reference);
    const auto text = kg_stats(kg, ref ? &*ref : nullptr).to_json().dump(2) + "\n";
    if (a.out.empty()) {
        out << text;
    } else {
        write_file(a.out, text);
    }
    return kOk;
}

int exit_code_for(std::exception_ptr e, std::ostream& err) {
    try {
        std::rethrow_exception(e);
    } catch (const HarvestError& h) {
        err << "error in " << h.stage() << ": ";
        return exit_code_for(h.cause(), err);
    } catch (const SearchAborted& s) {
        return exit_code_for(s.cause(), err);
    } catch (const ValidationError& x) {
        err << "error: " << x.what() << '\n';
        return kInvalid;
    } catch (const ParseError& x) {
        err << "error: " << x.what() << '\n';
        return kInvalid;
    } catch (const ServiceError& x) {
        err << "service error: " << x.what() << '\n';
        return kService;
    } catch (const ProtocolError& x) {
        err << "protocol error: " << x.what() << '\n';
        return kProtocol;
    } catch (const std::exception& x) {
        err << "internal error: " << x.what() << '\n';
        return kInternal;
    }
}

} // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Harvest knowledge graphs from masked language models", "kgh"};
    app.require_subcommand(1);
    app.fallthrough();
    app.set_config("--config", "", "TOML file with flag defaults ([prompts], [harvest], ... sections)");

    Common common;

    PromptsArgs pa;
    auto* prompts = app.add_subcommand("prompts", "Collect paraphrased prompts and weight them");
    prompts->add_option("--relation", pa.relation, "Relation file")->required();
    prompts->add_option("--paraphraser", pa.paraphraser, "Transcript file or http:<url>")->required();
    prompts->add_option("--out", pa.out, "Output prompt-set file")->required();
    prompts->add_option("--seed", pa.seed, "Random seed");
    prompts->add_option("--min-count", pa.collect.min_count, "Stop once this many prompts are collected")
        ->check(CLI::PositiveNumber);
    prompts->add_option("--max-rounds", pa.collect.max_rounds, "Paraphrasing rounds")->check(CLI::PositiveNumber);
    prompts->add_option("--n-per-call", pa.collect.n_per_call, "Paraphrases requested per sentence")
        ->check(CLI::PositiveNumber);
    prompts->add_option("--min-distance", pa.collect.min_distance, "Minimum token edit distance between prompts")
        ->check(CLI::PositiveNumber);
    prompts->add_option("--tau", pa.tau, "Softmax temperature for prompt weights")->check(CLI::PositiveNumber);
    prompts->add_option("--record", pa.record, "Write the paraphrase exchanges to this transcript file");
    add_common(prompts, common, false);

    HarvestArgs ha;
    auto* harvest = app.add_subcommand("harvest", "Search and rescore entity tuples into a knowledge graph");
    harvest->add_option("--relation", ha.relation, "Relation file")->required();
    harvest->add_option("--prompts", ha.prompts, "Prompt-set file")->required();
    harvest->add_option("--out", ha.out, "Output knowledge-graph file")->required();
    harvest->add_option("--top", ha.top, "top-half | base-k:K[:FACTOR] | top-k:K | none");
    harvest->add_option("--max-candidates", ha.max_candidates, "Tuples kept by the proposal search");
    harvest->add_option("--lmax", ha.lmax, "Maximum tokens per entity");
    harvest->add_option("--entity-cap", ha.entity_cap, "Maximum occurrences of one entity in the output");
    harvest->add_option("--checkpoint", ha.checkpoint, "Write proposal candidates here");
    harvest->add_option("--resume", ha.resume, "Skip the search and reselect from this checkpoint");
    harvest->add_flag("--no-pruning", ha.no_pruning, "Disable search pruning");
    add_common(harvest, common, true);

    EvalArgs ea;
    auto* eval = app.add_subcommand("eval", "Precision-recall evaluation against corrupted negatives");
    eval->add_option("--positives", ea.positives, "TSV of relation and entities")->required();
    eval->add_option("--prompts", ea.prompts, "Prompt-set file, one per relation");
    eval->add_option("--method", ea.method, "human | top1 | multi");
    eval->add_option("--external", ea.external, "Score with a tuple_id<TAB>score file instead");
    eval->add_option("--seed", ea.seed, "Random seed for negative sampling");
    eval->add_option("--out", ea.out, "Output curve CSV")->required();
    eval->add_option("--summary", ea.summary, "Summary JSON path (default: <out>.summary.json)");
    eval->add_flag("--no-relation-corruption", ea.no_relation_corruption, "Only corrupt entities");
    eval->add_option("--max-retries", ea.max_retries, "Redraws allowed per negative")->check(CLI::PositiveNumber);
    add_common(eval, common, false);

    StatsArgs sa;
    auto* stats = app.add_subcommand("stats", "Report size, diversity and novelty of a knowledge graph");
    stats->add_option("--kg", sa.kg, "Knowledge-graph file")->required();
    stats->add_option("--reference", sa.reference, "Reference entity list, one per line");
    stats->add_option("--out", sa.out, "Write the report here instead of stdout");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kInvalid;
    }

    try {
        if (*prompts) return cmd_prompts(pa, common, out, err);
        if (*harvest) return cmd_harvest(ha, common, out, err);
        if (*eval) {
            if (ea.external.empty() && ea.prompts.empty()) {
                throw ValidationError("eval needs --prompts or --external");
            }
            return cmd_eval(ea, common, out, err);
        }
        return cmd_stats(sa, out);
    } catch (...) {
        return exit_code_for(std::current_exception(), err);
    }
}

} // namespace kgh::cli
