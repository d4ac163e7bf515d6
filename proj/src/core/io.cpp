#include "kgh/io.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "kgh/error.hpp"

namespace kgh {

using nlohmann::ordered_json;

double quantize(double x) {
    if (!std::isfinite(x)) return x;
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", x);
    return std::strtod(buf, nullptr);
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open '" + path.string() + "' for reading");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view contents) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw Error("write to '" + path.string() + "' failed");
}

ordered_json parse_json(std::string_view text, std::string_view origin) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string(origin) + ": " + e.what());
    }
}

namespace {

const ordered_json& field(const ordered_json& doc, const char* name, std::string_view origin) {
    if (!doc.is_object()) throw ParseError(std::string(origin) + ": expected a JSON object");
    auto it = doc.find(name);
    if (it == doc.end()) throw ParseError(std::string(origin) + ": missing field '" + name + "'");
    return *it;
}

std::string string_field(const ordered_json& doc, const char* name, std::string_view origin) {
    const auto& v = field(doc, name, origin);
    if (!v.is_string()) throw ParseError(std::string(origin) + ": field '" + name + "' must be a string");
    return v.get<std::string>();
}

double number_field(const ordered_json& doc, const char* name, std::string_view origin) {
    const auto& v = field(doc, name, origin);
    if (!v.is_number()) throw ParseError(std::string(origin) + ": field '" + name + "' must be a number");
    return v.get<double>();
}

std::int64_t integer_field(const ordered_json& doc, const char* name, std::string_view origin) {
    const auto& v = field(doc, name, origin);
    if (!v.is_number_integer()) throw ParseError(std::string(origin) + ": field '" + name + "' must be an integer");
    return v.get<std::int64_t>();
}

std::vector<std::string> entity_list(const ordered_json& v, const std::string& what) {
    if (!v.is_array()) throw ParseError(what + " must be a list of strings");
    std::vector<std::string> out;
    for (const auto& e : v) {
        if (!e.is_string()) throw ParseError(what + " must be a list of strings");
        out.push_back(e.get<std::string>());
    }
    return out;
}

ordered_json score_json(double x) { return quantize(x); }

} // namespace

ordered_json relation_to_json(const RelationSchema& relation) {
    ordered_json seeds = ordered_json::array();
    for (const auto& s : relation.seed_tuples) seeds.push_back(s.entities);
    return ordered_json{{"name", relation.name},
                        {"arity", relation.arity},
                        {"prompt", relation.initial_prompt.text()},
                        {"seeds", std::move(seeds)}};
}

RelationSchema relation_from_json(const ordered_json& doc, std::string_view origin) {
    RelationSchema r;
    r.name = string_field(doc, "name", origin);
    r.arity = static_cast<int>(integer_field(doc, "arity", origin));
    r.initial_prompt = PromptTemplate(string_field(doc, "prompt", origin));
    const auto& seeds = field(doc, "seeds", origin);
    if (!seeds.is_array()) throw ParseError(std::string(origin) + ": field 'seeds' must be a list of entity lists");
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        auto ents = entity_list(seeds[i], std::string(origin) + ": field 'seeds[" + std::to_string(i) + "]'");
        r.seed_tuples.emplace_back(std::move(ents));
    }
    validate(r);
    return r;
}

RelationSchema load_relation(const std::filesystem::path& path) {
    const auto origin = path.string();
    return relation_from_json(parse_json(read_file(path), origin), origin);
}

ordered_json prompts_to_json(const WeightedPromptSet& set) {
    ordered_json prompts = ordered_json::array();
    for (const auto& p : set.prompts) {
        prompts.push_back({{"text", p.prompt.text()}, {"weight", p.weight}, {"score", p.mean_score}});
    }
    return ordered_json{{"relation", set.relation}, {"arity", set.arity}, {"prompts", std::move(prompts)},
                        {"tau", set.tau},           {"alpha", set.alpha}, {"rng_seed", set.rng_seed}};
}

WeightedPromptSet prompts_from_json(const ordered_json& doc, std::string_view origin) {
    WeightedPromptSet set;
    set.relation = string_field(doc, "relation", origin);
    set.arity = static_cast<int>(integer_field(doc, "arity", origin));
    set.tau = number_field(doc, "tau", origin);
    set.alpha = number_field(doc, "alpha", origin);
    const auto& seed = field(doc, "rng_seed", origin);
    if (!seed.is_number_unsigned() && !seed.is_number_integer()) {
        throw ParseError(std::string(origin) + ": field 'rng_seed' must be an integer");
    }
    set.rng_seed = seed.get<std::uint64_t>();
    const auto& prompts = field(doc, "prompts", origin);
    if (!prompts.is_array()) throw ParseError(std::string(origin) + ": field 'prompts' must be a list");
    for (const auto& p : prompts) {
        WeightedPrompt wp;
        wp.prompt = PromptTemplate(string_field(p, "text", origin));
        wp.weight = number_field(p, "weight", origin);
        wp.mean_score = p.contains("score") ? number_field(p, "score", origin) : 0.0;
        set.prompts.push_back(std::move(wp));
    }
    validate(set);
    return set;
}

void write_prompts(const WeightedPromptSet& prompts, const std::filesystem::path& path) {
    validate(prompts);
    write_file(path, prompts_to_json(prompts).dump(2) + "\n");
}

WeightedPromptSet read_prompts(const std::filesystem::path& path) {
    const auto origin = path.string();
    return prompts_from_json(parse_json(read_file(path), origin), origin);
}

std::string prompt_hash(const WeightedPromptSet& prompts) { return hex64(fnv1a64(prompts_to_json(prompts).dump())); }

std::string kg_to_string(const KnowledgeGraph& kg) {
    validate(kg);
    ordered_json header{{"format", "kgh-kg"},
                        {"version", kKgFormatVersion},
                        {"relation", relation_to_json(kg.relation)},
                        {"arity", kg.relation.arity},
                        {"scorer_id", kg.provenance.scorer_id},
                        {"prompt_hash", kg.provenance.prompt_hash},
                        {"config_hash", kg.provenance.config_hash},
                        {"selection", kg.provenance.selection}};
    std::string out = header.dump() + "\n";
    for (const auto& t : kg.tuples) {
        ordered_json per_prompt = ordered_json::array();
        for (const auto& s : t.per_prompt) per_prompt.push_back(ordered_json::array({s.prompt, score_json(s.compatibility)}));
        ordered_json rec{{"entities", t.tuple.entities},
                         {"consistency", score_json(t.consistency)},
                         {"mtl", score_json(t.proposal_mtl)},
                         {"per_prompt", std::move(per_prompt)}};
        out += rec.dump();
        out += '\n';
    }
    return out;
}

void write_kg(const KnowledgeGraph& kg, const std::filesystem::path& path) { write_file(path, kg_to_string(kg)); }

KnowledgeGraph kg_from_string(std::string_view text, std::string_view origin) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line)) throw ParseError(std::string(origin) + ": missing header record");
    const auto header = parse_json(line, std::string(origin) + ":1");
    const std::string hdr_origin = std::string(origin) + ": header";
    if (string_field(header, "format", hdr_origin) != "kgh-kg") {
        throw ParseError(hdr_origin + ": not a knowledge graph file");
    }
    const auto version = integer_field(header, "version", hdr_origin);
    if (version != kKgFormatVersion) {
        throw ParseError(hdr_origin + ": schema version " + std::to_string(version) + " is not supported (expected " +
                         std::to_string(kKgFormatVersion) + ")");
    }
    KnowledgeGraph kg;
    kg.relation = relation_from_json(field(header, "relation", hdr_origin), hdr_origin);
    if (integer_field(header, "arity", hdr_origin) != kg.relation.arity) {
        throw ParseError(hdr_origin + ": arity disagrees with relation definition");
    }
    kg.provenance.scorer_id = string_field(header, "scorer_id", hdr_origin);
    kg.provenance.prompt_hash = string_field(header, "prompt_hash", hdr_origin);
    kg.provenance.config_hash = string_field(header, "config_hash", hdr_origin);
    kg.provenance.selection = string_field(header, "selection", hdr_origin);

    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        const std::string rec_origin = std::string(origin) + ":" + std::to_string(lineno);
        const auto rec = parse_json(line, rec_origin);
        ScoredTuple t;
        t.tuple = EntityTuple(entity_list(field(rec, "entities", rec_origin), rec_origin + ": field 'entities'"));
        t.consistency = number_field(rec, "consistency", rec_origin);
        t.proposal_mtl = number_field(rec, "mtl", rec_origin);
        const auto& pp = field(rec, "per_prompt", rec_origin);
        if (!pp.is_array()) throw ParseError(rec_origin + ": field 'per_prompt' must be a list");
        for (const auto& entry : pp) {
            if (!entry.is_array() || entry.size() != 2 || !entry[0].is_number_integer() || !entry[1].is_number()) {
                throw ParseError(rec_origin + ": field 'per_prompt' entries must be [index, score]");
            }
            t.per_prompt.push_back({entry[0].get<int>(), entry[1].get<double>()});
        }
        kg.tuples.push_back(std::move(t));
    }
    validate(kg);
    return kg;
}

KnowledgeGraph read_kg(const std::filesystem::path& path) { return kg_from_string(read_file(path), path.string()); }

ordered_json StatsReport::to_json() const {
    ordered_json doc{{"tuples", tuples}, {"diversity", diversity}, {"novelty", nullptr}};
    if (novelty) doc["novelty"] = quantize(*novelty);
    return doc;
}

StatsReport kg_stats(const KnowledgeGraph& kg, const std::set<std::string>* reference) {
    StatsReport report;
    report.tuples = kg.tuples.size();
    std::set<std::string> unique;
    for (const auto& t : kg.tuples) unique.insert(t.tuple.entities.begin(), t.tuple.entities.end());
    report.diversity = unique.size();
    if (reference != nullptr && !unique.empty()) {
        std::size_t absent = 0;
        for (const auto& e : unique) absent += reference->count(e) == 0 ? 1 : 0;
        report.novelty = static_cast<double>(absent) / static_cast<double>(unique.size());
    }
    return report;
}

std::set<std::string> read_entity_set(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::set<std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        auto e = trim(line);
        if (!e.empty()) out.insert(std::move(e));
    }
    return out;
}

} // namespace kgh
