#pragma once

// On-disk formats: relation definitions, prompt sets, knowledge graphs and
// the stats report. All documents are JSON; knowledge graphs are JSON lines.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "kgh/relation.hpp"
#include "json.hpp"

namespace kgh {

inline constexpr int kKgFormatVersion = 1;

// Rounds to 12 significant decimal digits, the precision every score is
// stored with on disk.
double quantize(double x);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t h);

nlohmann::ordered_json relation_to_json(const RelationSchema& relation);
RelationSchema relation_from_json(const nlohmann::ordered_json& doc, std::string_view origin);
RelationSchema load_relation(const std::filesystem::path& path);

nlohmann::ordered_json prompts_to_json(const WeightedPromptSet& prompts);
WeightedPromptSet prompts_from_json(const nlohmann::ordered_json& doc, std::string_view origin);
void write_prompts(const WeightedPromptSet& prompts, const std::filesystem::path& path);
WeightedPromptSet read_prompts(const std::filesystem::path& path);
std::string prompt_hash(const WeightedPromptSet& prompts);

// Writes one header line and one record per tuple. Refuses graphs that break
// the KnowledgeGraph invariants.
void write_kg(const KnowledgeGraph& kg, const std::filesystem::path& path);
std::string kg_to_string(const KnowledgeGraph& kg);
KnowledgeGraph read_kg(const std::filesystem::path& path);
KnowledgeGraph kg_from_string(std::string_view text, std::string_view origin);

struct StatsReport {
    std::size_t tuples = 0;
    std::size_t diversity = 0;
    std::optional<double> novelty;

    nlohmann::ordered_json to_json() const;
};

StatsReport kg_stats(const KnowledgeGraph& kg, const std::set<std::string>* reference = nullptr);
std::set<std::string> read_entity_set(const std::filesystem::path& path);

// File helpers shared by the loaders. Both throw kgh::Error on I/O failure.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
nlohmann::ordered_json parse_json(std::string_view text, std::string_view origin);

} // namespace kgh
