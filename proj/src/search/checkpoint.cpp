#include <sstream>

#include "kgh/io.hpp"
#include "kgh/search.hpp"

namespace kgh {

namespace {

constexpr const char* kFormat = "kgh-checkpoint";
constexpr int kVersion = 1;

} // namespace

void write_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
    using nlohmann::ordered_json;
    std::string out = ordered_json{{"format", kFormat},
                                   {"version", kVersion},
                                   {"proposal_hash", checkpoint.proposal_hash},
                                   {"prompt_hash", checkpoint.prompt_hash},
                                   {"complete", checkpoint.complete}}
                          .dump();
    out += '\n';
    for (const auto& c : checkpoint.candidates) {
        out += ordered_json{{"entities", c.tuple.entities}, {"tokens", c.tuple.tokens}, {"mtl", c.mtl}}.dump();
        out += '\n';
    }
    write_file(path, out);
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
    const std::string origin = path.string();
    std::istringstream in(read_file(path));
    std::string line;
    if (!std::getline(in, line)) throw ParseError(origin + ": empty checkpoint");
    Checkpoint cp;
    try {
        const auto header = parse_json(line, origin + ":1");
        if (header.value("format", "") != kFormat) throw ParseError(origin + ": not a checkpoint file");
        if (header.value("version", 0) != kVersion) {
            throw ParseError(origin + ": unsupported checkpoint version " + header.at("version").dump());
        }
        cp.proposal_hash = header.at("proposal_hash").get<std::string>();
        cp.prompt_hash = header.at("prompt_hash").get<std::string>();
        cp.complete = header.at("complete").get<bool>();
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            const auto rec = parse_json(line, origin + ":" + std::to_string(lineno));
            auto entities = rec.at("entities").get<std::vector<std::string>>();
            auto tokens = rec.at("tokens").get<std::vector<TokenSeq>>();
            if (tokens.size() != entities.size()) {
                throw ParseError(origin + ":" + std::to_string(lineno) + ": entities and tokens differ in length");
            }
            cp.candidates.push_back({EntityTuple(std::move(entities), std::move(tokens)), rec.at("mtl").get<double>()});
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(origin + ": malformed checkpoint: " + e.what());
    }
    return cp;
}

} // namespace kgh
