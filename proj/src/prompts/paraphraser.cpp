#include "kgh/paraphraser.hpp"

#include "kgh/error.hpp"
#include "kgh/io.hpp"

namespace kgh {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<TranscriptRecord> read_transcript(const std::filesystem::path& path) {
    const auto origin = path.string();
    const auto doc = parse_json(read_file(path), origin);
    if (!doc.is_array()) throw ParseError(origin + ": transcript must be a list of {request, response} records");
    std::vector<TranscriptRecord> out;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& rec = doc[i];
        try {
            TranscriptRecord r;
            r.sentence = rec.at("request").at("sentence").get<std::string>();
            r.n = rec.at("request").value("n", 0);
            r.paraphrases = rec.at("response").at("paraphrases").get<std::vector<std::string>>();
            out.push_back(std::move(r));
        } catch (const json::exception& e) {
            throw ParseError(origin + ": record " + std::to_string(i) + ": " + e.what());
        }
    }
    return out;
}

void write_transcript(const std::vector<TranscriptRecord>& records, const std::filesystem::path& path) {
    ordered_json doc = ordered_json::array();
    for (const auto& r : records) {
        doc.push_back({{"request", {{"sentence", r.sentence}, {"n", r.n}}}, {"response", {{"paraphrases", r.paraphrases}}}});
    }
    write_file(path, doc.dump(2) + "\n");
}

TranscriptParaphraser::TranscriptParaphraser(std::vector<TranscriptRecord> records) {
    for (auto& r : records) responses_[r.sentence].push_back(std::move(r.paraphrases));
}

TranscriptParaphraser TranscriptParaphraser::from_file(const std::filesystem::path& path) {
    return TranscriptParaphraser(read_transcript(path));
}

std::vector<std::string> TranscriptParaphraser::paraphrase(const std::string& sentence, int /*n*/) {
    std::lock_guard lock(mu_);
    auto it = responses_.find(sentence);
    if (it == responses_.end()) throw ServiceError("transcript has no record for '" + sentence + "'");
    auto& cur = cursor_[sentence];
    const auto& out = it->second[std::min(cur, it->second.size() - 1)];
    ++cur;
    return out;
}

HttpParaphraser::HttpParaphraser(HttpJsonClient::Options options)
    : client_(std::make_unique<HttpJsonClient>(std::move(options))) {}

std::vector<std::string> HttpParaphraser::paraphrase(const std::string& sentence, int n) {
    const json resp = client_->post("/v1/paraphrase", json{{"sentence", sentence}, {"n", n}});
    try {
        return resp.at("paraphrases").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed /v1/paraphrase response: ") + e.what());
    }
}

std::vector<std::string> RecordingParaphraser::paraphrase(const std::string& sentence, int n) {
    auto out = inner_.paraphrase(sentence, n);
    std::lock_guard lock(mu_);
    records_.push_back({sentence, n, out});
    return out;
}

std::vector<TranscriptRecord> RecordingParaphraser::transcript() const {
    std::lock_guard lock(mu_);
    return records_;
}

} // namespace kgh
