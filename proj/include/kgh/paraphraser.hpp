#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "kgh/http_client.hpp"

namespace kgh {

// Produces sentences with the same meaning as `sentence`. Throws
// ServiceError when the backing service fails.
class Paraphraser {
public:
    virtual ~Paraphraser() = default;
    virtual std::vector<std::string> paraphrase(const std::string& sentence, int n) = 0;
};

struct TranscriptRecord {
    std::string sentence;
    int n = 0;
    std::vector<std::string> paraphrases;

    friend bool operator==(const TranscriptRecord&, const TranscriptRecord&) = default;
};

// Transcript file: [{"request": {"sentence", "n"}, "response": {"paraphrases": [...]}}, ...]
std::vector<TranscriptRecord> read_transcript(const std::filesystem::path& path);
void write_transcript(const std::vector<TranscriptRecord>& records, const std::filesystem::path& path);

// Replays recorded responses verbatim, keyed by request sentence. Several
// records for one sentence are replayed in order; the last one repeats.
class TranscriptParaphraser final : public Paraphraser {
public:
    explicit TranscriptParaphraser(std::vector<TranscriptRecord> records);
    static TranscriptParaphraser from_file(const std::filesystem::path& path);

    std::vector<std::string> paraphrase(const std::string& sentence, int n) override;

private:
    std::mutex mu_;
    std::map<std::string, std::vector<std::vector<std::string>>> responses_;
    std::map<std::string, std::size_t> cursor_;
};

// POST /v1/paraphrase {sentence, n} -> {paraphrases: [...]}
class HttpParaphraser final : public Paraphraser {
public:
    explicit HttpParaphraser(HttpJsonClient::Options options);
    std::vector<std::string> paraphrase(const std::string& sentence, int n) override;

private:
    std::unique_ptr<HttpJsonClient> client_;
};

// Forwards to another paraphraser and keeps a transcript of every exchange.
class RecordingParaphraser final : public Paraphraser {
public:
    explicit RecordingParaphraser(Paraphraser& inner) : inner_(inner) {}
    std::vector<std::string> paraphrase(const std::string& sentence, int n) override;
    std::vector<TranscriptRecord> transcript() const;

private:
    Paraphraser& inner_;
    mutable std::mutex mu_;
    std::vector<TranscriptRecord> records_;
};

} // namespace kgh
