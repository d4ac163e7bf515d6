#pragma once

#include <memory>
#include <string>

#include "kgh/http_client.hpp"
#include "kgh/scorer.hpp"

namespace kgh {

struct RemoteScorerOptions {
    std::string endpoint;
    // Queries per /v1/logprobs request.
    std::size_t batch_size = 64;
    std::size_t connections = 4;
    std::chrono::seconds timeout{120};
    int retries = 2;
};

// Client side of the lm-service protocol (see wire.hpp). Rows that do not
// normalize within 1e-4 are a ProtocolError; accepted rows are renormalized
// exactly before they are returned.
class RemoteScorer final : public Scorer {
public:
    explicit RemoteScorer(RemoteScorerOptions options);

    const ScorerInfo& info() const override { return info_; }
    TokenSeq tokenize(std::string_view text) const override;
    std::string detokenize(std::span<const TokenId> tokens) const override;
    LogProbMatrix token_logprobs(std::span<const MaskedQuery> batch) const override;
    std::vector<TokenSeq> tokenize_batch(std::span<const std::string> texts) const override;
    std::vector<std::string> detokenize_batch(std::span<const TokenSeq> seqs) const override;

private:
    RemoteScorerOptions options_;
    std::unique_ptr<HttpJsonClient> client_;
    ScorerInfo info_;
};

} // namespace kgh
