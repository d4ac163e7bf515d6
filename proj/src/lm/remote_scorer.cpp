#include "kgh/remote_scorer.hpp"

#include <cmath>

#include "kgh/error.hpp"
#include "kgh/simd/kernels.hpp"
#include "kgh/wire.hpp"

namespace kgh {

using nlohmann::json;

RemoteScorer::RemoteScorer(RemoteScorerOptions options) : options_(std::move(options)) {
    if (options_.batch_size == 0) throw ValidationError("remote batch size must be positive");
    client_ = std::make_unique<HttpJsonClient>(HttpJsonClient::Options{
        options_.endpoint, options_.connections, options_.timeout, options_.retries});
    info_ = wire::info_from_json(client_->get("/v1/info"));
}

std::vector<TokenSeq> RemoteScorer::tokenize_batch(std::span<const std::string> texts) const {
    for (const auto& t : texts) {
        if (t.empty()) throw ValidationError("cannot tokenize empty text");
    }
    if (texts.empty()) return {};
    const json resp = client_->post("/v1/tokenize", json{{"texts", std::vector<std::string>(texts.begin(), texts.end())}});
    try {
        auto out = resp.at("tokens").get<std::vector<TokenSeq>>();
        if (out.size() != texts.size()) throw ProtocolError("/v1/tokenize returned the wrong number of sequences");
        return out;
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed /v1/tokenize response: ") + e.what());
    }
}

std::vector<std::string> RemoteScorer::detokenize_batch(std::span<const TokenSeq> seqs) const {
    if (seqs.empty()) return {};
    const json resp = client_->post("/v1/detokenize", json{{"tokens", std::vector<TokenSeq>(seqs.begin(), seqs.end())}});
    try {
        auto out = resp.at("texts").get<std::vector<std::string>>();
        if (out.size() != seqs.size()) throw ProtocolError("/v1/detokenize returned the wrong number of texts");
        return out;
    } catch (const json::exception& e) {
        throw ProtocolError(std::string("malformed /v1/detokenize response: ") + e.what());
    }
}

TokenSeq RemoteScorer::tokenize(std::string_view text) const {
    const std::string t(text);
    return tokenize_batch(std::span<const std::string>(&t, 1)).front();
}

std::string RemoteScorer::detokenize(std::span<const TokenId> tokens) const {
    const TokenSeq seq(tokens.begin(), tokens.end());
    return detokenize_batch(std::span<const TokenSeq>(&seq, 1)).front();
}

LogProbMatrix RemoteScorer::token_logprobs(std::span<const MaskedQuery> batch) const {
    if (batch.empty()) throw ValidationError("token_logprobs needs a nonempty batch");
    const auto v = static_cast<std::size_t>(info_.vocab_size);
    for (const auto& q : batch) {
        validate_query(q, info_.lmax);
        for (const auto& st : q.slots) {
            for (auto id : st.tokens) {
                if (id < 0 || static_cast<std::size_t>(id) >= v) {
                    throw ValidationError("token id " + std::to_string(id) + " out of vocabulary");
                }
            }
        }
    }
    LogProbMatrix out(batch.size(), v);
    for (std::size_t start = 0; start < batch.size(); start += options_.batch_size) {
        const std::size_t end = std::min(batch.size(), start + options_.batch_size);
        json items = json::array();
        for (std::size_t i = start; i < end; ++i) items.push_back(wire::query_to_json(batch[i]));
        const json resp = client_->post("/v1/logprobs", json{{"mode", "full"}, {"items", std::move(items)}});
        const json* dists = nullptr;
        if (resp.is_object() && resp.contains("distributions")) dists = &resp.at("distributions");
        if (dists == nullptr || !dists->is_array() || dists->size() != end - start) {
            throw ProtocolError("/v1/logprobs returned the wrong number of distributions");
        }
        for (std::size_t i = start; i < end; ++i) {
            const json& row_json = (*dists)[i - start];
            if (!row_json.is_array() || row_json.size() != v) {
                throw ProtocolError("/v1/logprobs row has " + std::to_string(row_json.size()) + " entries, expected " +
                                    std::to_string(v));
            }
            auto row = out.row(i);
            for (std::size_t k = 0; k < v; ++k) {
                const json& x = row_json[k];
                if (!x.is_number()) throw ProtocolError("/v1/logprobs row contains a non-number");
                row[k] = x.get<double>();
            }
            const double lse = simd::log_sum_exp(row);
            if (!std::isfinite(lse) || std::abs(lse) > 1e-4) {
                throw ProtocolError("/v1/logprobs row does not normalize (logsumexp = " + std::to_string(lse) + ")");
            }
            for (auto& x : row) x -= lse;
        }
    }
    return out;
}

} // namespace kgh
