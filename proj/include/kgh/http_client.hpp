#pragma once

#include <chrono>
#include <memory>
#include <string>

#include "json.hpp"

namespace kgh {

// JSON-over-HTTP client with a bounded connection pool; each connection has
// at most one request in flight and callers block while the pool is empty.
//
// Connection failures are retried, then surface as ServiceError (as does
// 503). Any other non-200 status or an unparseable body is a ProtocolError.
class HttpJsonClient {
public:
    struct Options {
        std::string endpoint; // e.g. "http://127.0.0.1:8000"
        std::size_t connections = 4;
        std::chrono::seconds timeout{120};
        int retries = 2;
    };

    explicit HttpJsonClient(Options options);
    ~HttpJsonClient();
    HttpJsonClient(const HttpJsonClient&) = delete;
    HttpJsonClient& operator=(const HttpJsonClient&) = delete;

    nlohmann::json get(const std::string& path) const;
    nlohmann::json post(const std::string& path, const nlohmann::json& body) const;

    const std::string& endpoint() const noexcept { return options_.endpoint; }

private:
    class Pool;

    Options options_;
    std::unique_ptr<Pool> pool_;
};

} // namespace kgh
