#include "kgh/http_client.hpp"

#include <condition_variable>
#include <functional>
#include <mutex>
#include <vector>

#include "httplib.h"
#include "kgh/error.hpp"

namespace kgh {

class HttpJsonClient::Pool {
public:
    Pool(const Options& o) {
        for (std::size_t i = 0; i < std::max<std::size_t>(1, o.connections); ++i) {
            auto c = std::make_unique<httplib::Client>(o.endpoint);
            if (!c->is_valid()) throw ServiceError("invalid endpoint '" + o.endpoint + "'");
            c->set_connection_timeout(o.timeout);
            c->set_read_timeout(o.timeout);
            c->set_write_timeout(o.timeout);
            c->set_keep_alive(true);
            free_.push_back(c.get());
            owned_.push_back(std::move(c));
        }
    }

    httplib::Client* acquire() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return !free_.empty(); });
        auto* c = free_.back();
        free_.pop_back();
        return c;
    }

    void release(httplib::Client* c) {
        {
            std::lock_guard lock(mu_);
            free_.push_back(c);
        }
        cv_.notify_one();
    }

private:
    std::mutex mu_;
    std::condition_variable cv_;
    std::vector<httplib::Client*> free_;
    std::vector<std::unique_ptr<httplib::Client>> owned_;
};

namespace {

class Lease {
public:
    explicit Lease(auto& pool) : release_([&pool](httplib::Client* c) { pool.release(c); }), client_(pool.acquire()) {}
    ~Lease() { release_(client_); }
    Lease(const Lease&) = delete;
    Lease& operator=(const Lease&) = delete;
    httplib::Client* operator->() const { return client_; }

private:
    std::function<void(httplib::Client*)> release_;
    httplib::Client* client_;
};

nlohmann::json decode(const httplib::Result& res, const std::string& what) {
    if (res->status == 503) throw ServiceError(what + ": service unavailable (503)");
    if (res->status != 200) {
        throw ProtocolError(what + ": HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200));
    }
    try {
        return nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::parse_error& e) {
        throw ProtocolError(what + ": response is not JSON: " + e.what());
    }
}

} // namespace

HttpJsonClient::HttpJsonClient(Options options) : options_(std::move(options)) {
    pool_ = std::make_unique<Pool>(options_);
}

HttpJsonClient::~HttpJsonClient() = default;

nlohmann::json HttpJsonClient::get(const std::string& path) const {
    const std::string what = "GET " + options_.endpoint + path;
    for (int attempt = 0;; ++attempt) {
        Lease c(*pool_);
        auto res = c->Get(path);
        if (res) return decode(res, what);
        if (attempt >= options_.retries) {
            throw ServiceError(what + ": " + httplib::to_string(res.error()));
        }
    }
}

nlohmann::json HttpJsonClient::post(const std::string& path, const nlohmann::json& body) const {
    const std::string what = "POST " + options_.endpoint + path;
    const std::string payload = body.dump();
    for (int attempt = 0;; ++attempt) {
        Lease c(*pool_);
        auto res = c->Post(path, payload, "application/json");
        if (res) return decode(res, what);
        if (attempt >= options_.retries) {
            throw ServiceError(what + ": " + httplib::to_string(res.error()));
        }
    }
}

} // namespace kgh
