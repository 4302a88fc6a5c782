#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>

#include "deeper/core.hpp"

namespace deeper::lit {

struct HttpRequest {
    std::string method = "GET";
    std::string host;                         // scheme://authority
    std::string path;                         // /api/...
    std::map<std::string, std::string> params;  // sorted by key (std::map)
    std::string body;                         // POST payloads

    /// Canonical form: endpoint plus sorted query params. Cache keys and
    /// fixture hashes are derived from this, so param order never matters.
    std::string normalized() const {
        std::string out = method + " " + host + path;
        char sep = '?';
        for (const auto& [k, v] : params) {
            out += sep;
            out += k;
            out += '=';
            out += v;
            sep = '&';
        }
        if (!body.empty()) {
            out += '\n';
            out += body;
        }
        return out;
    }

    std::string digest() const { return hex_digest(normalized()); }

    json to_json() const {
        return json{{"method", method},
                    {"host", host},
                    {"path", path},
                    {"params", params},
                    {"body", body}};
    }
};

struct HttpResponse {
    int status = 0;
    std::string body;

    bool ok() const { return status >= 200 && status < 300; }
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse send(const HttpRequest& request) = 0;
    virtual bool offline() const = 0;
};

/// Enforces a minimum spacing of 1/rate seconds between calls per endpoint
/// key, which bounds any window to the configured requests/second. Shared and
/// internally synchronized; time flows through the injected clock so tests
/// can pin it.
class RateLimiter {
public:
    explicit RateLimiter(std::shared_ptr<Clock> clock) : clock_(std::move(clock)) {}

    void set_rate(const std::string& endpoint, double requests_per_second) {
        require(requests_per_second > 0.0, ErrorCode::precondition,
                "rate limit must be positive");
        std::lock_guard lock(mu_);
        rates_[endpoint] = requests_per_second;
    }

    /// Blocks (via the clock) until a call to the endpoint is permitted.
    void acquire(const std::string& endpoint) {
        std::unique_lock lock(mu_);
        double rate = default_rate_;
        if (auto it = rates_.find(endpoint); it != rates_.end()) rate = it->second;
        auto spacing = std::chrono::milliseconds(static_cast<std::int64_t>(1000.0 / rate));
        auto now = clock_->now();
        auto& next_ok = next_allowed_[endpoint];
        if (now < next_ok) {
            auto wait = next_ok - now;
            lock.unlock();
            clock_->sleep_for(std::chrono::duration_cast<std::chrono::milliseconds>(wait));
            lock.lock();
            now = clock_->now();
        }
        next_ok = std::max(next_ok, now) + spacing;
    }

    Clock& clock() { return *clock_; }

private:
    std::shared_ptr<Clock> clock_;
    std::mutex mu_;
    std::map<std::string, double> rates_;
    std::map<std::string, std::chrono::milliseconds> next_allowed_;
    double default_rate_ = 1.0;
};

/// Stub that refuses to dial. Offline suites run against this to prove no
/// hidden network dependency.
class FailingTransport final : public Transport {
public:
    HttpResponse send(const HttpRequest& request) override {
        fail(ErrorCode::transport, "network disabled: refused to dial " + request.host +
                                       request.path);
    }
    bool offline() const override { return true; }
};

/// Replays recorded fixtures: one JSON file per request digest holding
/// {request, status, body, recorded_at}. A missing fixture is a transport
/// error, never a live call.
class ReplayTransport final : public Transport {
public:
    explicit ReplayTransport(std::filesystem::path dir) : dir_(std::move(dir)) {}

    HttpResponse send(const HttpRequest& request) override {
        auto path = dir_ / (request.digest() + ".json");
        std::ifstream in(path);
        if (!in.good()) {
            fail(ErrorCode::transport, "no fixture for request " + request.normalized() +
                                           " (expected " + path.string() + ")");
        }
        json j = json::parse(in);
        HttpResponse res;
        res.status = j.at("status").get<int>();
        res.body = j.at("body").get<std::string>();
        ++hits_;
        return res;
    }

    bool offline() const override { return true; }
    std::size_t hits() const { return hits_.load(); }

    /// Writes a fixture in the same layout send() reads.
    static void record(const std::filesystem::path& dir, const HttpRequest& request,
                       const HttpResponse& response, std::int64_t recorded_at = 0) {
        std::filesystem::create_directories(dir);
        json j{{"request", request.to_json()},
               {"status", response.status},
               {"body", response.body},
               {"recorded_at", recorded_at}};
        std::ofstream out(dir / (request.digest() + ".json"));
        out << j.dump(2) << '\n';
    }

private:
    std::filesystem::path dir_;
    std::atomic<std::size_t> hits_{0};
};

/// Test double with canned responses per request digest plus call counting.
/// Unlike ReplayTransport it lives purely in memory.
class StubTransport final : public Transport {
public:
    void add(const HttpRequest& request, HttpResponse response) {
        canned_[request.digest()] = std::move(response);
    }

    void add(const HttpRequest& request, int status, std::string body) {
        add(request, HttpResponse{status, std::move(body)});
    }

    HttpResponse send(const HttpRequest& request) override {
        std::lock_guard lock(mu_);
        ++calls_;
        sent_.push_back(request);
        auto it = canned_.find(request.digest());
        if (it == canned_.end()) {
            fail(ErrorCode::transport, "stub: no response for " + request.normalized());
        }
        return it->second;
    }

    bool offline() const override { return true; }

    std::size_t calls() const {
        std::lock_guard lock(mu_);
        return calls_;
    }

    std::vector<HttpRequest> sent() const {
        std::lock_guard lock(mu_);
        return sent_;
    }

private:
    mutable std::mutex mu_;
    std::map<std::string, HttpResponse> canned_;
    std::vector<HttpRequest> sent_;
    std::size_t calls_ = 0;
};

/// Serves from the primary transport; only a primary miss (transport error)
/// reaches the fallback. With a replay primary and a failing fallback this
/// proves a workload never needs anything beyond its fixtures.
class FallbackTransport final : public Transport {
public:
    FallbackTransport(std::shared_ptr<Transport> primary, std::shared_ptr<Transport> fallback)
        : primary_(std::move(primary)), fallback_(std::move(fallback)) {}

    HttpResponse send(const HttpRequest& request) override {
        try {
            return primary_->send(request);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::transport) throw;
            ++fallback_reached_;
            return fallback_->send(request);
        }
    }

    bool offline() const override { return primary_->offline() && fallback_->offline(); }
    std::size_t fallback_reached() const { return fallback_reached_.load(); }

private:
    std::shared_ptr<Transport> primary_;
    std::shared_ptr<Transport> fallback_;
    std::atomic<std::size_t> fallback_reached_{0};
};

struct CachePolicy {
    std::chrono::seconds ttl{7 * 24 * 3600};
    bool enabled = true;
};

/// Content-addressed response cache: one file per normalized request under
/// the cache directory. Within TTL a hit is byte-identical to the recorded
/// payload and costs no upstream call.
class ResponseCache {
public:
    ResponseCache(std::filesystem::path dir, std::shared_ptr<Clock> clock,
                  CachePolicy policy = {})
        : dir_(std::move(dir)), clock_(std::move(clock)), policy_(policy) {
        if (policy_.enabled) std::filesystem::create_directories(dir_);
    }

    std::optional<HttpResponse> lookup(const HttpRequest& request) {
        if (!policy_.enabled) return std::nullopt;
        std::lock_guard lock(mu_);
        auto path = entry_path(request);
        std::ifstream in(path);
        if (!in.good()) return std::nullopt;
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) return std::nullopt;
        auto recorded_at = std::chrono::seconds(j.value("recorded_at", std::int64_t{0}));
        auto now = std::chrono::duration_cast<std::chrono::seconds>(clock_->now());
        if (now - recorded_at > policy_.ttl) return std::nullopt;
        return HttpResponse{j.at("status").get<int>(), j.at("body").get<std::string>()};
    }

    void store(const HttpRequest& request, const HttpResponse& response) {
        if (!policy_.enabled) return;
        std::lock_guard lock(mu_);
        json j{{"request", request.to_json()},
               {"status", response.status},
               {"body", response.body},
               {"recorded_at", clock_->unix_seconds()}};
        std::ofstream out(entry_path(request));
        out << j.dump(2) << '\n';
    }

private:
    std::filesystem::path entry_path(const HttpRequest& request) const {
        return dir_ / (request.digest() + ".json");
    }

    std::filesystem::path dir_;
    std::shared_ptr<Clock> clock_;
    CachePolicy policy_;
    std::mutex mu_;
};

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds backoff_base{500};
};

/// Decorator stacking the client-side discipline onto any transport: cache
/// lookup, per-endpoint rate limiting, and retry with exponential backoff on
/// transport faults, 5xx and 429.
class DisciplinedTransport final : public Transport {
public:
    DisciplinedTransport(std::shared_ptr<Transport> inner, std::shared_ptr<RateLimiter> limiter,
                         std::shared_ptr<ResponseCache> cache, RetryPolicy retry = {})
        : inner_(std::move(inner)),
          limiter_(std::move(limiter)),
          cache_(std::move(cache)),
          retry_(retry) {
        require(retry_.max_attempts >= 1, ErrorCode::precondition, "max attempts must be >= 1");
    }

    HttpResponse send(const HttpRequest& request) override {
        if (cache_) {
            if (auto hit = cache_->lookup(request)) return *hit;
        }
        std::string last_error;
        for (int attempt = 1; attempt <= retry_.max_attempts; ++attempt) {
            if (attempt > 1) {
                auto backoff = retry_.backoff_base * (1 << (attempt - 2));
                limiter_->clock().sleep_for(
                    std::chrono::duration_cast<std::chrono::milliseconds>(backoff));
            }
            limiter_->acquire(request.host);
            ++upstream_calls_;
            try {
                HttpResponse res = inner_->send(request);
                if (res.status == 429 || res.status >= 500) {
                    last_error = "status " + std::to_string(res.status);
                    continue;
                }
                if (cache_ && res.ok()) cache_->store(request, res);
                return res;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::transport) throw;
                last_error = e.what();
            }
        }
        fail(ErrorCode::transport, "request failed after " + std::to_string(retry_.max_attempts) +
                                       " attempts: " + last_error);
    }

    bool offline() const override { return inner_->offline(); }
    std::size_t upstream_calls() const { return upstream_calls_.load(); }

private:
    std::shared_ptr<Transport> inner_;
    std::shared_ptr<RateLimiter> limiter_;
    std::shared_ptr<ResponseCache> cache_;
    RetryPolicy retry_;
    std::atomic<std::size_t> upstream_calls_{0};
};

}  // namespace deeper::lit
