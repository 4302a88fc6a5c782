#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "deeper/transport.hpp"

using namespace deeper;

namespace {

std::filesystem::path temp_dir(const std::string& tag) {
    auto dir = std::filesystem::temp_directory_path() /
               ("deeper-test-" + tag + "-" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

/// Transport that stamps the virtual time of every upstream call.
class TimestampingTransport final : public lit::Transport {
public:
    explicit TimestampingTransport(std::shared_ptr<Clock> clock) : clock_(std::move(clock)) {}

    lit::HttpResponse send(const lit::HttpRequest&) override {
        times.push_back(clock_->now());
        return {200, "ok"};
    }

    bool offline() const override { return true; }

    std::vector<std::chrono::milliseconds> times;

private:
    std::shared_ptr<Clock> clock_;
};

}  // namespace

TEST_CASE("request normalization sorts params", "[transport]") {
    lit::HttpRequest a{"GET", "https://h", "/p", {{"b", "2"}, {"a", "1"}}, ""};
    lit::HttpRequest b{"GET", "https://h", "/p", {{"a", "1"}, {"b", "2"}}, ""};
    CHECK(a.normalized() == b.normalized());
    CHECK(a.digest() == b.digest());
}

TEST_CASE("rate limiter bounds any burst under a fake clock", "[transport]") {
    auto clock = std::make_shared<FakeClock>();
    auto limiter = std::make_shared<lit::RateLimiter>(clock);
    limiter->set_rate("https://eutils.ncbi.nlm.nih.gov", 3.0);

    auto upstream = std::make_shared<TimestampingTransport>(clock);
    lit::DisciplinedTransport transport(upstream, limiter, nullptr);

    lit::HttpRequest req{"GET", "https://eutils.ncbi.nlm.nih.gov", "/x", {}, ""};
    for (int i = 0; i < 30; ++i) {
        req.params["i"] = std::to_string(i);
        transport.send(req);
    }
    REQUIRE(upstream->times.size() == 30);
    // sliding 1-second window: never more than 3 calls
    for (std::size_t i = 0; i < upstream->times.size(); ++i) {
        std::size_t in_window = 0;
        for (std::size_t j = i; j < upstream->times.size(); ++j) {
            if (upstream->times[j] - upstream->times[i] < std::chrono::milliseconds(1000)) {
                ++in_window;
            }
        }
        CHECK(in_window <= 3);
    }
}

TEST_CASE("independent endpoints have independent budgets", "[transport]") {
    auto clock = std::make_shared<FakeClock>();
    lit::RateLimiter limiter(clock);
    limiter.set_rate("a", 1.0);
    limiter.set_rate("b", 1.0);
    limiter.acquire("a");
    auto t0 = clock->now();
    limiter.acquire("b");  // b is fresh, no wait
    CHECK(clock->now() == t0);
    limiter.acquire("a");  // a must wait out its spacing
    CHECK(clock->now() >= t0 + std::chrono::milliseconds(999));
}

TEST_CASE("cache: identical requests within TTL hit upstream once", "[transport]") {
    auto dir = temp_dir("cache");
    auto clock = std::make_shared<FakeClock>(std::chrono::milliseconds{1'000'000});
    auto limiter = std::make_shared<lit::RateLimiter>(clock);
    auto cache = std::make_shared<lit::ResponseCache>(dir, clock);
    auto upstream = std::make_shared<TimestampingTransport>(clock);
    lit::DisciplinedTransport transport(upstream, limiter, cache);

    lit::HttpRequest req{"GET", "https://h", "/p", {{"q", "x"}}, ""};
    auto first = transport.send(req);
    auto second = transport.send(req);
    CHECK(first.body == second.body);
    CHECK(upstream->times.size() == 1);
    CHECK(transport.upstream_calls() == 1);

    SECTION("expired entries refetch") {
        clock->advance(std::chrono::hours(24 * 8));  // past the 7-day TTL
        transport.send(req);
        CHECK(upstream->times.size() == 2);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("replay transport serves recorded fixtures and never dials", "[transport]") {
    auto dir = temp_dir("replay");
    lit::HttpRequest req{"GET", "https://h", "/p", {{"q", "x"}}, ""};
    lit::ReplayTransport::record(dir, req, {200, "recorded-body"});

    lit::ReplayTransport replay(dir);
    auto res = replay.send(req);
    CHECK(res.status == 200);
    CHECK(res.body == "recorded-body");
    CHECK(replay.hits() == 1);

    lit::HttpRequest other{"GET", "https://h", "/p", {{"q", "y"}}, ""};
    CHECK_THROWS_AS(replay.send(other), Error);
    std::filesystem::remove_all(dir);
}

TEST_CASE("failing transport refuses to dial", "[transport]") {
    lit::FailingTransport failing;
    lit::HttpRequest req{"GET", "https://h", "/p", {}, ""};
    try {
        failing.send(req);
        FAIL("expected transport error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::transport);
        CHECK(std::string(e.what()).find("refused to dial") != std::string::npos);
    }
}

TEST_CASE("fallback transport counts primary misses", "[transport]") {
    auto dir = temp_dir("fallback");
    lit::HttpRequest hit{"GET", "https://h", "/hit", {}, ""};
    lit::ReplayTransport::record(dir, hit, {200, "ok"});
    auto replay = std::make_shared<lit::ReplayTransport>(dir);
    auto failing = std::make_shared<lit::FailingTransport>();
    lit::FallbackTransport chain(replay, failing);

    CHECK(chain.send(hit).body == "ok");
    CHECK(chain.fallback_reached() == 0);

    lit::HttpRequest miss{"GET", "https://h", "/miss", {}, ""};
    CHECK_THROWS_AS(chain.send(miss), Error);
    CHECK(chain.fallback_reached() == 1);
    std::filesystem::remove_all(dir);
}

TEST_CASE("retry policy retries 5xx and gives up", "[transport]") {
    class FlakyTransport final : public lit::Transport {
    public:
        lit::HttpResponse send(const lit::HttpRequest&) override {
            ++calls;
            if (calls < 3) return {503, "unavailable"};
            return {200, "finally"};
        }
        bool offline() const override { return true; }
        int calls = 0;
    };
    auto clock = std::make_shared<FakeClock>();
    auto limiter = std::make_shared<lit::RateLimiter>(clock);
    auto flaky = std::make_shared<FlakyTransport>();
    lit::DisciplinedTransport transport(flaky, limiter, nullptr, {3, std::chrono::milliseconds(10)});

    lit::HttpRequest req{"GET", "https://h", "/p", {}, ""};
    CHECK(transport.send(req).body == "finally");
    CHECK(flaky->calls == 3);

    auto always = std::make_shared<lit::FailingTransport>();
    lit::DisciplinedTransport doomed(always, limiter, nullptr, {2, std::chrono::milliseconds(10)});
    CHECK_THROWS_AS(doomed.send(req), Error);
}
