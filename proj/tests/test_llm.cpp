#include <catch2/catch_amalgamated.hpp>

#include "deeper/llm.hpp"

using namespace deeper;

TEST_CASE("scripted mock returns canned completions deterministically", "[llm]") {
    llm::ScriptedMock mock;
    std::vector<llm::Message> messages = {{"system", "sys"}, {"user", "plan this"}};
    mock.register_completion_for(llm::Purpose::planning, messages, "canned plan");

    llm::GenerationRequest req;
    req.purpose = llm::Purpose::planning;
    req.messages = messages;
    CHECK(mock.chat_complete(req) == "canned plan");
    CHECK(mock.chat_complete(req) == "canned plan");  // determinism

    // cosmetic whitespace differences share the canonical digest
    llm::GenerationRequest spaced = req;
    spaced.messages[1].content = "  plan    this ";
    CHECK(mock.chat_complete(spaced) == "canned plan");
}

TEST_CASE("unregistered digests are hard errors", "[llm]") {
    llm::ScriptedMock mock;
    llm::GenerationRequest req;
    req.purpose = llm::Purpose::planning;
    req.messages = {{"user", "never registered"}};
    try {
        mock.chat_complete(req);
        FAIL("expected hard error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::not_found);
    }
    CHECK_THROWS_AS(mock.embed("never registered"), Error);
}

TEST_CASE("purpose tags partition the script space", "[llm]") {
    llm::ScriptedMock mock;
    std::vector<llm::Message> messages = {{"user", "same text"}};
    mock.register_completion_for(llm::Purpose::planning, messages, "planner view");
    mock.register_completion_for(llm::Purpose::judge, messages, "judge view");

    llm::GenerationRequest req;
    req.messages = messages;
    req.purpose = llm::Purpose::planning;
    CHECK(mock.chat_complete(req) == "planner view");
    req.purpose = llm::Purpose::judge;
    CHECK(mock.chat_complete(req) == "judge view");
}

TEST_CASE("conflicting registrations are rejected, identical ones tolerated", "[llm]") {
    llm::ScriptedMock mock;
    std::vector<llm::Message> messages = {{"user", "x"}};
    mock.register_completion_for(llm::Purpose::planning, messages, "a");
    CHECK_NOTHROW(mock.register_completion_for(llm::Purpose::planning, messages, "a"));
    CHECK_THROWS_AS(mock.register_completion_for(llm::Purpose::planning, messages, "b"), Error);
}

TEST_CASE("mock embeddings are registered per text digest", "[llm]") {
    llm::ScriptedMock mock(768);
    std::vector<double> v(768, 0.5);
    mock.register_embedding("Some evidence text", v);
    CHECK(mock.embed("Some evidence text") == v);
    CHECK(mock.embed("some  evidence   text") == v);  // canonicalized
    CHECK(mock.embed("Some evidence text") == mock.embed("Some evidence text"));

    std::vector<double> wrong(512, 0.5);
    CHECK_THROWS_AS(mock.register_embedding("other", wrong), Error);
}

TEST_CASE("dimension mismatch from a provider is a protocol error", "[llm]") {
    // a provider whose raw payload disagrees with its declared dimension
    class BadProvider final : public llm::EmbeddingProvider {
    public:
        std::vector<double> embed(const std::string&) override {
            return check(std::vector<double>(512, 0.1));
        }
        std::size_t dimension() const override { return 768; }
        std::string name() const override { return "bad"; }
    };
    BadProvider bad;
    try {
        bad.embed("x");
        FAIL("expected protocol error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::protocol);
    }
}

TEST_CASE("json block extraction tolerates prose and nesting", "[llm]") {
    auto j = llm::extract_json_block("Sure! Here it is: {\"a\": [1, 2, {\"b\": \"x}y\"}]} done");
    CHECK(j.at("a").at(2).at("b") == "x}y");

    auto arr = llm::extract_json_block("prefix [1, 2, 3] suffix");
    CHECK(arr == json::array({1, 2, 3}));

    CHECK_THROWS_AS(llm::extract_json_block("no json here"), Error);
    CHECK_THROWS_AS(llm::extract_json_block("{broken"), Error);
}

TEST_CASE("chat_json reprompts once on parse failure", "[llm]") {
    class FlakyJson final : public llm::ChatProvider {
    public:
        std::string chat_complete(const llm::GenerationRequest& req) override {
            ++calls;
            if (calls == 1) return "sorry, no json";
            // the reprompt must carry the earlier exchange
            REQUIRE(req.messages.size() >= 3);
            return "{\"ok\": true}";
        }
        std::string name() const override { return "flaky"; }
        int calls = 0;
    };
    FlakyJson flaky;
    llm::GenerationRequest req;
    req.messages = {{"user", "emit json"}};
    auto j = llm::chat_json(flaky, req);
    CHECK(j.at("ok") == true);
    CHECK(flaky.calls == 2);
}

TEST_CASE("script files round-trip through dump and load", "[llm]") {
    llm::ScriptedMock source;
    std::vector<llm::Message> messages = {{"user", "question"}};
    source.register_completion_for(llm::Purpose::synthesis, messages, "an answer");
    source.register_embedding("text", std::vector<double>(768, 0.25));

    llm::ScriptedMock loaded;
    loaded.load_script(source.dump_script());

    llm::GenerationRequest req;
    req.purpose = llm::Purpose::synthesis;
    req.messages = messages;
    CHECK(loaded.chat_complete(req) == "an answer");
    CHECK(loaded.embed("text") == std::vector<double>(768, 0.25));
}

TEST_CASE("script files accept prompt-keyed entries", "[llm]") {
    llm::ScriptedMock mock;
    mock.load_script(json{
        {"completions", json::array({json{{"purpose", "planning"},
                                          {"prompt", "decompose the question"},
                                          {"completion", "done"}}})}});
    llm::GenerationRequest req;
    req.purpose = llm::Purpose::planning;
    req.messages = {{"user", "decompose the question"}};
    CHECK(mock.chat_complete(req) == "done");
}
