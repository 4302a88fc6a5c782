#pragma once

// Live network backends. Kept in one header so offline builds of the engine
// never need to instantiate them.

#include <httplib.h>

#include "deeper/llm.hpp"
#include "deeper/transport.hpp"

namespace deeper::lit {

inline std::string url_encode(std::string_view s) {
    static const char* hex = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0xF]);
        }
    }
    return out;
}

inline std::string query_string(const std::map<std::string, std::string>& params) {
    std::string out;
    char sep = '?';
    for (const auto& [k, v] : params) {
        out += sep;
        out += url_encode(k);
        out += '=';
        out += url_encode(v);
        sep = '&';
    }
    return out;
}

/// Real HTTP dialer. Optionally records every response as a replay fixture,
/// which is how the committed fixtures were produced.
class LiveTransport final : public Transport {
public:
    LiveTransport() = default;

    explicit LiveTransport(std::filesystem::path record_dir)
        : record_dir_(std::move(record_dir)) {}

    HttpResponse send(const HttpRequest& request) override {
        httplib::Client client(request.host);
        client.set_follow_location(true);
        client.set_connection_timeout(10);
        client.set_read_timeout(30);
        std::string target = request.path + query_string(request.params);
        httplib::Result result =
            request.method == "POST"
                ? client.Post(target, request.body, "application/json")
                : client.Get(target);
        if (!result) {
            fail(ErrorCode::transport,
                 "dial failed: " + request.host + target + " (" +
                     httplib::to_string(result.error()) + ")");
        }
        HttpResponse response{result->status, result->body};
        if (!record_dir_.empty()) {
            ReplayTransport::record(record_dir_, request, response);
        }
        return response;
    }

    bool offline() const override { return false; }

private:
    std::filesystem::path record_dir_;
};

}  // namespace deeper::lit

namespace deeper::llm {

struct ProviderEndpoint {
    std::string base_url;      // scheme://host
    std::string path;          // e.g. /v1/chat/completions
    std::string model;         // provider-side model name
    std::string api_key_env;   // env var holding the credential
};

/// OpenAI-style chat-completions endpoint speaking JSON over HTTP. Any
/// provider with that wire shape can fill a slot.
class HttpChatProvider final : public ChatProvider {
public:
    explicit HttpChatProvider(ProviderEndpoint endpoint) : endpoint_(std::move(endpoint)) {}

    std::string chat_complete(const GenerationRequest& request) override {
        require(!request.messages.empty(), ErrorCode::precondition, "chat_complete: no messages");
        json messages = json::array();
        for (const auto& m : request.messages) {
            messages.push_back({{"role", m.role}, {"content", m.content}});
        }
        json body{{"model", endpoint_.model},
                  {"messages", messages},
                  {"max_tokens", request.max_output_tokens}};
        if (request.sampling == Sampling::deterministic) body["temperature"] = 0.0;

        auto res = post(body);
        try {
            return res.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const json::exception& e) {
            fail(ErrorCode::protocol, name() + ": malformed completion payload: " + e.what());
        }
    }

    std::string name() const override { return "http:" + endpoint_.model; }

private:
    json post(const json& body) {
        httplib::Client client(endpoint_.base_url);
        client.set_connection_timeout(10);
        client.set_read_timeout(120);
        httplib::Headers headers;
        if (!endpoint_.api_key_env.empty()) {
            const char* key = std::getenv(endpoint_.api_key_env.c_str());
            require(key != nullptr, ErrorCode::precondition,
                    "credential env var unset: " + endpoint_.api_key_env);
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        auto result = client.Post(endpoint_.path, headers, body.dump(), "application/json");
        if (!result || result->status < 200 || result->status >= 300) {
            fail(ErrorCode::unavailable,
                 name() + " request failed" +
                     (result ? " with status " + std::to_string(result->status) : ""));
        }
        return json::parse(result->body);
    }

    ProviderEndpoint endpoint_;
};

/// OpenAI-style embeddings endpoint.
class HttpEmbeddingProvider final : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(ProviderEndpoint endpoint, std::size_t dimension)
        : endpoint_(std::move(endpoint)), dimension_(dimension) {}

    std::vector<double> embed(const std::string& text) override {
        require(!text.empty(), ErrorCode::precondition, "embed: empty text");
        json body{{"model", endpoint_.model}, {"input", text}};
        httplib::Client client(endpoint_.base_url);
        client.set_connection_timeout(10);
        client.set_read_timeout(120);
        httplib::Headers headers;
        if (!endpoint_.api_key_env.empty()) {
            const char* key = std::getenv(endpoint_.api_key_env.c_str());
            require(key != nullptr, ErrorCode::precondition,
                    "credential env var unset: " + endpoint_.api_key_env);
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
        auto result = client.Post(endpoint_.path, headers, body.dump(), "application/json");
        if (!result || result->status < 200 || result->status >= 300) {
            fail(ErrorCode::unavailable,
                 name() + " request failed" +
                     (result ? " with status " + std::to_string(result->status) : ""));
        }
        try {
            json parsed = json::parse(result->body);
            return check(parsed.at("data").at(0).at("embedding").get<std::vector<double>>());
        } catch (const json::exception& e) {
            fail(ErrorCode::protocol, name() + ": malformed embedding payload: " + e.what());
        }
    }

    std::size_t dimension() const override { return dimension_; }
    std::string name() const override { return "http:" + endpoint_.model; }

private:
    ProviderEndpoint endpoint_;
    std::size_t dimension_;
};

}  // namespace deeper::llm
