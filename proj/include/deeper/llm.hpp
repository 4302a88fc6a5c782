#pragma once

#include <cmath>
#include <map>
#include <set>

#include "deeper/core.hpp"

namespace deeper::llm {

enum class Purpose { planning, interpretation, synthesis, judge, fallback };

inline const char* to_string(Purpose p) {
    switch (p) {
        case Purpose::planning: return "planning";
        case Purpose::interpretation: return "interpretation";
        case Purpose::synthesis: return "synthesis";
        case Purpose::judge: return "judge";
        case Purpose::fallback: return "fallback";
    }
    return "unknown";
}

inline Purpose parse_purpose(std::string_view s) {
    if (s == "planning") return Purpose::planning;
    if (s == "interpretation") return Purpose::interpretation;
    if (s == "synthesis") return Purpose::synthesis;
    if (s == "judge") return Purpose::judge;
    if (s == "fallback") return Purpose::fallback;
    fail(ErrorCode::parse, "unknown purpose tag: " + std::string(s));
}

enum class Sampling { deterministic, provider_default };

struct Message {
    std::string role;
    std::string content;
};

struct GenerationRequest {
    std::vector<Message> messages;
    Sampling sampling = Sampling::deterministic;
    int max_output_tokens = 4096;
    Purpose purpose = Purpose::planning;
};

/// Digest of the whitespace-normalized message sequence. Mock scripts key on
/// this, so they survive cosmetic edits only when canonical text is
/// unchanged.
inline std::string prompt_digest(const std::vector<Message>& messages) {
    std::string canon;
    for (const auto& m : messages) {
        canon += m.role;
        canon += '\x1e';
        canon += normalize_text(m.content);
        canon += '\x1f';
    }
    return hex_digest(canon);
}

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string chat_complete(const GenerationRequest& request) = 0;
    virtual std::string name() const = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<double> embed(const std::string& text) = 0;
    virtual std::size_t dimension() const = 0;
    virtual std::string name() const = 0;

protected:
    /// Every provider funnels its raw vector through here so the dimension
    /// invariant cannot be bypassed.
    std::vector<double> check(std::vector<double> v) const {
        require(v.size() == dimension(), ErrorCode::protocol,
                name() + ": expected " + std::to_string(dimension()) +
                    " components, got " + std::to_string(v.size()));
        for (double x : v) {
            require(std::isfinite(x), ErrorCode::protocol, name() + ": non-finite component");
        }
        return v;
    }
};

inline constexpr std::size_t kDefaultEmbeddingDim = 768;

/// Deterministic scripted backend for offline runs. Lookups are total for
/// registered digests; an unregistered digest is a hard error rather than a
/// fabricated completion.
class ScriptedMock final : public ChatProvider, public EmbeddingProvider {
public:
    explicit ScriptedMock(std::size_t dim = kDefaultEmbeddingDim) : dim_(dim) {}

    void register_completion(Purpose purpose, const std::string& digest,
                             const std::string& completion) {
        auto key = script_key(purpose, digest);
        auto it = completions_.find(key);
        require(it == completions_.end() || it->second == completion, ErrorCode::validation,
                "conflicting completion registered for digest " + digest);
        completions_[key] = completion;
    }

    void register_completion_for(Purpose purpose, const std::vector<Message>& messages,
                                 const std::string& completion) {
        register_completion(purpose, prompt_digest(messages), completion);
    }

    void register_embedding(const std::string& text, std::vector<double> vector) {
        require(vector.size() == dim_, ErrorCode::validation,
                "registered embedding has wrong dimension");
        auto digest = hex_digest(normalize_text(text));
        auto it = embeddings_.find(digest);
        require(it == embeddings_.end() || it->second == vector, ErrorCode::validation,
                "conflicting embedding registered for text digest " + digest);
        embeddings_[digest] = std::move(vector);
    }

    /// Scripts that should fail (provider-down scenarios).
    void register_failure(Purpose purpose, const std::string& digest) {
        failures_.insert(script_key(purpose, digest));
    }

    void fail_all(bool on) { fail_all_ = on; }

    std::string chat_complete(const GenerationRequest& request) override {
        require(!request.messages.empty(), ErrorCode::precondition, "chat_complete: no messages");
        require(!fail_all_, ErrorCode::unavailable, "mock provider scripted to fail");
        auto digest = prompt_digest(request.messages);
        auto key = script_key(request.purpose, digest);
        if (failures_.count(key)) {
            fail(ErrorCode::unavailable, "mock provider scripted to fail for digest " + digest);
        }
        auto it = completions_.find(key);
        require(it != completions_.end(), ErrorCode::not_found,
                std::string("unregistered mock digest ") + digest + " (purpose " +
                    to_string(request.purpose) + ")");
        ++calls_;
        return it->second;
    }

    std::vector<double> embed(const std::string& text) override {
        require(!text.empty(), ErrorCode::precondition, "embed: empty text");
        require(!fail_all_, ErrorCode::unavailable, "mock provider scripted to fail");
        auto digest = hex_digest(normalize_text(text));
        auto it = embeddings_.find(digest);
        require(it != embeddings_.end(), ErrorCode::not_found,
                "unregistered mock embedding digest " + digest);
        return check(it->second);
    }

    std::size_t dimension() const override { return dim_; }
    std::string name() const override { return "scripted-mock"; }
    std::size_t completion_calls() const { return calls_; }

    /// Script file: {"completions": [{purpose, digest? | prompt?, role?,
    /// completion}], "embeddings": [{text, vector}]}. A prompt entry is a
    /// single user message unless role says otherwise.
    void load_script(const json& j) {
        for (const auto& e : j.value("completions", json::array())) {
            auto purpose = parse_purpose(e.at("purpose").get<std::string>());
            std::string digest;
            if (e.contains("digest")) {
                digest = e.at("digest").get<std::string>();
                require(digest.size() == 16, ErrorCode::validation,
                        "malformed digest: " + digest);
            } else {
                std::vector<Message> msgs;
                if (e.contains("messages")) {
                    for (const auto& m : e.at("messages")) {
                        msgs.push_back({m.at("role").get<std::string>(),
                                        m.at("content").get<std::string>()});
                    }
                } else {
                    msgs.push_back({e.value("role", "user"), e.at("prompt").get<std::string>()});
                }
                digest = prompt_digest(msgs);
            }
            register_completion(purpose, digest, e.at("completion").get<std::string>());
        }
        for (const auto& e : j.value("embeddings", json::array())) {
            if (e.contains("text_digest")) {
                embeddings_[e.at("text_digest").get<std::string>()] =
                    e.at("vector").get<std::vector<double>>();
            } else {
                register_embedding(e.at("text").get<std::string>(),
                                   e.at("vector").get<std::vector<double>>());
            }
        }
    }

    /// Inverse of load_script for the digest-keyed entries.
    json dump_script() const {
        json completions = json::array();
        for (const auto& [key, completion] : completions_) {
            auto colon = key.find(':');
            completions.push_back(json{{"purpose", key.substr(0, colon)},
                                       {"digest", key.substr(colon + 1)},
                                       {"completion", completion}});
        }
        json embeddings = json::array();
        for (const auto& [digest, vector] : embeddings_) {
            embeddings.push_back(json{{"text_digest", digest}, {"vector", vector}});
        }
        return json{{"completions", completions}, {"embeddings", embeddings}};
    }

private:
    static std::string script_key(Purpose purpose, const std::string& digest) {
        return std::string(to_string(purpose)) + ":" + digest;
    }

    std::size_t dim_;
    std::map<std::string, std::string> completions_;
    std::map<std::string, std::vector<double>> embeddings_;
    std::set<std::string> failures_;
    bool fail_all_ = false;
    std::size_t calls_ = 0;
};

/// Extract the first balanced JSON object (or array) from a completion.
/// Models are asked for JSON blocks; this tolerates prose around them.
inline json extract_json_block(const std::string& text) {
    for (std::size_t start = 0; start < text.size(); ++start) {
        char open = text[start];
        if (open != '{' && open != '[') continue;
        char close = open == '{' ? '}' : ']';
        int depth = 0;
        bool in_string = false;
        for (std::size_t i = start; i < text.size(); ++i) {
            char c = text[i];
            if (in_string) {
                if (c == '\\') {
                    ++i;
                } else if (c == '"') {
                    in_string = false;
                }
                continue;
            }
            if (c == '"') {
                in_string = true;
            } else if (c == open) {
                ++depth;
            } else if (c == close) {
                --depth;
                if (depth == 0) {
                    auto candidate = text.substr(start, i - start + 1);
                    json parsed = json::parse(candidate, nullptr, false);
                    if (!parsed.is_discarded()) return parsed;
                    break;  // balanced but invalid; scan for the next opener
                }
            }
        }
    }
    fail(ErrorCode::parse, "no valid JSON block in completion");
}

/// Ask for JSON; on a parse failure, reprompt once with the parse complaint
/// appended, then give up.
inline json chat_json(ChatProvider& provider, GenerationRequest request) {
    std::string completion = provider.chat_complete(request);
    try {
        return extract_json_block(completion);
    } catch (const Error&) {
        request.messages.push_back({"assistant", completion});
        request.messages.push_back(
            {"user", "The previous reply contained no valid JSON block. Reply again with only "
                     "the JSON."});
        completion = provider.chat_complete(request);
        return extract_json_block(completion);  // second failure propagates
    }
}

}  // namespace deeper::llm
