#pragma once

#include <filesystem>
#include <fstream>

#include "deeper/collab.hpp"
#include "deeper/core.hpp"
#include "deeper/litclients.hpp"
#include "deeper/planner.hpp"

namespace deeper::engine {

struct ProviderSlotConfig {
    std::string kind = "mock";  // "mock" | "http"
    std::string base_url;
    std::string path = "/v1/chat/completions";
    std::string model;
    std::string api_key_env = "DEEPER_LLM_API_KEY";

    json to_json() const {
        return json{{"kind", kind},
                    {"base_url", base_url},
                    {"path", path},
                    {"model", model},
                    {"api_key_env", api_key_env}};
    }

    static ProviderSlotConfig from_json(const json& j) {
        ProviderSlotConfig c;
        c.kind = j.value("kind", "mock");
        require(c.kind == "mock" || c.kind == "http", ErrorCode::validation,
                "provider kind must be 'mock' or 'http', got '" + c.kind + "'");
        c.base_url = j.value("base_url", "");
        c.path = j.value("path", c.path);
        c.model = j.value("model", "");
        c.api_key_env = j.value("api_key_env", c.api_key_env);
        return c;
    }
};

/// Full engine configuration: provider slots, client policy, and pipeline
/// switches. One JSON file with sections "providers", "clients", "pipeline".
struct EngineConfig {
    // provider slots (the paper-equivalent roles: planning, interpretation,
    // synthesis/fallback, judge, embedding)
    ProviderSlotConfig planning;
    ProviderSlotConfig interpretation;
    ProviderSlotConfig synthesis;
    ProviderSlotConfig judge;
    ProviderSlotConfig embedding;
    std::size_t embedding_dimension = 768;

    lit::ClientConfig clients;

    plan::Toggles toggles;
    bool offline = true;
    int parallelism = 4;
    int k_max = plan::kDefaultMaxSubQuestions;
    collab::SourceCaps caps;
    std::string appraisal_rubric_path;
    std::string artifacts_dir = "runs";
    std::string fixtures_dir;   // replay-transport fixture directory
    std::string script_path;    // scripted-mock file for offline providers
    std::string kg_path;
    std::string kg_format = "generic-tsv";

    void validate() const {
        clients.validate();
        require(parallelism >= 1, ErrorCode::validation, "parallelism must be >= 1");
        require(k_max >= 1, ErrorCode::validation, "k_max must be >= 1");
        if (offline) {
            for (const auto* slot : {&planning, &interpretation, &synthesis, &judge, &embedding}) {
                require(slot->kind == "mock" && slot->base_url.empty(), ErrorCode::validation,
                        "offline mode forbids live provider endpoints (found kind '" +
                            slot->kind + "'" +
                            (slot->base_url.empty() ? "" : ", url " + slot->base_url) + ")");
            }
        }
        require(!artifacts_dir.empty(), ErrorCode::validation, "artifacts_dir must be set");
    }

    json to_json() const {
        return json{
            {"providers",
             {{"planning", planning.to_json()},
              {"interpretation", interpretation.to_json()},
              {"synthesis", synthesis.to_json()},
              {"judge", judge.to_json()},
              {"embedding", embedding.to_json()},
              {"embedding_dimension", embedding_dimension}}},
            {"clients",
             {{"cache_dir", clients.cache_dir},
              {"ncbi_rate", clients.ncbi_rate},
              {"ncbi_rate_keyed", clients.ncbi_rate_keyed},
              {"default_rate", clients.default_rate},
              {"use_env_api_key", clients.use_env_api_key},
              {"retry_max_attempts", clients.retry.max_attempts},
              {"retry_backoff_ms", clients.retry.backoff_base.count()}}},
            {"pipeline",
             {{"offline", offline},
              {"decompose", toggles.decompose},
              {"use_kg", toggles.use_kg},
              {"parallelism", parallelism},
              {"k_max", k_max},
              {"caps",
               {{"pubmed_per_query", caps.pubmed_per_query},
                {"trials_per_query", caps.trials_per_query},
                {"wikipedia_per_query", caps.wikipedia_per_query}}},
              {"appraisal_rubric_path", appraisal_rubric_path},
              {"artifacts_dir", artifacts_dir},
              {"fixtures_dir", fixtures_dir},
              {"script_path", script_path},
              {"kg", {{"path", kg_path}, {"format", kg_format}}}}}};
    }

    static EngineConfig from_json(const json& j) {
        EngineConfig c;
        const auto providers = j.value("providers", json::object());
        if (providers.contains("planning")) c.planning = ProviderSlotConfig::from_json(providers.at("planning"));
        if (providers.contains("interpretation")) c.interpretation = ProviderSlotConfig::from_json(providers.at("interpretation"));
        if (providers.contains("synthesis")) c.synthesis = ProviderSlotConfig::from_json(providers.at("synthesis"));
        if (providers.contains("judge")) c.judge = ProviderSlotConfig::from_json(providers.at("judge"));
        if (providers.contains("embedding")) c.embedding = ProviderSlotConfig::from_json(providers.at("embedding"));
        c.embedding_dimension = providers.value("embedding_dimension", std::size_t{768});

        const auto clients = j.value("clients", json::object());
        c.clients.cache_dir = clients.value("cache_dir", "");
        c.clients.ncbi_rate = clients.value("ncbi_rate", 3.0);
        c.clients.ncbi_rate_keyed = clients.value("ncbi_rate_keyed", 10.0);
        c.clients.default_rate = clients.value("default_rate", 1.0);
        c.clients.use_env_api_key = clients.value("use_env_api_key", true);
        c.clients.retry.max_attempts = clients.value("retry_max_attempts", 3);
        c.clients.retry.backoff_base =
            std::chrono::milliseconds(clients.value("retry_backoff_ms", std::int64_t{500}));
        if (c.clients.cache_dir.empty()) {
            if (const char* dir = std::getenv("DEEPER_CACHE_DIR")) c.clients.cache_dir = dir;
        }

        const auto pipeline = j.value("pipeline", json::object());
        c.offline = pipeline.value("offline", true);
        c.toggles.decompose = pipeline.value("decompose", true);
        c.toggles.use_kg = pipeline.value("use_kg", true);
        c.parallelism = pipeline.value("parallelism", 4);
        c.k_max = pipeline.value("k_max", plan::kDefaultMaxSubQuestions);
        const auto caps = pipeline.value("caps", json::object());
        c.caps.pubmed_per_query = caps.value("pubmed_per_query", std::size_t{20});
        c.caps.trials_per_query = caps.value("trials_per_query", std::size_t{10});
        c.caps.wikipedia_per_query = caps.value("wikipedia_per_query", std::size_t{1});
        c.appraisal_rubric_path = pipeline.value("appraisal_rubric_path", "");
        c.artifacts_dir = pipeline.value("artifacts_dir", "runs");
        c.fixtures_dir = pipeline.value("fixtures_dir", "");
        c.script_path = pipeline.value("script_path", "");
        const auto kg = pipeline.value("kg", json::object());
        c.kg_path = kg.value("path", "");
        c.kg_format = kg.value("format", "generic-tsv");
        c.validate();
        return c;
    }

    static EngineConfig load(const std::string& path) {
        std::ifstream in(path);
        require(in.good(), ErrorCode::not_found, "cannot open config file: " + path);
        json j = json::parse(in, nullptr, false);
        require(!j.is_discarded(), ErrorCode::parse, "config file is not valid JSON: " + path);
        return from_json(j);
    }

    std::string appraisal_rubric() const {
        if (appraisal_rubric_path.empty()) return collab::kDefaultAppraisalRubric;
        std::ifstream in(appraisal_rubric_path);
        require(in.good(), ErrorCode::not_found,
                "cannot open appraisal rubric: " + appraisal_rubric_path);
        std::ostringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
};

}  // namespace deeper::engine
