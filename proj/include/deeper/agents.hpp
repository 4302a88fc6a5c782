#pragma once

#include <array>

#include "deeper/core.hpp"

namespace deeper::agents {

enum class Community { query_expansion, evidence_retrieval, llm_response };

inline const char* to_string(Community c) {
    switch (c) {
        case Community::query_expansion: return "query-expansion";
        case Community::evidence_retrieval: return "evidence-retrieval";
        case Community::llm_response: return "llm-response";
    }
    return "unknown";
}

inline Community parse_community(std::string_view s) {
    if (s == "query-expansion") return Community::query_expansion;
    if (s == "evidence-retrieval") return Community::evidence_retrieval;
    if (s == "llm-response") return Community::llm_response;
    fail(ErrorCode::parse, "unknown community: " + std::string(s));
}

struct WorkerInfo {
    std::string name;
    Community community;
    std::string scope;  // one-line functional description
};

/// The thirteen registered worker APIs, grouped into their communities.
inline const std::vector<WorkerInfo>& worker_registry() {
    static const std::vector<WorkerInfo> registry = {
        {"get_normalized_entity", Community::query_expansion,
         "map a free-text concept onto knowledge-graph entities by exact or similarity match"},
        {"get_tail_entity_by_relation", Community::query_expansion,
         "list entities linked from a head entity by a given relation"},
        {"get_tail_entity_by_type", Community::query_expansion,
         "list one-hop neighbors of a head entity having a given entity type"},
        {"get_relation_type", Community::query_expansion,
         "rank the relations that directly connect an entity pair"},
        {"get_shortest_paths", Community::query_expansion,
         "find minimum-hop paths between an entity pair"},
        {"get_shortest_path_by_entity_type", Community::query_expansion,
         "find minimum-hop paths between an entity pair passing through a given entity type"},
        {"get_pubmed_abstracts", Community::evidence_retrieval,
         "search PubMed for article titles and abstracts"},
        {"get_pubmed_full_text", Community::evidence_retrieval,
         "fetch open-access full text from PubMed Central by PMID"},
        {"get_article_citation_details", Community::evidence_retrieval,
         "fetch citation counts and publication year for a PMID"},
        {"get_pubmed_citation_style", Community::evidence_retrieval,
         "produce a formatted citation for a PMID"},
        {"get_wikipedia_introduction", Community::evidence_retrieval,
         "fetch the introductory summary of a concept page"},
        {"get_clinical_trials", Community::evidence_retrieval,
         "search registered clinical studies by condition or intervention"},
        {"gemini_response", Community::llm_response,
         "generate a provisional answer for a sub-question with the fallback model"},
    };
    return registry;
}

inline bool is_registered_worker(std::string_view name) {
    const auto& reg = worker_registry();
    return std::any_of(reg.begin(), reg.end(),
                       [&](const WorkerInfo& w) { return w.name == name; });
}

inline Community community_of(std::string_view worker) {
    for (const auto& w : worker_registry()) {
        if (w.name == worker) return w.community;
    }
    fail(ErrorCode::not_found, "unknown worker: " + std::string(worker));
}

inline std::vector<std::string> workers_in(Community community) {
    std::vector<std::string> out;
    for (const auto& w : worker_registry()) {
        if (w.community == community) out.push_back(w.name);
    }
    return out;
}

inline constexpr const char* kCapabilityDocVersion = "1";

/// The capability document handed to the assignment model: every worker with
/// its community and one-line scope.
inline std::string capability_document() {
    std::string doc = "Agent capability document (version ";
    doc += kCapabilityDocVersion;
    doc += ")\n\n";
    for (Community c : {Community::query_expansion, Community::evidence_retrieval,
                        Community::llm_response}) {
        doc += std::string("Community \"") + to_string(c) + "\":\n";
        for (const auto& w : worker_registry()) {
            if (w.community != c) continue;
            doc += "  - " + w.name + ": " + w.scope + "\n";
        }
        doc += "\n";
    }
    return doc;
}

}  // namespace deeper::agents
