#pragma once

#include <atomic>

#include "deeper/core.hpp"
#include "deeper/kg.hpp"
#include "deeper/litclients.hpp"
#include "deeper/llm.hpp"
#include "deeper/planner.hpp"

namespace deeper::collab {

enum class Strategy { relational, direct };

inline const char* to_string(Strategy s) {
    return s == Strategy::relational ? "relational" : "direct";
}

inline Strategy parse_strategy(std::string_view s) {
    if (s == "relational") return Strategy::relational;
    if (s == "direct") return Strategy::direct;
    fail(ErrorCode::parse, "unknown strategy: " + std::string(s));
}

struct RoutingDecision {
    int index = 1;
    Strategy strategy = Strategy::direct;
    std::string reason;

    json to_json() const {
        return json{{"i", index}, {"strategy", to_string(strategy)}, {"reason", reason}};
    }
};

struct ExpansionStep {
    std::string entity;  // entity (or head) the step started from
    std::string detail;  // relation or rendered path

    json to_json() const { return json{{"entity", entity}, {"detail", detail}}; }

    static ExpansionStep from_json(const json& j) {
        return {j.at("entity").get<std::string>(), j.at("detail").get<std::string>()};
    }
};

struct ExpandedQuery {
    std::string text;
    std::vector<ExpansionStep> steps;  // empty for directly parsed queries

    json to_json() const {
        json steps_j = json::array();
        for (const auto& s : steps) steps_j.push_back(s.to_json());
        return json{{"text", text}, {"steps", steps_j}};
    }

    static ExpandedQuery from_json(const json& j) {
        ExpandedQuery q;
        q.text = j.at("text").get<std::string>();
        for (const auto& s : j.value("steps", json::array())) {
            q.steps.push_back(ExpansionStep::from_json(s));
        }
        return q;
    }
};

struct QueryBundle {
    int index = 1;
    Strategy strategy = Strategy::direct;
    std::vector<ExpandedQuery> queries;
    bool degraded = false;  // relational route that found no usable entities

    bool has_trace() const {
        return std::any_of(queries.begin(), queries.end(),
                           [](const ExpandedQuery& q) { return !q.steps.empty(); });
    }

    void validate() const {
        require(!queries.empty(), ErrorCode::validation, "query bundle is empty");
        if (strategy == Strategy::relational && !degraded) {
            require(has_trace(), ErrorCode::validation,
                    "relational bundle carries no expansion trace");
        }
    }

    json to_json() const {
        json qs = json::array();
        for (const auto& q : queries) qs.push_back(q.to_json());
        return json{{"i", index},
                    {"strategy", to_string(strategy)},
                    {"degraded", degraded},
                    {"queries", qs}};
    }

    static QueryBundle from_json(const json& j) {
        QueryBundle b;
        b.index = j.at("i").get<int>();
        b.strategy = parse_strategy(j.at("strategy").get<std::string>());
        b.degraded = j.value("degraded", false);
        for (const auto& q : j.at("queries")) b.queries.push_back(ExpandedQuery::from_json(q));
        b.validate();
        return b;
    }
};

enum class Level { high, moderate, low };

inline const char* to_string(Level l) {
    switch (l) {
        case Level::high: return "high";
        case Level::moderate: return "moderate";
        case Level::low: return "low";
    }
    return "unknown";
}

inline Level parse_level(std::string_view s) {
    if (s == "high") return Level::high;
    if (s == "moderate") return Level::moderate;
    if (s == "low") return Level::low;
    fail(ErrorCode::parse, "unknown appraisal level: " + std::string(s));
}

struct AppraisalLabel {
    Level relevance = Level::moderate;
    Level strength = Level::moderate;
    Level quality = Level::moderate;
    bool include = false;
    std::string reason;

    void validate() const {
        require(!include || relevance != Level::low, ErrorCode::validation,
                "include decision with low relevance violates the appraisal contract");
    }

    json to_json() const {
        return json{{"relevance", to_string(relevance)},
                    {"strength", to_string(strength)},
                    {"quality", to_string(quality)},
                    {"decision", include ? "include" : "exclude"},
                    {"reason", reason}};
    }

    static AppraisalLabel from_json(const json& j) {
        AppraisalLabel l;
        l.relevance = parse_level(j.at("relevance").get<std::string>());
        l.strength = parse_level(j.at("strength").get<std::string>());
        l.quality = parse_level(j.at("quality").get<std::string>());
        auto d = j.at("decision").get<std::string>();
        require(d == "include" || d == "exclude", ErrorCode::parse,
                "unknown appraisal decision: " + d);
        l.include = d == "include";
        l.reason = j.value("reason", "");
        l.validate();
        return l;
    }
};

struct LabeledEvidence {
    lit::EvidenceItem item;
    AppraisalLabel label;

    json to_json() const { return json{{"item", item.to_json()}, {"label", label.to_json()}}; }

    static LabeledEvidence from_json(const json& j) {
        return {lit::EvidenceItem::from_json(j.at("item")),
                AppraisalLabel::from_json(j.at("label"))};
    }
};

struct RetrievalFailure {
    std::string query;
    std::string source;
    std::string error;

    json to_json() const {
        return json{{"query", query}, {"source", source}, {"error", error}};
    }
};

struct EvidenceSet {
    int index = 1;
    std::vector<LabeledEvidence> items;  // included items serialize first
    bool fallback_used = false;
    QueryBundle bundle;
    std::vector<RetrievalFailure> failures;

    std::size_t included_count() const {
        return static_cast<std::size_t>(
            std::count_if(items.begin(), items.end(),
                          [](const LabeledEvidence& e) { return e.label.include; }));
    }

    /// Included items before excluded, original order within each group.
    void normalize_order() {
        std::stable_sort(items.begin(), items.end(),
                         [](const LabeledEvidence& a, const LabeledEvidence& b) {
                             return a.label.include > b.label.include;
                         });
    }

    void validate() const {
        bool seen_excluded = false;
        bool has_llm_generated = false;
        bool has_included_db = false;
        for (const auto& e : items) {
            e.label.validate();
            e.item.validate();
            if (!e.label.include) seen_excluded = true;
            else require(!seen_excluded, ErrorCode::validation,
                         "included item serialized after an excluded one");
            if (e.item.kind == lit::EvidenceKind::llm_generated) {
                has_llm_generated = true;
            } else if (e.label.include) {
                has_included_db = true;
            }
        }
        if (has_llm_generated) {
            require(fallback_used, ErrorCode::validation,
                    "llm-generated item present without fallback_used");
            require(has_included_db, ErrorCode::validation,
                    "llm-generated item retained without a supporting database item");
        }
    }

    json to_json() const {
        json items_j = json::array();
        for (const auto& e : items) items_j.push_back(e.to_json());
        json fails = json::array();
        for (const auto& f : failures) fails.push_back(f.to_json());
        return json{{"i", index},
                    {"bundle", bundle.to_json()},
                    {"items", items_j},
                    {"fallback_used", fallback_used},
                    {"failures", fails}};
    }
};

/// Run-level counters; the ablation criteria assert on these.
struct Instrumentation {
    std::atomic<std::size_t> kg_calls{0};
    std::atomic<std::size_t> retrieval_calls{0};
    std::atomic<std::size_t> provider_calls{0};
};

// --- routing ----------------------------------------------------------------

inline std::vector<llm::Message> routing_prompt(const plan::SubQuestion& sub) {
    return {
        {"system",
         "Decide whether a biomedical sub-question needs relational reasoning over a knowledge "
         "graph (entity-to-entity associations, mechanisms, paths) or can be answered by "
         "direct literature search. Reply with a JSON object {\"strategy\": \"relational\" | "
         "\"direct\", \"reason\": one sentence}."},
        {"user", sub.text},
    };
}

/// Relational only when the query-expansion community is assigned and the KG
/// toggle is on; router failure degrades to direct.
inline RoutingDecision route_subquestion(const plan::SubQuestion& sub,
                                         const plan::AgentAssignment& assignment,
                                         const plan::Toggles& toggles,
                                         llm::ChatProvider& provider,
                                         Instrumentation* instr = nullptr) {
    RoutingDecision decision;
    decision.index = sub.index;
    if (!toggles.use_kg) {
        decision.strategy = Strategy::direct;
        decision.reason = "knowledge graph disabled";
        return decision;
    }
    if (!assignment.has_community(agents::Community::query_expansion)) {
        decision.strategy = Strategy::direct;
        decision.reason = "no query-expansion community assigned";
        return decision;
    }
    llm::GenerationRequest req;
    req.purpose = llm::Purpose::planning;
    req.sampling = llm::Sampling::deterministic;
    req.messages = routing_prompt(sub);
    try {
        if (instr) ++instr->provider_calls;
        json out = llm::chat_json(provider, req);
        decision.strategy = parse_strategy(out.at("strategy").get<std::string>());
        decision.reason = out.value("reason", "");
    } catch (const Error&) {
        decision.strategy = Strategy::direct;
        decision.reason = "router-unavailable";
    }
    return decision;
}

// --- query construction -------------------------------------------------------

inline std::vector<llm::Message> concept_prompt(const plan::SubQuestion& sub) {
    return {
        {"system",
         "Extract the biomedical concepts (drugs, genes, proteins, diseases, phenotypes) "
         "mentioned in the sub-question. Reply with a JSON object {\"concepts\": [\"...\"]}."},
        {"user", sub.text},
    };
}

/// Degraded concept extraction: quoted phrases plus capitalized terms.
inline std::vector<std::string> lexical_concepts(const std::string& text) {
    std::vector<std::string> out;
    // quoted phrases
    std::size_t pos = 0;
    while (true) {
        auto open = text.find('"', pos);
        if (open == std::string::npos) break;
        auto close = text.find('"', open + 1);
        if (close == std::string::npos) break;
        auto phrase = collapse_whitespace(text.substr(open + 1, close - open - 1));
        if (!phrase.empty()) out.push_back(phrase);
        pos = close + 1;
    }
    // capitalized words (skip a sentence-initial one only when lowercase words follow)
    std::string word;
    std::vector<std::string> words;
    for (char c : text + " ") {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') {
            word.push_back(c);
        } else {
            if (!word.empty()) words.push_back(word);
            word.clear();
        }
    }
    for (std::size_t i = 0; i < words.size(); ++i) {
        const auto& w = words[i];
        bool capitalized = std::isupper(static_cast<unsigned char>(w[0])) && w.size() >= 2;
        if (capitalized && i == 0) continue;  // sentence-initial
        if (capitalized) out.push_back(w);
    }
    return out;
}

struct ExpansionOptions {
    double similarity_threshold = kg::KnowledgeGraph::kDefaultSimilarityThreshold;
    std::size_t max_paths_per_pair = 3;
    std::size_t max_tails_per_relation = 3;
    std::size_t max_queries = 8;
};

/// Render a KG path into a search string: node names joined with AND,
/// relations appended as an optional OR group.
inline std::string render_path_query(const kg::GraphPath& path, const kg::KnowledgeGraph& graph) {
    std::string q;
    for (std::size_t i = 0; i < path.nodes.size(); ++i) {
        if (i) q += " AND ";
        q += graph.entity(path.nodes[i]).name;
    }
    if (!path.relations.empty()) {
        std::set<std::string> rels(path.relations.begin(), path.relations.end());
        q += " (";
        bool first = true;
        for (const auto& r : rels) {
            if (!first) q += " OR ";
            q += r;
            first = false;
        }
        q += ")";
    }
    return q;
}

inline std::string render_path_trace(const kg::GraphPath& path, const kg::KnowledgeGraph& graph) {
    std::string t;
    for (std::size_t i = 0; i < path.nodes.size(); ++i) {
        if (i) t += " -" + path.relations[i - 1] + "-> ";
        t += graph.entity(path.nodes[i]).name;
    }
    return t;
}

/// Relational route: extract concepts, normalize them onto the graph, expand
/// via paths between concept pairs and one-hop neighborhoods, and render
/// search strings. Falls back to a degraded direct parse when nothing
/// normalizes.
inline QueryBundle expand_queries(const plan::SubQuestion& sub, const kg::KnowledgeGraph& graph,
                                  llm::ChatProvider& provider, ExpansionOptions opts = {},
                                  Instrumentation* instr = nullptr) {
    require(!collapse_whitespace(sub.text).empty(), ErrorCode::precondition,
            "sub-question text empty");
    QueryBundle bundle;
    bundle.index = sub.index;
    bundle.strategy = Strategy::relational;

    std::vector<std::string> concepts;
    try {
        llm::GenerationRequest req;
        req.purpose = llm::Purpose::planning;
        req.sampling = llm::Sampling::deterministic;
        req.messages = concept_prompt(sub);
        if (instr) ++instr->provider_calls;
        json out = llm::chat_json(provider, req);
        concepts = out.at("concepts").get<std::vector<std::string>>();
    } catch (const Error&) {
        concepts = lexical_concepts(sub.text);
    }

    std::vector<kg::KGEntity> entities;
    std::set<int> seen;
    for (const auto& c : concepts) {
        if (collapse_whitespace(c).empty()) continue;
        if (instr) ++instr->kg_calls;
        auto matches = graph.get_normalized_entity(c, opts.similarity_threshold);
        if (matches.empty()) continue;
        const auto& best = matches.front().entity;
        if (seen.insert(best.index).second) entities.push_back(best);
    }

    if (entities.empty()) {
        // degrade to direct parsing, flagged
        bundle.degraded = true;
        bundle.queries.push_back({sub.text, {}});
        for (const auto& c : concepts) {
            if (bundle.queries.size() >= opts.max_queries) break;
            if (!collapse_whitespace(c).empty()) bundle.queries.push_back({c, {}});
        }
        bundle.validate();
        return bundle;
    }

    // the sub-question itself stays first; expansions follow
    bundle.queries.push_back({sub.text, {}});
    auto push_query = [&](ExpandedQuery q) {
        if (bundle.queries.size() >= opts.max_queries) return;
        for (const auto& existing : bundle.queries) {
            if (existing.text == q.text) return;
        }
        bundle.queries.push_back(std::move(q));
    };

    // paths between every ordered concept pair
    for (const auto& a : entities) {
        for (const auto& b : entities) {
            if (a.index == b.index) continue;
            if (instr) ++instr->kg_calls;
            auto paths = graph.get_shortest_paths(a, b, opts.max_paths_per_pair);
            for (const auto& p : paths) {
                if (p.length() == 0) continue;
                ExpandedQuery q;
                q.text = render_path_query(p, graph);
                for (std::size_t i = 0; i + 1 < p.nodes.size(); ++i) {
                    q.steps.push_back({graph.entity(p.nodes[i]).name, p.relations[i]});
                }
                push_query(std::move(q));
            }
        }
    }

    // one-hop neighborhoods per normalized entity, grouped by relation
    for (const auto& e : entities) {
        std::set<std::string> relations;
        for (const auto& edge : graph.edges()) {
            if (edge.head == e.index) relations.insert(edge.relation);
        }
        for (const auto& rel : relations) {
            if (instr) ++instr->kg_calls;
            auto tails = graph.get_tail_entity_by_relation(e, rel);
            std::size_t n = std::min(tails.size(), opts.max_tails_per_relation);
            for (std::size_t i = 0; i < n; ++i) {
                ExpandedQuery q;
                q.text = e.name + " AND " + tails[i].name + " (" + rel + ")";
                q.steps.push_back({e.name, rel});
                push_query(std::move(q));
            }
        }
    }

    bundle.validate();
    return bundle;
}

/// Direct route: the sub-question itself plus lexically parsed concept terms.
inline QueryBundle direct_queries(const plan::SubQuestion& sub, std::size_t max_queries = 8) {
    require(!collapse_whitespace(sub.text).empty(), ErrorCode::precondition,
            "sub-question text empty");
    QueryBundle bundle;
    bundle.index = sub.index;
    bundle.strategy = Strategy::direct;
    bundle.queries.push_back({sub.text, {}});
    for (const auto& c : lexical_concepts(sub.text)) {
        if (bundle.queries.size() >= max_queries) break;
        bool dup = false;
        for (const auto& q : bundle.queries) dup = dup || q.text == c;
        if (!dup) bundle.queries.push_back({c, {}});
    }
    bundle.validate();
    return bundle;
}

// --- retrieval ---------------------------------------------------------------

struct SourceCaps {
    std::size_t pubmed_per_query = 20;
    std::size_t trials_per_query = 10;
    std::size_t wikipedia_per_query = 1;
    bool search_pubmed = true;
    bool search_trials = true;
    bool search_wikipedia = true;

    static SourceCaps from_assignment(const plan::AgentAssignment& a) {
        SourceCaps caps;
        auto has = [&](const char* w) {
            return std::find(a.workers.begin(), a.workers.end(), w) != a.workers.end();
        };
        // an empty worker list means the community level was chosen: allow all
        if (!a.workers.empty()) {
            caps.search_pubmed = has("get_pubmed_abstracts") || has("get_pubmed_full_text");
            caps.search_trials = has("get_clinical_trials");
            caps.search_wikipedia = has("get_wikipedia_introduction");
        }
        return caps;
    }
};

/// Definitional queries go to the encyclopedia; everything else is assumed
/// condition/intervention-shaped enough for a trial search.
inline bool is_definitional(const std::string& query) {
    auto q = normalize_text(query);
    return starts_with(q, "what is ") || starts_with(q, "what are ") ||
           starts_with(q, "define ") || starts_with(q, "definition of ") ||
           std::count(q.begin(), q.end(), ' ') <= 1;
}

struct RetrievalResult {
    std::vector<lit::EvidenceItem> items;
    std::vector<RetrievalFailure> failures;
};

/// Union over the bundle's queries of PubMed abstracts, clinical trials and
/// Wikipedia intros, enriched with citation details and deduplicated by
/// (kind, source_id) keeping the enrichment-richest copy. Per-source
/// failures are recorded without aborting; an all-sources-failed bundle is
/// an error.
inline RetrievalResult retrieve_evidence(const QueryBundle& bundle, lit::LitClients& clients,
                                         SourceCaps caps = {},
                                         Instrumentation* instr = nullptr) {
    bundle.validate();
    RetrievalResult result;
    std::size_t attempts = 0;

    auto attempt = [&](const std::string& query, const char* source, auto&& fn) {
        ++attempts;
        if (instr) ++instr->retrieval_calls;
        try {
            fn();
        } catch (const Error& e) {
            result.failures.push_back({query, source, e.what()});
        }
    };

    for (const auto& q : bundle.queries) {
        bool definitional = is_definitional(q.text);
        if (caps.search_pubmed) {
            attempt(q.text, "pubmed", [&] {
                auto items = clients.get_pubmed_abstracts(q.text, caps.pubmed_per_query);
                for (auto& item : items) {
                    try {
                        auto details = clients.get_article_citation_details(item.source_id);
                        item.citation_count = details.citation_count;
                        if (!item.year && details.year) item.year = details.year;
                    } catch (const Error&) {
                        // enrichment is best-effort
                    }
                    result.items.push_back(std::move(item));
                }
            });
        }
        if (caps.search_trials && !definitional) {
            attempt(q.text, "clinicaltrials", [&] {
                auto items = clients.get_clinical_trials(q.text, caps.trials_per_query);
                for (auto& item : items) result.items.push_back(std::move(item));
            });
        }
        if (caps.search_wikipedia && definitional && caps.wikipedia_per_query > 0) {
            attempt(q.text, "wikipedia", [&] {
                auto stripped = q.text;
                for (const char* prefix : {"what is ", "what are ", "define ", "definition of "}) {
                    auto norm = normalize_text(stripped);
                    if (starts_with(norm, prefix)) {
                        stripped = collapse_whitespace(stripped.substr(std::string(prefix).size()));
                        break;
                    }
                }
                while (!stripped.empty() && (stripped.back() == '?' || stripped.back() == '.')) {
                    stripped.pop_back();
                }
                result.items.push_back(clients.get_wikipedia_introduction(stripped));
            });
        }
    }

    if (!result.failures.empty() && result.items.empty() &&
        result.failures.size() == attempts) {
        std::string detail;
        for (const auto& f : result.failures) {
            if (!detail.empty()) detail += "; ";
            detail += f.source + "(" + f.query + "): " + f.error;
        }
        fail(ErrorCode::transport, "all retrieval sources failed: " + detail);
    }

    // dedupe by (kind, source_id), keeping the enrichment-richest copy
    std::map<std::pair<std::string, std::string>, std::size_t> best;
    std::vector<lit::EvidenceItem> deduped;
    for (auto& item : result.items) {
        auto key = std::make_pair(std::string(lit::to_string(item.kind)), item.source_id);
        auto it = best.find(key);
        if (it == best.end()) {
            best[key] = deduped.size();
            deduped.push_back(std::move(item));
        } else if (item.richness() > deduped[it->second].richness()) {
            deduped[it->second] = std::move(item);
        }
    }
    result.items = std::move(deduped);
    return result;
}

// --- appraisal ---------------------------------------------------------------

inline constexpr const char* kDefaultAppraisalRubric =
    "Appraise each evidence item against the sub-question on three axes: contextual "
    "relevance (does it address the sub-question's intent?), evidentiary strength (study "
    "scale, directness of the finding, citation uptake), and methodological quality (study "
    "design and rigor). Grade each axis high, moderate, or low. Include an item only when "
    "it informs the sub-question; never include an item whose relevance is low.";

inline std::vector<llm::Message> appraisal_prompt(const plan::SubQuestion& sub,
                                                  const std::vector<lit::EvidenceItem>& items,
                                                  const std::string& user_preference,
                                                  const std::string& rubric) {
    std::string user = "Sub-question: " + sub.text + "\n";
    if (!user_preference.empty()) {
        user += "User preference for evidence inclusion: " + user_preference + "\n";
    }
    user += "\nEvidence items:\n";
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& it = items[i];
        user += std::to_string(i + 1) + ". [" + it.source_id + "] " + it.title;
        if (it.year) user += " (" + std::to_string(*it.year) + ")";
        if (it.citation_count) user += " [citations: " + std::to_string(*it.citation_count) + "]";
        user += "\n" + it.body.substr(0, 1200) + "\n";
    }
    user += "\nReply with a JSON object {\"labels\": [{\"n\": 1, \"relevance\": ..., "
            "\"strength\": ..., \"quality\": ..., \"decision\": \"include\" | \"exclude\", "
            "\"reason\": one sentence}]} covering every item exactly once.";
    return {{"system", rubric}, {"user", user}};
}

inline int content_term_overlap(const std::string& a, const std::string& b) {
    auto terms = [](const std::string& text) {
        std::set<std::string> out;
        std::string w;
        for (char c : normalize_text(text) + " ") {
            if (std::isalnum(static_cast<unsigned char>(c))) {
                w.push_back(c);
            } else {
                if (w.size() >= 4) out.insert(w);
                w.clear();
            }
        }
        return out;
    };
    auto ta = terms(a);
    auto tb = terms(b);
    int n = 0;
    for (const auto& t : ta) n += static_cast<int>(tb.count(t));
    return n;
}

/// Provider-down labeling: include when the item is either well-cited or
/// recent AND lexically overlaps the sub-question; always flagged.
inline AppraisalLabel heuristic_label(const plan::SubQuestion& sub,
                                      const lit::EvidenceItem& item, int current_year) {
    bool cited = item.citation_count && *item.citation_count >= 5;
    bool recent = item.year && *item.year >= current_year - 5;
    int overlap = content_term_overlap(sub.text, item.title + " " + item.body);
    bool include = (cited || recent) && overlap >= 2;
    AppraisalLabel label;
    label.relevance = overlap >= 2 ? Level::moderate : Level::low;
    label.strength = cited ? Level::moderate : Level::low;
    label.quality = Level::moderate;
    label.include = include;
    label.reason = std::string("heuristic: ") + (include ? "well-cited or recent with lexical overlap"
                                                         : "insufficient citation, recency, or overlap");
    return label;
}

/// Label every item; include/exclude per rubric with the user preference in
/// the prompt. Provider failure falls back to heuristic labels, flagged in
/// each reason.
inline std::vector<LabeledEvidence> appraise_evidence(const plan::SubQuestion& sub,
                                                      const std::vector<lit::EvidenceItem>& items,
                                                      const std::string& user_preference,
                                                      llm::ChatProvider& provider,
                                                      int current_year,
                                                      const std::string& rubric = kDefaultAppraisalRubric,
                                                      Instrumentation* instr = nullptr) {
    std::vector<LabeledEvidence> out;
    if (items.empty()) return out;
    try {
        llm::GenerationRequest req;
        req.purpose = llm::Purpose::interpretation;
        req.sampling = llm::Sampling::deterministic;
        req.messages = appraisal_prompt(sub, items, user_preference, rubric);
        if (instr) ++instr->provider_calls;
        json parsed = llm::chat_json(provider, req);
        const auto& labels = parsed.at("labels");
        require(labels.is_array() && labels.size() == items.size(), ErrorCode::validation,
                "appraisal must label every item exactly once (got " +
                    std::to_string(labels.size()) + " labels for " +
                    std::to_string(items.size()) + " items)");
        std::vector<bool> seen(items.size(), false);
        out.resize(items.size());
        for (const auto& l : labels) {
            int n = l.at("n").get<int>();
            require(n >= 1 && n <= static_cast<int>(items.size()), ErrorCode::validation,
                    "appraisal label index out of range: " + std::to_string(n));
            require(!seen[static_cast<std::size_t>(n - 1)], ErrorCode::validation,
                    "duplicate appraisal label for item " + std::to_string(n));
            seen[static_cast<std::size_t>(n - 1)] = true;
            out[static_cast<std::size_t>(n - 1)] =
                LabeledEvidence{items[static_cast<std::size_t>(n - 1)],
                                AppraisalLabel::from_json(l)};
        }
        return out;
    } catch (const Error& e) {
        if (e.code() == ErrorCode::validation || e.code() == ErrorCode::parse) throw;
        out.clear();
        for (const auto& item : items) {
            out.push_back({item, heuristic_label(sub, item, current_year)});
        }
        return out;
    }
}

// --- LLM fallback --------------------------------------------------------------

inline std::vector<llm::Message> fallback_prompt(const plan::SubQuestion& sub) {
    return {
        {"system",
         "No high-quality evidence was retrieved for the sub-question. Generate a cautious "
         "provisional answer from your own knowledge, stating the key factual claims plainly "
         "so they can be verified against source databases."},
        {"user", sub.text},
    };
}

/// Verification query: the most frequent content terms of the generated
/// claims, longest-first on ties.
inline std::string verification_query(const std::string& generated) {
    std::map<std::string, int> freq;
    std::string w;
    for (char c : normalize_text(generated) + " ") {
        if (std::isalnum(static_cast<unsigned char>(c))) {
            w.push_back(c);
        } else {
            if (w.size() >= 5) freq[w] += 1;
            w.clear();
        }
    }
    std::vector<std::pair<std::string, int>> ranked(freq.begin(), freq.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        if (a.first.size() != b.first.size()) return a.first.size() > b.first.size();
        return a.first < b.first;
    });
    std::string query;
    for (std::size_t i = 0; i < ranked.size() && i < 4; ++i) {
        if (!query.empty()) query += " ";
        query += ranked[i].first;
    }
    return query;
}

struct FallbackOutcome {
    std::vector<LabeledEvidence> items;
    bool fallback_used = false;
};

/// Activated only when appraisal included nothing. The generated item is
/// retained only when a verification retrieval, appraised under the same
/// rubric, includes at least one database-sourced item; otherwise it is
/// discarded and the set stays empty.
inline FallbackOutcome llm_fallback(const plan::SubQuestion& sub,
                                    std::size_t included_items_so_far,
                                    llm::ChatProvider& provider, lit::LitClients& clients,
                                    const std::string& user_preference, int current_year,
                                    SourceCaps caps = {},
                                    const std::string& rubric = kDefaultAppraisalRubric,
                                    Instrumentation* instr = nullptr) {
    require(included_items_so_far == 0, ErrorCode::precondition,
            "llm_fallback invoked while included evidence exists");
    FallbackOutcome outcome;

    std::string generated;
    try {
        llm::GenerationRequest req;
        req.purpose = llm::Purpose::fallback;
        req.sampling = llm::Sampling::provider_default;
        req.messages = fallback_prompt(sub);
        if (instr) ++instr->provider_calls;
        generated = provider.chat_complete(req);
    } catch (const Error&) {
        outcome.fallback_used = false;  // provider down: nothing generated
        return outcome;
    }

    outcome.fallback_used = true;
    lit::EvidenceItem gen;
    gen.kind = lit::EvidenceKind::llm_generated;
    gen.source_id = "llm:" + hex_digest(generated);
    gen.title = "Model-generated provisional answer";
    gen.body = generated;
    gen.query = sub.text;

    QueryBundle verification;
    verification.index = sub.index;
    verification.strategy = Strategy::direct;
    verification.queries.push_back({verification_query(generated), {}});
    if (verification.queries.front().text.empty()) {
        verification.queries.front().text = sub.text;
    }

    RetrievalResult retrieved;
    try {
        retrieved = retrieve_evidence(verification, clients, caps, instr);
    } catch (const Error&) {
        return FallbackOutcome{{}, true};  // nothing retrievable: discard the generated item
    }
    auto labeled = appraise_evidence(sub, retrieved.items, user_preference, provider,
                                     current_year, rubric, instr);
    bool supported = std::any_of(labeled.begin(), labeled.end(), [](const LabeledEvidence& e) {
        return e.label.include && e.item.kind != lit::EvidenceKind::llm_generated;
    });
    if (!supported) {
        return FallbackOutcome{{}, true};  // retention rule: discard
    }

    AppraisalLabel gen_label;
    gen_label.relevance = Level::moderate;
    gen_label.strength = Level::moderate;
    gen_label.quality = Level::moderate;
    gen_label.include = true;
    gen_label.reason = "model-generated answer corroborated by database retrieval";
    outcome.items.push_back({gen, gen_label});
    for (auto& e : labeled) {
        if (e.label.include) outcome.items.push_back(std::move(e));
    }
    return outcome;
}

}  // namespace deeper::collab
