#pragma once

// Scripted offline scenarios: a fixture knowledge graph, recorded HTTP
// fixtures, and a mock script covering every prompt the pipeline will build
// for a given question. `deeper sample init` ships one as a runnable demo;
// the test suites drive their end-to-end runs through the same builder.

#include "deeper/engine.hpp"

namespace deeper::demo {

enum class FallbackMode {
    none,          // appraisal includes items normally
    supported,     // nothing included; generated answer corroborated
    unsupported,   // nothing included; verification retrieval stays empty
    provider_down  // nothing included; the fallback provider fails
};

struct ScenarioSpec {
    int seed = 1;
    int sub_questions = 2;
    bool decompose = true;
    bool use_kg = true;
    FallbackMode fallback = FallbackMode::none;
};

struct Scenario {
    engine::EngineConfig config;
    plan::ResearchQuestion question;
    std::shared_ptr<llm::ScriptedMock> mock;
    std::filesystem::path dir;
};

namespace detail {

inline std::string pmid_for(int seed, int sub, int n) {
    return std::to_string(30000000 + seed * 1000 + sub * 100 + n);
}

inline std::string nct_for(int seed, int sub) {
    std::string digits = std::to_string(40000000 + seed * 1000 + sub * 100);
    return "NCT" + digits;
}

inline std::string pubmed_article_xml(const std::string& pmid, const std::string& title,
                                      const std::string& abstract, int year) {
    return "<PubmedArticle><MedlineCitation><PMID>" + pmid + "</PMID>"
           "<Article><ArticleTitle>" + title + "</ArticleTitle>"
           "<Abstract><AbstractText>" + abstract + "</AbstractText></Abstract>"
           "<Journal><JournalIssue><PubDate><Year>" + std::to_string(year) +
           "</Year></PubDate></JournalIssue></Journal>"
           "</Article></MedlineCitation></PubmedArticle>";
}

inline std::string pubmed_fetch_body(const std::vector<json>& articles) {
    std::string xml = "<?xml version=\"1.0\"?><PubmedArticleSet>";
    for (const auto& a : articles) {
        xml += pubmed_article_xml(a.at("pmid").get<std::string>(),
                                  a.at("title").get<std::string>(),
                                  a.at("abstract").get<std::string>(), a.at("year").get<int>());
    }
    xml += "</PubmedArticleSet>";
    return xml;
}

/// Writes every fixture one retrieval pass over the bundle will request,
/// mirroring the source selection in collab::retrieve_evidence.
class FixtureWriter {
public:
    FixtureWriter(std::filesystem::path dir, const lit::ClientConfig& config)
        : dir_(std::move(dir)), config_(config) {}

    void esearch(const std::string& query, std::size_t retmax,
                 const std::vector<std::string>& pmids) {
        lit::HttpRequest req{"GET", lit::kEutilsHost, "/entrez/eutils/esearch.fcgi",
                             {{"db", "pubmed"},
                              {"term", query},
                              {"retmax", std::to_string(retmax)},
                              {"retmode", "json"}}};
        add_key(req);
        json body{{"esearchresult", {{"idlist", pmids}, {"count", pmids.size()}}}};
        record(req, 200, body.dump());
    }

    void efetch(const std::vector<json>& articles) {
        std::string joined;
        for (const auto& a : articles) {
            if (!joined.empty()) joined += ",";
            joined += a.at("pmid").get<std::string>();
        }
        lit::HttpRequest req{"GET", lit::kEutilsHost, "/entrez/eutils/efetch.fcgi",
                             {{"db", "pubmed"}, {"id", joined}, {"retmode", "xml"}}};
        add_key(req);
        record(req, 200, pubmed_fetch_body(articles));
    }

    void icite(const std::string& pmid, int citations, int year) {
        lit::HttpRequest req{"GET", lit::kICiteHost, "/api/pubs", {{"pmids", pmid}}};
        json body{{"data", json::array({{{"pmid", pmid},
                                         {"citation_count", citations},
                                         {"year", year}}})}};
        record(req, 200, body.dump());
    }

    void icite_missing(const std::string& pmid) {
        lit::HttpRequest req{"GET", lit::kICiteHost, "/api/pubs", {{"pmids", pmid}}};
        record(req, 200, json{{"data", json::array()}}.dump());
    }

    void trials(const std::string& query, std::size_t page_size,
                const std::vector<json>& studies) {
        lit::HttpRequest req{"GET", lit::kCtgovHost, "/api/v2/studies",
                             {{"query.term", query}, {"pageSize", std::to_string(page_size)}}};
        json list = json::array();
        for (const auto& s : studies) {
            list.push_back(json{
                {"protocolSection",
                 {{"identificationModule",
                   {{"nctId", s.at("nct").get<std::string>()},
                    {"briefTitle", s.at("title").get<std::string>()}}},
                  {"descriptionModule", {{"briefSummary", s.at("summary").get<std::string>()}}},
                  {"statusModule",
                   {{"startDateStruct", {{"date", s.at("year").get<std::string>()}}}}}}}});
        }
        record(req, 200, json{{"studies", list}}.dump());
    }

    void wikipedia(const std::string& concept_name, const std::string& extract) {
        std::string title = concept_name;
        std::replace(title.begin(), title.end(), ' ', '_');
        lit::HttpRequest req{"GET", lit::kWikipediaHost, "/api/rest_v1/page/summary/" + title, {}};
        record(req, 200, json{{"title", concept_name}, {"extract", extract}}.dump());
    }

    void esummary(const std::string& pmid, bool resolved, const std::string& title = "") {
        lit::HttpRequest req{"GET", lit::kEutilsHost, "/entrez/eutils/esummary.fcgi",
                             {{"db", "pubmed"}, {"id", pmid}, {"retmode", "json"}}};
        add_key(req);
        json result = json::object();
        if (resolved) {
            result[pmid] = json{{"uid", pmid}, {"title", title}};
        } else {
            result[pmid] = json{{"uid", pmid}, {"error", "cannot get document summary"}};
        }
        record(req, 200, json{{"result", result}}.dump());
    }

    void ctgov_study(const std::string& nct, bool resolved, const std::string& title = "") {
        lit::HttpRequest req{"GET", lit::kCtgovHost, "/api/v2/studies/" + nct, {}};
        if (!resolved) {
            record(req, 404, json{{"message", "study not found"}}.dump());
            return;
        }
        record(req, 200,
               json{{"protocolSection",
                     {{"identificationModule", {{"nctId", nct}, {"briefTitle", title}}}}}}
                   .dump());
    }

private:
    void add_key(lit::HttpRequest& req) const {
        if (!config_.ncbi_api_key.empty()) req.params["api_key"] = config_.ncbi_api_key;
    }

    void record(const lit::HttpRequest& req, int status, std::string body) {
        lit::ReplayTransport::record(dir_, req, lit::HttpResponse{status, std::move(body)});
    }

    std::filesystem::path dir_;
    lit::ClientConfig config_;
};

inline void write_fixture_kg(const std::filesystem::path& path) {
    std::ofstream out(path);
    out << "head_name\thead_type\trelation\ttail_name\ttail_type\n"
        << "aspirin\tdrug\ttargets\tPTGS2\tgene/protein\n"
        << "PTGS2\tgene/protein\tassociated_with\tinflammation\tdisease\n";
}

}  // namespace detail

/// Build a fully scripted offline scenario under `dir`. The builder walks the
/// pipeline's stages with the same prompt constructors the engine uses,
/// registering each completion and recording each HTTP fixture as it goes, so
/// a subsequent engine run finds every lookup registered.
inline Scenario build_scenario(const ScenarioSpec& spec, const std::filesystem::path& dir) {
    namespace dd = detail;
    std::filesystem::create_directories(dir);
    auto fixtures_dir = dir / "fixtures";
    std::filesystem::create_directories(fixtures_dir);
    auto kg_path = dir / "kg.tsv";
    dd::write_fixture_kg(kg_path);

    Scenario scenario;
    scenario.dir = dir;
    scenario.mock = std::make_shared<llm::ScriptedMock>();

    auto& config = scenario.config;
    config.offline = true;
    config.toggles.decompose = spec.decompose;
    config.toggles.use_kg = spec.use_kg;
    config.artifacts_dir = (dir / "runs").string();
    config.fixtures_dir = fixtures_dir.string();
    config.kg_path = kg_path.string();
    config.kg_format = "generic-tsv";
    config.caps.pubmed_per_query = 2;
    config.caps.trials_per_query = 2;
    config.clients.cache_dir = (dir / "cache").string();
    config.clients.use_env_api_key = false;  // fixture digests must not shift with the env
    config.validate();

    auto& question = scenario.question;
    question.id = "demo-" + std::to_string(spec.seed);
    question.text = "Does aspirin reduce chronic inflammation in adults? (case " +
                    std::to_string(spec.seed) + ")";
    question.background = "Interest in cyclooxygenase inhibition and downstream cytokines.";
    question.category = plan::Category::clinical;

    llm::ScriptedMock& mock = *scenario.mock;
    dd::FixtureWriter fixtures(fixtures_dir, config.clients);
    auto graph = kg::load_graph_file(config.kg_path, kg::GraphFormat::generic_tsv);

    // --- research planning ---
    std::vector<plan::SubQuestion> subs;
    if (spec.decompose) {
        json subs_json = json::array();
        for (int i = 1; i <= spec.sub_questions; ++i) {
            std::string text =
                i == 1 ? "What is aspirin?"
                       : "How does aspirin affect inflammation? (aspect " + std::to_string(i) +
                             ", case " + std::to_string(spec.seed) + ")";
            subs_json.push_back(json{{"i", i},
                                     {"text", text},
                                     {"rank", i},
                                     {"rationale", i == 1 ? "clarify the core concept"
                                                          : "probe the mechanism"}});
        }
        mock.register_completion_for(llm::Purpose::planning,
                                     plan::decomposition_prompt(question, config.k_max),
                                     json{{"sub_questions", subs_json}}.dump());
        subs = plan::decompose_question(question, config.k_max, mock);
    } else {
        subs = plan::undecomposed(question);
    }

    json assignments_json = json::array();
    for (const auto& sub : subs) {
        json communities = json::array();
        json workers = json::array();
        if (sub.index > 1 || subs.size() == 1) {
            communities.push_back("query-expansion");
            workers.push_back("get_normalized_entity");
            workers.push_back("get_shortest_paths");
        }
        communities.push_back("evidence-retrieval");
        workers.push_back("get_pubmed_abstracts");
        workers.push_back("get_article_citation_details");
        workers.push_back("get_clinical_trials");
        workers.push_back("get_wikipedia_introduction");
        if (spec.fallback != FallbackMode::none) communities.push_back("llm-response");
        assignments_json.push_back(
            json{{"i", sub.index}, {"communities", communities}, {"workers", workers}});
    }
    mock.register_completion_for(llm::Purpose::planning,
                                 plan::assignment_prompt(subs, agents::capability_document()),
                                 json{{"assignments", assignments_json}}.dump());
    auto assignments = plan::assign_agents(subs, agents::capability_document(), mock);
    if (!config.toggles.use_kg) plan::strip_query_expansion(assignments);

    // --- per-sub-question collaboration ---
    std::vector<collab::EvidenceSet> evidence_sets;
    for (std::size_t i = 0; i < subs.size(); ++i) {
        const auto& sub = subs[i];
        const auto& assignment = assignments[i];

        bool kg_eligible =
            config.toggles.use_kg && assignment.has_community(agents::Community::query_expansion);
        if (kg_eligible) {
            mock.register_completion_for(
                llm::Purpose::planning, collab::routing_prompt(sub),
                json{{"strategy", "relational"}, {"reason", "asks for a mechanism"}}.dump());
        }
        auto decision =
            collab::route_subquestion(sub, assignment, config.toggles, mock, nullptr);

        collab::QueryBundle bundle;
        if (decision.strategy == collab::Strategy::relational) {
            mock.register_completion_for(
                llm::Purpose::planning, collab::concept_prompt(sub),
                json{{"concepts", json::array({"aspirin", "inflammation"})}}.dump());
            bundle = collab::expand_queries(sub, graph, mock, {}, nullptr);
        } else {
            bundle = collab::direct_queries(sub);
        }

        // fixtures for every source the retrieval pass will consult
        auto caps = collab::SourceCaps::from_assignment(assignment);
        caps.pubmed_per_query = config.caps.pubmed_per_query;
        caps.trials_per_query = config.caps.trials_per_query;
        caps.wikipedia_per_query = config.caps.wikipedia_per_query;
        int query_no = 0;
        for (const auto& q : bundle.queries) {
            ++query_no;
            bool definitional = collab::is_definitional(q.text);
            if (caps.search_pubmed) {
                std::vector<json> articles;
                // first query returns sub-specific articles, later ones repeat
                // the first article so deduplication has work to do
                std::string pmid_a = dd::pmid_for(spec.seed, sub.index, 1);
                std::string pmid_b = dd::pmid_for(spec.seed, sub.index, 2);
                articles.push_back(json{
                    {"pmid", pmid_a},
                    {"title", "Aspirin and PTGS2 signaling in inflammation (report " + pmid_a + ")"},
                    {"abstract",
                     "Cyclooxygenase inhibition by aspirin reduced inflammatory markers in a "
                     "controlled cohort."},
                    {"year", 2021}});
                if (query_no == 1) {
                    articles.push_back(json{
                        {"pmid", pmid_b},
                        {"title", "Chronic inflammation outcomes under low-dose aspirin (report " +
                                      pmid_b + ")"},
                        {"abstract",
                         "Long-term follow-up of adults on low-dose aspirin showed fewer "
                         "inflammation flares."},
                        {"year", 2019}});
                }
                std::vector<std::string> ids;
                for (const auto& a : articles) ids.push_back(a.at("pmid").get<std::string>());
                fixtures.esearch(q.text, caps.pubmed_per_query, ids);
                fixtures.efetch(articles);
                fixtures.icite(pmid_a, 12, 2021);
                if (query_no == 1) fixtures.icite(pmid_b, 3, 2019);
            }
            if (caps.search_trials && !definitional) {
                std::vector<json> studies;
                if (query_no == 1) {
                    studies.push_back(json{{"nct", dd::nct_for(spec.seed, sub.index)},
                                           {"title", "Aspirin for chronic inflammation"},
                                           {"summary",
                                            "Randomized study of daily aspirin against "
                                            "inflammatory endpoints in adults."},
                                           {"year", "2020-05"}});
                }
                fixtures.trials(q.text, caps.trials_per_query, studies);
            }
            if (caps.search_wikipedia && definitional && caps.wikipedia_per_query > 0) {
                auto concept_name = q.text;
                auto norm = normalize_text(concept_name);
                for (const char* prefix :
                     {"what is ", "what are ", "define ", "definition of "}) {
                    if (starts_with(norm, prefix)) {
                        concept_name = collapse_whitespace(concept_name.substr(std::string(prefix).size()));
                        break;
                    }
                }
                while (!concept_name.empty() && (concept_name.back() == '?' || concept_name.back() == '.')) {
                    concept_name.pop_back();
                }
                fixtures.wikipedia(concept_name,
                                   "Aspirin is a nonsteroidal anti-inflammatory drug used to "
                                   "reduce pain, fever, and inflammation.");
            }
        }

        auto clock = std::make_shared<FakeClock>(std::chrono::milliseconds{1'700'000'000'000});
        lit::LitClients clients(std::make_shared<lit::ReplayTransport>(fixtures_dir), clock,
                                config.clients);
        auto retrieval = collab::retrieve_evidence(bundle, clients, caps, nullptr);

        // appraisal script: include everything, or exclude everything when a
        // fallback scenario needs an empty included set
        bool exclude_all = spec.fallback != FallbackMode::none;
        json labels = json::array();
        for (std::size_t n = 1; n <= retrieval.items.size(); ++n) {
            labels.push_back(json{
                {"n", n},
                {"relevance", exclude_all ? "low" : "high"},
                {"strength", "moderate"},
                {"quality", "high"},
                {"decision", exclude_all ? "exclude" : "include"},
                {"reason", exclude_all ? "does not address the question intent"
                                       : "directly addresses the question"}});
        }
        if (!retrieval.items.empty()) {
            mock.register_completion_for(
                llm::Purpose::interpretation,
                collab::appraisal_prompt(sub, retrieval.items,
                                         question.constraints.evidence_preference,
                                         collab::kDefaultAppraisalRubric),
                json{{"labels", labels}}.dump());
        }
        auto labeled = collab::appraise_evidence(sub, retrieval.items,
                                                 question.constraints.evidence_preference, mock,
                                                 clock->utc_year());

        collab::EvidenceSet set;
        set.index = sub.index;
        set.bundle = bundle;
        set.items = labeled;
        set.failures = retrieval.failures;

        if (set.included_count() == 0 &&
            assignment.has_community(agents::Community::llm_response)) {
            auto fb_prompt = collab::fallback_prompt(sub);
            if (spec.fallback == FallbackMode::provider_down) {
                mock.register_failure(llm::Purpose::fallback, llm::prompt_digest(fb_prompt));
            } else {
                std::string generated =
                    "Aspirin irreversibly acetylates cyclooxygenase enzymes, lowering "
                    "prostaglandin synthesis and thereby damping chronic inflammatory "
                    "signaling in adults (case " +
                    std::to_string(spec.seed) + ", sub " + std::to_string(sub.index) + ").";
                mock.register_completion_for(llm::Purpose::fallback, fb_prompt, generated);

                collab::QueryBundle verification;
                verification.index = sub.index;
                verification.strategy = collab::Strategy::direct;
                verification.queries.push_back({collab::verification_query(generated), {}});
                const auto& vq = verification.queries.front().text;

                if (spec.fallback == FallbackMode::supported) {
                    std::string vpmid = dd::pmid_for(spec.seed, sub.index, 9);
                    std::vector<json> articles = {json{
                        {"pmid", vpmid},
                        {"title", "Cyclooxygenase acetylation by aspirin (report " + vpmid + ")"},
                        {"abstract",
                         "Acetylation of cyclooxygenase by aspirin suppresses prostaglandin "
                         "synthesis and inflammatory signaling."},
                        {"year", 2022}}};
                    fixtures.esearch(vq, caps.pubmed_per_query, {vpmid});
                    fixtures.efetch(articles);
                    fixtures.icite(vpmid, 7, 2022);
                    fixtures.trials(vq, caps.trials_per_query, {});

                    auto vr = collab::retrieve_evidence(verification, clients, caps, nullptr);
                    json vlabels = json::array();
                    for (std::size_t n = 1; n <= vr.items.size(); ++n) {
                        vlabels.push_back(json{{"n", n},
                                               {"relevance", "high"},
                                               {"strength", "high"},
                                               {"quality", "high"},
                                               {"decision", "include"},
                                               {"reason", "corroborates the generated claim"}});
                    }
                    mock.register_completion_for(
                        llm::Purpose::interpretation,
                        collab::appraisal_prompt(sub, vr.items,
                                                 question.constraints.evidence_preference,
                                                 collab::kDefaultAppraisalRubric),
                        json{{"labels", vlabels}}.dump());
                } else {
                    fixtures.esearch(vq, caps.pubmed_per_query, {});
                    fixtures.trials(vq, caps.trials_per_query, {});
                }
            }
            auto outcome = collab::llm_fallback(sub, set.included_count(), mock, clients,
                                                question.constraints.evidence_preference,
                                                clock->utc_year(), caps);
            set.fallback_used = outcome.fallback_used;
            for (auto& item : outcome.items) set.items.push_back(std::move(item));
        }
        set.normalize_order();
        set.validate();
        evidence_sets.push_back(std::move(set));
    }

    // --- synthesis scripts ---
    std::vector<synth::InterpretedEvidence> interpreted;
    for (std::size_t i = 0; i < subs.size(); ++i) {
        const auto& set = evidence_sets[i];
        std::vector<collab::LabeledEvidence> included;
        for (const auto& e : set.items) {
            if (e.label.include) included.push_back(e);
        }
        if (!included.empty()) {
            json items = json::array();
            for (const auto& e : included) {
                items.push_back(json{{"source_id", e.item.source_id},
                                     {"note", "supports the sub-question directly"}});
            }
            mock.register_completion_for(llm::Purpose::interpretation,
                                         synth::interpretation_prompt(subs[i], included),
                                         json{{"items", items}}.dump());
        }
        interpreted.push_back(synth::interpret_evidence(subs[i], set, mock));
    }

    // constraints are empty in the demo question: apply_constraints is the identity
    std::vector<std::string> pool;
    for (const auto& ie : interpreted) {
        for (const auto& item : ie.items) {
            if (item.evidence.item.kind != lit::EvidenceKind::llm_generated &&
                item.evidence.item.kind != lit::EvidenceKind::wikipedia_intro) {
                pool.push_back(item.evidence.item.source_id);
            }
        }
    }
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

    if (!pool.empty()) {
        std::string cite_a = "(PMID: " + pool.front() + ")";
        std::string answer = "Daily aspirin plausibly reduces chronic inflammatory activity in "
                             "adults through cyclooxygenase inhibition " + cite_a + ".";
        json claims = json::array();
        for (const auto& id : pool) {
            std::string cite = lit::is_nct(id) ? "(" + id + ")" : "(PMID: " + id + ")";
            claims.push_back("Evidence source " + cite +
                             " links aspirin exposure to lower inflammatory signaling.");
        }
        json report{{"sections", json::array({json{{"title", "Mechanistic evidence"},
                                                   {"claims", claims}}})}};
        mock.register_completion_for(
            llm::Purpose::synthesis,
            synth::synthesis_prompt(synth::synthesis_context(question, subs, interpreted, {})),
            json{{"answer", answer}, {"report", report}}.dump());

        for (const auto& id : pool) {
            if (lit::is_nct(id)) {
                fixtures.ctgov_study(id, true, "Aspirin for chronic inflammation");
            } else {
                fixtures.esummary(id, true, "Aspirin evidence record " + id);
            }
        }
    }

    // persist the script so the CLI can replay the same scenario
    {
        std::ofstream out(dir / "script.json");
        out << scenario.mock->dump_script().dump(2) << '\n';
    }
    scenario.config.script_path = (dir / "script.json").string();
    {
        std::ofstream out(dir / "question.json");
        out << question.to_json().dump(2) << '\n';
    }
    {
        std::ofstream out(dir / "config.json");
        out << scenario.config.to_json().dump(2) << '\n';
    }
    return scenario;
}

}  // namespace deeper::demo
