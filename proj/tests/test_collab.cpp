#include <catch2/catch_amalgamated.hpp>

#include "deeper/collab.hpp"

using namespace deeper;

namespace {

kg::KnowledgeGraph fixture_graph() {
    kg::GraphBuilder b;
    b.add_entity({0, "aspirin", "drug", "", ""});
    b.add_entity({1, "PTGS2", "gene/protein", "", ""});
    b.add_entity({2, "inflammation", "disease", "", ""});
    b.add_edge({0, "targets", "targets", 1});
    b.add_edge({1, "associated_with", "associated with", 2});
    return b.build();
}

plan::SubQuestion sub(int index, const std::string& text) { return {index, text, index, ""}; }

plan::AgentAssignment assignment_with(std::vector<agents::Community> communities,
                                      std::vector<std::string> workers = {}) {
    plan::AgentAssignment a;
    a.index = 1;
    a.communities = std::move(communities);
    a.workers = std::move(workers);
    return a;
}

struct ClientsFixture {
    std::shared_ptr<lit::StubTransport> stub = std::make_shared<lit::StubTransport>();
    std::shared_ptr<FakeClock> clock =
        std::make_shared<FakeClock>(std::chrono::milliseconds{1'700'000'000'000});

    lit::LitClients make() {
        lit::ClientConfig config;
        config.use_env_api_key = false;
        return lit::LitClients(stub, clock, config);
    }

    void pubmed(const std::string& term, std::size_t retmax,
                const std::vector<std::string>& pmids, int year = 2021, int citations = 9) {
        lit::HttpRequest search{"GET", lit::kEutilsHost, "/entrez/eutils/esearch.fcgi",
                                {{"db", "pubmed"},
                                 {"term", term},
                                 {"retmax", std::to_string(retmax)},
                                 {"retmode", "json"}}};
        stub->add(search, 200, json{{"esearchresult", {{"idlist", pmids}}}}.dump());
        if (pmids.empty()) return;
        std::string joined;
        std::string xml = "<?xml version=\"1.0\"?><PubmedArticleSet>";
        for (const auto& id : pmids) {
            if (!joined.empty()) joined += ",";
            joined += id;
            xml += "<PubmedArticle><MedlineCitation><PMID>" + id + "</PMID><Article>"
                   "<ArticleTitle>Study " + id + " on aspirin and inflammation</ArticleTitle>"
                   "<Abstract><AbstractText>Aspirin lowered inflammation markers in study " +
                   id + ".</AbstractText></Abstract>"
                   "<Journal><JournalIssue><PubDate><Year>" + std::to_string(year) +
                   "</Year></PubDate></JournalIssue></Journal>"
                   "</Article></MedlineCitation></PubmedArticle>";
        }
        xml += "</PubmedArticleSet>";
        lit::HttpRequest fetch{"GET", lit::kEutilsHost, "/entrez/eutils/efetch.fcgi",
                               {{"db", "pubmed"}, {"id", joined}, {"retmode", "xml"}}};
        stub->add(fetch, 200, xml);
        for (const auto& id : pmids) {
            lit::HttpRequest icite{"GET", lit::kICiteHost, "/api/pubs", {{"pmids", id}}};
            stub->add(icite, 200,
                      json{{"data", json::array({{{"pmid", id},
                                                  {"citation_count", citations},
                                                  {"year", year}}})}}
                          .dump());
        }
    }

    void trials(const std::string& term, std::size_t page, const std::vector<std::string>& ncts) {
        lit::HttpRequest req{"GET", lit::kCtgovHost, "/api/v2/studies",
                             {{"query.term", term}, {"pageSize", std::to_string(page)}}};
        json studies = json::array();
        for (const auto& id : ncts) {
            studies.push_back(json{{"protocolSection",
                                    {{"identificationModule",
                                      {{"nctId", id}, {"briefTitle", "Trial " + id}}},
                                     {"descriptionModule",
                                      {{"briefSummary", "Aspirin trial " + id}}}}}});
        }
        stub->add(req, 200, json{{"studies", studies}}.dump());
    }
};

}  // namespace

TEST_CASE("routing honors the toggle, the assignment, and router failure", "[collab]") {
    auto sq = sub(1, "How does aspirin affect inflammation?");
    plan::Toggles toggles;
    llm::ScriptedMock mock;

    SECTION("relational when assigned and the router says so") {
        mock.register_completion_for(llm::Purpose::planning, collab::routing_prompt(sq),
                                     R"({"strategy": "relational", "reason": "mechanism"})");
        auto d = collab::route_subquestion(
            sq, assignment_with({agents::Community::query_expansion}), toggles, mock);
        CHECK(d.strategy == collab::Strategy::relational);
    }
    SECTION("use_kg=false forces direct regardless of the router") {
        toggles.use_kg = false;
        auto d = collab::route_subquestion(
            sq, assignment_with({agents::Community::query_expansion}), toggles, mock);
        CHECK(d.strategy == collab::Strategy::direct);
    }
    SECTION("no query-expansion community forces direct") {
        auto d = collab::route_subquestion(
            sq, assignment_with({agents::Community::evidence_retrieval}), toggles, mock);
        CHECK(d.strategy == collab::Strategy::direct);
    }
    SECTION("router failure degrades to direct with the fallback reason") {
        mock.register_failure(llm::Purpose::planning,
                              llm::prompt_digest(collab::routing_prompt(sq)));
        auto d = collab::route_subquestion(
            sq, assignment_with({agents::Community::query_expansion}), toggles, mock);
        CHECK(d.strategy == collab::Strategy::direct);
        CHECK(d.reason == "router-unavailable");
    }
}

TEST_CASE("expand_queries renders the fixture path with its trace", "[collab]") {
    auto g = fixture_graph();
    auto sq = sub(1, "does aspirin affect inflammation?");
    llm::ScriptedMock mock;
    mock.register_completion_for(llm::Purpose::planning, collab::concept_prompt(sq),
                                 R"({"concepts": ["aspirin", "inflammation"]})");
    auto bundle = collab::expand_queries(sq, g, mock);
    bundle.validate();
    CHECK(bundle.strategy == collab::Strategy::relational);
    CHECK(!bundle.degraded);
    bool found_path_query = false;
    for (const auto& q : bundle.queries) {
        if (q.text.find("aspirin AND PTGS2 AND inflammation") == 0) {
            found_path_query = true;
            REQUIRE(q.steps.size() == 2);
            CHECK(q.steps[0].entity == "aspirin");
            CHECK(q.steps[0].detail == "targets");
            CHECK(q.steps[1].entity == "PTGS2");
            CHECK(q.steps[1].detail == "associated_with");
        }
    }
    CHECK(found_path_query);
}

TEST_CASE("expand_queries degrades when nothing normalizes", "[collab]") {
    auto g = fixture_graph();
    auto sq = sub(1, "what is the role of zzzz in qqqq?");
    llm::ScriptedMock mock;
    mock.register_completion_for(llm::Purpose::planning, collab::concept_prompt(sq),
                                 R"({"concepts": ["zzzz", "qqqq"]})");
    auto bundle = collab::expand_queries(sq, g, mock);
    CHECK(bundle.degraded);
    CHECK(!bundle.has_trace());
    CHECK(!bundle.queries.empty());
}

TEST_CASE("expand_queries rejects empty sub-question text", "[collab]") {
    auto g = fixture_graph();
    llm::ScriptedMock mock;
    CHECK_THROWS_AS(collab::expand_queries(sub(1, "   "), g, mock), Error);
}

TEST_CASE("relational bundles without a trace violate the invariant", "[collab]") {
    collab::QueryBundle b;
    b.index = 1;
    b.strategy = collab::Strategy::relational;
    b.queries.push_back({"plain query", {}});
    CHECK_THROWS_AS(b.validate(), Error);
    b.degraded = true;
    CHECK_NOTHROW(b.validate());
}

TEST_CASE("retrieve_evidence unions, enriches, and dedupes", "[collab]") {
    ClientsFixture f;
    collab::SourceCaps caps;
    caps.pubmed_per_query = 5;
    caps.trials_per_query = 5;

    collab::QueryBundle bundle;
    bundle.index = 1;
    bundle.strategy = collab::Strategy::direct;
    bundle.queries.push_back({"aspirin inflammation outcomes", {}});
    bundle.queries.push_back({"aspirin cytokine trial", {}});

    f.pubmed("aspirin inflammation outcomes", 5, {"31000001", "31000002"});
    f.pubmed("aspirin cytokine trial", 5, {"31000001"});  // duplicate across queries
    f.trials("aspirin inflammation outcomes", 5, {"NCT31000009"});
    f.trials("aspirin cytokine trial", 5, {});

    auto clients = f.make();
    auto result = collab::retrieve_evidence(bundle, clients, caps);
    CHECK(result.failures.empty());
    REQUIRE(result.items.size() == 3);  // two PMIDs + one NCT, PMID dedup across queries
    std::set<std::string> ids;
    for (const auto& item : result.items) {
        ids.insert(item.source_id);
        if (item.kind == lit::EvidenceKind::pubmed_abstract) {
            CHECK(item.citation_count.has_value());  // iCite enrichment applied
        }
    }
    CHECK(ids == std::set<std::string>{"31000001", "31000002", "NCT31000009"});
}

TEST_CASE("retrieve_evidence records partial failures and aggregates total ones", "[collab]") {
    ClientsFixture f;
    collab::SourceCaps caps;
    caps.pubmed_per_query = 5;
    caps.trials_per_query = 5;

    collab::QueryBundle bundle;
    bundle.index = 1;
    bundle.strategy = collab::Strategy::direct;
    bundle.queries.push_back({"aspirin inflammation outcomes", {}});

    SECTION("one source down, the other serving") {
        f.pubmed("aspirin inflammation outcomes", 5, {"31000001"});
        // no trials fixture: that source fails
        auto clients = f.make();
        auto result = collab::retrieve_evidence(bundle, clients, caps);
        CHECK(result.items.size() == 1);
        REQUIRE(result.failures.size() == 1);
        CHECK(result.failures[0].source == "clinicaltrials");
    }
    SECTION("all sources down is an aggregate error naming each source") {
        auto clients = f.make();
        try {
            collab::retrieve_evidence(bundle, clients, caps);
            FAIL("expected aggregate failure");
        } catch (const Error& e) {
            std::string what = e.what();
            CHECK(what.find("pubmed") != std::string::npos);
            CHECK(what.find("clinicaltrials") != std::string::npos);
        }
    }
}

TEST_CASE("dedup keeps the enrichment-richest copy", "[collab]") {
    // crafted via the public path: one query enriched, one not; merged later
    lit::EvidenceItem poor;
    poor.kind = lit::EvidenceKind::pubmed_abstract;
    poor.source_id = "31000001";
    poor.title = "Study";
    lit::EvidenceItem rich = poor;
    rich.year = 2021;
    rich.citation_count = 12;
    rich.body = "abstract";
    CHECK(rich.richness() > poor.richness());
}

TEST_CASE("appraisal labels every item and enforces the include rule", "[collab]") {
    auto sq = sub(1, "does aspirin reduce inflammation?");
    lit::EvidenceItem item;
    item.kind = lit::EvidenceKind::pubmed_abstract;
    item.source_id = "31000001";
    item.title = "Aspirin and inflammation in adults";
    item.body = "Aspirin reduced inflammation in this cohort.";
    item.year = 2022;
    item.citation_count = 30;
    llm::ScriptedMock mock;

    SECTION("scripted include label is applied") {
        mock.register_completion_for(
            llm::Purpose::interpretation,
            collab::appraisal_prompt(sq, {item}, "", collab::kDefaultAppraisalRubric),
            json{{"labels", json::array({json{{"n", 1},
                                              {"relevance", "high"},
                                              {"strength", "high"},
                                              {"quality", "high"},
                                              {"decision", "include"},
                                              {"reason", "on point"}}})}}
                .dump());
        auto labeled = collab::appraise_evidence(sq, {item}, "", mock, 2023);
        REQUIRE(labeled.size() == 1);
        CHECK(labeled[0].label.include);
        CHECK(labeled[0].label.relevance == collab::Level::high);
    }
    SECTION("include with low relevance is an invariant violation") {
        mock.register_completion_for(
            llm::Purpose::interpretation,
            collab::appraisal_prompt(sq, {item}, "", collab::kDefaultAppraisalRubric),
            json{{"labels", json::array({json{{"n", 1},
                                              {"relevance", "low"},
                                              {"strength", "high"},
                                              {"quality", "high"},
                                              {"decision", "include"},
                                              {"reason", "?"}}})}}
                .dump());
        CHECK_THROWS_AS(collab::appraise_evidence(sq, {item}, "", mock, 2023), Error);
    }
    SECTION("label counts must match item counts") {
        mock.register_completion_for(
            llm::Purpose::interpretation,
            collab::appraisal_prompt(sq, {item}, "", collab::kDefaultAppraisalRubric),
            json{{"labels", json::array()}}.dump());
        CHECK_THROWS_AS(collab::appraise_evidence(sq, {item}, "", mock, 2023), Error);
    }
    SECTION("provider down falls back to flagged heuristics") {
        mock.fail_all(true);
        auto labeled = collab::appraise_evidence(sq, {item}, "", mock, 2023);
        REQUIRE(labeled.size() == 1);
        CHECK(labeled[0].label.reason.rfind("heuristic:", 0) == 0);
        // well-cited, recent, and lexically overlapping: included
        CHECK(labeled[0].label.include);
    }
    SECTION("heuristic excludes stale uncited off-topic items") {
        mock.fail_all(true);
        lit::EvidenceItem stale;
        stale.kind = lit::EvidenceKind::pubmed_abstract;
        stale.source_id = "30999999";
        stale.title = "Quantum chromodynamics of heavy mesons";
        stale.body = "Lattice computations of meson spectra.";
        stale.year = 1995;
        stale.citation_count = 2;
        auto labeled = collab::appraise_evidence(sq, {stale}, "", mock, 2023);
        REQUIRE(labeled.size() == 1);
        CHECK(!labeled[0].label.include);
    }
    SECTION("empty item list passes through") {
        CHECK(collab::appraise_evidence(sq, {}, "", mock, 2023).empty());
    }
}

TEST_CASE("llm fallback retention rule", "[collab]") {
    auto sq = sub(1, "does aspirin reduce inflammation?");
    ClientsFixture f;
    collab::SourceCaps caps;
    caps.pubmed_per_query = 5;
    caps.trials_per_query = 5;
    llm::ScriptedMock mock;
    std::string generated =
        "Aspirin suppresses prostaglandin synthesis, which lowers inflammatory signaling.";
    auto vq = collab::verification_query(generated);

    SECTION("precondition: fallback with included items is an error") {
        auto clients = f.make();
        CHECK_THROWS_AS(collab::llm_fallback(sq, 1, mock, clients, "", 2023, caps), Error);
    }
    SECTION("supported: generated item retained with its corroboration") {
        mock.register_completion_for(llm::Purpose::fallback, collab::fallback_prompt(sq),
                                     generated);
        f.pubmed(vq, 5, {"31000042"});
        f.trials(vq, 5, {});
        auto clients = f.make();
        auto items_for_prompt = [&] {
            collab::QueryBundle b;
            b.index = 1;
            b.strategy = collab::Strategy::direct;
            b.queries.push_back({vq, {}});
            return collab::retrieve_evidence(b, clients, caps).items;
        }();
        mock.register_completion_for(
            llm::Purpose::interpretation,
            collab::appraisal_prompt(sq, items_for_prompt, "", collab::kDefaultAppraisalRubric),
            json{{"labels", json::array({json{{"n", 1},
                                              {"relevance", "high"},
                                              {"strength", "moderate"},
                                              {"quality", "moderate"},
                                              {"decision", "include"},
                                              {"reason", "corroborates"}}})}}
                .dump());
        auto outcome = collab::llm_fallback(sq, 0, mock, clients, "", 2023, caps);
        CHECK(outcome.fallback_used);
        REQUIRE(outcome.items.size() == 2);
        CHECK(outcome.items[0].item.kind == lit::EvidenceKind::llm_generated);
        CHECK(outcome.items[1].item.source_id == "31000042");
    }
    SECTION("unsupported: generated item discarded, set stays empty") {
        mock.register_completion_for(llm::Purpose::fallback, collab::fallback_prompt(sq),
                                     generated);
        f.pubmed(vq, 5, {});
        f.trials(vq, 5, {});
        auto clients = f.make();
        auto outcome = collab::llm_fallback(sq, 0, mock, clients, "", 2023, caps);
        CHECK(outcome.fallback_used);
        CHECK(outcome.items.empty());
    }
    SECTION("provider down: nothing generated, fallback_used=false") {
        mock.register_failure(llm::Purpose::fallback,
                              llm::prompt_digest(collab::fallback_prompt(sq)));
        auto clients = f.make();
        auto outcome = collab::llm_fallback(sq, 0, mock, clients, "", 2023, caps);
        CHECK(!outcome.fallback_used);
        CHECK(outcome.items.empty());
    }
}

TEST_CASE("evidence set ordering and retention invariants", "[collab]") {
    collab::EvidenceSet set;
    set.index = 1;
    set.bundle.index = 1;
    set.bundle.strategy = collab::Strategy::direct;
    set.bundle.queries.push_back({"q", {}});

    lit::EvidenceItem included;
    included.kind = lit::EvidenceKind::pubmed_abstract;
    included.source_id = "31000001";
    included.title = "t";
    lit::EvidenceItem excluded = included;
    excluded.source_id = "31000002";

    collab::AppraisalLabel in_label;
    in_label.include = true;
    in_label.relevance = collab::Level::high;
    collab::AppraisalLabel out_label;
    out_label.include = false;

    set.items = {{excluded, out_label}, {included, in_label}};
    set.normalize_order();
    CHECK(set.items[0].label.include);
    CHECK_NOTHROW(set.validate());

    SECTION("llm-generated item without database support is rejected") {
        lit::EvidenceItem gen;
        gen.kind = lit::EvidenceKind::llm_generated;
        gen.source_id = "llm:x";
        gen.title = "generated";
        collab::EvidenceSet bad;
        bad.index = 1;
        bad.bundle = set.bundle;
        bad.fallback_used = true;
        bad.items = {{gen, in_label}};
        CHECK_THROWS_AS(bad.validate(), Error);
    }
}

TEST_CASE("lexical helpers", "[collab]") {
    auto concepts = collab::lexical_concepts("Does \"chronic inflammation\" involve PTGS2?");
    CHECK(std::find(concepts.begin(), concepts.end(), "chronic inflammation") != concepts.end());
    CHECK(std::find(concepts.begin(), concepts.end(), "PTGS2") != concepts.end());

    CHECK(collab::is_definitional("What is aspirin?"));
    CHECK(collab::is_definitional("aspirin"));
    CHECK(!collab::is_definitional("aspirin dose response in chronic inflammation"));

    auto vq = collab::verification_query("Aspirin suppresses prostaglandin synthesis pathways.");
    CHECK(!vq.empty());
    CHECK(vq.find("prostaglandin") != std::string::npos);
}
