#include <catch2/catch_amalgamated.hpp>

#include "deeper/litclients.hpp"

using namespace deeper;

namespace {

std::string fetch_xml(const std::string& pmid, const std::string& title,
                      const std::string& abstract_a, const std::string& abstract_b,
                      const std::string& year_xml) {
    return "<?xml version=\"1.0\"?><PubmedArticleSet><PubmedArticle><MedlineCitation>"
           "<PMID>" + pmid + "</PMID><Article><ArticleTitle>" + title + "</ArticleTitle>"
           "<Abstract><AbstractText Label=\"BACKGROUND\">" + abstract_a + "</AbstractText>"
           "<AbstractText Label=\"RESULTS\">" + abstract_b + "</AbstractText></Abstract>"
           "<Journal><JournalIssue><PubDate>" + year_xml + "</PubDate></JournalIssue></Journal>"
           "</Article></MedlineCitation></PubmedArticle></PubmedArticleSet>";
}

struct Fixture {
    std::shared_ptr<lit::StubTransport> stub = std::make_shared<lit::StubTransport>();
    std::shared_ptr<FakeClock> clock =
        std::make_shared<FakeClock>(std::chrono::milliseconds{1'700'000'000'000});

    lit::LitClients make_clients() {
        lit::ClientConfig config;
        config.use_env_api_key = false;
        return lit::LitClients(stub, clock, config);
    }

    lit::HttpRequest esearch(const std::string& term, std::size_t retmax) {
        return {"GET", lit::kEutilsHost, "/entrez/eutils/esearch.fcgi",
                {{"db", "pubmed"},
                 {"term", term},
                 {"retmax", std::to_string(retmax)},
                 {"retmode", "json"}}};
    }

    lit::HttpRequest efetch(const std::string& ids) {
        return {"GET", lit::kEutilsHost, "/entrez/eutils/efetch.fcgi",
                {{"db", "pubmed"}, {"id", ids}, {"retmode", "xml"}}};
    }

    lit::HttpRequest efetch_pmc(const std::string& pmid) {
        return {"GET", lit::kEutilsHost, "/entrez/eutils/efetch.fcgi",
                {{"db", "pmc"}, {"id", pmid}, {"retmode", "xml"}}};
    }

    lit::HttpRequest icite(const std::string& pmid) {
        return {"GET", lit::kICiteHost, "/api/pubs", {{"pmids", pmid}}};
    }

    lit::HttpRequest esummary(const std::string& pmid) {
        return {"GET", lit::kEutilsHost, "/entrez/eutils/esummary.fcgi",
                {{"db", "pubmed"}, {"id", pmid}, {"retmode", "json"}}};
    }
};

}  // namespace

TEST_CASE("pubmed abstracts: search and fetch", "[litclients]") {
    Fixture f;
    f.stub->add(f.esearch("macular telangiectasia imaging", 20), 200,
                json{{"esearchresult", {{"idlist", {"32804830"}}}}}.dump());
    f.stub->add(f.efetch("32804830"), 200,
                fetch_xml("32804830", "Early structural imaging findings in the macula",
                          "Spectral-domain OCT reveals subtle outer retinal change.",
                          "Temporal thinning precedes vascular signs.", "<Year>2020</Year>"));
    auto clients = f.make_clients();
    auto items = clients.get_pubmed_abstracts("macular telangiectasia imaging", 20);
    REQUIRE(items.size() == 1);
    CHECK(items[0].kind == lit::EvidenceKind::pubmed_abstract);
    CHECK(items[0].source_id == "32804830");
    CHECK(!items[0].title.empty());
    // both AbstractText segments concatenated in document order
    CHECK(items[0].body ==
          "Spectral-domain OCT reveals subtle outer retinal change. Temporal thinning "
          "precedes vascular signs.");
    CHECK(items[0].year == 2020);
}

TEST_CASE("pubmed abstracts: MedlineDate year fallback", "[litclients]") {
    Fixture f;
    f.stub->add(f.esearch("toluene spatial learning", 20), 200,
                json{{"esearchresult", {{"idlist", {"19923859"}}}}}.dump());
    f.stub->add(f.efetch("19923859"), 200,
                fetch_xml("19923859", "T-cell involvement in exposure-driven learning deficits",
                          "Lymphocyte deficiency altered spatial learning outcomes.", "",
                          "<MedlineDate>2010 Jan-Feb</MedlineDate>"));
    auto clients = f.make_clients();
    auto items = clients.get_pubmed_abstracts("toluene spatial learning", 20);
    REQUIRE(items.size() == 1);
    CHECK(items[0].year == 2010);
}

TEST_CASE("pubmed abstracts: precondition errors", "[litclients]") {
    Fixture f;
    auto clients = f.make_clients();
    CHECK_THROWS_AS(clients.get_pubmed_abstracts("", 10), Error);
    CHECK_THROWS_AS(clients.get_pubmed_abstracts("x", 0), Error);
    CHECK_THROWS_AS(clients.get_pubmed_abstracts("x", 500), Error);
}

TEST_CASE("pmc full text: available, paywalled, malformed", "[litclients]") {
    Fixture f;
    f.stub->add(f.efetch_pmc("7000001"), 200,
                "<pmc-articleset><article><front><article-meta><title-group>"
                "<article-title>An open-access cohort report</article-title>"
                "</title-group></article-meta></front>"
                "<body><sec><p>Full methods and results text.</p></sec></body>"
                "</article></pmc-articleset>");
    f.stub->add(f.efetch_pmc("7000002"), 200,
                "<pmc-articleset><article><front></front></article></pmc-articleset>");
    auto clients = f.make_clients();

    auto item = clients.get_pubmed_full_text("7000001");
    CHECK(item.kind == lit::EvidenceKind::pmc_fulltext);
    CHECK(item.body.find("Full methods and results text.") != std::string::npos);

    try {
        clients.get_pubmed_full_text("7000002");
        FAIL("expected not-in-PMC");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::not_found);  // distinct from transport failure
    }
    CHECK_THROWS_AS(clients.get_pubmed_full_text("abc"), Error);
}

TEST_CASE("icite citation details", "[litclients]") {
    Fixture f;
    f.stub->add(f.icite("19923859"), 200,
                json{{"data",
                      json::array({{{"pmid", "19923859"}, {"citation_count", 42}, {"year", 2010}}})}}
                    .dump());
    f.stub->add(f.icite("999999999"), 200, json{{"data", json::array()}}.dump());
    auto clients = f.make_clients();

    auto details = clients.get_article_citation_details("19923859");
    CHECK(details.citation_count >= 0);
    CHECK(details.year == 2010);

    try {
        clients.get_article_citation_details("999999999");
        FAIL("expected not-found");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::not_found);
    }
    CHECK_THROWS_AS(clients.get_article_citation_details(""), Error);
}

TEST_CASE("citation style contains the pmid", "[litclients]") {
    Fixture f;
    f.stub->add(f.efetch("32804830"), 200,
                fetch_xml("32804830", "Early structural imaging findings in the macula",
                          "OCT changes.", "", "<Year>2020</Year>"));
    f.stub->add(f.efetch("111"), 200, "<?xml version=\"1.0\"?><PubmedArticleSet></PubmedArticleSet>");
    auto clients = f.make_clients();
    auto citation = clients.get_pubmed_citation_style("32804830");
    CHECK(!citation.empty());
    CHECK(citation.find("32804830") != std::string::npos);
    CHECK_THROWS_AS(clients.get_pubmed_citation_style("111"), Error);
    CHECK_THROWS_AS(clients.get_pubmed_citation_style("not-a-pmid"), Error);
}

TEST_CASE("wikipedia introduction", "[litclients]") {
    Fixture f;
    f.stub->add({"GET", lit::kWikipediaHost, "/api/rest_v1/page/summary/Aspirin", {}}, 200,
                json{{"title", "Aspirin"},
                     {"extract", "Aspirin is a nonsteroidal anti-inflammatory drug."}}
                    .dump());
    f.stub->add({"GET", lit::kWikipediaHost, "/api/rest_v1/page/summary/Zzzzqqq", {}}, 404,
                json{{"type", "not_found"}}.dump());
    f.stub->add({"GET", lit::kWikipediaHost, "/api/rest_v1/page/summary/Mercury", {}}, 200,
                json{{"title", "Mercury"}, {"type", "disambiguation"}, {"extract", "…"}}.dump());
    auto clients = f.make_clients();

    auto item = clients.get_wikipedia_introduction("Aspirin");
    CHECK(item.kind == lit::EvidenceKind::wikipedia_intro);
    CHECK(!item.body.empty());

    try {
        clients.get_wikipedia_introduction("Zzzzqqq");
        FAIL("expected page-missing");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::not_found);
    }
    try {
        clients.get_wikipedia_introduction("Mercury");
        FAIL("expected disambiguation signal");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::validation);  // distinct from page-missing
    }
    CHECK_THROWS_AS(clients.get_wikipedia_introduction(""), Error);
}

TEST_CASE("clinical trials search", "[litclients]") {
    Fixture f;
    json study{{"protocolSection",
                {{"identificationModule",
                  {{"nctId", "NCT04267848"}, {"briefTitle", "Pembrolizumab in NSCLC"}}},
                 {"descriptionModule", {{"briefSummary", "A study of pembrolizumab."}}},
                 {"statusModule", {{"startDateStruct", {{"date", "2020-03"}}}}}}}};
    f.stub->add({"GET", lit::kCtgovHost, "/api/v2/studies",
                 {{"query.term", "NSCLC pembrolizumab"}, {"pageSize", "10"}}},
                200, json{{"studies", json::array({study})}}.dump());
    f.stub->add({"GET", lit::kCtgovHost, "/api/v2/studies",
                 {{"query.term", "xqzzt gibberish"}, {"pageSize", "10"}}},
                200, json{{"studies", json::array()}}.dump());
    auto clients = f.make_clients();

    auto items = clients.get_clinical_trials("NSCLC pembrolizumab");
    REQUIRE(!items.empty());
    for (const auto& item : items) {
        CHECK(item.kind == lit::EvidenceKind::clinical_trial);
        CHECK(lit::is_nct(item.source_id));
    }
    CHECK(items[0].year == 2020);

    CHECK(clients.get_clinical_trials("xqzzt gibberish").empty());
    CHECK_THROWS_AS(clients.get_clinical_trials(""), Error);
}

TEST_CASE("verify_reference resolves and classifies", "[litclients]") {
    Fixture f;
    f.stub->add(f.esummary("32804830"), 200,
                json{{"result", {{"32804830", {{"uid", "32804830"}, {"title", "Imaging study"}}}}}}
                    .dump());
    f.stub->add(f.esummary("999999999"), 200,
                json{{"result", {{"999999999", {{"error", "cannot get document summary"}}}}}}
                    .dump());
    f.stub->add({"GET", lit::kCtgovHost, "/api/v2/studies/NCT04267848", {}}, 200,
                json{{"protocolSection",
                      {{"identificationModule",
                        {{"nctId", "NCT04267848"}, {"briefTitle", "Pembrolizumab"}}}}}}
                    .dump());
    auto clients = f.make_clients();

    auto ok = clients.verify_reference("32804830");
    CHECK(ok.resolved);
    CHECK(ok.kind == "pmid");

    auto missing = clients.verify_reference("999999999");
    CHECK(!missing.resolved);

    auto trial = clients.verify_reference("NCT04267848");
    CHECK(trial.resolved);
    CHECK(trial.kind == "nct");

    CHECK_THROWS_AS(clients.verify_reference("NCT0000000"), Error);  // 7 digits
    CHECK_THROWS_AS(clients.verify_reference("pm123"), Error);
}

TEST_CASE("evidence item shape invariants", "[litclients]") {
    lit::EvidenceItem item;
    item.kind = lit::EvidenceKind::clinical_trial;
    item.source_id = "NCT1234";  // too short
    item.title = "t";
    CHECK_THROWS_AS(item.validate(), Error);
    item.source_id = "NCT12345678";
    CHECK_NOTHROW(item.validate());

    item.kind = lit::EvidenceKind::llm_generated;
    CHECK_THROWS_AS(item.validate(), Error);
    item.source_id = "llm:abc123";
    CHECK_NOTHROW(item.validate());

    item.kind = lit::EvidenceKind::pubmed_abstract;
    item.source_id = "12a45";
    CHECK_THROWS_AS(item.validate(), Error);
}

TEST_CASE("evidence item json round-trip", "[litclients]") {
    lit::EvidenceItem item;
    item.kind = lit::EvidenceKind::pubmed_abstract;
    item.source_id = "12345678";
    item.title = "Some study";
    item.body = "Abstract text";
    item.year = 2021;
    item.citation_count = 7;
    item.citation_string = "Some study. 2021. PMID: 12345678.";
    item.query = "some query";
    item.retrieved_at = 1700000000;
    auto round = lit::EvidenceItem::from_json(item.to_json());
    CHECK(round.to_json() == item.to_json());
}
