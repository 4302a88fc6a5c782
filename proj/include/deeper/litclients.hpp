#pragma once

#include <regex>

#include "deeper/core.hpp"
#include "deeper/transport.hpp"

namespace deeper::lit {

enum class EvidenceKind {
    pubmed_abstract,
    pmc_fulltext,
    clinical_trial,
    wikipedia_intro,
    llm_generated,
};

inline const char* to_string(EvidenceKind k) {
    switch (k) {
        case EvidenceKind::pubmed_abstract: return "pubmed-abstract";
        case EvidenceKind::pmc_fulltext: return "pmc-fulltext";
        case EvidenceKind::clinical_trial: return "clinical-trial";
        case EvidenceKind::wikipedia_intro: return "wikipedia-intro";
        case EvidenceKind::llm_generated: return "llm-generated";
    }
    return "unknown";
}

inline EvidenceKind parse_evidence_kind(std::string_view s) {
    if (s == "pubmed-abstract") return EvidenceKind::pubmed_abstract;
    if (s == "pmc-fulltext") return EvidenceKind::pmc_fulltext;
    if (s == "clinical-trial") return EvidenceKind::clinical_trial;
    if (s == "wikipedia-intro") return EvidenceKind::wikipedia_intro;
    if (s == "llm-generated") return EvidenceKind::llm_generated;
    fail(ErrorCode::parse, "unknown evidence kind: " + std::string(s));
}

inline bool is_pmid(std::string_view id) {
    if (id.empty()) return false;
    return std::all_of(id.begin(), id.end(), [](unsigned char c) { return std::isdigit(c); });
}

inline bool is_nct(std::string_view id) {
    if (id.size() != 11 || id.substr(0, 3) != "NCT") return false;
    return std::all_of(id.begin() + 3, id.end(),
                       [](unsigned char c) { return std::isdigit(c); });
}

struct EvidenceItem {
    EvidenceKind kind = EvidenceKind::pubmed_abstract;
    std::string source_id;
    std::string title;
    std::string body;
    std::optional<int> year;
    std::optional<int> citation_count;
    std::optional<std::string> citation_string;
    std::string query;            // retrieval query that produced it
    std::int64_t retrieved_at = 0;

    void validate() const {
        switch (kind) {
            case EvidenceKind::pubmed_abstract:
            case EvidenceKind::pmc_fulltext:
                require(is_pmid(source_id), ErrorCode::validation,
                        "PMID-shaped source_id required, got '" + source_id + "'");
                break;
            case EvidenceKind::clinical_trial:
                require(is_nct(source_id), ErrorCode::validation,
                        "NCT-shaped source_id required, got '" + source_id + "'");
                break;
            case EvidenceKind::llm_generated:
                require(starts_with(source_id, "llm:"), ErrorCode::validation,
                        "llm-generated source_id must be prefixed 'llm:'");
                break;
            case EvidenceKind::wikipedia_intro:
                require(!source_id.empty(), ErrorCode::validation,
                        "wikipedia-intro needs a page title");
                break;
        }
        require(!title.empty() || !body.empty(), ErrorCode::validation,
                "evidence item needs a title or a body");
        if (citation_count) {
            require(*citation_count >= 0, ErrorCode::validation, "negative citation count");
        }
    }

    /// Enrichment richness: how many optional fields are populated.
    int richness() const {
        return (year ? 1 : 0) + (citation_count ? 1 : 0) + (citation_string ? 1 : 0) +
               (body.empty() ? 0 : 1);
    }

    json to_json() const {
        json j{{"kind", to_string(kind)},
               {"source_id", source_id},
               {"title", title},
               {"body", body},
               {"query", query},
               {"retrieved_at", retrieved_at}};
        if (year) j["year"] = *year;
        if (citation_count) j["citation_count"] = *citation_count;
        if (citation_string) j["citation_string"] = *citation_string;
        return j;
    }

    static EvidenceItem from_json(const json& j) {
        EvidenceItem it;
        it.kind = parse_evidence_kind(j.at("kind").get<std::string>());
        it.source_id = j.at("source_id").get<std::string>();
        it.title = j.value("title", "");
        it.body = j.value("body", "");
        it.query = j.value("query", "");
        it.retrieved_at = j.value("retrieved_at", std::int64_t{0});
        if (j.contains("year")) it.year = j.at("year").get<int>();
        if (j.contains("citation_count")) it.citation_count = j.at("citation_count").get<int>();
        if (j.contains("citation_string")) {
            it.citation_string = j.at("citation_string").get<std::string>();
        }
        it.validate();
        return it;
    }
};

struct ClientConfig {
    double ncbi_rate = 3.0;       // req/s without an API key
    double ncbi_rate_keyed = 10.0;
    double default_rate = 1.0;
    RetryPolicy retry;
    std::string cache_dir;
    std::string ncbi_api_key;     // from DEEPER_NCBI_API_KEY when unset
    bool use_env_api_key = true;  // replay setups pin this off for stable digests

    void validate() const {
        require(ncbi_rate > 0 && ncbi_rate_keyed > 0 && default_rate > 0,
                ErrorCode::validation, "rate limits must be positive");
        require(retry.max_attempts >= 1, ErrorCode::validation, "max attempts must be >= 1");
    }
};

struct ResolutionRecord {
    std::string source_id;
    bool resolved = false;
    std::string kind;  // "pmid" or "nct"
    std::optional<std::string> title;

    json to_json() const {
        json j{{"source_id", source_id}, {"resolved", resolved}, {"kind", kind}};
        if (title) j["title"] = *title;
        return j;
    }
};

namespace detail {

// Targeted tag extraction for the two fixed E-utils payload shapes we read.
// Attributes are tolerated; nesting of the same tag is not expected in these
// payloads.

inline std::string xml_unescape(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] != '&') {
            out.push_back(s[i]);
            continue;
        }
        auto end = s.find(';', i);
        if (end == std::string_view::npos) {
            out.push_back(s[i]);
            continue;
        }
        auto ent = s.substr(i + 1, end - i - 1);
        if (ent == "lt") out.push_back('<');
        else if (ent == "gt") out.push_back('>');
        else if (ent == "amp") out.push_back('&');
        else if (ent == "quot") out.push_back('"');
        else if (ent == "apos") out.push_back('\'');
        else if (!ent.empty() && ent[0] == '#') {
            long code = 0;
            try {
                code = (ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X'))
                           ? std::stol(std::string(ent.substr(2)), nullptr, 16)
                           : std::stol(std::string(ent.substr(1)));
            } catch (const std::exception&) {
                code = 0;
            }
            if (code > 0 && code < 128) {
                out.push_back(static_cast<char>(code));
            } else {
                out.push_back('?');  // keep it ASCII; payload fidelity not needed
            }
        } else {
            out.append(s.substr(i, end - i + 1));
        }
        i = end;
    }
    return out;
}

/// Inner text of every <tag ...>...</tag> occurrence, in document order.
inline std::vector<std::string> xml_all(std::string_view xml, const std::string& tag) {
    std::vector<std::string> out;
    std::string open = "<" + tag;
    std::string close = "</" + tag + ">";
    std::size_t pos = 0;
    while (true) {
        auto start = xml.find(open, pos);
        if (start == std::string_view::npos) break;
        auto after = start + open.size();
        if (after < xml.size() && xml[after] != '>' && xml[after] != ' ' && xml[after] != '/' &&
            xml[after] != '\t' && xml[after] != '\n') {
            pos = after;  // matched a longer tag name
            continue;
        }
        auto gt = xml.find('>', start);
        if (gt == std::string_view::npos) break;
        if (xml[gt - 1] == '/') {  // self-closing
            out.emplace_back();
            pos = gt + 1;
            continue;
        }
        auto end = xml.find(close, gt);
        if (end == std::string_view::npos) break;
        out.push_back(xml_unescape(xml.substr(gt + 1, end - gt - 1)));
        pos = end + close.size();
    }
    return out;
}

inline std::optional<std::string> xml_first(std::string_view xml, const std::string& tag) {
    auto all = xml_all(xml, tag);
    if (all.empty()) return std::nullopt;
    return all.front();
}

/// Outer blocks of a container tag, e.g. each <PubmedArticle>...</PubmedArticle>.
inline std::vector<std::string> xml_blocks(std::string_view xml, const std::string& tag) {
    std::vector<std::string> out;
    std::string open = "<" + tag;
    std::string close = "</" + tag + ">";
    std::size_t pos = 0;
    while (true) {
        auto start = xml.find(open, pos);
        if (start == std::string_view::npos) break;
        auto end = xml.find(close, start);
        if (end == std::string_view::npos) break;
        out.emplace_back(xml.substr(start, end + close.size() - start));
        pos = end + close.size();
    }
    return out;
}

inline std::optional<int> leading_year(const std::string& s) {
    std::smatch m;
    static const std::regex year_re(R"((\d{4}))");
    if (std::regex_search(s, m, year_re)) return std::stoi(m[1]);
    return std::nullopt;
}

}  // namespace detail

inline constexpr const char* kEutilsHost = "https://eutils.ncbi.nlm.nih.gov";
inline constexpr const char* kICiteHost = "https://icite.od.nih.gov";
inline constexpr const char* kWikipediaHost = "https://en.wikipedia.org";
inline constexpr const char* kCtgovHost = "https://clinicaltrials.gov";

/// Rate-limited, cached clients for the six literature/clinical worker APIs
/// plus the reference-resolution check. All HTTP flows through the injected
/// transport, so tests replay fixtures and never dial out.
class LitClients {
public:
    LitClients(std::shared_ptr<Transport> transport, std::shared_ptr<Clock> clock,
               ClientConfig config = {})
        : clock_(clock), config_(std::move(config)) {
        config_.validate();
        if (config_.ncbi_api_key.empty() && config_.use_env_api_key) {
            if (const char* k = std::getenv("DEEPER_NCBI_API_KEY")) config_.ncbi_api_key = k;
        }
        auto limiter = std::make_shared<RateLimiter>(clock);
        double ncbi = config_.ncbi_api_key.empty() ? config_.ncbi_rate : config_.ncbi_rate_keyed;
        limiter->set_rate(kEutilsHost, ncbi);
        limiter->set_rate(kICiteHost, config_.default_rate);
        limiter->set_rate(kWikipediaHost, config_.default_rate);
        limiter->set_rate(kCtgovHost, config_.default_rate);
        std::shared_ptr<ResponseCache> cache;
        if (!config_.cache_dir.empty()) {
            cache = std::make_shared<ResponseCache>(config_.cache_dir, clock);
        }
        transport_ =
            std::make_shared<DisciplinedTransport>(std::move(transport), limiter, cache,
                                                   config_.retry);
    }

    /// E-utils esearch then efetch; abstracts concatenate every AbstractText
    /// segment in document order.
    std::vector<EvidenceItem> get_pubmed_abstracts(const std::string& query,
                                                   std::size_t max_results) {
        require(!collapse_whitespace(query).empty(), ErrorCode::precondition,
                "get_pubmed_abstracts: empty query");
        require(max_results >= 1 && max_results <= 200, ErrorCode::precondition,
                "max_results must be in [1, 200]");
        HttpRequest search{"GET", kEutilsHost, "/entrez/eutils/esearch.fcgi",
                           {{"db", "pubmed"},
                            {"term", query},
                            {"retmax", std::to_string(max_results)},
                            {"retmode", "json"}}};
        add_key(search);
        auto res = expect_ok(transport_->send(search), "esearch");
        json j = json::parse(res.body);
        std::vector<std::string> ids =
            j.at("esearchresult").at("idlist").get<std::vector<std::string>>();
        if (ids.empty()) return {};
        auto items = fetch_pubmed(ids, query);
        if (items.size() > max_results) items.resize(max_results);
        return items;
    }

    /// Fetch one abstract by PMID.
    EvidenceItem get_pubmed_abstract_by_id(const std::string& pmid) {
        require_pmid(pmid);
        auto items = fetch_pubmed({pmid}, "pmid:" + pmid);
        require(!items.empty(), ErrorCode::not_found, "PMID not found: " + pmid);
        return items.front();
    }

    /// PMC full text via efetch db=pmc. Not-in-PMC is reported distinctly
    /// from transport failure.
    EvidenceItem get_pubmed_full_text(const std::string& pmid) {
        require_pmid(pmid);
        HttpRequest req{"GET", kEutilsHost, "/entrez/eutils/efetch.fcgi",
                        {{"db", "pmc"}, {"id", pmid}, {"retmode", "xml"}}};
        add_key(req);
        auto res = expect_ok(transport_->send(req), "efetch pmc");
        auto bodies = detail::xml_all(res.body, "body");
        auto title = detail::xml_first(res.body, "article-title");
        if (bodies.empty() || collapse_whitespace(bodies.front()).empty()) {
            fail(ErrorCode::not_found, "PMID " + pmid + " has no full text in PMC");
        }
        EvidenceItem item;
        item.kind = EvidenceKind::pmc_fulltext;
        item.source_id = pmid;
        item.title = title.value_or("");
        item.body = collapse_whitespace(bodies.front());
        item.query = "pmid:" + pmid;
        item.retrieved_at = clock_->unix_seconds();
        item.validate();
        return item;
    }

    struct CitationDetails {
        int citation_count = 0;
        std::optional<int> year;
    };

    /// iCite /api/pubs citation metrics for one PMID.
    CitationDetails get_article_citation_details(const std::string& pmid) {
        require_pmid(pmid);
        HttpRequest req{"GET", kICiteHost, "/api/pubs", {{"pmids", pmid}}};
        auto res = expect_ok(transport_->send(req), "icite");
        json j = json::parse(res.body);
        const auto& data = j.at("data");
        require(data.is_array() && !data.empty(), ErrorCode::not_found,
                "iCite has no record for PMID " + pmid);
        const auto& rec = data.at(0);
        CitationDetails details;
        details.citation_count = rec.value("citation_count", 0);
        require(details.citation_count >= 0, ErrorCode::protocol, "negative citation count");
        if (rec.contains("year") && rec.at("year").is_number()) {
            details.year = rec.at("year").get<int>();
        }
        return details;
    }

    /// Formatted citation for a PMID (efetch text abstract header carries the
    /// journal line; we assemble from the XML record instead).
    std::string get_pubmed_citation_style(const std::string& pmid) {
        require_pmid(pmid);
        auto item = get_pubmed_abstract_by_id(pmid);
        std::string citation;
        if (!item.title.empty()) citation += item.title + ". ";
        if (item.year) citation += std::to_string(*item.year) + ". ";
        citation += "PMID: " + pmid + ".";
        return citation;
    }

    /// Wikipedia REST page summary. Disambiguation pages are signaled
    /// distinctly from missing pages.
    EvidenceItem get_wikipedia_introduction(const std::string& concept_name) {
        require(!collapse_whitespace(concept_name).empty(), ErrorCode::precondition,
                "get_wikipedia_introduction: empty concept");
        std::string title = concept_name;
        std::replace(title.begin(), title.end(), ' ', '_');
        HttpRequest req{"GET", kWikipediaHost, "/api/rest_v1/page/summary/" + title, {}};
        auto res = transport_->send(req);
        if (res.status == 404) {
            fail(ErrorCode::not_found, "no Wikipedia page for '" + concept_name + "'");
        }
        expect_ok(res, "wikipedia");
        json j = json::parse(res.body);
        if (j.value("type", "") == "disambiguation") {
            fail(ErrorCode::validation, "'" + concept_name + "' is a disambiguation page");
        }
        EvidenceItem item;
        item.kind = EvidenceKind::wikipedia_intro;
        item.source_id = j.value("title", concept_name);
        item.title = j.value("title", concept_name);
        item.body = j.value("extract", "");
        require(!item.body.empty(), ErrorCode::protocol, "empty page summary");
        item.query = concept_name;
        item.retrieved_at = clock_->unix_seconds();
        item.validate();
        return item;
    }

    /// ClinicalTrials.gov v2 study search.
    std::vector<EvidenceItem> get_clinical_trials(const std::string& query,
                                                  std::size_t max_results = 10) {
        require(!collapse_whitespace(query).empty(), ErrorCode::precondition,
                "get_clinical_trials: empty query");
        HttpRequest req{"GET", kCtgovHost, "/api/v2/studies",
                        {{"query.term", query}, {"pageSize", std::to_string(max_results)}}};
        auto res = expect_ok(transport_->send(req), "clinicaltrials");
        json j = json::parse(res.body);
        std::vector<EvidenceItem> out;
        for (const auto& study : j.value("studies", json::array())) {
            const auto& proto = study.at("protocolSection");
            const auto& ident = proto.at("identificationModule");
            EvidenceItem item;
            item.kind = EvidenceKind::clinical_trial;
            item.source_id = ident.at("nctId").get<std::string>();
            item.title = ident.value("briefTitle", "");
            if (proto.contains("descriptionModule")) {
                item.body = proto.at("descriptionModule").value("briefSummary", "");
            }
            if (proto.contains("statusModule")) {
                const auto& status = proto.at("statusModule");
                if (status.contains("startDateStruct")) {
                    auto date = status.at("startDateStruct").value("date", "");
                    if (auto y = detail::leading_year(date)) item.year = y;
                }
            }
            item.query = query;
            item.retrieved_at = clock_->unix_seconds();
            item.validate();
            out.push_back(std::move(item));
            if (out.size() >= max_results) break;
        }
        return out;
    }

    /// Resolve an id against its source database. resolved=false is a
    /// definite negative; transport failures propagate instead. Results are
    /// cached — negatives recheck after one day, positives after the regular
    /// TTL.
    ResolutionRecord verify_reference(const std::string& source_id) {
        ResolutionRecord rec;
        rec.source_id = source_id;
        if (is_pmid(source_id)) {
            rec.kind = "pmid";
        } else if (is_nct(source_id)) {
            rec.kind = "nct";
        } else {
            fail(ErrorCode::precondition,
                 "id is neither PMID- nor NCT-shaped: '" + source_id + "'");
        }
        if (auto cached = lookup_verify(source_id)) return *cached;

        if (rec.kind == "pmid") {
            HttpRequest req{"GET", kEutilsHost, "/entrez/eutils/esummary.fcgi",
                            {{"db", "pubmed"}, {"id", source_id}, {"retmode", "json"}}};
            add_key(req);
            auto res = expect_ok(transport_->send(req), "esummary");
            json j = json::parse(res.body);
            const auto& result = j.value("result", json::object());
            if (result.contains(source_id) && !result.at(source_id).contains("error")) {
                rec.resolved = true;
                rec.title = result.at(source_id).value("title", "");
            }
        } else {
            HttpRequest req{"GET", kCtgovHost, "/api/v2/studies/" + source_id, {}};
            auto res = transport_->send(req);
            if (res.status == 404) {
                rec.resolved = false;
            } else {
                expect_ok(res, "clinicaltrials study");
                json j = json::parse(res.body);
                rec.resolved = true;
                if (j.contains("protocolSection")) {
                    rec.title = j.at("protocolSection")
                                    .at("identificationModule")
                                    .value("briefTitle", "");
                }
            }
        }
        store_verify(rec);
        return rec;
    }

    std::size_t upstream_calls() const { return transport_->upstream_calls(); }
    const ClientConfig& config() const { return config_; }

private:
    static constexpr std::chrono::seconds kVerifyPositiveTtl{7 * 24 * 3600};
    static constexpr std::chrono::seconds kVerifyNegativeTtl{24 * 3600};

    void require_pmid(const std::string& pmid) const {
        require(is_pmid(pmid), ErrorCode::precondition, "malformed PMID: '" + pmid + "'");
    }

    void add_key(HttpRequest& req) const {
        if (!config_.ncbi_api_key.empty()) req.params["api_key"] = config_.ncbi_api_key;
    }

    HttpResponse expect_ok(HttpResponse res, const char* what) const {
        require(res.ok(), ErrorCode::transport,
                std::string(what) + " returned status " + std::to_string(res.status));
        return res;
    }

    std::vector<EvidenceItem> fetch_pubmed(const std::vector<std::string>& ids,
                                           const std::string& query) {
        std::string joined;
        for (const auto& id : ids) {
            if (!joined.empty()) joined += ",";
            joined += id;
        }
        HttpRequest fetch{"GET", kEutilsHost, "/entrez/eutils/efetch.fcgi",
                          {{"db", "pubmed"}, {"id", joined}, {"retmode", "xml"}}};
        add_key(fetch);
        auto res = expect_ok(transport_->send(fetch), "efetch pubmed");
        std::vector<EvidenceItem> out;
        for (const auto& block : detail::xml_blocks(res.body, "PubmedArticle")) {
            EvidenceItem item;
            item.kind = EvidenceKind::pubmed_abstract;
            item.source_id = detail::xml_first(block, "PMID").value_or("");
            item.title = detail::xml_first(block, "ArticleTitle").value_or("");
            std::string abstract;
            for (const auto& seg : detail::xml_all(block, "AbstractText")) {
                if (!abstract.empty()) abstract += " ";
                abstract += seg;
            }
            item.body = abstract;
            // PubDate year first, else the MedlineDate leading year
            if (auto dates = detail::xml_blocks(block, "PubDate"); !dates.empty()) {
                if (auto y = detail::xml_first(dates.front(), "Year")) {
                    item.year = std::stoi(*y);
                } else if (auto md = detail::xml_first(dates.front(), "MedlineDate")) {
                    item.year = detail::leading_year(*md);
                }
            }
            item.query = query;
            item.retrieved_at = clock_->unix_seconds();
            item.validate();
            out.push_back(std::move(item));
        }
        return out;
    }

    std::optional<ResolutionRecord> lookup_verify(const std::string& id) {
        if (config_.cache_dir.empty()) return std::nullopt;
        std::lock_guard lock(verify_mu_);
        auto path = verify_path(id);
        std::ifstream in(path);
        if (!in.good()) return std::nullopt;
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) return std::nullopt;
        auto recorded = std::chrono::seconds(j.value("recorded_at", std::int64_t{0}));
        auto now = std::chrono::seconds(clock_->unix_seconds());
        bool resolved = j.value("resolved", false);
        auto ttl = resolved ? kVerifyPositiveTtl : kVerifyNegativeTtl;
        if (now - recorded > ttl) return std::nullopt;
        ResolutionRecord rec;
        rec.source_id = id;
        rec.resolved = resolved;
        rec.kind = j.value("kind", "");
        if (j.contains("title")) rec.title = j.at("title").get<std::string>();
        return rec;
    }

    void store_verify(const ResolutionRecord& rec) {
        if (config_.cache_dir.empty()) return;
        std::lock_guard lock(verify_mu_);
        std::filesystem::create_directories(
            std::filesystem::path(config_.cache_dir) / "verify");
        json j = rec.to_json();
        j["recorded_at"] = clock_->unix_seconds();
        std::ofstream out(verify_path(rec.source_id));
        out << j.dump(2) << '\n';
    }

    std::filesystem::path verify_path(const std::string& id) const {
        return std::filesystem::path(config_.cache_dir) / "verify" / (id + ".json");
    }

    std::shared_ptr<Clock> clock_;
    ClientConfig config_;
    std::shared_ptr<DisciplinedTransport> transport_;
    std::mutex verify_mu_;
};

}  // namespace deeper::lit
