#pragma once

#include <functional>
#include <regex>

#include "deeper/collab.hpp"
#include "deeper/core.hpp"
#include "deeper/litclients.hpp"
#include "deeper/llm.hpp"
#include "deeper/planner.hpp"

namespace deeper::synth {

// --- citations -----------------------------------------------------------------

/// Inline citation syntax, regex-exact: "(PMID: nnn...)" with optional space
/// after the colon, and "(NCT########)".
inline const std::regex& citation_regex() {
    static const std::regex re(R"(\((?:PMID:\s*(\d+)|(NCT\d{8}))\))");
    return re;
}

/// Citation ids in order of first appearance in the text.
inline std::vector<std::string> extract_citations(const std::string& text) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    auto begin = std::sregex_iterator(text.begin(), text.end(), citation_regex());
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        std::string id = (*it)[1].matched ? (*it)[1].str() : (*it)[2].str();
        if (seen.insert(id).second) out.push_back(id);
    }
    return out;
}

/// All citation ids including repeats, in textual order.
inline std::vector<std::string> extract_citations_with_repeats(const std::string& text) {
    std::vector<std::string> out;
    auto begin = std::sregex_iterator(text.begin(), text.end(), citation_regex());
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        out.push_back((*it)[1].matched ? (*it)[1].str() : (*it)[2].str());
    }
    return out;
}

struct Reference {
    std::string source_id;
    std::string kind;  // "pmid" or "nct"
    std::string citation_string;
    std::optional<bool> resolved;  // unset before verification

    json to_json() const {
        json j{{"source_id", source_id}, {"kind", kind}, {"citation_string", citation_string}};
        if (resolved) j["resolved"] = *resolved;
        return j;
    }

    static Reference from_json(const json& j) {
        Reference r;
        r.source_id = j.at("source_id").get<std::string>();
        r.kind = j.value("kind", "");
        r.citation_string = j.value("citation_string", "");
        if (j.contains("resolved")) r.resolved = j.at("resolved").get<bool>();
        return r;
    }
};

struct ReportSection {
    std::string title;
    std::vector<std::string> claims;  // each claim text carries >= 1 inline citation

    json to_json() const { return json{{"title", title}, {"claims", claims}}; }

    static ReportSection from_json(const json& j) {
        ReportSection s;
        s.title = j.value("title", "");
        s.claims = j.at("claims").get<std::vector<std::string>>();
        return s;
    }
};

struct AnswerBundle {
    std::string answer;                   // concise answer with inline citations
    std::vector<ReportSection> sections;  // analytical report
    std::vector<Reference> references;    // ordered by first inline appearance
    std::string trace;                    // pointer to run artifacts (relative path)
    bool insufficient = false;            // evidentiary insufficiency outcome

    std::string report_text() const {
        std::string out;
        for (const auto& s : sections) {
            if (!s.title.empty()) {
                if (!out.empty()) out += "\n\n";
                out += "### " + s.title;
            }
            for (const auto& c : s.claims) {
                if (!out.empty()) out += "\n\n";
                out += c;
            }
        }
        return out;
    }

    /// Inline ids over answer then report, first-appearance order.
    std::vector<std::string> inline_ids() const {
        std::string all = answer;
        all += "\n";
        all += report_text();
        return extract_citations(all);
    }

    /// The three reference invariants: inline ids and reference list agree as
    /// sets, and reference order equals first-appearance order. Resolution is
    /// checked by the caller against its transport.
    void validate() const {
        auto inline_order = inline_ids();
        require(inline_order.size() == references.size(), ErrorCode::integrity,
                "reference list and inline citations disagree (" +
                    std::to_string(inline_order.size()) + " inline ids, " +
                    std::to_string(references.size()) + " references)");
        for (std::size_t i = 0; i < inline_order.size(); ++i) {
            require(references[i].source_id == inline_order[i], ErrorCode::integrity,
                    "reference order differs from first-appearance order at position " +
                        std::to_string(i + 1));
        }
        for (const auto& s : sections) {
            for (const auto& c : s.claims) {
                require(!extract_citations(c).empty(), ErrorCode::integrity,
                        "report claim carries no inline citation: " + c.substr(0, 80));
            }
        }
    }

    json to_json() const {
        json secs = json::array();
        for (const auto& s : sections) secs.push_back(s.to_json());
        json refs = json::array();
        for (const auto& r : references) refs.push_back(r.to_json());
        return json{{"schema_version", 1},
                    {"answer", answer},
                    {"report", json{{"sections", secs}}},
                    {"references", refs},
                    {"trace", trace},
                    {"insufficient", insufficient}};
    }

    static AnswerBundle from_json(const json& j) {
        AnswerBundle b;
        b.answer = j.at("answer").get<std::string>();
        for (const auto& s : j.at("report").at("sections")) {
            b.sections.push_back(ReportSection::from_json(s));
        }
        for (const auto& r : j.at("references")) b.references.push_back(Reference::from_json(r));
        b.trace = j.value("trace", "");
        b.insufficient = j.value("insufficient", false);
        return b;
    }

    /// Plain-text rendering in the common template. normalize_response
    /// inverts this rendering on (answer, report text, reference ids).
    std::string render_text() const {
        std::string out = "## Answer\n\n" + answer + "\n\n## Analytical Report\n\n";
        out += report_text();
        out += "\n\n## References\n\n";
        for (std::size_t i = 0; i < references.size(); ++i) {
            const auto& r = references[i];
            out += std::to_string(i + 1) + ". ";
            out += r.kind == "nct" ? r.source_id : "PMID: " + r.source_id;
            if (!r.citation_string.empty()) out += " — " + r.citation_string;
            out += "\n";
        }
        return out;
    }
};

inline std::string classify_id(const std::string& id) {
    if (lit::is_pmid(id)) return "pmid";
    if (lit::is_nct(id)) return "nct";
    return "";
}

// --- interpretation -----------------------------------------------------------

struct InterpretedItem {
    collab::LabeledEvidence evidence;
    std::string note;  // one-line interpretation

    json to_json() const {
        return json{{"evidence", evidence.to_json()}, {"note", note}};
    }
};

struct InterpretedEvidence {
    int index = 1;
    std::vector<InterpretedItem> items;  // subset of the included source items
    bool flagged = false;                // identity refinement after provider failure

    json to_json() const {
        json items_j = json::array();
        for (const auto& it : items) items_j.push_back(it.to_json());
        return json{{"i", index}, {"items", items_j}, {"flagged", flagged}};
    }
};

inline std::vector<llm::Message> interpretation_prompt(const plan::SubQuestion& sub,
                                                       const std::vector<collab::LabeledEvidence>& included) {
    std::string user = "Sub-question: " + sub.text + "\n\nIncluded evidence:\n";
    for (const auto& e : included) {
        user += "- [" + e.item.source_id + "] " + e.item.title + "\n";
    }
    user += "\nSelect and order the items most directly supporting the core intent of the "
            "sub-question, strongest support first, and give a one-line interpretation note "
            "per kept item. Reply with a JSON object {\"items\": [{\"source_id\": ..., "
            "\"note\": ...}]}.";
    return {{"system", "You re-interpret retrieved evidence against its sub-question."},
            {"user", user}};
}

/// Refine the included items of an evidence set: subset + ordering by support
/// for the core intent, each with a note. Items must come from the source
/// set; provider failure yields the identity refinement, flagged.
inline InterpretedEvidence interpret_evidence(const plan::SubQuestion& sub,
                                              const collab::EvidenceSet& set,
                                              llm::ChatProvider& provider) {
    InterpretedEvidence out;
    out.index = set.index;
    std::vector<collab::LabeledEvidence> included;
    for (const auto& e : set.items) {
        if (e.label.include) included.push_back(e);
    }
    if (included.empty()) return out;

    auto identity = [&] {
        out.items.clear();
        for (const auto& e : included) out.items.push_back({e, "kept as retrieved"});
        out.flagged = true;
    };

    try {
        llm::GenerationRequest req;
        req.purpose = llm::Purpose::interpretation;
        req.sampling = llm::Sampling::deterministic;
        req.messages = interpretation_prompt(sub, included);
        json parsed = llm::chat_json(provider, req);
        std::set<std::string> seen;
        for (const auto& entry : parsed.at("items")) {
            auto id = entry.at("source_id").get<std::string>();
            require(seen.insert(id).second, ErrorCode::validation,
                    "interpretation repeats source_id " + id);
            auto it = std::find_if(included.begin(), included.end(),
                                   [&](const collab::LabeledEvidence& e) {
                                       return e.item.source_id == id;
                                   });
            require(it != included.end(), ErrorCode::validation,
                    "interpretation names source_id not in the evidence set: " + id);
            out.items.push_back({*it, entry.value("note", "")});
        }
        require(!out.items.empty(), ErrorCode::validation, "interpretation kept no items");
    } catch (const Error& e) {
        if (e.code() == ErrorCode::validation || e.code() == ErrorCode::parse) throw;
        identity();
    }
    return out;
}

// --- constraint filtering -------------------------------------------------------

inline std::vector<llm::Message> constraint_prompt(const std::vector<InterpretedEvidence>& all,
                                                   const plan::Constraints& constraints) {
    std::string user = "Research objectives: " + constraints.objectives + "\n";
    if (!constraints.evidence_preference.empty()) {
        user += "Evidence preference: " + constraints.evidence_preference + "\n";
    }
    user += "\nEvidence under consideration:\n";
    for (const auto& ie : all) {
        for (const auto& item : ie.items) {
            user += "- [" + item.evidence.item.source_id + "] " + item.evidence.item.title + "\n";
        }
    }
    user += "\nList the items inconsistent with the objectives, if any. Reply with a JSON "
            "object {\"drop\": [{\"source_id\": ..., \"reason\": one sentence}]}.";
    return {{"system", "You filter evidence against explicit user constraints."},
            {"user", user}};
}

struct ConstraintOutcome {
    std::vector<InterpretedEvidence> filtered;
    std::vector<std::pair<std::string, std::string>> dropped;  // (source_id, reason)
    bool flagged = false;
};

/// Empty constraints are the identity. Otherwise the provider names items
/// whose content conflicts with the stated objectives; those are dropped
/// with recorded reasons. Provider failure yields the identity, flagged.
inline ConstraintOutcome apply_constraints(std::vector<InterpretedEvidence> interpreted,
                                           const plan::Constraints& constraints,
                                           llm::ChatProvider& provider) {
    ConstraintOutcome out;
    if (constraints.empty()) {
        out.filtered = std::move(interpreted);
        return out;
    }
    try {
        llm::GenerationRequest req;
        req.purpose = llm::Purpose::interpretation;
        req.sampling = llm::Sampling::deterministic;
        req.messages = constraint_prompt(interpreted, constraints);
        json parsed = llm::chat_json(provider, req);
        std::map<std::string, std::string> drops;
        for (const auto& d : parsed.value("drop", json::array())) {
            drops[d.at("source_id").get<std::string>()] = d.value("reason", "");
        }
        for (auto& ie : interpreted) {
            std::erase_if(ie.items, [&](const InterpretedItem& item) {
                auto it = drops.find(item.evidence.item.source_id);
                if (it == drops.end()) return false;
                out.dropped.emplace_back(it->first, it->second);
                return true;
            });
        }
        out.filtered = std::move(interpreted);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::validation || e.code() == ErrorCode::parse) throw;
        out.filtered = std::move(interpreted);
        out.flagged = true;
    }
    return out;
}

// --- synthesis -------------------------------------------------------------------

struct SynthesisOptions {
    std::size_t prompt_budget_chars = 24000;
    std::size_t truncated_body_chars = 300;
    double max_dropped_claim_fraction = 0.30;
};

inline std::string synthesis_context(const plan::ResearchQuestion& question,
                                     const std::vector<plan::SubQuestion>& subs,
                                     const std::vector<InterpretedEvidence>& filtered,
                                     const SynthesisOptions& opts) {
    // (Q_i, refined E_i) blocks in index order; over budget, item bodies are
    // truncated starting with the oldest publication (unknown year = oldest).
    struct BodyRef {
        int year;
        std::string* body;
    };
    std::vector<InterpretedEvidence> blocks = filtered;
    auto assemble = [&] {
        std::string ctx = "Research question: " + question.text + "\n";
        if (!question.background.empty()) ctx += "Background: " + question.background + "\n";
        if (!question.constraints.objectives.empty()) {
            ctx += "Objectives: " + question.constraints.objectives + "\n";
        }
        if (!question.constraints.evidence_preference.empty()) {
            ctx += "Evidence preference: " + question.constraints.evidence_preference + "\n";
        }
        for (const auto& ie : blocks) {
            auto sq = std::find_if(subs.begin(), subs.end(), [&](const plan::SubQuestion& s) {
                return s.index == ie.index;
            });
            ctx += "\nSub-question " + std::to_string(ie.index) + ": " +
                   (sq != subs.end() ? sq->text : "") + "\n";
            for (const auto& item : ie.items) {
                const auto& e = item.evidence.item;
                ctx += "- [" + e.source_id + "] " + e.title;
                if (e.year) ctx += " (" + std::to_string(*e.year) + ")";
                ctx += "\n  " + e.body + "\n";
                if (!item.note.empty()) ctx += "  Note: " + item.note + "\n";
            }
        }
        return ctx;
    };
    std::string ctx = assemble();
    if (ctx.size() > opts.prompt_budget_chars) {
        std::vector<BodyRef> bodies;
        for (auto& ie : blocks) {
            for (auto& item : ie.items) {
                bodies.push_back({item.evidence.item.year.value_or(0), &item.evidence.item.body});
            }
        }
        std::stable_sort(bodies.begin(), bodies.end(),
                         [](const BodyRef& a, const BodyRef& b) { return a.year < b.year; });
        for (auto& b : bodies) {
            if (ctx.size() <= opts.prompt_budget_chars) break;
            if (b.body->size() > opts.truncated_body_chars) {
                *b.body = b.body->substr(0, opts.truncated_body_chars) + "…";
                ctx = assemble();
            }
        }
    }
    return ctx;
}

inline std::vector<llm::Message> synthesis_prompt(const std::string& context) {
    return {
        {"system",
         "Synthesize the evidence into (i) a concise final answer and (ii) an analytical "
         "report of sections whose claims each cite at least one source inline. Cite sources "
         "as (PMID: nnnnnnnn) or (NCTnnnnnnnn); cite only sources present in the evidence "
         "blocks. Reply with a JSON object {\"answer\": ..., \"report\": {\"sections\": "
         "[{\"title\": ..., \"claims\": [...]}]}}."},
        {"user", context},
    };
}

/// The resolver used for citation verification; LitClients::verify_reference
/// satisfies it.
using ReferenceResolver = std::function<lit::ResolutionRecord(const std::string&)>;

inline std::string insufficiency_answer() {
    return "The appraised evidence base is insufficient to answer this question; no "
           "conclusion is drawn.";
}

/// Generate the final AnswerBundle. The citation-integrity check runs before
/// return: claims citing ids outside the evidence pool (or carrying no
/// citation) are excised; more than max_dropped_claim_fraction of claims
/// dropped, or an unresolvable reference, rejects the bundle.
inline AnswerBundle synthesize_answer(const plan::ResearchQuestion& question,
                                      const std::vector<plan::SubQuestion>& subs,
                                      const std::vector<InterpretedEvidence>& filtered,
                                      llm::ChatProvider& provider,
                                      const ReferenceResolver& resolver,
                                      SynthesisOptions opts = {}) {
    std::map<std::string, const lit::EvidenceItem*> pool;
    for (const auto& ie : filtered) {
        for (const auto& item : ie.items) {
            pool.emplace(item.evidence.item.source_id, &item.evidence.item);
        }
    }

    AnswerBundle bundle;
    if (pool.empty()) {
        bundle.answer = insufficiency_answer();
        bundle.insufficient = true;
        bundle.validate();
        return bundle;
    }

    llm::GenerationRequest req;
    req.purpose = llm::Purpose::synthesis;
    req.sampling = llm::Sampling::provider_default;
    req.messages = synthesis_prompt(synthesis_context(question, subs, filtered, opts));
    json parsed = llm::chat_json(provider, req);

    bundle.answer = parsed.at("answer").get<std::string>();
    for (const auto& s : parsed.at("report").at("sections")) {
        bundle.sections.push_back(ReportSection::from_json(s));
    }

    // repair: excise out-of-pool citation tokens from the answer, drop
    // claims citing out-of-pool ids or citing nothing
    auto in_pool = [&](const std::string& id) { return pool.count(id) > 0; };
    for (const auto& id : extract_citations(bundle.answer)) {
        if (in_pool(id)) continue;
        std::string token_pmid = "(PMID: " + id + ")";
        std::string token_pmid2 = "(PMID:" + id + ")";
        std::string token_nct = "(" + id + ")";
        for (const auto& token : {token_pmid, token_pmid2, token_nct}) {
            std::size_t pos;
            while ((pos = bundle.answer.find(token)) != std::string::npos) {
                bundle.answer.erase(pos, token.size());
            }
        }
    }
    std::size_t total_claims = 0;
    std::size_t dropped_claims = 0;
    for (auto& section : bundle.sections) {
        total_claims += section.claims.size();
        std::erase_if(section.claims, [&](const std::string& claim) {
            auto ids = extract_citations(claim);
            bool drop = ids.empty() ||
                        std::any_of(ids.begin(), ids.end(),
                                    [&](const std::string& id) { return !in_pool(id); });
            if (drop) ++dropped_claims;
            return drop;
        });
    }
    std::erase_if(bundle.sections,
                  [](const ReportSection& s) { return s.claims.empty(); });
    if (total_claims > 0) {
        double fraction = static_cast<double>(dropped_claims) / static_cast<double>(total_claims);
        require(fraction <= opts.max_dropped_claim_fraction, ErrorCode::integrity,
                "citation repair dropped " + std::to_string(dropped_claims) + " of " +
                    std::to_string(total_claims) + " claims");
    }
    require(!bundle.sections.empty(), ErrorCode::integrity,
            "citation repair left the analytical report empty");

    // references in order of first inline appearance, verified at the source
    for (const auto& id : bundle.inline_ids()) {
        Reference ref;
        ref.source_id = id;
        ref.kind = classify_id(id);
        auto item = pool.find(id);
        if (item != pool.end() && item->second->citation_string) {
            ref.citation_string = *item->second->citation_string;
        } else if (item != pool.end()) {
            ref.citation_string = item->second->title;
        }
        auto resolution = resolver(id);
        ref.resolved = resolution.resolved;
        require(resolution.resolved, ErrorCode::integrity,
                "reference " + id + " does not resolve at its source database");
        bundle.references.push_back(std::move(ref));
    }

    bundle.validate();
    return bundle;
}

// --- normalization of external responses -------------------------------------------

/// Parse a raw external response (text plus optional reference list) into
/// the common template. Sections are located by the "## Answer" /
/// "## Analytical Report" / "## References" headings; without headings the
/// first paragraph is the answer and the remainder the report. References
/// are verified; unresolved entries are flagged (candidate hallucinations),
/// not errors.
inline AnswerBundle normalize_response(const std::string& raw, const ReferenceResolver& resolver) {
    require(!collapse_whitespace(raw).empty(), ErrorCode::parse,
            "unsegmentable input: empty response (offset 0)");

    auto find_heading = [&](const std::string& name) -> std::optional<std::size_t> {
        std::string text = to_lower(raw);
        std::string needle = "## " + to_lower(name);
        auto pos = text.find(needle);
        if (pos == std::string::npos) return std::nullopt;
        return pos;
    };

    AnswerBundle bundle;
    std::string report_segment;
    std::string reference_segment;

    auto h_answer = find_heading("answer");
    auto h_report = find_heading("analytical report");
    auto h_refs = find_heading("references");

    auto segment = [&](std::size_t from, std::optional<std::size_t> until) {
        auto line_end = raw.find('\n', from);
        if (line_end == std::string::npos) return std::string();
        auto end = until.value_or(raw.size());
        require(end >= line_end, ErrorCode::parse,
                "unsegmentable input: overlapping headings (offset " + std::to_string(from) + ")");
        std::string s = raw.substr(line_end, end - line_end);
        while (!s.empty() && (s.front() == '\n' || s.front() == '\r')) s.erase(s.begin());
        while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.pop_back();
        return s;
    };

    if (h_answer && h_report) {
        bundle.answer = segment(*h_answer, h_report);
        report_segment = segment(*h_report, h_refs);
        if (h_refs) reference_segment = segment(*h_refs, std::nullopt);
    } else if (h_answer) {
        bundle.answer = segment(*h_answer, h_refs);
        if (h_refs) reference_segment = segment(*h_refs, std::nullopt);
    } else {
        // headingless: first blank-line-separated paragraph is the answer
        std::string body = raw;
        if (h_refs) {
            body = raw.substr(0, *h_refs);
            reference_segment = segment(*h_refs, std::nullopt);
        }
        auto gap = body.find("\n\n");
        if (gap == std::string::npos) {
            bundle.answer = collapse_whitespace(body);
        } else {
            bundle.answer = body.substr(0, gap);
            report_segment = body.substr(gap + 2);
            while (!report_segment.empty() &&
                   std::isspace(static_cast<unsigned char>(report_segment.back()))) {
                report_segment.pop_back();
            }
        }
    }

    // report text back into sections: "### " title lines open sections,
    // blank-line-separated paragraphs are claims
    if (!collapse_whitespace(report_segment).empty()) {
        ReportSection current;
        std::string paragraph;
        auto flush_paragraph = [&] {
            while (!paragraph.empty() &&
                   std::isspace(static_cast<unsigned char>(paragraph.back()))) {
                paragraph.pop_back();
            }
            if (!paragraph.empty()) current.claims.push_back(paragraph);
            paragraph.clear();
        };
        auto flush_section = [&] {
            flush_paragraph();
            if (!current.title.empty() || !current.claims.empty()) {
                bundle.sections.push_back(current);
            }
            current = ReportSection{};
        };
        for (const auto& line : split(report_segment, '\n')) {
            if (starts_with(line, "### ")) {
                flush_section();
                current.title = line.substr(4);
            } else if (collapse_whitespace(line).empty()) {
                flush_paragraph();
            } else {
                if (!paragraph.empty()) paragraph += "\n";
                paragraph += line;
            }
        }
        flush_section();
    }

    // reference ids: union of the reference-list segment and inline
    // citations, ordered by first inline appearance with list-only entries
    // appended in list order
    std::vector<std::string> ids = bundle.inline_ids();
    std::set<std::string> seen(ids.begin(), ids.end());
    static const std::regex list_ref_re(R"((?:PMID:?\s*(\d+))|(NCT\d{8}))");
    auto begin = std::sregex_iterator(reference_segment.begin(), reference_segment.end(),
                                      list_ref_re);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        std::string id = (*it)[1].matched ? (*it)[1].str() : (*it)[2].str();
        if (seen.insert(id).second) ids.push_back(id);
    }

    for (const auto& id : ids) {
        Reference ref;
        ref.source_id = id;
        ref.kind = classify_id(id);
        if (ref.kind.empty()) continue;  // regex guarantees shape, belt and braces
        auto resolution = resolver(id);
        ref.resolved = resolution.resolved;
        if (resolution.title && !resolution.title->empty()) {
            ref.citation_string = *resolution.title;
        }
        bundle.references.push_back(std::move(ref));
    }
    return bundle;
}

// --- benchmark schema -----------------------------------------------------------

enum class Novelty { yes, maybe, no };

inline const char* to_string(Novelty n) {
    switch (n) {
        case Novelty::yes: return "yes";
        case Novelty::maybe: return "maybe";
        case Novelty::no: return "no";
    }
    return "unknown";
}

inline Novelty parse_novelty(std::string_view s) {
    if (s == "yes") return Novelty::yes;
    if (s == "maybe") return Novelty::maybe;
    if (s == "no") return Novelty::no;
    fail(ErrorCode::parse, "unknown novelty label: " + std::string(s));
}

struct ExpertAnnotations {
    collab::Level accuracy = collab::Level::moderate;
    int comprehension = 3;  // 1..5
    collab::Level analytical_quality = collab::Level::moderate;
    collab::Level reference_relevance = collab::Level::moderate;
    Novelty novelty = Novelty::no;
    std::string source;

    void validate(const std::string& where) const {
        require(comprehension >= 1 && comprehension <= 5, ErrorCode::validation,
                where + ".annotations.comprehension out of range 1..5: " +
                    std::to_string(comprehension));
    }

    json to_json() const {
        return json{{"accuracy", collab::to_string(accuracy)},
                    {"comprehension", comprehension},
                    {"analytical_quality", collab::to_string(analytical_quality)},
                    {"reference_relevance", collab::to_string(reference_relevance)},
                    {"novelty", to_string(novelty)},
                    {"source", source}};
    }

    static ExpertAnnotations from_json(const json& j, const std::string& where) {
        ExpertAnnotations a;
        try {
            a.accuracy = collab::parse_level(j.at("accuracy").get<std::string>());
            a.comprehension = j.at("comprehension").get<int>();
            a.analytical_quality =
                collab::parse_level(j.at("analytical_quality").get<std::string>());
            a.reference_relevance =
                collab::parse_level(j.at("reference_relevance").get<std::string>());
            a.novelty = parse_novelty(j.at("novelty").get<std::string>());
            a.source = j.value("source", "");
        } catch (const json::exception& e) {
            fail(ErrorCode::validation, where + ".annotations: " + e.what());
        }
        a.validate(where);
        return a;
    }
};

struct BenchmarkReference {
    std::string source_id;
    std::optional<int> year;
    std::string citation_string;

    json to_json() const {
        json j{{"source_id", source_id}, {"citation_string", citation_string}};
        if (year) j["year"] = *year;
        return j;
    }

    static BenchmarkReference from_json(const json& j, const std::string& where) {
        BenchmarkReference r;
        try {
            r.source_id = j.at("source_id").get<std::string>();
            if (j.contains("year")) r.year = j.at("year").get<int>();
            r.citation_string = j.value("citation_string", "");
        } catch (const json::exception& e) {
            fail(ErrorCode::validation, where + ": " + e.what());
        }
        return r;
    }
};

/// One curated benchmark entry: category, question, reference answer, expert
/// annotations, supporting references (chronological), optional analytical
/// report.
struct BenchmarkEntry {
    plan::Category category = plan::Category::uncategorized;
    std::string question;
    std::string reference_answer;
    ExpertAnnotations annotations;
    std::vector<BenchmarkReference> references;  // year ascending
    std::string analytical_report;

    json to_json() const {
        json refs = json::array();
        for (const auto& r : references) refs.push_back(r.to_json());
        json j{{"category", plan::to_string(category)},
               {"question", question},
               {"reference_answer", reference_answer},
               {"annotations", annotations.to_json()},
               {"references", refs}};
        if (!analytical_report.empty()) j["analytical_report"] = analytical_report;
        return j;
    }
};

struct BenchmarkLoad {
    std::vector<BenchmarkEntry> entries;
    std::vector<std::string> warnings;  // e.g. references reordered on load
};

/// Load a benchmark file (one JSON array, schema_version-tagged wrapper also
/// accepted). Chronological reference order is enforced on load: out-of-order
/// lists are stably re-sorted by year (unknown years last) with a warning.
inline BenchmarkLoad load_benchmark(const json& root) {
    const json* arr = &root;
    if (root.is_object()) {
        require(root.contains("entries"), ErrorCode::validation,
                "benchmark: expected an array or an object with 'entries'");
        arr = &root.at("entries");
    }
    require(arr->is_array(), ErrorCode::validation, "benchmark: top level must be an array");
    BenchmarkLoad out;
    std::size_t n = 0;
    for (const auto& j : *arr) {
        std::string where = "entries[" + std::to_string(n) + "]";
        BenchmarkEntry e;
        try {
            e.category = plan::parse_category(j.at("category").get<std::string>());
            e.question = j.at("question").get<std::string>();
            e.reference_answer = j.at("reference_answer").get<std::string>();
        } catch (const json::exception& ex) {
            fail(ErrorCode::validation, where + ": " + ex.what());
        }
        require(!e.question.empty(), ErrorCode::validation, where + ".question is empty");
        e.annotations = ExpertAnnotations::from_json(j.at("annotations"), where);
        std::size_t r = 0;
        for (const auto& ref : j.value("references", json::array())) {
            e.references.push_back(BenchmarkReference::from_json(
                ref, where + ".references[" + std::to_string(r) + "]"));
            ++r;
        }
        e.analytical_report = j.value("analytical_report", "");
        bool sorted = std::is_sorted(e.references.begin(), e.references.end(),
                                     [](const BenchmarkReference& a, const BenchmarkReference& b) {
                                         return a.year.value_or(INT32_MAX) <
                                                b.year.value_or(INT32_MAX);
                                     });
        if (!sorted) {
            std::stable_sort(e.references.begin(), e.references.end(),
                             [](const BenchmarkReference& a, const BenchmarkReference& b) {
                                 return a.year.value_or(INT32_MAX) < b.year.value_or(INT32_MAX);
                             });
            out.warnings.push_back(where + ": references reordered chronologically");
        }
        out.entries.push_back(std::move(e));
        ++n;
    }
    return out;
}

inline json benchmark_to_json(const std::vector<BenchmarkEntry>& entries) {
    json arr = json::array();
    for (const auto& e : entries) arr.push_back(e.to_json());
    return json{{"schema_version", 1}, {"entries", arr}};
}

}  // namespace deeper::synth
