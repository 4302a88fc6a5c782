#pragma once

#include "deeper/agents.hpp"
#include "deeper/core.hpp"
#include "deeper/llm.hpp"

namespace deeper::plan {

enum class Category { basic, clinical, translational, uncategorized };

inline const char* to_string(Category c) {
    switch (c) {
        case Category::basic: return "basic";
        case Category::clinical: return "clinical";
        case Category::translational: return "translational";
        case Category::uncategorized: return "uncategorized";
    }
    return "unknown";
}

inline Category parse_category(std::string_view s) {
    if (s == "basic") return Category::basic;
    if (s == "clinical") return Category::clinical;
    if (s == "translational") return Category::translational;
    if (s == "uncategorized") return Category::uncategorized;
    fail(ErrorCode::parse, "unknown category: " + std::string(s));
}

struct Constraints {
    std::string objectives;           // user research objectives
    std::string evidence_preference;  // evidence-inclusion preference text

    bool empty() const { return objectives.empty() && evidence_preference.empty(); }

    json to_json() const {
        return json{{"objectives", objectives}, {"evidence_preference", evidence_preference}};
    }

    static Constraints from_json(const json& j) {
        Constraints c;
        c.objectives = j.value("objectives", "");
        c.evidence_preference = j.value("evidence_preference", "");
        return c;
    }
};

struct ResearchQuestion {
    std::string id;
    std::string text;
    std::string background;
    Constraints constraints;
    Category category = Category::uncategorized;

    void validate() const {
        require(!collapse_whitespace(text).empty(), ErrorCode::validation,
                "question text empty");
    }

    json to_json() const {
        return json{{"id", id},
                    {"text", text},
                    {"background", background},
                    {"constraints", constraints.to_json()},
                    {"category", to_string(category)}};
    }

    static ResearchQuestion from_json(const json& j) {
        ResearchQuestion q;
        q.id = j.value("id", "");
        q.text = j.at("text").get<std::string>();
        q.background = j.value("background", "");
        if (j.contains("constraints")) q.constraints = Constraints::from_json(j.at("constraints"));
        q.category = parse_category(j.value("category", "uncategorized"));
        q.validate();
        return q;
    }
};

struct SubQuestion {
    int index = 1;           // 1-based, contiguous
    std::string text;
    int rank = 1;            // complexity, non-decreasing with index
    std::string rationale;

    json to_json() const {
        return json{{"i", index}, {"text", text}, {"rank", rank}, {"rationale", rationale}};
    }

    static SubQuestion from_json(const json& j) {
        SubQuestion s;
        s.index = j.at("i").get<int>();
        s.text = j.at("text").get<std::string>();
        s.rank = j.at("rank").get<int>();
        s.rationale = j.value("rationale", "");
        return s;
    }
};

struct AgentAssignment {
    int index = 1;  // sub-question index
    std::vector<agents::Community> communities;
    std::vector<std::string> workers;

    json to_json() const {
        json comms = json::array();
        for (auto c : communities) comms.push_back(agents::to_string(c));
        return json{{"i", index}, {"communities", comms}, {"workers", workers}};
    }

    static AgentAssignment from_json(const json& j) {
        AgentAssignment a;
        a.index = j.at("i").get<int>();
        for (const auto& c : j.at("communities")) {
            a.communities.push_back(agents::parse_community(c.get<std::string>()));
        }
        a.workers = j.value("workers", std::vector<std::string>{});
        return a;
    }

    bool has_community(agents::Community c) const {
        return std::find(communities.begin(), communities.end(), c) != communities.end();
    }
};

struct Toggles {
    bool decompose = true;
    bool use_kg = true;

    json to_json() const { return json{{"decompose", decompose}, {"use_kg", use_kg}}; }

    static Toggles from_json(const json& j) {
        Toggles t;
        t.decompose = j.value("decompose", true);
        t.use_kg = j.value("use_kg", true);
        return t;
    }
};

struct ResearchPlan {
    ResearchQuestion question;
    std::vector<SubQuestion> sub_questions;
    std::vector<AgentAssignment> assignments;
    Toggles toggles;

    void validate() const {
        question.validate();
        require(!sub_questions.empty(), ErrorCode::validation, "plan has no sub-questions");
        for (std::size_t i = 0; i < sub_questions.size(); ++i) {
            const auto& sq = sub_questions[i];
            require(sq.index == static_cast<int>(i) + 1, ErrorCode::validation,
                    "sub-question indices not contiguous at position " + std::to_string(i + 1));
            require(!collapse_whitespace(sq.text).empty(), ErrorCode::validation,
                    "sub-question " + std::to_string(sq.index) + " text empty");
            require(sq.rank >= 1, ErrorCode::validation, "complexity rank must be >= 1");
            if (i > 0) {
                require(sq.rank >= sub_questions[i - 1].rank, ErrorCode::validation,
                        "complexity rank decreases at sub-question " + std::to_string(sq.index));
            }
        }
        require(assignments.size() == sub_questions.size(), ErrorCode::validation,
                "one assignment per sub-question required");
        for (const auto& a : assignments) {
            require(a.index >= 1 && a.index <= static_cast<int>(sub_questions.size()),
                    ErrorCode::validation, "assignment index out of range");
            require(!a.communities.empty(), ErrorCode::validation,
                    "assignment " + std::to_string(a.index) + " has no community");
            for (const auto& w : a.workers) {
                require(agents::is_registered_worker(w), ErrorCode::validation,
                        "unknown worker '" + w + "' in assignment " + std::to_string(a.index));
            }
        }
        if (!toggles.decompose) {
            require(sub_questions.size() == 1 && sub_questions[0].text == question.text,
                    ErrorCode::validation,
                    "decompose=false requires exactly the original question");
        }
    }

    json to_json() const {
        json subs = json::array();
        for (const auto& s : sub_questions) subs.push_back(s.to_json());
        json asg = json::array();
        for (const auto& a : assignments) asg.push_back(a.to_json());
        return json{{"schema_version", 1},
                    {"question", question.to_json()},
                    {"toggles", toggles.to_json()},
                    {"sub_questions", subs},
                    {"assignments", asg}};
    }

    static ResearchPlan from_json(const json& j) {
        ResearchPlan p;
        p.question = ResearchQuestion::from_json(j.at("question"));
        p.toggles = Toggles::from_json(j.at("toggles"));
        for (const auto& s : j.at("sub_questions")) {
            p.sub_questions.push_back(SubQuestion::from_json(s));
        }
        for (const auto& a : j.at("assignments")) {
            p.assignments.push_back(AgentAssignment::from_json(a));
        }
        p.validate();
        return p;
    }
};

inline constexpr int kDefaultMaxSubQuestions = 6;

inline std::vector<llm::Message> decomposition_prompt(const ResearchQuestion& question,
                                                      int k_max) {
    std::string user = "Research question: " + question.text + "\n";
    if (!question.background.empty()) user += "Background: " + question.background + "\n";
    user += "\nDecompose the question into at most " + std::to_string(k_max) +
            " atomic sub-questions that build on each other, starting with clarification of "
            "core concepts and moving toward deeper associations. Reply with a JSON object "
            "{\"sub_questions\": [{\"i\": 1, \"text\": ..., \"rank\": 1, \"rationale\": ...}]} "
            "where rank is an integer complexity rating that never decreases with i.";
    return {
        {"system", "You are the research-planning stage of a biomedical evidence engine."},
        {"user", user},
    };
}

/// Decompose a question into ordered sub-questions. Model output violating
/// rank monotonicity is stably re-sorted by rank, never rejected; structural
/// violations (index gaps, empty text) are errors after one reprompt inside
/// chat_json.
inline std::vector<SubQuestion> decompose_question(const ResearchQuestion& question, int k_max,
                                                   llm::ChatProvider& provider) {
    question.validate();
    require(k_max >= 1, ErrorCode::precondition, "k_max must be >= 1");
    llm::GenerationRequest req;
    req.purpose = llm::Purpose::planning;
    req.sampling = llm::Sampling::deterministic;
    req.messages = decomposition_prompt(question, k_max);
    json out = llm::chat_json(provider, req);

    std::vector<SubQuestion> subs;
    for (const auto& s : out.at("sub_questions")) subs.push_back(SubQuestion::from_json(s));
    require(!subs.empty(), ErrorCode::validation, "model produced no sub-questions");
    require(static_cast<int>(subs.size()) <= k_max, ErrorCode::validation,
            "model produced more than k_max sub-questions");
    std::sort(subs.begin(), subs.end(), [](const SubQuestion& a, const SubQuestion& b) {
        return a.index < b.index;
    });
    for (std::size_t i = 0; i < subs.size(); ++i) {
        require(subs[i].index == static_cast<int>(i) + 1, ErrorCode::validation,
                "sub-question indices have a gap at " + std::to_string(i + 1));
        require(!collapse_whitespace(subs[i].text).empty(), ErrorCode::validation,
                "sub-question " + std::to_string(i + 1) + " text empty");
        require(subs[i].rank >= 1, ErrorCode::validation, "complexity rank must be >= 1");
    }
    // ordering is a presentation contract: re-sort stably by rank and renumber
    std::stable_sort(subs.begin(), subs.end(),
                     [](const SubQuestion& a, const SubQuestion& b) { return a.rank < b.rank; });
    for (std::size_t i = 0; i < subs.size(); ++i) subs[i].index = static_cast<int>(i) + 1;
    return subs;
}

/// The single-sub-question plan used when decomposition is toggled off.
inline std::vector<SubQuestion> undecomposed(const ResearchQuestion& question) {
    question.validate();
    return {SubQuestion{1, question.text, 1, "decomposition disabled"}};
}

inline std::vector<llm::Message> assignment_prompt(const std::vector<SubQuestion>& subs,
                                                   const std::string& capability_doc) {
    std::string user = capability_doc + "\nSub-questions:\n";
    for (const auto& s : subs) {
        user += std::to_string(s.index) + ". " + s.text + "\n";
    }
    user += "\nAssign to every sub-question the communities and worker APIs best suited to "
            "answer it. Use only the worker names listed above. Reply with a JSON object "
            "{\"assignments\": [{\"i\": 1, \"communities\": [...], \"workers\": [...]}]}.";
    return {
        {"system", "You route biomedical research sub-questions to retrieval agents."},
        {"user", user},
    };
}

/// Assign communities/workers per sub-question, validated against the
/// registry. An unknown worker name is reprompted once (inside chat_json for
/// parse errors) and otherwise reported.
inline std::vector<AgentAssignment> assign_agents(const std::vector<SubQuestion>& subs,
                                                  const std::string& capability_doc,
                                                  llm::ChatProvider& provider) {
    require(!subs.empty(), ErrorCode::precondition, "no sub-questions to assign");
    require(!capability_doc.empty(), ErrorCode::precondition, "capability document empty");
    llm::GenerationRequest req;
    req.purpose = llm::Purpose::planning;
    req.sampling = llm::Sampling::deterministic;
    req.messages = assignment_prompt(subs, capability_doc);
    json out = llm::chat_json(provider, req);

    std::vector<AgentAssignment> assignments;
    for (const auto& a : out.at("assignments")) {
        assignments.push_back(AgentAssignment::from_json(a));
    }
    require(assignments.size() == subs.size(), ErrorCode::validation,
            "expected one assignment per sub-question");
    std::sort(assignments.begin(), assignments.end(),
              [](const AgentAssignment& a, const AgentAssignment& b) { return a.index < b.index; });
    for (std::size_t i = 0; i < assignments.size(); ++i) {
        auto& a = assignments[i];
        require(a.index == static_cast<int>(i) + 1, ErrorCode::validation,
                "assignment indices have a gap at " + std::to_string(i + 1));
        require(!a.communities.empty(), ErrorCode::validation,
                "assignment " + std::to_string(a.index) + " names no community");
        for (const auto& w : a.workers) {
            require(agents::is_registered_worker(w), ErrorCode::validation,
                    "model named unknown worker '" + w + "'");
        }
    }
    return assignments;
}

/// Remove the query-expansion community (and its workers) from every
/// assignment; drops to llm-response only assignments untouched otherwise.
inline void strip_query_expansion(std::vector<AgentAssignment>& assignments) {
    for (auto& a : assignments) {
        std::erase(a.communities, agents::Community::query_expansion);
        std::erase_if(a.workers, [](const std::string& w) {
            return agents::community_of(w) == agents::Community::query_expansion;
        });
        if (a.communities.empty()) {
            a.communities.push_back(agents::Community::evidence_retrieval);
        }
    }
}

/// Build the full plan: decomposition (honoring the toggle), assignment, and
/// the use_kg strip.
inline ResearchPlan make_plan(const ResearchQuestion& question, Toggles toggles, int k_max,
                              llm::ChatProvider& provider,
                              const std::string& capability_doc = agents::capability_document()) {
    ResearchPlan plan;
    plan.question = question;
    plan.toggles = toggles;
    plan.sub_questions =
        toggles.decompose ? decompose_question(question, k_max, provider) : undecomposed(question);
    plan.assignments = assign_agents(plan.sub_questions, capability_doc, provider);
    if (!toggles.use_kg) strip_query_expansion(plan.assignments);
    plan.validate();
    return plan;
}

}  // namespace deeper::plan
