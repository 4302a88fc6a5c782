#include <catch2/catch_amalgamated.hpp>

#include "deeper/planner.hpp"

using namespace deeper;

namespace {

plan::ResearchQuestion demo_question() {
    plan::ResearchQuestion q;
    q.id = "q1";
    q.text = "Does aspirin reduce chronic inflammation?";
    q.category = plan::Category::clinical;
    return q;
}

std::string subs_completion(std::vector<std::tuple<int, std::string, int>> rows) {
    json arr = json::array();
    for (auto& [i, text, rank] : rows) {
        arr.push_back(json{{"i", i}, {"text", text}, {"rank", rank}, {"rationale", "r"}});
    }
    return json{{"sub_questions", arr}}.dump();
}

}  // namespace

TEST_CASE("decompose_question produces ordered sub-questions", "[planner]") {
    auto q = demo_question();
    llm::ScriptedMock mock;
    mock.register_completion_for(
        llm::Purpose::planning, plan::decomposition_prompt(q, 6),
        subs_completion({{1, "What is aspirin?", 1},
                         {2, "What drives chronic inflammation?", 1},
                         {3, "How does aspirin modulate that pathway?", 2}}));
    auto subs = plan::decompose_question(q, 6, mock);
    REQUIRE(subs.size() == 3);
    CHECK(subs[0].index == 1);
    CHECK(subs[1].index == 2);
    CHECK(subs[2].index == 3);
    for (std::size_t i = 1; i < subs.size(); ++i) CHECK(subs[i].rank >= subs[i - 1].rank);
}

TEST_CASE("rank violations are re-sorted, never rejected", "[planner]") {
    auto q = demo_question();
    llm::ScriptedMock mock;
    mock.register_completion_for(llm::Purpose::planning, plan::decomposition_prompt(q, 6),
                                 subs_completion({{1, "hard question", 3},
                                                  {2, "easy question", 1},
                                                  {3, "medium question", 2}}));
    auto subs = plan::decompose_question(q, 6, mock);
    REQUIRE(subs.size() == 3);
    CHECK(subs[0].text == "easy question");
    CHECK(subs[1].text == "medium question");
    CHECK(subs[2].text == "hard question");
    CHECK(subs[0].index == 1);
    CHECK(subs[2].index == 3);
}

TEST_CASE("index gaps are structural errors", "[planner]") {
    auto q = demo_question();
    llm::ScriptedMock mock;
    mock.register_completion_for(llm::Purpose::planning, plan::decomposition_prompt(q, 6),
                                 subs_completion({{1, "a", 1}, {3, "b", 2}}));
    try {
        plan::decompose_question(q, 6, mock);
        FAIL("expected gap error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::validation);
        CHECK(std::string(e.what()).find("gap") != std::string::npos);
    }
}

TEST_CASE("decomposition toggle off yields the original question", "[planner]") {
    auto q = demo_question();
    auto subs = plan::undecomposed(q);
    REQUIRE(subs.size() == 1);
    CHECK(subs[0].text == q.text);
    CHECK(subs[0].rank == 1);
    CHECK(subs[0].index == 1);
}

TEST_CASE("assign_agents validates worker names against the registry", "[planner]") {
    std::vector<plan::SubQuestion> subs = {{1, "What is aspirin?", 1, ""}};
    auto doc = agents::capability_document();
    llm::ScriptedMock mock;

    SECTION("valid assignment passes") {
        mock.register_completion_for(
            llm::Purpose::planning, plan::assignment_prompt(subs, doc),
            json{{"assignments",
                  json::array({json{{"i", 1},
                                    {"communities", {"query-expansion", "evidence-retrieval"}},
                                    {"workers", {"get_normalized_entity", "get_pubmed_abstracts"}}}})}}
                .dump());
        auto assignments = plan::assign_agents(subs, doc, mock);
        REQUIRE(assignments.size() == 1);
        CHECK(assignments[0].has_community(agents::Community::query_expansion));
    }
    SECTION("unknown worker is reported") {
        mock.register_completion_for(
            llm::Purpose::planning, plan::assignment_prompt(subs, doc),
            json{{"assignments",
                  json::array({json{{"i", 1},
                                    {"communities", {"evidence-retrieval"}},
                                    {"workers", {"get_magic"}}}})}}
                .dump());
        try {
            plan::assign_agents(subs, doc, mock);
            FAIL("expected unknown-worker error");
        } catch (const Error& e) {
            CHECK(std::string(e.what()).find("get_magic") != std::string::npos);
        }
    }
}

TEST_CASE("strip_query_expansion removes the community everywhere", "[planner]") {
    std::vector<plan::AgentAssignment> assignments(2);
    assignments[0].index = 1;
    assignments[0].communities = {agents::Community::query_expansion,
                                  agents::Community::evidence_retrieval};
    assignments[0].workers = {"get_shortest_paths", "get_pubmed_abstracts"};
    assignments[1].index = 2;
    assignments[1].communities = {agents::Community::query_expansion};
    assignments[1].workers = {"get_normalized_entity"};

    plan::strip_query_expansion(assignments);
    for (const auto& a : assignments) {
        CHECK(!a.has_community(agents::Community::query_expansion));
        CHECK(!a.communities.empty());
        for (const auto& w : a.workers) {
            CHECK(agents::community_of(w) != agents::Community::query_expansion);
        }
    }
}

TEST_CASE("plan serialization round-trips", "[planner]") {
    plan::ResearchPlan p;
    p.question = demo_question();
    p.sub_questions = {{1, "What is aspirin?", 1, "clarify"},
                       {2, "How does it act?", 2, "mechanism"}};
    plan::AgentAssignment a1;
    a1.index = 1;
    a1.communities = {agents::Community::evidence_retrieval};
    a1.workers = {"get_pubmed_abstracts"};
    plan::AgentAssignment a2;
    a2.index = 2;
    a2.communities = {agents::Community::query_expansion, agents::Community::evidence_retrieval};
    a2.workers = {"get_shortest_paths"};
    p.assignments = {a1, a2};
    p.validate();

    auto j = p.to_json();
    auto round = plan::ResearchPlan::from_json(j);
    CHECK(round.to_json().dump(2) == j.dump(2));
}

TEST_CASE("plan invariants reject malformed plans", "[planner]") {
    plan::ResearchPlan p;
    p.question = demo_question();
    p.toggles.decompose = false;
    p.sub_questions = {{1, "not the original", 1, ""}};
    plan::AgentAssignment a;
    a.index = 1;
    a.communities = {agents::Community::evidence_retrieval};
    p.assignments = {a};
    CHECK_THROWS_AS(p.validate(), Error);  // decompose=false requires the original text
}

TEST_CASE("capability document lists all 13 workers", "[planner]") {
    auto doc = agents::capability_document();
    CHECK(agents::worker_registry().size() == 13);
    for (const auto& w : agents::worker_registry()) {
        CHECK(doc.find(w.name) != std::string::npos);
    }
    CHECK(agents::workers_in(agents::Community::query_expansion).size() == 6);
    CHECK(agents::workers_in(agents::Community::evidence_retrieval).size() == 6);
    CHECK(agents::workers_in(agents::Community::llm_response).size() == 1);
}
