#pragma once

#include <filesystem>
#include <fstream>
#include <thread>

#include "deeper/config.hpp"
#include "deeper/evalkit.hpp"
#include "deeper/kg.hpp"
#include "deeper/synthesis.hpp"

namespace deeper::engine {

enum class RunStatus { planned, retrieving, synthesizing, done, failed };

inline const char* to_string(RunStatus s) {
    switch (s) {
        case RunStatus::planned: return "planned";
        case RunStatus::retrieving: return "retrieving";
        case RunStatus::synthesizing: return "synthesizing";
        case RunStatus::done: return "done";
        case RunStatus::failed: return "failed";
    }
    return "unknown";
}

inline RunStatus parse_status(std::string_view s) {
    if (s == "planned") return RunStatus::planned;
    if (s == "retrieving") return RunStatus::retrieving;
    if (s == "synthesizing") return RunStatus::synthesizing;
    if (s == "done") return RunStatus::done;
    if (s == "failed") return RunStatus::failed;
    fail(ErrorCode::parse, "unknown run status: " + std::string(s));
}

struct RunRecord {
    std::string run_id;
    plan::ResearchQuestion question;
    std::string config_digest;
    std::filesystem::path artifact_dir;
    RunStatus status = RunStatus::planned;
    std::string failed_stage;  // set iff status == failed
    std::string error;
    json stats = json::object();

    json to_json() const {
        json j{{"run_id", run_id},
               {"question", question.to_json()},
               {"config_digest", config_digest},
               {"status", to_string(status)},
               {"stats", stats}};
        if (status == RunStatus::failed) {
            j["failed_stage"] = failed_stage;
            j["error"] = error;
        }
        return j;
    }

    static RunRecord from_json(const json& j) {
        RunRecord r;
        r.run_id = j.at("run_id").get<std::string>();
        r.question = plan::ResearchQuestion::from_json(j.at("question"));
        r.config_digest = j.value("config_digest", "");
        r.status = parse_status(j.at("status").get<std::string>());
        r.failed_stage = j.value("failed_stage", "");
        r.error = j.value("error", "");
        r.stats = j.value("stats", json::object());
        return r;
    }
};

/// Strip volatile fields so artifacts from identical runs compare equal.
inline json canonicalize_artifact(json j) {
    static const std::set<std::string> volatile_keys = {
        "retrieved_at", "recorded_at", "ts", "timestamp", "run_id", "elapsed_ms"};
    if (j.is_object()) {
        json out = json::object();
        for (auto& [k, v] : j.items()) {
            if (volatile_keys.count(k)) continue;
            out[k] = canonicalize_artifact(v);
        }
        return out;
    }
    if (j.is_array()) {
        json out = json::array();
        for (auto& v : j) out.push_back(canonicalize_artifact(v));
        return out;
    }
    return j;
}

/// Everything a pipeline run needs, owned by the caller. The engine never
/// constructs network backends itself; composition happens in make_runtime
/// (offline) or the CLI (live).
struct Runtime {
    std::shared_ptr<Clock> clock;
    std::shared_ptr<llm::ChatProvider> planning;
    std::shared_ptr<llm::ChatProvider> interpretation;
    std::shared_ptr<llm::ChatProvider> synthesis;
    std::shared_ptr<llm::ChatProvider> judge;
    std::shared_ptr<llm::EmbeddingProvider> embedding;
    std::shared_ptr<lit::LitClients> clients;
    std::shared_ptr<const kg::KnowledgeGraph> graph;  // may be null when use_kg=false
};

/// Offline runtime: scripted mock providers plus replay (or failing)
/// transport. Live composition lives in the CLI to keep this header free of
/// network code.
inline Runtime make_offline_runtime(const EngineConfig& config,
                                    std::shared_ptr<Clock> clock = nullptr,
                                    std::shared_ptr<llm::ScriptedMock> mock = nullptr) {
    require(config.offline, ErrorCode::precondition, "make_offline_runtime needs offline=true");
    Runtime rt;
    rt.clock = clock ? std::move(clock)
                     : std::make_shared<FakeClock>(std::chrono::milliseconds{1'700'000'000'000});
    if (!mock) {
        mock = std::make_shared<llm::ScriptedMock>(config.embedding_dimension);
        if (!config.script_path.empty()) {
            std::ifstream in(config.script_path);
            require(in.good(), ErrorCode::not_found,
                    "cannot open mock script: " + config.script_path);
            mock->load_script(json::parse(in));
        }
    }
    rt.planning = mock;
    rt.interpretation = mock;
    rt.synthesis = mock;
    rt.judge = mock;
    rt.embedding = mock;

    std::shared_ptr<lit::Transport> transport;
    if (!config.fixtures_dir.empty()) {
        transport = std::make_shared<lit::ReplayTransport>(config.fixtures_dir);
    } else {
        transport = std::make_shared<lit::FailingTransport>();
    }
    rt.clients = std::make_shared<lit::LitClients>(transport, rt.clock, config.clients);

    if (config.toggles.use_kg && !config.kg_path.empty()) {
        rt.graph = std::make_shared<kg::KnowledgeGraph>(
            kg::load_graph_file(config.kg_path, kg::parse_graph_format(config.kg_format)));
    }
    return rt;
}

namespace detail {

class TraceWriter {
public:
    TraceWriter(const std::filesystem::path& path, Clock& clock) : clock_(clock) {
        out_.open(path, std::ios::app);
    }

    void event(const std::string& name, json fields = json::object()) {
        std::lock_guard lock(mu_);
        fields["event"] = name;
        fields["ts"] = clock_.unix_seconds();
        out_ << fields.dump() << '\n';
        out_.flush();
    }

private:
    Clock& clock_;
    std::ofstream out_;
    std::mutex mu_;
};

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    std::ofstream out(path);
    require(out.good(), ErrorCode::transport, "cannot write " + path.string());
    out << j.dump(2) << '\n';
}

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    require(in.good(), ErrorCode::not_found, "cannot read " + path.string());
    return json::parse(in);
}

/// Index-sharded fan-out with at most `parallelism` workers; results land in
/// their slot so the merge is deterministic.
template <typename Fn>
void parallel_for(std::size_t n, int parallelism, Fn&& fn) {
    if (n == 0) return;
    std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(parallelism), n);
    if (workers <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    std::mutex err_mu;
    std::exception_ptr first_error;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= n) return;
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(err_mu);
                    if (!first_error) first_error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

}  // namespace detail

/// End-to-end pipeline driver over a directory of run artifacts.
class Engine {
public:
    Engine(EngineConfig config, Runtime runtime)
        : config_(std::move(config)), rt_(std::move(runtime)) {
        config_.validate();
        require(rt_.clock && rt_.planning && rt_.interpretation && rt_.synthesis &&
                    rt_.clients, ErrorCode::precondition, "runtime is incomplete");
    }

    const EngineConfig& config() const { return config_; }
    const collab::Instrumentation& instrumentation() const { return instr_; }

    std::string config_digest() const { return hex_digest(config_.to_json().dump()); }

    /// Deterministic id for (question, config) plus a launch timestamp.
    std::string make_run_id(const plan::ResearchQuestion& question) const {
        auto digest = hex_digest(question.to_json().dump() + config_.to_json().dump());
        return digest + "-" + std::to_string(rt_.clock->unix_seconds());
    }

    /// Execute plan -> route/retrieve/appraise (fan-out) -> interpret ->
    /// constrain -> synthesize, persisting every artifact. Any stage error
    /// fails the run with that stage named; partial artifacts remain on disk.
    RunRecord execute_pipeline(const plan::ResearchQuestion& question,
                               std::optional<std::string> run_id = std::nullopt) {
        RunRecord record;
        record.question = question;
        record.config_digest = config_digest();
        record.run_id = run_id.value_or(make_run_id(question));
        record.artifact_dir = std::filesystem::path(config_.artifacts_dir) / record.run_id;
        std::filesystem::create_directories(record.artifact_dir / "evidence");
        std::filesystem::create_directories(record.artifact_dir / "interpreted");
        detail::TraceWriter trace(record.artifact_dir / "trace.jsonl", *rt_.clock);

        std::string stage = "plan";
        try {
            // --- research planning ---
            trace.event("stage", {{"name", stage}});
            plan::ResearchPlan research_plan =
                plan::make_plan(question, config_.toggles, config_.k_max, *rt_.planning);
            detail::write_json_file(record.artifact_dir / "plan.json", research_plan.to_json());
            record.status = RunStatus::planned;
            persist(record);

            // --- agentic collaboration (fan-out per sub-question) ---
            stage = "retrieve";
            trace.event("stage", {{"name", stage}});
            record.status = RunStatus::retrieving;
            persist(record);
            const auto& subs = research_plan.sub_questions;
            std::vector<collab::RoutingDecision> routing(subs.size());
            std::vector<collab::EvidenceSet> evidence(subs.size());
            std::string rubric = config_.appraisal_rubric();
            detail::parallel_for(subs.size(), config_.parallelism, [&](std::size_t i) {
                const auto& sub = subs[i];
                const auto& assignment = research_plan.assignments[i];
                auto decision = collab::route_subquestion(sub, assignment, config_.toggles,
                                                          *rt_.planning, &instr_);
                routing[i] = decision;

                collab::QueryBundle bundle;
                if (decision.strategy == collab::Strategy::relational && rt_.graph) {
                    bundle = collab::expand_queries(sub, *rt_.graph, *rt_.planning, {}, &instr_);
                } else {
                    bundle = collab::direct_queries(sub);
                }

                auto caps = collab::SourceCaps::from_assignment(assignment);
                caps.pubmed_per_query = config_.caps.pubmed_per_query;
                caps.trials_per_query = config_.caps.trials_per_query;
                caps.wikipedia_per_query = config_.caps.wikipedia_per_query;
                auto retrieval = collab::retrieve_evidence(bundle, *rt_.clients, caps, &instr_);

                auto labeled = collab::appraise_evidence(
                    sub, retrieval.items, question.constraints.evidence_preference,
                    *rt_.interpretation, rt_.clock->utc_year(), rubric, &instr_);

                collab::EvidenceSet set;
                set.index = sub.index;
                set.bundle = std::move(bundle);
                set.items = std::move(labeled);
                set.failures = std::move(retrieval.failures);
                if (set.included_count() == 0 &&
                    assignment.has_community(agents::Community::llm_response)) {
                    auto outcome = collab::llm_fallback(
                        sub, set.included_count(), *rt_.synthesis, *rt_.clients,
                        question.constraints.evidence_preference, rt_.clock->utc_year(), caps,
                        rubric, &instr_);
                    set.fallback_used = outcome.fallback_used;
                    for (auto& item : outcome.items) set.items.push_back(std::move(item));
                }
                set.normalize_order();
                set.validate();
                evidence[i] = std::move(set);
            });
            json routing_j = json::array();
            for (const auto& r : routing) routing_j.push_back(r.to_json());
            detail::write_json_file(record.artifact_dir / "routing.json", routing_j);
            for (const auto& set : evidence) {
                detail::write_json_file(record.artifact_dir / "evidence" /
                                            ("sq-" + std::to_string(set.index) + ".json"),
                                        set.to_json());
            }

            // --- evidence synthesis ---
            stage = "interpret";
            trace.event("stage", {{"name", stage}});
            record.status = RunStatus::synthesizing;
            persist(record);
            std::vector<synth::InterpretedEvidence> interpreted(subs.size());
            detail::parallel_for(subs.size(), config_.parallelism, [&](std::size_t i) {
                interpreted[i] =
                    synth::interpret_evidence(subs[i], evidence[i], *rt_.interpretation);
            });
            for (const auto& ie : interpreted) {
                detail::write_json_file(record.artifact_dir / "interpreted" /
                                            ("sq-" + std::to_string(ie.index) + ".json"),
                                        ie.to_json());
            }

            stage = "constrain";
            trace.event("stage", {{"name", stage}});
            auto constrained = synth::apply_constraints(std::move(interpreted),
                                                        question.constraints,
                                                        *rt_.interpretation);

            stage = "synthesize";
            trace.event("stage", {{"name", stage}});
            synth::ReferenceResolver resolver = [this](const std::string& id) {
                return rt_.clients->verify_reference(id);
            };
            auto bundle = synth::synthesize_answer(question, subs, constrained.filtered,
                                                   *rt_.synthesis, resolver);
            bundle.trace = "trace.jsonl";
            detail::write_json_file(record.artifact_dir / "answer.json", bundle.to_json());

            // --- run metrics ---
            std::vector<lit::EvidenceItem> cited;
            for (const auto& set : evidence) {
                for (const auto& e : set.items) {
                    if (e.label.include) cited.push_back(e.item);
                }
            }
            json metrics = json::array();
            auto years = eval::year_distribution(cited, rt_.clock->utc_year());
            json year_report{{"metric", "year_distribution"},
                             {"value", years.recent_share ? json(*years.recent_share) : json()},
                             {"detail", years.to_json()},
                             {"parameters", {{"current_year", rt_.clock->utc_year()}}}};
            metrics.push_back(year_report);
            metrics.push_back(json{{"metric", "included_items"},
                                   {"value", cited.size()},
                                   {"parameters", json::object()}});
            metrics.push_back(json{{"metric", "references"},
                                   {"value", bundle.references.size()},
                                   {"parameters", json::object()}});
            detail::write_json_file(record.artifact_dir / "metrics.json", metrics);

            record.status = RunStatus::done;
            record.stats = stats_json();
            persist(record);
            trace.event("done");
        } catch (const std::exception& e) {
            record.status = RunStatus::failed;
            record.failed_stage = stage;
            record.error = e.what();
            record.stats = stats_json();
            persist(record);
            trace.event("failed", {{"stage", stage}, {"error", e.what()}});
        }
        return record;
    }

    json stats_json() const {
        return json{{"kg_calls", instr_.kg_calls.load()},
                    {"retrieval_calls", instr_.retrieval_calls.load()},
                    {"provider_calls", instr_.provider_calls.load()},
                    {"upstream_http_calls", rt_.clients->upstream_calls()}};
    }

    /// Re-read a run record from its artifact directory.
    static std::optional<RunRecord> load_run(const std::filesystem::path& artifacts_dir,
                                             const std::string& run_id) {
        auto path = artifacts_dir / run_id / "run.json";
        if (!std::filesystem::exists(path)) return std::nullopt;
        auto record = RunRecord::from_json(detail::read_json_file(path));
        record.artifact_dir = artifacts_dir / run_id;
        return record;
    }

    static std::vector<std::string> list_runs(const std::filesystem::path& artifacts_dir) {
        std::vector<std::string> out;
        if (!std::filesystem::exists(artifacts_dir)) return out;
        for (const auto& entry : std::filesystem::directory_iterator(artifacts_dir)) {
            if (entry.is_directory() &&
                std::filesystem::exists(entry.path() / "run.json")) {
                out.push_back(entry.path().filename().string());
            }
        }
        std::sort(out.begin(), out.end());
        return out;
    }

private:
    void persist(const RunRecord& record) const {
        detail::write_json_file(record.artifact_dir / "run.json", record.to_json());
    }

    EngineConfig config_;
    Runtime rt_;
    mutable collab::Instrumentation instr_;
};

}  // namespace deeper::engine
