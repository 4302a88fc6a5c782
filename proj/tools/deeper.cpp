// deeper — evidence-based research engine CLI.

#include <CLI11.hpp>

#include <csignal>
#include <iostream>

#include "deeper/demo.hpp"
#include "deeper/engine.hpp"
#include "deeper/evalkit.hpp"
#include "deeper/live.hpp"
#include "deeper/service.hpp"

namespace {

using deeper::json;

struct GlobalFlags {
    std::string config_path;
    std::string out_dir;
    bool offline = false;
    bool no_decompose = false;
    bool no_kg = false;
};

deeper::engine::EngineConfig load_config(const GlobalFlags& flags) {
    deeper::engine::EngineConfig config;
    if (!flags.config_path.empty()) {
        config = deeper::engine::EngineConfig::load(flags.config_path);
    }
    if (flags.offline) config.offline = true;
    if (flags.no_decompose) config.toggles.decompose = false;
    if (flags.no_kg) config.toggles.use_kg = false;
    if (!flags.out_dir.empty()) config.artifacts_dir = flags.out_dir;
    config.validate();
    return config;
}

std::shared_ptr<deeper::llm::ChatProvider> make_chat_provider(
    const deeper::engine::ProviderSlotConfig& slot) {
    deeper::require(slot.kind == "http", deeper::ErrorCode::validation,
                    "live runs need http provider slots");
    deeper::require(!slot.base_url.empty(), deeper::ErrorCode::validation,
                    "provider slot missing base_url");
    return std::make_shared<deeper::llm::HttpChatProvider>(
        deeper::llm::ProviderEndpoint{slot.base_url, slot.path, slot.model, slot.api_key_env});
}

deeper::engine::Runtime make_runtime(const deeper::engine::EngineConfig& config) {
    if (config.offline) return deeper::engine::make_offline_runtime(config);
    deeper::engine::Runtime rt;
    rt.clock = std::make_shared<deeper::SystemClock>();
    rt.planning = make_chat_provider(config.planning);
    rt.interpretation = make_chat_provider(config.interpretation);
    rt.synthesis = make_chat_provider(config.synthesis);
    rt.judge = make_chat_provider(config.judge);
    rt.embedding = std::make_shared<deeper::llm::HttpEmbeddingProvider>(
        deeper::llm::ProviderEndpoint{config.embedding.base_url, config.embedding.path,
                                      config.embedding.model, config.embedding.api_key_env},
        config.embedding_dimension);
    rt.clients = std::make_shared<deeper::lit::LitClients>(
        std::make_shared<deeper::lit::LiveTransport>(), rt.clock, config.clients);
    if (config.toggles.use_kg && !config.kg_path.empty()) {
        rt.graph = std::make_shared<deeper::kg::KnowledgeGraph>(deeper::kg::load_graph_file(
            config.kg_path, deeper::kg::parse_graph_format(config.kg_format)));
    }
    return rt;
}

deeper::plan::ResearchQuestion question_from_flags(const std::string& question_file,
                                                   const std::string& text,
                                                   const std::string& background,
                                                   const std::string& objectives,
                                                   const std::string& preference,
                                                   const std::string& category) {
    if (!question_file.empty()) {
        std::ifstream in(question_file);
        deeper::require(in.good(), deeper::ErrorCode::not_found,
                        "cannot open question file: " + question_file);
        return deeper::plan::ResearchQuestion::from_json(json::parse(in));
    }
    deeper::plan::ResearchQuestion q;
    q.id = deeper::hex_digest(text);
    q.text = text;
    q.background = background;
    q.constraints.objectives = objectives;
    q.constraints.evidence_preference = preference;
    q.category = deeper::plan::parse_category(category);
    q.validate();
    return q;
}

std::vector<std::vector<double>> read_vector_csv(const std::string& path) {
    std::ifstream in(path);
    deeper::require(in.good(), deeper::ErrorCode::not_found, "cannot open vectors file: " + path);
    std::vector<std::vector<double>> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        for (const auto& cell : deeper::split(line, ',')) {
            row.push_back(std::stod(cell));
        }
        out.push_back(std::move(row));
    }
    deeper::require(!out.empty(), deeper::ErrorCode::precondition, "vectors file is empty");
    return out;
}

std::vector<deeper::lit::EvidenceItem> read_items(const std::string& path) {
    std::ifstream in(path);
    deeper::require(in.good(), deeper::ErrorCode::not_found, "cannot open items file: " + path);
    json j = json::parse(in);
    const json& arr = j.is_array() ? j : j.at("items");
    std::vector<deeper::lit::EvidenceItem> items;
    for (const auto& e : arr) items.push_back(deeper::lit::EvidenceItem::from_json(e));
    return items;
}

std::set<std::string> read_id_set(const std::string& arg) {
    // comma-separated inline list, or a file of ids (one per line / JSON array)
    std::set<std::string> out;
    if (std::filesystem::exists(arg)) {
        std::ifstream in(arg);
        std::string content((std::istreambuf_iterator<char>(in)),
                            std::istreambuf_iterator<char>());
        json j = json::parse(content, nullptr, false);
        if (!j.is_discarded() && j.is_array()) {
            for (const auto& id : j) out.insert(id.get<std::string>());
            return out;
        }
        for (const auto& line : deeper::split(content, '\n')) {
            auto id = deeper::collapse_whitespace(line);
            if (!id.empty()) out.insert(id);
        }
        return out;
    }
    for (const auto& id : deeper::split(arg, ',')) {
        auto trimmed = deeper::collapse_whitespace(id);
        if (!trimmed.empty()) out.insert(trimmed);
    }
    return out;
}

void emit_metric(const deeper::eval::MetricReport& report, const std::string& out_dir) {
    json j = report.to_json();
    std::cout << j.dump(2) << std::endl;
    if (!out_dir.empty()) {
        std::filesystem::create_directories(out_dir);
        auto path = std::filesystem::path(out_dir) / "metrics.json";
        json all = json::array();
        if (std::filesystem::exists(path)) {
            std::ifstream in(path);
            json prev = json::parse(in, nullptr, false);
            if (!prev.is_discarded() && prev.is_array()) all = prev;
        }
        all.push_back(j);
        std::ofstream out(path);
        out << all.dump(2) << '\n';
    }
}

deeper::kg::KGEntity entity_by_name(const deeper::kg::KnowledgeGraph& graph,
                                    const std::string& name) {
    auto e = graph.find_by_name(name);
    deeper::require(e.has_value(), deeper::ErrorCode::not_found,
                    "no entity named '" + name + "' in the graph");
    return *e;
}

volatile std::sig_atomic_t g_stop = 0;

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"deeper — evidence-based generation engine for biomedical research questions"};
    app.require_subcommand(1);

    GlobalFlags flags;
    app.add_option("--config", flags.config_path, "engine config file (JSON)");
    app.add_option("--out", flags.out_dir, "output/artifact directory override");
    app.add_flag("--offline", flags.offline, "force offline mode (mock providers, fixtures)");
    app.add_flag("--no-decompose", flags.no_decompose, "disable sub-question decomposition");
    app.add_flag("--no-kg", flags.no_kg, "disable knowledge-graph query expansion");

    // --- ask ---
    auto* ask = app.add_subcommand("ask", "run the full pipeline for a question");
    std::string q_file, q_text, q_background, q_objectives, q_preference, q_category = "uncategorized";
    ask->add_option("--question", q_file, "question JSON file");
    ask->add_option("--text", q_text, "question text");
    ask->add_option("--background", q_background, "background context");
    ask->add_option("--objectives", q_objectives, "research objectives constraint");
    ask->add_option("--preference", q_preference, "evidence-inclusion preference");
    ask->add_option("--category", q_category, "basic|clinical|translational|uncategorized");

    // --- plan ---
    auto* plan_cmd = app.add_subcommand("plan", "run research planning only");
    plan_cmd->add_option("--question", q_file, "question JSON file");
    plan_cmd->add_option("--text", q_text, "question text");
    plan_cmd->add_option("--background", q_background, "background context");
    plan_cmd->add_option("--category", q_category, "basic|clinical|translational|uncategorized");

    // --- kg ---
    auto* kg_cmd = app.add_subcommand("kg", "query the knowledge graph");
    std::string kg_path, kg_format = "generic-tsv";
    kg_cmd->add_option("--graph", kg_path, "graph file")->required();
    kg_cmd->add_option("--format", kg_format, "primekg-csv|generic-tsv");
    std::string kg_query, kg_head, kg_tail, kg_relation, kg_type;
    std::size_t kg_max_paths = deeper::kg::KnowledgeGraph::kDefaultMaxPaths;
    double kg_threshold = deeper::kg::KnowledgeGraph::kDefaultSimilarityThreshold;
    auto* kg_normalize = kg_cmd->add_subcommand("normalize", "normalize a concept onto entities");
    kg_normalize->add_option("query", kg_query)->required();
    kg_normalize->add_option("--threshold", kg_threshold);
    auto* kg_tails_rel = kg_cmd->add_subcommand("tails-by-relation", "tails via a relation");
    kg_tails_rel->add_option("--head", kg_head)->required();
    kg_tails_rel->add_option("--relation", kg_relation)->required();
    auto* kg_tails_type = kg_cmd->add_subcommand("tails-by-type", "tails of an entity type");
    kg_tails_type->add_option("--head", kg_head)->required();
    kg_tails_type->add_option("--type", kg_type)->required();
    auto* kg_rel = kg_cmd->add_subcommand("relation", "rank relations between a pair");
    kg_rel->add_option("--head", kg_head)->required();
    kg_rel->add_option("--tail", kg_tail)->required();
    auto* kg_paths = kg_cmd->add_subcommand("paths", "shortest paths between a pair");
    kg_paths->add_option("--head", kg_head)->required();
    kg_paths->add_option("--tail", kg_tail)->required();
    kg_paths->add_option("--max", kg_max_paths);
    auto* kg_paths_via = kg_cmd->add_subcommand("paths-via", "shortest paths through a type");
    kg_paths_via->add_option("--head", kg_head)->required();
    kg_paths_via->add_option("--tail", kg_tail)->required();
    kg_paths_via->add_option("--via", kg_type)->required();
    kg_paths_via->add_option("--max", kg_max_paths);
    kg_cmd->require_subcommand(1);

    // --- eval ---
    auto* eval_cmd = app.add_subcommand("eval", "run a quantitative metric");
    eval_cmd->require_subcommand(1);
    std::size_t ev_correct = 0, ev_total = 0;
    int ev_bins = deeper::eval::kDefaultBins;
    std::string ev_vectors, ev_p, ev_q, ev_retrieved, ev_reference, ev_cited, ev_truth;
    std::string ev_answer_file, ev_nuggets_file, ev_refs_file;
    int ev_current_year = 0;
    auto* ev_accuracy = eval_cmd->add_subcommand("accuracy", "correct/total");
    ev_accuracy->add_option("--correct", ev_correct)->required();
    ev_accuracy->add_option("--total", ev_total)->required();
    auto* ev_entropy = eval_cmd->add_subcommand("entropy", "component-histogram entropy (bits)");
    ev_entropy->add_option("--vectors", ev_vectors, "CSV, one vector per row")->required();
    ev_entropy->add_option("--bins", ev_bins);
    auto* ev_jsd = eval_cmd->add_subcommand("jsd", "Jensen-Shannon distance between vector sets");
    ev_jsd->add_option("--p", ev_p, "CSV, one vector per row")->required();
    ev_jsd->add_option("--q", ev_q, "CSV, one vector per row")->required();
    ev_jsd->add_option("--bins", ev_bins);
    auto* ev_sim = eval_cmd->add_subcommand("similarity", "set similarity via embeddings");
    ev_sim->add_option("--retrieved", ev_retrieved)->required();
    ev_sim->add_option("--reference", ev_reference)->required();
    auto* ev_cov = eval_cmd->add_subcommand("coverage", "source coverage of cited vs truth");
    ev_cov->add_option("--cited", ev_cited)->required();
    ev_cov->add_option("--truth", ev_truth)->required();
    auto* ev_nuggets = eval_cmd->add_subcommand("nuggets", "nugget coverage via the judge");
    ev_nuggets->add_option("--answer", ev_answer_file)->required();
    ev_nuggets->add_option("--nuggets", ev_nuggets_file, "JSON array of predicates")->required();
    auto* ev_years = eval_cmd->add_subcommand("years", "publication-year distribution");
    ev_years->add_option("--references", ev_refs_file)->required();
    ev_years->add_option("--current-year", ev_current_year);

    // --- bench ---
    auto* bench = app.add_subcommand("bench", "benchmark file operations");
    bench->require_subcommand(1);
    std::string bench_file;
    auto* bench_load = bench->add_subcommand("load", "validate and summarize a benchmark file");
    bench_load->add_option("--file", bench_file)->required();
    auto* bench_run = bench->add_subcommand("run", "run the pipeline over benchmark entries");
    bench_run->add_option("--file", bench_file)->required();

    // --- verify-refs ---
    auto* verify = app.add_subcommand("verify-refs", "resolve every reference in an answer file");
    std::string answer_path;
    verify->add_option("answer", answer_path, "answer.json")->required();

    // --- serve ---
    auto* serve = app.add_subcommand("serve", "run the HTTP service facade");
    int port = 8080;
    std::string host = "127.0.0.1";
    serve->add_option("--port", port);
    serve->add_option("--host", host);

    // --- sample ---
    auto* sample = app.add_subcommand("sample", "demo data");
    auto* sample_init = sample->add_subcommand("init", "write a runnable offline sample bundle");
    std::string sample_dir = "sample";
    sample_init->add_option("dir", sample_dir, "target directory");
    sample->require_subcommand(1);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*ask) {
            auto config = load_config(flags);
            auto question = question_from_flags(q_file, q_text, q_background, q_objectives,
                                                q_preference, q_category);
            deeper::engine::Engine engine(config, make_runtime(config));
            auto record = engine.execute_pipeline(question);
            std::cout << record.to_json().dump(2) << std::endl;
            if (record.status != deeper::engine::RunStatus::done) return 1;
            std::cout << "answer: " << (record.artifact_dir / "answer.json").string()
                      << std::endl;
        } else if (*plan_cmd) {
            auto config = load_config(flags);
            auto question = question_from_flags(q_file, q_text, q_background, "", "", q_category);
            auto runtime = make_runtime(config);
            auto research_plan = deeper::plan::make_plan(question, config.toggles, config.k_max,
                                                         *runtime.planning);
            std::cout << research_plan.to_json().dump(2) << std::endl;
            if (!flags.out_dir.empty()) {
                std::filesystem::create_directories(flags.out_dir);
                std::ofstream out(std::filesystem::path(flags.out_dir) / "plan.json");
                out << research_plan.to_json().dump(2) << '\n';
            }
        } else if (*kg_cmd) {
            auto graph = deeper::kg::load_graph_file(kg_path,
                                                     deeper::kg::parse_graph_format(kg_format));
            json out;
            if (*kg_normalize) {
                out = json::array();
                for (const auto& m : graph.get_normalized_entity(kg_query, kg_threshold)) {
                    out.push_back(json{{"query", m.query},
                                       {"entity", deeper::kg::to_json(m.entity)},
                                       {"match_kind", m.match_kind == deeper::kg::MatchKind::exact
                                                          ? "exact"
                                                          : "similarity"},
                                       {"score", m.score}});
                }
            } else if (*kg_tails_rel) {
                out = json::array();
                for (const auto& e : graph.get_tail_entity_by_relation(
                         entity_by_name(graph, kg_head), kg_relation)) {
                    out.push_back(deeper::kg::to_json(e));
                }
            } else if (*kg_tails_type) {
                out = json::array();
                for (const auto& e : graph.get_tail_entity_by_type(entity_by_name(graph, kg_head),
                                                                   kg_type)) {
                    out.push_back(deeper::kg::to_json(e));
                }
            } else if (*kg_rel) {
                out = graph.get_relation_type(entity_by_name(graph, kg_head),
                                              entity_by_name(graph, kg_tail));
            } else if (*kg_paths) {
                out = json::array();
                for (const auto& p : graph.get_shortest_paths(entity_by_name(graph, kg_head),
                                                              entity_by_name(graph, kg_tail),
                                                              kg_max_paths)) {
                    out.push_back(deeper::kg::to_json(p, graph));
                }
            } else if (*kg_paths_via) {
                out = json::array();
                for (const auto& p : graph.get_shortest_path_by_entity_type(
                         entity_by_name(graph, kg_head), entity_by_name(graph, kg_tail), kg_type,
                         kg_max_paths)) {
                    out.push_back(deeper::kg::to_json(p, graph));
                }
            }
            std::cout << out.dump(2) << std::endl;
        } else if (*eval_cmd) {
            namespace ev = deeper::eval;
            if (*ev_accuracy) {
                double value = ev::accuracy(ev_correct, ev_total);
                emit_metric(ev::make_report("accuracy", value,
                                            std::to_string(ev_correct) + "/" +
                                                std::to_string(ev_total),
                                            json::object()),
                            flags.out_dir);
            } else if (*ev_entropy) {
                auto vectors = read_vector_csv(ev_vectors);
                auto dist = ev::component_histogram(vectors, ev_bins);
                double bits = ev::shannon_entropy(dist);
                emit_metric(ev::make_report("entropy_bits", bits, ev_vectors,
                                            json{{"K", ev_bins},
                                                 {"epsilon", ev::kDefaultEpsilon},
                                                 {"log_base", 2},
                                                 {"pooling", "all-components"}}),
                            flags.out_dir);
            } else if (*ev_jsd) {
                auto [p, q] = ev::paired_histograms(read_vector_csv(ev_p), read_vector_csv(ev_q),
                                                    ev_bins);
                double d = ev::jensen_shannon_distance(p, q);
                emit_metric(ev::make_report("jensen_shannon_distance", d, ev_p + "|" + ev_q,
                                            json{{"K", ev_bins},
                                                 {"epsilon", ev::kDefaultEpsilon},
                                                 {"log_base", 2},
                                                 {"pooling", "all-components"}}),
                            flags.out_dir);
            } else if (*ev_sim) {
                auto config = load_config(flags);
                auto runtime = make_runtime(config);
                double value = ev::set_similarity(read_items(ev_retrieved),
                                                  read_items(ev_reference), *runtime.embedding);
                emit_metric(ev::make_report("set_similarity", value,
                                            ev_retrieved + "|" + ev_reference,
                                            json{{"pooling", "mean"}}),
                            flags.out_dir);
            } else if (*ev_cov) {
                double value = ev::source_coverage(read_id_set(ev_cited), read_id_set(ev_truth));
                emit_metric(ev::make_report("source_coverage", value, ev_cited + "|" + ev_truth,
                                            json::object()),
                            flags.out_dir);
            } else if (*ev_nuggets) {
                auto config = load_config(flags);
                auto runtime = make_runtime(config);
                std::ifstream ans(ev_answer_file);
                deeper::require(ans.good(), deeper::ErrorCode::not_found,
                                "cannot open answer file: " + ev_answer_file);
                std::string answer((std::istreambuf_iterator<char>(ans)),
                                   std::istreambuf_iterator<char>());
                std::ifstream nug(ev_nuggets_file);
                deeper::require(nug.good(), deeper::ErrorCode::not_found,
                                "cannot open nuggets file: " + ev_nuggets_file);
                auto nuggets = json::parse(nug).get<std::vector<std::string>>();
                auto result = ev::nugget_coverage(answer, nuggets, *runtime.judge);
                json detail{{"matched", result.matched},
                            {"total", result.total},
                            {"undecided", result.undecided}};
                std::cout << detail.dump(2) << std::endl;
                emit_metric(ev::make_report("nugget_coverage",
                                            static_cast<double>(result.matched) /
                                                static_cast<double>(result.total),
                                            ev_answer_file, detail),
                            flags.out_dir);
            } else if (*ev_years) {
                auto items = read_items(ev_refs_file);
                int year = ev_current_year;
                if (year == 0) year = deeper::SystemClock().utc_year();
                auto dist = ev::year_distribution(items, year);
                std::cout << dist.to_json().dump(2) << std::endl;
                if (!flags.out_dir.empty()) {
                    std::filesystem::create_directories(flags.out_dir);
                    std::ofstream csv(std::filesystem::path(flags.out_dir) / "years.csv");
                    csv << "year,count\n";
                    for (const auto& [y, c] : dist.counts) csv << y << ',' << c << '\n';
                }
            }
        } else if (*bench) {
            std::ifstream in(bench_file);
            deeper::require(in.good(), deeper::ErrorCode::not_found,
                            "cannot open benchmark file: " + bench_file);
            auto loaded = deeper::synth::load_benchmark(json::parse(in));
            for (const auto& w : loaded.warnings) std::cerr << "warning: " << w << std::endl;
            if (*bench_load) {
                json summary{{"entries", loaded.entries.size()},
                             {"warnings", loaded.warnings.size()}};
                std::cout << summary.dump(2) << std::endl;
            } else {
                auto config = load_config(flags);
                deeper::engine::Engine engine(config, make_runtime(config));
                json rows = json::array();
                for (std::size_t i = 0; i < loaded.entries.size(); ++i) {
                    const auto& entry = loaded.entries[i];
                    deeper::plan::ResearchQuestion question;
                    question.id = "bench-" + std::to_string(i);
                    question.text = entry.question;
                    question.category = entry.category;
                    auto record = engine.execute_pipeline(question);
                    json row{{"question", entry.question},
                             {"status", deeper::engine::to_string(record.status)}};
                    if (record.status == deeper::engine::RunStatus::done) {
                        auto answer = deeper::synth::AnswerBundle::from_json(
                            deeper::engine::detail::read_json_file(record.artifact_dir /
                                                                   "answer.json"));
                        std::set<std::string> cited;
                        for (const auto& r : answer.references) cited.insert(r.source_id);
                        std::set<std::string> truth;
                        for (const auto& r : entry.references) truth.insert(r.source_id);
                        if (!truth.empty()) {
                            row["source_coverage"] = deeper::eval::source_coverage(cited, truth);
                        }
                        row["references"] = cited.size();
                    }
                    rows.push_back(row);
                }
                std::cout << rows.dump(2) << std::endl;
                if (!flags.out_dir.empty()) {
                    std::filesystem::create_directories(flags.out_dir);
                    std::ofstream out(std::filesystem::path(flags.out_dir) / "bench.json");
                    out << rows.dump(2) << '\n';
                }
            }
        } else if (*verify) {
            auto config = load_config(flags);
            auto runtime = make_runtime(config);
            std::ifstream in(answer_path);
            deeper::require(in.good(), deeper::ErrorCode::not_found,
                            "cannot open answer file: " + answer_path);
            auto bundle = deeper::synth::AnswerBundle::from_json(json::parse(in));
            json rows = json::array();
            bool all_resolved = true;
            for (const auto& ref : bundle.references) {
                auto rec = runtime.clients->verify_reference(ref.source_id);
                all_resolved = all_resolved && rec.resolved;
                rows.push_back(rec.to_json());
            }
            std::cout << rows.dump(2) << std::endl;
            if (!all_resolved) return 1;
        } else if (*serve) {
            auto config = load_config(flags);
            auto engine = std::make_shared<deeper::engine::Engine>(config, make_runtime(config));
            deeper::engine::Service service(engine, config.parallelism);
            int bound = service.start(host, port);
            std::cout << "listening on " << host << ":" << bound << std::endl;
            std::signal(SIGINT, [](int) { g_stop = 1; });
            std::signal(SIGTERM, [](int) { g_stop = 1; });
            while (!g_stop) {
                std::this_thread::sleep_for(std::chrono::milliseconds(200));
            }
            service.stop();
        } else if (*sample) {
            deeper::demo::ScenarioSpec spec;
            auto scenario = deeper::demo::build_scenario(spec, sample_dir);
            std::cout << "sample bundle written to " << scenario.dir.string() << "\n"
                      << "run it with:\n"
                      << "  deeper ask --config " << (scenario.dir / "config.json").string()
                      << " --question " << (scenario.dir / "question.json").string()
                      << std::endl;
        }
    } catch (const deeper::Error& e) {
        std::cerr << "error (" << deeper::to_string(e.code()) << "): " << e.what() << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << std::endl;
        return 1;
    }
    return 0;
}
