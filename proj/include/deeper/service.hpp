#pragma once

#include <httplib.h>

#include <condition_variable>
#include <deque>
#include <thread>

#include "deeper/engine.hpp"

namespace deeper::engine {

/// Minimal HTTP facade over the engine for programmatic callers.
///
///   POST /v1/ask              question JSON -> 202 {run_id}, asynchronous
///   GET  /v1/runs/{id}        run status
///   GET  /v1/runs/{id}/answer AnswerBundle when done, 409 otherwise
///   GET  /v1/health           liveness
///
/// Pipelines execute on a bounded worker pool; the service is stateless
/// beyond the artifact directory and restart-safe by rescanning it.
class Service {
public:
    Service(std::shared_ptr<Engine> engine, int workers)
        : engine_(std::move(engine)), workers_(std::max(1, workers)) {
        for (int i = 0; i < workers_; ++i) {
            pool_.emplace_back([this] { work(); });
        }
        routes();
    }

    ~Service() {
        stop();
        {
            std::lock_guard lock(mu_);
            shutdown_ = true;
        }
        cv_.notify_all();
        for (auto& t : pool_) t.join();
    }

    /// Bind to the port (0 picks a free one) and serve until stop().
    /// Returns the bound port immediately; serving happens on its own thread.
    int start(const std::string& host, int port) {
        int bound = port;
        if (port == 0) {
            bound = server_.bind_to_any_port(host);
            require(bound > 0, ErrorCode::transport, "cannot bind service port");
        } else {
            require(server_.bind_to_port(host, port), ErrorCode::transport,
                    "cannot bind service to port " + std::to_string(port));
        }
        server_thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return bound;
    }

    void stop() {
        if (server_.is_running()) server_.stop();
        if (server_thread_.joinable()) server_thread_.join();
    }

private:
    void routes() {
        server_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
            res.set_content(json{{"status", "ok"}}.dump(), "application/json");
        });

        server_.Post("/v1/ask", [this](const httplib::Request& req, httplib::Response& res) {
            json body = json::parse(req.body, nullptr, false);
            if (body.is_discarded()) {
                res.status = 400;
                res.set_content(json{{"error", "body is not valid JSON"}}.dump(),
                                "application/json");
                return;
            }
            plan::ResearchQuestion question;
            try {
                question = plan::ResearchQuestion::from_json(body);
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(json{{"error", e.what()}}.dump(), "application/json");
                return;
            }
            auto run_id = engine_->make_run_id(question);
            {
                std::lock_guard lock(mu_);
                queued_.insert(run_id);
                queue_.push_back({question, run_id});
            }
            cv_.notify_one();
            res.status = 202;
            res.set_content(json{{"run_id", run_id}}.dump(), "application/json");
        });

        server_.Get(R"(/v1/runs/([A-Za-z0-9\-]+)/answer)",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        auto run_id = req.matches[1].str();
                        auto record = Engine::load_run(engine_->config().artifacts_dir, run_id);
                        if (!record) {
                            res.status = is_queued(run_id) ? 409 : 404;
                            res.set_content(json{{"error", res.status == 409 ? "run not done"
                                                                             : "unknown run"}}
                                                .dump(),
                                            "application/json");
                            return;
                        }
                        if (record->status != RunStatus::done) {
                            res.status = 409;
                            res.set_content(
                                json{{"error", "run not done"},
                                     {"status", to_string(record->status)}}.dump(),
                                "application/json");
                            return;
                        }
                        // byte-identical to the persisted answer.json
                        std::ifstream in(record->artifact_dir / "answer.json");
                        std::ostringstream ss;
                        ss << in.rdbuf();
                        res.set_content(ss.str(), "application/json");
                    });

        server_.Get(R"(/v1/runs/([A-Za-z0-9\-]+))",
                    [this](const httplib::Request& req, httplib::Response& res) {
                        auto run_id = req.matches[1].str();
                        auto record = Engine::load_run(engine_->config().artifacts_dir, run_id);
                        if (record) {
                            res.set_content(record->to_json().dump(2), "application/json");
                            return;
                        }
                        if (is_queued(run_id)) {
                            res.set_content(json{{"run_id", run_id}, {"status", "queued"}}.dump(),
                                            "application/json");
                            return;
                        }
                        res.status = 404;
                        res.set_content(json{{"error", "unknown run"}}.dump(),
                                        "application/json");
                    });
    }

    struct Job {
        plan::ResearchQuestion question;
        std::string run_id;
    };

    void work() {
        while (true) {
            Job job;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [this] { return shutdown_ || !queue_.empty(); });
                if (shutdown_ && queue_.empty()) return;
                job = std::move(queue_.front());
                queue_.pop_front();
            }
            try {
                engine_->execute_pipeline(job.question, job.run_id);
            } catch (const std::exception&) {
                // execute_pipeline persists its own failure record
            }
            {
                std::lock_guard lock(mu_);
                queued_.erase(job.run_id);
            }
        }
    }

    bool is_queued(const std::string& run_id) {
        std::lock_guard lock(mu_);
        return queued_.count(run_id) > 0;
    }

    std::shared_ptr<Engine> engine_;
    int workers_;
    httplib::Server server_;
    std::thread server_thread_;
    std::vector<std::thread> pool_;
    std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Job> queue_;
    std::set<std::string> queued_;
    bool shutdown_ = false;
};

}  // namespace deeper::engine
