#pragma once

// In-memory solve service: a job table, a bounded FIFO queue and a worker
// pool. Jobs move Queued -> Running -> {Done, Failed} or Queued -> Cancelled.
// A cancelled running job finishes as Failed("cancelled") carrying the best
// bounds found so far. Nothing is persisted; a restart loses every job.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <deque>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "scuc/compiler.hpp"
#include "scuc/errors.hpp"
#include "scuc/instance.hpp"
#include "scuc/mip.hpp"
#include "scuc/solution.hpp"

namespace scuc {

enum class JobStatus { Queued, Running, Done, Failed, Cancelled };

inline const char* to_string(JobStatus s) {
    switch (s) {
        case JobStatus::Queued: return "Queued";
        case JobStatus::Running: return "Running";
        case JobStatus::Done: return "Done";
        case JobStatus::Failed: return "Failed";
        case JobStatus::Cancelled: return "Cancelled";
    }
    return "?";
}

inline bool is_terminal(JobStatus s) { return s == JobStatus::Done || s == JobStatus::Failed || s == JobStatus::Cancelled; }

/// Job metadata; never carries the solution body.
struct JobInfo {
    using TimePoint = std::chrono::system_clock::time_point;

    std::string id;
    std::string instance;
    JobStatus status = JobStatus::Queued;
    TimePoint submitted{};
    std::optional<TimePoint> started;
    std::optional<TimePoint> finished;
    std::string error;  // Failed only
    double objective = kInf;
    double best_bound = -kInf;
    double rel_gap = kInf;
    long nodes_explored = 0;
    double compile_seconds = 0.0;
    double solve_seconds = 0.0;
};

inline nlohmann::ordered_json job_to_json(const JobInfo& j) {
    using detail::finite_or_null;
    auto when = [](const std::optional<JobInfo::TimePoint>& t) -> nlohmann::ordered_json {
        if (!t) return nullptr;
        return utc_timestamp(*t);
    };
    nlohmann::ordered_json out;
    out["id"] = j.id;
    out["instance"] = j.instance;
    out["status"] = to_string(j.status);
    out["submitted"] = utc_timestamp(j.submitted);
    out["started"] = when(j.started);
    out["finished"] = when(j.finished);
    out["error"] = j.error.empty() ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(j.error);
    out["objective"] = finite_or_null(j.objective);
    out["best_bound"] = finite_or_null(j.best_bound);
    out["rel_gap"] = finite_or_null(j.rel_gap);
    out["nodes_explored"] = j.nodes_explored;
    out["compile_seconds"] = j.compile_seconds;
    out["solve_seconds"] = j.solve_seconds;
    return out;
}

/// Reads {rel_gap, time_limit, worker_count, seed}; every key is optional.
inline SolverOptions options_from_json(const nlohmann::json& j) {
    SolverOptions o;
    if (j.is_null()) return o;
    if (!j.is_object()) throw SchemaError("options", "expected an object");
    for (const auto& [key, v] : j.items()) {
        const std::string path = "options." + key;
        if (key == "rel_gap") {
            if (!v.is_number()) throw SchemaError(path, "expected a number");
            o.rel_gap = v.get<double>();
        } else if (key == "time_limit") {
            if (v.is_null()) continue;
            if (!v.is_number()) throw SchemaError(path, "expected a number or null");
            o.time_limit = v.get<double>();
        } else if (key == "worker_count") {
            if (!v.is_number_integer()) throw SchemaError(path, "expected an integer");
            o.worker_count = v.get<int>();
        } else if (key == "seed") {
            if (!v.is_number_unsigned()) throw SchemaError(path, "expected a nonnegative integer");
            o.seed = v.get<std::uint64_t>();
        } else {
            throw SchemaError(path, "unknown option");
        }
    }
    return o;
}

inline nlohmann::ordered_json options_to_json(const SolverOptions& o) {
    nlohmann::ordered_json j;
    j["rel_gap"] = o.rel_gap;
    j["time_limit"] = o.time_limit ? nlohmann::ordered_json(*o.time_limit) : nlohmann::ordered_json(nullptr);
    j["worker_count"] = o.worker_count;
    j["seed"] = o.seed;
    return j;
}

using JobSolver = std::function<MipResult(const CompactModel&, const SolverOptions&, const MipControl&)>;

struct ServiceConfig {
    int workers = 1;
    std::size_t queue_depth = 64;
    JobSolver solver;  // defaults to solve_mip
};

class SolveService {
public:
    explicit SolveService(ServiceConfig cfg = {}) : cfg_(std::move(cfg)), rng_(std::random_device{}()) {
        if (cfg_.workers < 1) throw ArgumentError("worker pool size must be >= 1");
        if (cfg_.queue_depth < 1) throw ArgumentError("queue depth must be >= 1");
        if (!cfg_.solver)
            cfg_.solver = [](const CompactModel& m, const SolverOptions& o, const MipControl& c) {
                return solve_mip(m, o, c);
            };
        for (int i = 0; i < cfg_.workers; ++i) threads_.emplace_back([this] { work(); });
    }

    SolveService(const SolveService&) = delete;
    SolveService& operator=(const SolveService&) = delete;

    ~SolveService() {
        {
            std::lock_guard lk(mu_);
            stopping_ = true;
            for (auto& [id, job] : jobs_)
                if (job->info.status == JobStatus::Running) job->cancel = true;
        }
        work_cv_.notify_all();
        for (auto& t : threads_) t.join();
    }

    /// Validates and enqueues; never waits for a solve.
    std::string submit(UcInstance inst, const SolverOptions& options) {
        require_valid(inst);
        validate_options(options);
        auto job = std::make_unique<Job>();
        job->inst = std::move(inst);
        job->options = options;
        job->info.instance = job->inst.name;
        std::string id;
        {
            std::lock_guard lk(mu_);
            if (stopping_) throw QueueFullError("service is shutting down");
            if (queue_.size() >= cfg_.queue_depth)
                throw QueueFullError("queue is full (" + std::to_string(cfg_.queue_depth) + " jobs waiting)");
            do id = new_id();
            while (jobs_.count(id));
            job->info.id = id;
            job->info.submitted = std::chrono::system_clock::now();
            queue_.push_back(job.get());
            jobs_.emplace(id, std::move(job));
        }
        work_cv_.notify_one();
        return id;
    }

    /// Body of POST /v1/jobs: {"instance": {...}, "options": {...}}.
    std::string submit_json(const nlohmann::json& body) {
        if (!body.is_object()) throw SchemaError("", "request body must be an object");
        if (!body.contains("instance")) throw SchemaError("instance", "missing field");
        for (const auto& [key, v] : body.items())
            if (key != "instance" && key != "options") throw SchemaError(key, "unknown field");
        auto inst = instance_from_json(body.at("instance"));
        auto options = options_from_json(body.contains("options") ? body.at("options") : nlohmann::json());
        return submit(std::move(inst), options);
    }

    JobInfo status(const std::string& id) const {
        std::lock_guard lk(mu_);
        return find(id).info;
    }

    SolutionDocument result(const std::string& id) const {
        std::lock_guard lk(mu_);
        const Job& job = find(id);
        if (job.info.status == JobStatus::Done) return *job.result;
        std::string detail = "job " + id + " is " + to_string(job.info.status);
        if (job.info.status == JobStatus::Failed) detail += " (" + job.info.error + ")";
        if (is_terminal(job.info.status)) detail += " and will never have a solution";
        throw NotReadyError(detail);
    }

    /// Queued jobs become Cancelled; running jobs get a stop signal;
    /// terminal jobs are left alone. Returns the metadata after the call.
    JobInfo cancel(const std::string& id) {
        std::lock_guard lk(mu_);
        Job& job = find(id);
        if (job.info.status == JobStatus::Queued) {
            queue_.erase(std::find(queue_.begin(), queue_.end(), &job));
            job.info.status = JobStatus::Cancelled;
            job.info.finished = std::chrono::system_clock::now();
            done_cv_.notify_all();
        } else if (job.info.status == JobStatus::Running) {
            job.cancel = true;
        }
        return job.info;
    }

    /// Blocks until the job is terminal or the timeout passes.
    bool wait(const std::string& id, std::chrono::milliseconds timeout) const {
        std::unique_lock lk(mu_);
        const Job& job = find(id);
        return done_cv_.wait_for(lk, timeout, [&] { return is_terminal(job.info.status); });
    }

    std::vector<JobInfo> jobs() const {
        std::lock_guard lk(mu_);
        std::vector<JobInfo> out;
        for (const auto& [id, job] : jobs_) out.push_back(job->info);
        return out;
    }

    int running() const {
        std::lock_guard lk(mu_);
        return running_;
    }
    int peak_running() const {
        std::lock_guard lk(mu_);
        return peak_running_;
    }
    std::size_t queued() const {
        std::lock_guard lk(mu_);
        return queue_.size();
    }
    int workers() const { return cfg_.workers; }
    std::size_t queue_depth() const { return cfg_.queue_depth; }

private:
    struct Job {
        JobInfo info;
        UcInstance inst;
        SolverOptions options;
        std::atomic<bool> cancel{false};
        std::optional<SolutionDocument> result;
    };

    Job& find(const std::string& id) const {
        auto it = jobs_.find(id);
        if (it == jobs_.end()) throw UnknownJobError("no job with id '" + id + "'");
        return *it->second;
    }

    std::string new_id() {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng_()),
                      static_cast<unsigned long long>(rng_()));
        return buf;
    }

    void work() {
        for (;;) {
            Job* job = nullptr;
            {
                std::unique_lock lk(mu_);
                work_cv_.wait(lk, [&] { return stopping_ || !queue_.empty(); });
                if (stopping_) return;
                job = queue_.front();
                queue_.pop_front();
                job->info.status = JobStatus::Running;
                job->info.started = std::chrono::system_clock::now();
                ++running_;
                peak_running_ = std::max(peak_running_, running_);
            }
            run(*job);
            done_cv_.notify_all();
        }
    }

    // Runs outside the lock; publishes the outcome under it.
    void run(Job& job) {
        using Clock = std::chrono::steady_clock;
        JobInfo out;
        std::optional<SolutionDocument> doc;
        JobStatus status = JobStatus::Failed;
        try {
            const auto c0 = Clock::now();
            const CompactModel model = compile(job.inst);
            out.compile_seconds = std::chrono::duration<double>(Clock::now() - c0).count();
            MipControl ctl;
            ctl.cancel = &job.cancel;
            const auto s0 = Clock::now();
            MipResult r = cfg_.solver(model, job.options, ctl);
            out.solve_seconds = std::chrono::duration<double>(Clock::now() - s0).count();
            r.solve_seconds = out.solve_seconds;
            out.objective = r.objective;
            out.best_bound = r.best_bound;
            out.rel_gap = r.rel_gap_achieved;
            out.nodes_explored = r.nodes_explored;
            switch (r.status) {
                case MipStatus::OptimalWithinGap:
                    status = JobStatus::Done;
                    doc = make_solution_document(job.inst, model, r, out.compile_seconds);
                    break;
                case MipStatus::Cancelled: out.error = "cancelled"; break;
                case MipStatus::TimeLimit: out.error = "time limit"; break;
                case MipStatus::Infeasible: out.error = "infeasible"; break;
                case MipStatus::Unbounded: out.error = "unbounded"; break;
            }
        } catch (const std::exception& e) {
            out.error = e.what();
        }
        std::lock_guard lk(mu_);
        auto& info = job.info;
        info.status = status;
        info.error = out.error;
        info.objective = out.objective;
        info.best_bound = out.best_bound;
        info.rel_gap = out.rel_gap;
        info.nodes_explored = out.nodes_explored;
        info.compile_seconds = out.compile_seconds;
        info.solve_seconds = out.solve_seconds;
        job.result = std::move(doc);
        info.finished = std::chrono::system_clock::now();
        --running_;
    }

    ServiceConfig cfg_;
    mutable std::mutex mu_;
    std::condition_variable work_cv_;
    mutable std::condition_variable done_cv_;
    std::unordered_map<std::string, std::unique_ptr<Job>> jobs_;
    std::deque<Job*> queue_;
    std::vector<std::thread> threads_;
    std::mt19937_64 rng_;
    bool stopping_ = false;
    int running_ = 0;
    int peak_running_ = 0;
};

}  // namespace scuc
