#include <gtest/gtest.h>

#include <atomic>
#include <chrono>
#include <future>
#include <set>
#include <thread>

#include "scuc/http_service.hpp"
#include "scuc/service.hpp"
#include "scuc/synth.hpp"
#include "support/uc_oracle.hpp"

using namespace scuc;
using namespace std::chrono_literals;

namespace {

// Sleeps (honoring cancellation), then solves for real so results replay.
JobSolver sleepy_solver(std::chrono::milliseconds nap, std::atomic<int>* calls = nullptr) {
    return [=](const CompactModel& m, const SolverOptions& o, const MipControl& c) {
        if (calls) ++*calls;
        const auto until = std::chrono::steady_clock::now() + nap;
        while (std::chrono::steady_clock::now() < until) {
            if (c.cancel && c.cancel->load()) {
                MipResult r;
                r.status = MipStatus::Cancelled;
                return r;
            }
            std::this_thread::sleep_for(1ms);
        }
        return solve_mip(m, o, c);
    };
}

// Blocks every solve until open() is called.
struct Gate {
    std::promise<void> p;
    std::shared_future<void> f = p.get_future().share();
    void open() { p.set_value(); }
    JobSolver solver(std::atomic<int>* calls = nullptr) {
        auto fut = f;
        return [fut, calls](const CompactModel& m, const SolverOptions& o, const MipControl& c) {
            if (calls) ++*calls;
            fut.wait();
            return solve_mip(m, o, c);
        };
    }
};

void wait_status(const SolveService& svc, const std::string& id, JobStatus s) {
    const auto until = std::chrono::steady_clock::now() + 10s;
    while (svc.status(id).status != s) {
        ASSERT_LT(std::chrono::steady_clock::now(), until) << "still " << to_string(svc.status(id).status);
        std::this_thread::sleep_for(1ms);
    }
}

void expect_replays(const SolutionDocument& doc, const UcInstance& inst) {
    auto m = compile(inst);
    auto ev = evaluate(m, doc.z, doc.y);
    EXPECT_LE(ev.max_residual(), 1e-6);
    EXPECT_LE(ev.integrality, 1e-6);
    EXPECT_NEAR(ev.objective, doc.objective, 1e-6 * std::max(1.0, std::abs(doc.objective)));
}

}  // namespace

TEST(Service, Defaults) {
    SolveService svc;
    EXPECT_EQ(svc.workers(), 1);
    EXPECT_EQ(svc.queue_depth(), 64u);
    EXPECT_THROW(SolveService(ServiceConfig{0, 64, {}}), ArgumentError);
}

TEST(Service, LifecycleQueuedThenDone) {
    Gate gate;
    SolveService svc({1, 64, gate.solver()});
    const auto first = svc.submit(oracle::tiny_instance(), SolverOptions{});
    const auto id = svc.submit(oracle::tiny_instance(), SolverOptions{});
    EXPECT_EQ(svc.status(id).status, JobStatus::Queued);
    EXPECT_NE(first, id);
    gate.open();
    ASSERT_TRUE(svc.wait(id, 30s));
    auto info = svc.status(id);
    EXPECT_EQ(info.status, JobStatus::Done);
    ASSERT_TRUE(info.started && info.finished);
    EXPECT_GE(*info.started, info.submitted);
    EXPECT_GE(*info.finished, *info.started);
    auto doc = svc.result(id);
    EXPECT_LE(doc.rel_gap, 0.005);
    EXPECT_NEAR(doc.objective, 1460.0, 0.005 * 1460.0);
    expect_replays(doc, oracle::tiny_instance());
}

TEST(Service, UnknownJob) {
    SolveService svc;
    EXPECT_THROW(svc.status("nope"), UnknownJobError);
    EXPECT_THROW(svc.result("nope"), UnknownJobError);
    EXPECT_THROW(svc.cancel("nope"), UnknownJobError);
}

TEST(Service, RejectsBadDocuments) {
    SolveService svc;
    try {
        svc.submit_json({{"instance", {{"name", "x"}}}});
        FAIL();
    } catch (const SchemaError& e) {
        EXPECT_FALSE(e.path.empty());
    }
    EXPECT_THROW(svc.submit_json({{"options", {}}}), SchemaError);
    auto inst = instance_to_json(oracle::tiny_instance());
    EXPECT_THROW(svc.submit_json({{"instance", inst}, {"options", {{"gap", 0.1}}}}), SchemaError);
    EXPECT_THROW(svc.submit_json({{"instance", inst}, {"options", {{"rel_gap", 2.0}}}}), ArgumentError);
    auto bad = oracle::tiny_instance();
    bad.generators[0].p_min = 500;
    EXPECT_THROW(svc.submit(bad, SolverOptions{}), ValidationError);
    EXPECT_TRUE(svc.jobs().empty());
}

TEST(Service, RunningJobIsNotReady) {
    Gate gate;
    SolveService svc({1, 64, gate.solver()});
    const auto id = svc.submit(oracle::tiny_instance(), SolverOptions{});
    wait_status(svc, id, JobStatus::Running);
    EXPECT_THROW(svc.result(id), NotReadyError);
    gate.open();
    ASSERT_TRUE(svc.wait(id, 30s));
}

TEST(Service, CancelQueuedJobNeverRuns) {
    Gate gate;
    std::atomic<int> calls{0};
    SolveService svc({1, 64, gate.solver(&calls)});
    const auto busy = svc.submit(oracle::tiny_instance(), SolverOptions{});
    const auto id = svc.submit(oracle::tiny_instance(), SolverOptions{});
    wait_status(svc, busy, JobStatus::Running);
    EXPECT_EQ(svc.cancel(id).status, JobStatus::Cancelled);
    gate.open();
    ASSERT_TRUE(svc.wait(busy, 30s));
    std::this_thread::sleep_for(20ms);
    EXPECT_EQ(calls.load(), 1);
    EXPECT_EQ(svc.status(id).status, JobStatus::Cancelled);
    try {
        svc.result(id);
        FAIL();
    } catch (const NotReadyError& e) {
        EXPECT_NE(std::string(e.what()).find("Cancelled"), std::string::npos);
    }
}

TEST(Service, CancelDoneJobIsNoOp) {
    SolveService svc;
    const auto id = svc.submit(oracle::tiny_instance(), SolverOptions{});
    ASSERT_TRUE(svc.wait(id, 30s));
    const auto before = svc.status(id);
    const auto after = svc.cancel(id);
    EXPECT_EQ(after.status, JobStatus::Done);
    EXPECT_EQ(after.finished, before.finished);
    EXPECT_NO_THROW(svc.result(id));
}

TEST(Service, CancelMidSolveStopsPromptly) {
    std::atomic<bool> in_tree{false};
    JobSolver watched = [&](const CompactModel& m, const SolverOptions& o, const MipControl& c) {
        MipControl ctl = c;
        ctl.on_node = [&](const NodeEvent&) { in_tree = true; };
        return solve_mip(m, o, ctl);
    };
    SolveService svc({1, 64, watched});
    SolverOptions opt;
    opt.rel_gap = 0.0;
    const auto inst = synth_instance(40, 30, 45, 24, 3);
    const auto id = svc.submit(inst, opt);
    const auto until = std::chrono::steady_clock::now() + 120s;
    while (!in_tree && !is_terminal(svc.status(id).status)) {
        ASSERT_LT(std::chrono::steady_clock::now(), until);
        std::this_thread::sleep_for(1ms);
    }
    if (is_terminal(svc.status(id).status)) GTEST_SKIP() << "solved before the first node event";
    const auto t0 = std::chrono::steady_clock::now();
    svc.cancel(id);
    ASSERT_TRUE(svc.wait(id, 30s));
    const double waited = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto info = svc.status(id);
    if (info.status == JobStatus::Done) GTEST_SKIP() << "finished before the stop signal landed";
    EXPECT_EQ(info.status, JobStatus::Failed);
    EXPECT_EQ(info.error, "cancelled");
    EXPECT_TRUE(std::isfinite(info.best_bound));
    EXPECT_LT(waited, 5.0);
}

TEST(Service, HundredConcurrentSubmissions) {
    const int pool = 3;
    SolveService svc({pool, 128, sleepy_solver(5ms)});
    std::vector<std::future<std::vector<std::string>>> submitters;
    for (int k = 0; k < 10; ++k)
        submitters.push_back(std::async(std::launch::async, [&] {
            std::vector<std::string> ids;
            for (int i = 0; i < 10; ++i) ids.push_back(svc.submit(oracle::tiny_instance(), SolverOptions{}));
            return ids;
        }));
    std::atomic<bool> sampling{true};
    int max_seen = 0;
    std::thread sampler([&] {
        while (sampling) {
            int running = 0;
            for (const auto& j : svc.jobs()) running += j.status == JobStatus::Running;
            max_seen = std::max(max_seen, running);
            std::this_thread::sleep_for(1ms);
        }
    });
    std::set<std::string> ids;
    for (auto& f : submitters)
        for (auto& id : f.get()) ids.insert(id);
    ASSERT_EQ(ids.size(), 100u);
    for (const auto& id : ids) ASSERT_TRUE(svc.wait(id, 60s));
    sampling = false;
    sampler.join();
    for (const auto& id : ids) {
        ASSERT_EQ(svc.status(id).status, JobStatus::Done);
        expect_replays(svc.result(id), oracle::tiny_instance());
    }
    EXPECT_LE(max_seen, pool);
    EXPECT_LE(svc.peak_running(), pool);
    EXPECT_GE(svc.peak_running(), 1);
}

TEST(Service, QueueOverflowIsRejected) {
    Gate gate;
    SolveService svc({1, 2, gate.solver()});
    const auto running = svc.submit(oracle::tiny_instance(), SolverOptions{});
    wait_status(svc, running, JobStatus::Running);
    svc.submit(oracle::tiny_instance(), SolverOptions{});
    svc.submit(oracle::tiny_instance(), SolverOptions{});
    EXPECT_THROW(svc.submit(oracle::tiny_instance(), SolverOptions{}), QueueFullError);
    gate.open();
}

TEST(Service, InfeasibleJobFails) {
    SolveService svc;
    auto inst = oracle::tiny_instance();
    inst.demand = {{50, 150}};
    const auto id = svc.submit(inst, SolverOptions{});
    ASSERT_TRUE(svc.wait(id, 30s));
    EXPECT_EQ(svc.status(id).status, JobStatus::Failed);
    EXPECT_EQ(svc.status(id).error, "infeasible");
}

TEST(Service, JobJson) {
    SolveService svc;
    const auto id = svc.submit(oracle::tiny_instance(), SolverOptions{});
    ASSERT_TRUE(svc.wait(id, 30s));
    auto j = job_to_json(svc.status(id));
    EXPECT_EQ(j["id"], id);
    EXPECT_EQ(j["status"], "Done");
    EXPECT_TRUE(j["error"].is_null());
    EXPECT_TRUE(j["finished"].is_string());
    EXPECT_GE(j["finished"].get<std::string>(), j["started"].get<std::string>());
    auto o = options_from_json(options_to_json(SolverOptions{0.01, 5.0, 2, 9}));
    EXPECT_EQ(o.rel_gap, 0.01);
    EXPECT_EQ(*o.time_limit, 5.0);
    EXPECT_EQ(o.worker_count, 2);
    EXPECT_EQ(o.seed, 9u);
}

class Http : public ::testing::Test {
protected:
    void start(ServiceConfig cfg = {}) {
        svc = std::make_unique<SolveService>(std::move(cfg));
        http = std::make_unique<HttpService>(*svc);
        port = http->bind("127.0.0.1", 0);
        thread = std::thread([this] { http->run(); });
        http->wait_until_ready();
        client = std::make_unique<httplib::Client>("127.0.0.1", port);
    }
    void TearDown() override {
        if (http) http->stop();
        if (thread.joinable()) thread.join();
    }
    nlohmann::json body_of(const httplib::Result& r) { return nlohmann::json::parse(r->body); }
    std::string submit_tiny() {
        nlohmann::json req = {{"instance", instance_to_json(oracle::tiny_instance())}, {"options", {{"rel_gap", 0.0}}}};
        auto r = client->Post("/v1/jobs", req.dump(), "application/json");
        EXPECT_TRUE(r);
        EXPECT_EQ(r->status, 202);
        return body_of(r)["id"];
    }

    std::unique_ptr<SolveService> svc;
    std::unique_ptr<HttpService> http;
    std::unique_ptr<httplib::Client> client;
    std::thread thread;
    int port = 0;
};

TEST_F(Http, Health) {
    start();
    auto r = client->Get("/v1/health");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(body_of(r), nlohmann::json({{"status", "ok"}}));
}

TEST_F(Http, SubmitPollAndFetch) {
    start();
    const auto id = submit_tiny();
    ASSERT_TRUE(svc->wait(id, 30s));
    auto r = client->Get("/v1/jobs/" + id);
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(body_of(r)["status"], "Done");
    r = client->Get("/v1/jobs/" + id + "/solution");
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    auto doc = parse_solution(r->body);
    EXPECT_EQ(doc.instance, "tiny");
    EXPECT_NEAR(doc.objective, 1460.0, 1e-6);
    expect_replays(doc, oracle::tiny_instance());
    r = client->Delete("/v1/jobs/" + id);
    ASSERT_TRUE(r);
    EXPECT_EQ(r->status, 200);
    EXPECT_EQ(body_of(r)["status"], "Done");
}

TEST_F(Http, ErrorBodies) {
    Gate gate;
    start({1, 1, gate.solver()});
    auto check = [&](const httplib::Result& r, int code, const std::string& error) {
        ASSERT_TRUE(r);
        EXPECT_EQ(r->status, code);
        auto b = body_of(r);
        EXPECT_EQ(b["error"], error);
        EXPECT_TRUE(b["detail"].is_string());
    };
    check(client->Get("/v1/jobs/unknown"), 404, "unknown_job");
    check(client->Get("/v1/jobs/unknown/solution"), 404, "unknown_job");
    check(client->Delete("/v1/jobs/unknown"), 404, "unknown_job");
    check(client->Get("/v1/nothing"), 404, "not_found");
    check(client->Post("/v1/jobs", "{not json", "application/json"), 400, "schema");
    check(client->Post("/v1/jobs", R"({"instance": {"name": 3}})", "application/json"), 400, "schema");
    auto bad = instance_to_json(oracle::tiny_instance());
    bad["generators"][0]["p_min"] = 500;
    auto r = client->Post("/v1/jobs", nlohmann::json({{"instance", bad}}).dump(), "application/json");
    check(r, 400, "validation");
    EXPECT_FALSE(body_of(r)["violations"].empty());

    const auto running = submit_tiny();
    wait_status(*svc, running, JobStatus::Running);
    check(client->Get("/v1/jobs/" + running + "/solution"), 409, "not_ready");
    submit_tiny();
    nlohmann::json req = {{"instance", instance_to_json(oracle::tiny_instance())}};
    check(client->Post("/v1/jobs", req.dump(), "application/json"), 429, "queue_full");
    gate.open();
}
