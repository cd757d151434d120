#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <random>
#include <thread>

#include "scuc/benchmark.hpp"
#include "support/uc_oracle.hpp"

using namespace scuc;

namespace {

EnvironmentProfile profile(const std::string& name, int cpus = 16, double ram = 64) {
    return {name, cpus, ram, true, "Xeon"};
}

std::vector<TrialRecord> timings(const std::string& env, const std::vector<double>& secs) {
    std::vector<TrialRecord> out;
    for (std::size_t i = 0; i < secs.size(); ++i) {
        TrialRecord r;
        r.env = env;
        r.trial = static_cast<int>(i);
        r.solve_seconds = secs[i];
        r.objective = 1.0;
        r.rel_gap = 0.0;
        out.push_back(r);
    }
    return out;
}

void append(std::vector<TrialRecord>& dst, const std::vector<TrialRecord>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

// Table I shaped: blues 100 s, c4.2xlarge slower, the rest faster.
std::vector<TrialRecord> five_environments() {
    std::vector<TrialRecord> recs;
    append(recs, timings("ANLBlues", {100, 100, 100, 100}));
    append(recs, timings("c4.2xlarge", {104, 106}));
    append(recs, timings("c4.4xlarge", {95, 93}));
    append(recs, timings("c4.8xlarge", {85, 86}));
    append(recs, timings("m4.16xlarge", {90, 91}));
    return recs;
}

const ComparisonRow& row_of(const ComparisonReport& rep, const std::string& env) {
    for (const auto& r : rep.rows)
        if (r.env == env) return r;
    throw std::runtime_error("no row " + env);
}

MipResult fake_result(MipStatus s = MipStatus::OptimalWithinGap) {
    MipResult r;
    r.status = s;
    if (s == MipStatus::OptimalWithinGap) {
        r.objective = 42.0;
        r.best_bound = 42.0;
        r.rel_gap_achieved = 0.0;
        r.nodes_explored = 1;
    }
    return r;
}

}  // namespace

TEST(PercentGain, HeadlineAndIdentity) {
    EXPECT_EQ(percent_gain(100.0, 85.5), 14.5);
    EXPECT_EQ(percent_gain(100.0, 105.0), -5.0);
    for (double t : {1e-3, 0.1, 1.0, 3.7, 1234.5}) EXPECT_EQ(percent_gain(t, t), 0.0);
}

TEST(PercentGain, RationalGrid) {
    // b a power of two and e = b * k / 64 make every step exact.
    for (double b : {0.5, 1.0, 2.0, 8.0, 64.0})
        for (int k = 0; k <= 128; ++k) {
            const double e = b * k / 64.0;
            EXPECT_EQ(percent_gain(b, e), 100.0 - 100.0 * k / 64.0) << b << " " << e;
        }
}

TEST(PercentGain, RejectsNonpositiveBaseline) {
    EXPECT_THROW(percent_gain(0.0, 1.0), ArgumentError);
    EXPECT_THROW(percent_gain(-1.0, 1.0), ArgumentError);
    EXPECT_THROW(percent_gain(std::nan(""), 1.0), ArgumentError);
}

TEST(Compare, TwoEnvironments) {
    auto recs = timings("A", {10, 10});
    append(recs, timings("B", {8, 12}));
    auto rep = compare(recs, "A");
    ASSERT_EQ(rep.rows.size(), 2u);
    EXPECT_EQ(row_of(rep, "B").mean_seconds, 10.0);
    EXPECT_EQ(row_of(rep, "B").percent_gain, 0.0);
    EXPECT_NEAR(row_of(rep, "B").sd_seconds, std::sqrt(8.0), 1e-12);
    EXPECT_EQ(row_of(rep, "A").sd_seconds, 0.0);
}

TEST(Compare, FiveEnvironmentReport) {
    std::vector<EnvironmentProfile> profiles = {profile("ANLBlues", 16, 64), profile("c4.2xlarge", 8, 16),
                                                profile("c4.4xlarge", 16, 30), profile("c4.8xlarge", 36, 60),
                                                profile("m4.16xlarge", 64, 256)};
    auto rep = compare(five_environments(), "ANLBlues", profiles);
    ASSERT_EQ(rep.rows.size(), 5u);
    std::vector<std::string> order;
    for (const auto& r : rep.rows) order.push_back(r.env);
    EXPECT_EQ(order, (std::vector<std::string>{"c4.8xlarge", "m4.16xlarge", "c4.4xlarge", "ANLBlues", "c4.2xlarge"}));
    EXPECT_EQ(row_of(rep, "ANLBlues").percent_gain, 0.0);
    EXPECT_EQ(row_of(rep, "c4.8xlarge").percent_gain, 14.5);
    EXPECT_EQ(row_of(rep, "m4.16xlarge").percent_gain, 9.5);
    EXPECT_EQ(row_of(rep, "c4.4xlarge").percent_gain, 6.0);
    EXPECT_EQ(row_of(rep, "c4.2xlarge").percent_gain, -5.0);
    EXPECT_EQ(row_of(rep, "c4.8xlarge").profile->cpu_count, 36);

    const auto csv = write_report_csv(rep);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "env,cpu,ram_gb,trials,mean_s,sd_s,percent_gain");
    EXPECT_NE(csv.find("\nc4.8xlarge,36,60,2,85.5,"), std::string::npos);
    EXPECT_NE(csv.find("\nANLBlues,16,64,4,100,0,0\n"), std::string::npos);
    const auto plot = write_plot_data(rep);
    EXPECT_NE(plot.find("\"c4.2xlarge\" -5\n"), std::string::npos);
    EXPECT_EQ(std::count(plot.begin(), plot.end(), '\n'), 7);
}

TEST(Compare, Errors) {
    EXPECT_THROW(compare(timings("A", {1}), "Z"), MissingBaselineError);
    auto recs = timings("A", {1});
    auto bad = timings("B", {2});
    bad[0].ok = false;
    append(recs, bad);
    EXPECT_THROW(compare(recs, "A"), EmptyEnvironmentError);
}

TEST(Compare, PermutationInvariant) {
    auto recs = five_environments();
    auto ref = compare(recs, "ANLBlues");
    std::mt19937_64 rng(3);
    for (int i = 0; i < 10; ++i) {
        std::shuffle(recs.begin(), recs.end(), rng);
        auto rep = compare(recs, "ANLBlues");
        ASSERT_EQ(rep.rows.size(), ref.rows.size());
        for (std::size_t k = 0; k < rep.rows.size(); ++k) {
            EXPECT_EQ(rep.rows[k].env, ref.rows[k].env);
            EXPECT_EQ(rep.rows[k].mean_seconds, ref.rows[k].mean_seconds);
            EXPECT_EQ(rep.rows[k].sd_seconds, ref.rows[k].sd_seconds);
            EXPECT_EQ(rep.rows[k].percent_gain, ref.rows[k].percent_gain);
        }
    }
}

TEST(Compare, StatisticsMatchTwoPassReference) {
    std::mt19937_64 rng(11);
    std::lognormal_distribution<double> t(3.0, 0.6);
    std::uniform_int_distribution<int> n(2, 200);
    for (int rep_i = 0; rep_i < 50; ++rep_i) {
        std::vector<double> a(n(rng)), b(n(rng));
        for (auto& x : a) x = t(rng);
        for (auto& x : b) x = t(rng);
        auto recs = timings("a", a);
        append(recs, timings("b", b));
        auto rep = compare(recs, "a");
        for (const auto* v : {&a, &b}) {
            double mean = 0.0;
            for (double x : *v) mean += x;
            mean /= static_cast<double>(v->size());
            double ss = 0.0;
            for (double x : *v) ss += (x - mean) * (x - mean);
            const double sd = std::sqrt(ss / static_cast<double>(v->size() - 1));
            const auto& row = row_of(rep, v == &a ? "a" : "b");
            EXPECT_LE(std::abs(row.mean_seconds - mean), 1e-12 * std::abs(mean));
            EXPECT_LE(std::abs(row.sd_seconds - sd), 1e-12 * std::abs(sd));
        }
    }
}

TEST(RunTrials, HundredRealTrials) {
    auto recs = run_trials(oracle::tiny_instance(), SolverOptions{}, 100, profile("desk"));
    ASSERT_EQ(recs.size(), 100u);
    for (int i = 0; i < 100; ++i) {
        const auto& r = recs[i];
        EXPECT_EQ(r.trial, i);
        EXPECT_TRUE(r.ok) << r.error;
        EXPECT_GT(r.solve_seconds, 0.0);
        EXPECT_GE(r.compile_seconds, 0.0);
        EXPECT_LE(r.rel_gap, 0.005);
        EXPECT_NEAR(r.objective, 1460.0, 0.005 * 1460.0);
        EXPECT_FALSE(r.deterministic_stub);
        EXPECT_EQ(r.timestamp.size(), 24u);
    }
}

TEST(RunTrials, SingleTrial) {
    auto recs = run_trials(oracle::tiny_instance(), SolverOptions{}, 1, profile("desk"));
    ASSERT_EQ(recs.size(), 1u);
    EXPECT_GT(recs[0].solve_seconds, 0.0);
}

TEST(RunTrials, SleepingStubIsTimedAndFlagged) {
    TrialSolver stub{[](const CompactModel&, const SolverOptions&) {
                         std::this_thread::sleep_for(std::chrono::milliseconds(10));
                         return fake_result();
                     },
                     true};
    auto recs = run_trials(oracle::tiny_instance(), SolverOptions{}, 20, profile("stub"), stub);
    auto rep = compare(recs, "stub");
    EXPECT_GE(rep.rows[0].mean_seconds, 0.010);
    EXPECT_LT(rep.rows[0].mean_seconds, 0.030);
    for (const auto& r : recs) EXPECT_TRUE(r.deterministic_stub);
}

TEST(RunTrials, TrialsDoNotOverlap) {
    using Clock = std::chrono::steady_clock;
    std::vector<std::pair<Clock::time_point, Clock::time_point>> spans;
    TrialSolver stub{[&](const CompactModel&, const SolverOptions&) {
                         const auto a = Clock::now();
                         std::this_thread::sleep_for(std::chrono::milliseconds(2));
                         spans.push_back({a, Clock::now()});
                         return fake_result();
                     },
                     true};
    run_trials(oracle::tiny_instance(), SolverOptions{}, 10, profile("seq"), stub);
    ASSERT_EQ(spans.size(), 10u);
    for (std::size_t i = 1; i < spans.size(); ++i) EXPECT_LE(spans[i - 1].second, spans[i].first);
}

TEST(RunTrials, FailuresAreRecordedAndLoopContinues) {
    int calls = 0;
    TrialSolver flaky{[&](const CompactModel&, const SolverOptions&) {
                          ++calls;
                          if (calls % 3 == 0) throw NumericalError("basis went singular");
                          if (calls % 3 == 1) return fake_result(MipStatus::TimeLimit);
                          return fake_result();
                      },
                      true};
    auto recs = run_trials(oracle::tiny_instance(), SolverOptions{}, 9, profile("flaky"), flaky);
    ASSERT_EQ(recs.size(), 9u);
    int ok = 0;
    for (const auto& r : recs) ok += r.ok;
    EXPECT_EQ(ok, 3);
    EXPECT_EQ(recs[0].error, "TimeLimit");
    EXPECT_EQ(recs[2].error, "basis went singular");
    auto rep = compare(recs, "flaky");
    EXPECT_EQ(rep.rows[0].trials, 3);
    EXPECT_EQ(rep.rows[0].failed, 6);
    EXPECT_TRUE(rep.rows[0].incomplete());
}

TEST(RunTrials, BadArguments) {
    EXPECT_THROW(run_trials(oracle::tiny_instance(), SolverOptions{}, 0, profile("x")), ArgumentError);
    EXPECT_THROW(run_trials(oracle::tiny_instance(), SolverOptions{}, 1, profile("x", 0)), ArgumentError);
    EXPECT_THROW(run_trials(oracle::tiny_instance(), SolverOptions{}, 1, profile("a,b")), ArgumentError);
}

TEST(TrialCsvTest, RoundTrip) {
    auto recs = run_trials(oracle::tiny_instance(), SolverOptions{}, 3, profile("desk"));
    recs[1].ok = false;
    const auto env = EnvironmentProfile{"desk", 8, 15.5, false, "Core i7"};
    const auto text = write_trials_csv(recs, env);
    EXPECT_EQ(text.substr(0, text.find('\n')), "# env=desk,cpu=8,ram_gb=15.5,ssd=false,processor=Core i7");
    EXPECT_NE(text.find("\nenv,trial,compile_seconds,solve_seconds,objective,rel_gap,nodes,timestamp\n"),
              std::string::npos);
    EXPECT_NE(text.find(",,,," + recs[1].timestamp), std::string::npos);
    auto back = read_trials_csv(text);
    ASSERT_TRUE(back.profile);
    EXPECT_EQ(*back.profile, env);
    ASSERT_EQ(back.records.size(), 3u);
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_EQ(back.records[i].env, recs[i].env);
        EXPECT_EQ(back.records[i].trial, recs[i].trial);
        EXPECT_EQ(back.records[i].solve_seconds, recs[i].solve_seconds);
        EXPECT_EQ(back.records[i].compile_seconds, recs[i].compile_seconds);
        EXPECT_EQ(back.records[i].ok, recs[i].ok);
        EXPECT_EQ(back.records[i].timestamp, recs[i].timestamp);
        if (recs[i].ok) {
            EXPECT_EQ(back.records[i].objective, recs[i].objective);
            EXPECT_EQ(back.records[i].nodes, recs[i].nodes);
        }
    }
}

TEST(TrialCsvTest, RejectsMalformed) {
    EXPECT_THROW(read_trials_csv("a,b,c\n"), SchemaError);
    EXPECT_THROW(read_trials_csv(""), SchemaError);
    EXPECT_THROW(read_trials_csv(std::string(kTrialCsvHeader) + "\nx,1,2\n"), SchemaError);
    EXPECT_THROW(read_trials_csv(std::string(kTrialCsvHeader) + "\nx,1,zz,1,1,0,1,t\n"), SchemaError);
}
