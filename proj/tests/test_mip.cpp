#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>

#include "scuc/compiler.hpp"
#include "scuc/mip.hpp"
#include "scuc/synth.hpp"
#include "support/uc_oracle.hpp"

using namespace scuc;

namespace {

SolverOptions exact() {
    SolverOptions o;
    o.rel_gap = 0.0;
    return o;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

void expect_clean_incumbent(const CompactModel& m, const MipResult& r) {
    ASSERT_TRUE(r.has_incumbent());
    auto ev = evaluate(m, r.z, r.y);
    EXPECT_LE(ev.max_residual(), kIncumbentResidualTolerance);
    EXPECT_LE(ev.integrality, kIntegralityTolerance);
    EXPECT_NEAR(ev.objective, r.objective, 1e-6 * std::max(1.0, std::abs(r.objective)));
}

// Piecewise-linear cost of output above p_min, filling segments cheapest first.
double merit_order_cost(const Generator& g, double above_min, double hours) {
    double cost = 0.0;
    for (const auto& s : g.segments) {
        const double take = std::min(s.width, std::max(0.0, above_min));
        cost += take * s.marginal_cost * hours;
        above_min -= take;
    }
    return cost;
}

}  // namespace

TEST(Mip, TinyOptimumMatchesHandValue) {
    auto m = compile(oracle::tiny_instance());
    auto r = solve_mip(m, exact());
    EXPECT_EQ(r.status, MipStatus::OptimalWithinGap);
    EXPECT_NEAR(r.objective, 1460.0, 1e-6);
    expect_clean_incumbent(m, r);
    auto brute = oracle::enumerate_optimum(oracle::tiny_instance());
    ASSERT_TRUE(brute.objective);
    EXPECT_NEAR(*brute.objective, 1460.0, 1e-6);
}

TEST(Mip, BindingLineForcesExpensiveUnit) {
    UcInstance inst;
    inst.name = "two-bus";
    inst.buses = {{"b1", true}, {"b2", false}};
    inst.lines = {{"l1", "b1", "b2", 10.0, 30.0}};
    Generator a;
    a.id = "cheap";
    a.bus = "b1";
    a.p_max = 100;
    a.ramp_up = a.ramp_down = a.startup_ramp = a.shutdown_ramp = 100;
    a.segments = {{100, 10}};
    a.init_on = true;
    a.init_power = 50;
    Generator b = a;
    b.id = "dear";
    b.bus = "b2";
    b.segments = {{100, 50}};
    inst.generators = {a, b};
    inst.demand = {{0}, {80}};
    auto m = compile(inst);
    auto r = solve_mip(m, exact());
    ASSERT_EQ(r.status, MipStatus::OptimalWithinGap);
    EXPECT_NEAR(r.objective, 30 * 10 + 50 * 50, 1e-6);
    EXPECT_NEAR(r.y[m.index.p(0, 0) - m.n_z()], 30.0, 1e-6);
    expect_clean_incumbent(m, r);
}

TEST(Mip, MatchesExhaustiveEnumeration) {
    std::mt19937_64 rng(2024);
    int feasible = 0, infeasible = 0;
    for (int trial = 0; trial < 160 && feasible < 60; ++trial) {
        const int G = 1 + trial % 3;
        const int T = 1 + (trial / 3) % 4;
        auto inst = oracle::random_single_bus(rng, G, T);
        ASSERT_TRUE(validate_instance(inst).empty());
        auto brute = oracle::enumerate_optimum(inst);
        auto m = compile(inst);
        auto r = solve_mip(m, exact());
        if (!brute.objective) {
            EXPECT_EQ(r.status, MipStatus::Infeasible) << "trial " << trial;
            ++infeasible;
            continue;
        }
        ++feasible;
        ASSERT_EQ(r.status, MipStatus::OptimalWithinGap) << "trial " << trial;
        EXPECT_LE(rel_diff(r.objective, *brute.objective), 1e-6) << "trial " << trial;
        EXPECT_LE(r.best_bound, r.objective + 1e-9);
        expect_clean_incumbent(m, r);
    }
    EXPECT_GE(feasible, 50);
    (void)infeasible;
}

TEST(Mip, DispatchCostFollowsMeritOrder) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = oracle::random_single_bus(rng, 3, 3);
        auto m = compile(inst);
        auto r = solve_mip(m, exact());
        if (r.status != MipStatus::OptimalWithinGap) continue;
        const auto& ix = m.index;
        for (int g = 0; g < 3; ++g)
            for (int t = 0; t < inst.horizon_T; ++t) {
                const auto& gen = inst.generators[g];
                double charged = 0.0;
                for (int k = 0; k < ix.segments(g); ++k)
                    charged += m.b[ix.pseg(g, t, k) - m.n_z()] * r.y[ix.pseg(g, t, k) - m.n_z()];
                const double above = r.y[ix.p(g, t) - m.n_z()] - gen.p_min * r.z[ix.u(g, t)];
                EXPECT_NEAR(charged, merit_order_cost(gen, above, inst.period_hours), 1e-6);
            }
    }
}

TEST(Mip, GeneratorOrderDoesNotChangeOptimum) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = oracle::random_single_bus(rng, 3, 3);
        auto r1 = solve_mip(compile(inst), exact());
        std::reverse(inst.generators.begin(), inst.generators.end());
        std::rotate(inst.generators.begin(), inst.generators.begin() + 1, inst.generators.end());
        auto r2 = solve_mip(compile(inst), exact());
        ASSERT_EQ(r1.status, r2.status);
        if (r1.status == MipStatus::OptimalWithinGap) {
            EXPECT_LE(rel_diff(r1.objective, r2.objective), 1e-6);
        }
    }
}

TEST(Mip, GapContractOnNetworkInstances) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        auto m = compile(synth_instance(4, 4, 5, 4, seed));
        SolverOptions opt;
        opt.rel_gap = 0.005;
        auto r = solve_mip(m, opt);
        ASSERT_EQ(r.status, MipStatus::OptimalWithinGap) << seed;
        EXPECT_LE(r.rel_gap_achieved, 0.005);
        EXPECT_LE(r.best_bound, r.objective + 1e-9);
        expect_clean_incumbent(m, r);
        auto ref = solve_mip(m, exact());
        ASSERT_EQ(ref.status, MipStatus::OptimalWithinGap);
        EXPECT_GE(r.objective, ref.objective - 1e-6 * std::abs(ref.objective));
        EXPECT_LE(relative_gap(r.objective, ref.objective), 0.005 + 1e-9);
        EXPECT_LE(r.best_bound, ref.objective + 1e-6 * std::abs(ref.objective));
    }
}

TEST(Mip, EventLogBoundsAreMonotone) {
    auto m = compile(synth_instance(5, 3, 3, 5, 8));
    std::vector<NodeEvent> events;
    MipControl ctl;
    ctl.on_node = [&](const NodeEvent& e) { events.push_back(e); };
    auto r = solve_mip(m, exact(), ctl);
    ASSERT_EQ(r.status, MipStatus::OptimalWithinGap);
    ASSERT_FALSE(events.empty());
    EXPECT_EQ(static_cast<long>(events.size()), r.nodes_explored);
    for (std::size_t i = 0; i < events.size(); ++i) {
        EXPECT_EQ(events[i].node.id, static_cast<long>(i));
        if (std::isfinite(events[i].upper_bound)) {
            EXPECT_LE(events[i].lower_bound, events[i].upper_bound + 1e-9);
        }
        if (i == 0) continue;
        EXPECT_LE(events[i].upper_bound, events[i - 1].upper_bound);
        EXPECT_GE(events[i].lower_bound, events[i - 1].lower_bound);
    }
    EXPECT_EQ(events.back().upper_bound, r.objective);
    EXPECT_LE(events.back().lower_bound, r.best_bound + 1e-9);
}

TEST(Mip, SingleWorkerIsDeterministic) {
    auto m = compile(synth_instance(5, 4, 4, 4, 13));
    auto run = [&] {
        std::vector<std::string> log;
        MipControl ctl;
        ctl.on_node = [&](const NodeEvent& e) { log.push_back(format_event(e)); };
        auto r = solve_mip(m, exact(), ctl);
        return std::make_pair(r, log);
    };
    auto [a, la] = run();
    auto [b, lb] = run();
    EXPECT_EQ(la, lb);
    EXPECT_EQ(a.z, b.z);
    EXPECT_EQ(a.y, b.y);
    EXPECT_EQ(a.objective, b.objective);
}

TEST(Mip, ParallelWorkersAgreeWithinGap) {
    auto m = compile(synth_instance(6, 4, 5, 4, 21));
    auto ref = solve_mip(m, exact());
    ASSERT_EQ(ref.status, MipStatus::OptimalWithinGap);
    for (int workers : {2, 4}) {
        SolverOptions opt;
        opt.worker_count = workers;
        opt.rel_gap = 0.001;
        auto r = solve_mip(m, opt);
        ASSERT_EQ(r.status, MipStatus::OptimalWithinGap) << workers;
        EXPECT_LE(relative_gap(r.objective, ref.objective), 0.001 + 1e-9);
        EXPECT_LE(r.best_bound, ref.objective + 1e-6 * std::abs(ref.objective));
        expect_clean_incumbent(m, r);
    }
}

TEST(Mip, RootRelaxationBoundsTheOptimum) {
    std::mt19937_64 rng(9);
    for (int trial = 0; trial < 10; ++trial) {
        auto inst = oracle::random_single_bus(rng, 2, 3);
        auto m = compile(inst);
        auto root = root_relaxation(m);
        auto r = solve_mip(m, exact());
        if (r.status != MipStatus::OptimalWithinGap) continue;
        ASSERT_EQ(root.status, LpStatus::Optimal);
        EXPECT_LE(root.objective, r.objective + 1e-6);
    }
}

TEST(Mip, ForcedCommitmentIsIntegralAtRoot) {
    auto inst = oracle::tiny_instance();
    auto& g = inst.generators[0];
    g.init_on = true;
    g.init_power = 40;
    g.min_up = 3;
    g.init_periods_in_state = 1;
    auto m = compile(inst);
    auto root = root_relaxation(m);
    ASSERT_EQ(root.status, LpStatus::Optimal);
    for (int j = 0; j < m.n_z(); ++j) EXPECT_NEAR(root.x[j], std::round(root.x[j]), 1e-9);
    auto r = solve_mip(m, exact());
    EXPECT_EQ(r.status, MipStatus::OptimalWithinGap);
    EXPECT_EQ(r.nodes_explored, 1);
    EXPECT_EQ(r.rel_gap_achieved, 0.0);
    EXPECT_NEAR(r.objective, root.objective, 1e-9);
}

TEST(Mip, DemandAboveCapacityIsInfeasible) {
    auto inst = oracle::tiny_instance();
    inst.demand = {{50, 101}};
    auto m = compile(inst);
    EXPECT_EQ(root_relaxation(m).status, LpStatus::Infeasible);
    auto r = solve_mip(m, exact());
    EXPECT_EQ(r.status, MipStatus::Infeasible);
    EXPECT_FALSE(r.has_incumbent());
}

TEST(Mip, ZeroTimeLimitStopsWithValidBounds) {
    auto m = compile(synth_instance(8, 6, 8, 6, 3));
    SolverOptions opt;
    opt.time_limit = 0.0;
    auto r = solve_mip(m, opt);
    EXPECT_EQ(r.status, MipStatus::TimeLimit);
    EXPECT_LE(r.best_bound, r.objective);
    auto ref = solve_mip(m, SolverOptions{});
    EXPECT_LE(r.best_bound, ref.objective);
}

TEST(Mip, CancellationFromCallback) {
    auto m = compile(synth_instance(6, 4, 5, 6, 17));
    std::atomic<bool> cancel{false};
    MipControl ctl;
    ctl.cancel = &cancel;
    long seen = 0;
    ctl.on_node = [&](const NodeEvent&) {
        if (++seen == 2) cancel = true;
    };
    auto r = solve_mip(m, exact(), ctl);
    if (r.status != MipStatus::OptimalWithinGap) {
        EXPECT_EQ(r.status, MipStatus::Cancelled);
        EXPECT_LE(r.nodes_explored, 3);
    }
    cancel = true;
    auto r2 = solve_mip(m, exact(), ctl);
    EXPECT_EQ(r2.status, MipStatus::Cancelled);
    EXPECT_EQ(r2.nodes_explored, 0);
}

TEST(Mip, ContinuousModelSolvesAsLp) {
    CompactModel m;
    m.name = "lp-only";
    m.index = VariableIndex::from_names({"x", "y"}, 0);
    m.b = {1.0, 2.0};
    m.commitment = m.dispatch = m.coupling = m.balance = RowBlock(0, 2);
    int r = m.balance.add_row(Sense::Eq, 3.0, "sum");
    m.balance.y_part.add(r, 0, 1.0);
    m.balance.y_part.add(r, 1, 1.0);
    r = m.coupling.add_row(Sense::Le, 2.0, "cap");
    m.coupling.y_part.add(r, 0, 1.0);
    m.lower = {0.0, 0.0};
    m.upper = {kInf, kInf};
    m.integer = {false, false};
    auto lp = solve_lp(to_lp(m));
    auto res = solve_mip(m, exact());
    EXPECT_EQ(res.status, MipStatus::OptimalWithinGap);
    EXPECT_NEAR(res.objective, lp.objective, 1e-12);
    EXPECT_NEAR(res.objective, 2.0 * 1 + 1.0 * 2, 1e-9);
    MipControl strict;
    strict.require_integer = true;
    EXPECT_THROW(solve_mip(m, exact(), strict), ModelError);
}

TEST(Mip, RejectsBadOptions) {
    auto m = compile(oracle::tiny_instance());
    SolverOptions o;
    o.rel_gap = 1.0;
    EXPECT_THROW(solve_mip(m, o), ArgumentError);
    o = {};
    o.worker_count = 0;
    EXPECT_THROW(solve_mip(m, o), ArgumentError);
    o = {};
    o.time_limit = -1.0;
    EXPECT_THROW(solve_mip(m, o), ArgumentError);
}

TEST(Mip, StatusNamesRoundTrip) {
    for (auto s : {MipStatus::OptimalWithinGap, MipStatus::TimeLimit, MipStatus::Infeasible, MipStatus::Unbounded,
                   MipStatus::Cancelled})
        EXPECT_EQ(mip_status_from_string(to_string(s)), s);
    EXPECT_FALSE(mip_status_from_string("Bogus"));
}
