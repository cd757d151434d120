#pragma once

// Best-bound branch-and-bound over a CompactModel.
//
// Termination follows the relative gap (UB - LB) / max(|UB|, 1e-9) against
// SolverOptions::rel_gap. Branching takes the most fractional binary column
// (lowest index on ties); the open node with the smallest bound is expanded
// next (FIFO on ties). Each node also tries a rounding heuristic: the LP
// commitment is rounded, startup/shutdown values are re-derived from the
// rounded on/off pattern when the model carries a commitment layout, and the
// dispatch LP is re-solved with the binaries fixed. The root, and every
// kDiveInterval-th node while there is no incumbent, also starts an LP dive:
// integral commitment columns are fixed, the largest fractional ones are
// rounded up, and the LP is re-solved until it is integral or infeasible.
//
// Every incumbent is produced by an LP with all binaries fixed to exact
// 0/1 values and is replayed through evaluate() before it is accepted.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdio>
#include <exception>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "scuc/compiler.hpp"
#include "scuc/errors.hpp"
#include "scuc/instance.hpp"
#include "scuc/lp.hpp"

namespace scuc {

enum class MipStatus { OptimalWithinGap, TimeLimit, Infeasible, Unbounded, Cancelled };

inline const char* to_string(MipStatus s) {
    switch (s) {
        case MipStatus::OptimalWithinGap: return "OptimalWithinGap";
        case MipStatus::TimeLimit: return "TimeLimit";
        case MipStatus::Infeasible: return "Infeasible";
        case MipStatus::Unbounded: return "Unbounded";
        case MipStatus::Cancelled: return "Cancelled";
    }
    return "?";
}

inline std::optional<MipStatus> mip_status_from_string(const std::string& s) {
    for (auto st : {MipStatus::OptimalWithinGap, MipStatus::TimeLimit, MipStatus::Infeasible, MipStatus::Unbounded,
                    MipStatus::Cancelled})
        if (s == to_string(st)) return st;
    return std::nullopt;
}

inline constexpr double kIntegralityTolerance = 1e-6;
inline constexpr double kIncumbentResidualTolerance = 1e-6;

/// (UB - LB) / max(|UB|, 1e-9); +inf without an incumbent.
inline double relative_gap(double upper, double lower) {
    if (!std::isfinite(upper)) return kInf;
    if (!std::isfinite(lower)) return kInf;
    return std::max(0.0, upper - lower) / std::max(std::abs(upper), 1e-9);
}

struct NodeRecord {
    long id = 0;
    int depth = 0;
    int branch_var = -1;  // column branched on to create this node, -1 at the root
    int direction = 0;    // -1 down (x = 0), +1 up (x = 1)
    double bound = 0.0;   // local LP bound
};

struct NodeEvent {
    NodeRecord node;
    double upper_bound = kInf;
    double lower_bound = -kInf;
    double gap = kInf;
    bool infeasible = false;
};

/// One event-log line: `node=<id> depth=<d> var=<col> dir=<-1|0|1>
/// bound=<local> ub=<UB> lb=<LB> gap=<gap>`; numbers use %.17g, and
/// infeasible nodes print bound=infeasible.
inline std::string format_event(const NodeEvent& e) {
    char buf[320];
    if (e.infeasible)
        std::snprintf(buf, sizeof buf, "node=%ld depth=%d var=%d dir=%d bound=infeasible ub=%.17g lb=%.17g gap=%.17g",
                      e.node.id, e.node.depth, e.node.branch_var, e.node.direction, e.upper_bound, e.lower_bound,
                      e.gap);
    else
        std::snprintf(buf, sizeof buf, "node=%ld depth=%d var=%d dir=%d bound=%.17g ub=%.17g lb=%.17g gap=%.17g",
                      e.node.id, e.node.depth, e.node.branch_var, e.node.direction, e.node.bound, e.upper_bound,
                      e.lower_bound, e.gap);
    return buf;
}

struct MipResult {
    MipStatus status = MipStatus::Infeasible;
    std::vector<double> z;
    std::vector<double> y;
    double objective = kInf;    // UB
    double best_bound = -kInf;  // LB
    double rel_gap_achieved = kInf;
    long nodes_explored = 0;
    double solve_seconds = 0.0;

    bool has_incumbent() const { return std::isfinite(objective) && !(z.empty() && y.empty()); }
};

struct MipControl {
    /// Called once per evaluated node, serialized.
    std::function<void(const NodeEvent&)> on_node;
    /// Cooperative cancellation, honored at node boundaries and inside node LPs.
    const std::atomic<bool>* cancel = nullptr;
    /// Raise ModelError for models without binary columns instead of solving the LP.
    bool require_integer = false;
};

/// The LP relaxation of a compact model: columns ordered z then y, rows
/// ordered commitment, dispatch, coupling, balance.
inline LpProblem to_lp(const CompactModel& m) {
    LpProblem p;
    const int nz = m.n_z();
    p.objective.reserve(m.n_vars());
    p.objective.insert(p.objective.end(), m.c.begin(), m.c.end());
    p.objective.insert(p.objective.end(), m.b.begin(), m.b.end());
    p.col_lower = m.lower;
    p.col_upper = m.upper;
    p.matrix = SparseMatrix(0, m.n_vars());
    for (const auto* blk : m.blocks()) {
        const int base = p.matrix.rows;
        for (const auto& e : blk->z_part.entries) p.matrix.entries.push_back({base + e.row, e.col, e.value});
        for (const auto& e : blk->y_part.entries) p.matrix.entries.push_back({base + e.row, nz + e.col, e.value});
        p.sense.insert(p.sense.end(), blk->sense.begin(), blk->sense.end());
        p.rhs.insert(p.rhs.end(), blk->rhs.begin(), blk->rhs.end());
        p.matrix.rows += blk->rows();
    }
    return p;
}

/// LP relaxation with integrality dropped; its objective bounds solve_mip from below.
inline LpSolution root_relaxation(const CompactModel& m, const LpControl& ctl = {}) { return solve_lp(to_lp(m), ctl); }

namespace detail {

class BranchAndBound {
   public:
    BranchAndBound(const CompactModel& model, const SolverOptions& opt, const MipControl& ctl)
        : model_(model), opt_(opt), ctl_(ctl), lp_(to_lp(model)), engine_(lp_), start_(Clock::now()) {
        if (opt_.time_limit) deadline_ = start_ + std::chrono::duration_cast<Clock::duration>(
                                                       std::chrono::duration<double>(*opt_.time_limit));
        for (int j = 0; j < model_.n_vars(); ++j)
            if (model_.integer[j]) int_cols_.push_back(j);
        build_repair_map();
        if (repair_.empty()) {
            dive_cols_ = int_cols_;
        } else {
            for (const auto& gen : repair_)
                for (const auto& c : gen) dive_cols_.push_back(c[0]);
            std::sort(dive_cols_.begin(), dive_cols_.end());
        }
    }

    MipResult run() {
        if (int_cols_.empty()) return solve_continuous();

        auto root = std::make_shared<Node>();
        root->bound = trivial_bound();
        root->seq = next_seq_++;
        open_.push(root);
        reported_lb_ = root->bound;

        const int workers = std::max(1, opt_.worker_count);
        if (workers == 1) {
            work();
        } else {
            std::vector<std::thread> pool;
            for (int w = 0; w < workers; ++w) pool.emplace_back([this] { work(); });
            for (auto& t : pool) t.join();
        }
        if (error_) std::rethrow_exception(error_);
        return finish();
    }

   private:
    using Clock = std::chrono::steady_clock;
    static constexpr long kDiveInterval = 50;

    struct Node {
        double bound = -kInf;
        long seq = 0;
        int depth = 0;
        int branch_var = -1;
        int direction = 0;
        std::vector<std::pair<int, std::int8_t>> fixes;
        std::shared_ptr<const LpBasis> warm;
    };
    using NodePtr = std::shared_ptr<Node>;
    struct WorseFirst {
        bool operator()(const NodePtr& a, const NodePtr& b) const {
            if (a->bound != b->bound) return a->bound > b->bound;
            return a->seq > b->seq;
        }
    };
    enum class Stop { None, Exhausted, GapReached, TimeLimit, Cancelled, Unbounded };

    // ----- setup --------------------------------------------------------

    void build_repair_map() {
        if (!model_.layout) return;
        const auto& L = *model_.layout;
        const auto& ix = model_.index;
        for (int g = 0; g < L.generators; ++g) {
            std::vector<std::array<int, 3>> cols;
            for (int t = 0; t < L.periods; ++t) {
                auto u = ix.find(VariableKey{Family::U, g, t});
                auto v = ix.find(VariableKey{Family::V, g, t});
                auto w = ix.find(VariableKey{Family::W, g, t});
                if (!u || !v || !w) {
                    repair_.clear();
                    return;
                }
                cols.push_back({*u, *v, *w});
            }
            repair_.push_back(std::move(cols));
        }
    }

    double trivial_bound() const {
        double lb = 0.0;
        for (int j = 0; j < lp_.num_cols(); ++j) {
            const double c = lp_.objective[j];
            if (c == 0.0) continue;
            const double v = c > 0 ? c * lp_.col_lower[j] : c * lp_.col_upper[j];
            if (!std::isfinite(v)) return -kInf;
            lb += v;
        }
        return lb;
    }

    MipResult solve_continuous() {
        if (ctl_.require_integer) throw ModelError("model has no binary columns but MIP semantics were requested");
        LpControl lc;
        lc.should_stop = [this] { return should_stop(); };
        auto s = engine_.solve(lp_.col_lower, lp_.col_upper, lc);
        MipResult r;
        r.nodes_explored = 1;
        switch (s.status) {
            case LpStatus::Optimal:
                r.status = MipStatus::OptimalWithinGap;
                split(s.x, r.z, r.y);
                r.objective = r.best_bound = s.objective;
                r.rel_gap_achieved = 0.0;
                break;
            case LpStatus::Infeasible: r.status = MipStatus::Infeasible; break;
            case LpStatus::Unbounded:
                r.status = MipStatus::Unbounded;
                r.objective = r.best_bound = -kInf;
                break;
            case LpStatus::Interrupted:
                r.status = cancel_requested() ? MipStatus::Cancelled : MipStatus::TimeLimit;
                r.best_bound = trivial_bound();
                break;
        }
        r.solve_seconds = elapsed();
        return r;
    }

    // ----- stop conditions ---------------------------------------------

    bool cancel_requested() const { return ctl_.cancel && ctl_.cancel->load(std::memory_order_relaxed); }
    bool past_deadline() const { return deadline_ && Clock::now() >= *deadline_; }
    bool should_stop() const { return done_.load(std::memory_order_relaxed) || cancel_requested() || past_deadline(); }
    double elapsed() const { return std::chrono::duration<double>(Clock::now() - start_).count(); }

    // ----- shared state (guarded by mu_) --------------------------------

    double open_min_locked() const {
        double lb = kInf;
        if (!open_.empty()) lb = open_.top()->bound;
        if (!in_flight_.empty()) lb = std::min(lb, *in_flight_.begin());
        return std::min(lb, pruned_min_);
    }

    double lower_bound_locked(double extra = kInf) {
        double lb = std::min(open_min_locked(), extra);
        if (std::isfinite(ub_)) lb = std::min(lb, ub_);
        if (lb > reported_lb_) reported_lb_ = lb;
        return reported_lb_;
    }

    /// True if a node with this bound cannot improve the incumbent by more
    /// than the gap; records its bound when it still counts toward LB.
    bool prune_locked(double bound) {
        if (!std::isfinite(ub_)) return false;
        if (bound >= ub_ - 1e-9 * std::max(1.0, std::abs(ub_))) return true;
        if (relative_gap(ub_, bound) <= opt_.rel_gap) {
            pruned_min_ = std::min(pruned_min_, bound);
            return true;
        }
        return false;
    }

    void stop_locked(Stop why) {
        if (stop_ == Stop::None) stop_ = why;
        done_.store(true);
        cv_.notify_all();
    }

    // ----- worker --------------------------------------------------------

    void work() {
        try {
            work_loop();
        } catch (...) {
            std::lock_guard lock(mu_);
            if (!error_) error_ = std::current_exception();
            stop_locked(Stop::Cancelled);
        }
    }

    void work_loop() {
        std::vector<double> lo, hi;
        for (;;) {
            NodePtr node;
            {
                std::unique_lock lock(mu_);
                for (;;) {
                    if (done_) return;
                    if (cancel_requested()) return stop_locked(Stop::Cancelled);
                    if (past_deadline()) return stop_locked(Stop::TimeLimit);
                    if (open_.empty()) {
                        if (in_flight_.empty()) return stop_locked(Stop::Exhausted);
                        cv_.wait(lock);
                        continue;
                    }
                    node = open_.top();
                    open_.pop();
                    const double lb = lower_bound_locked(node->bound);
                    if (std::isfinite(ub_) && relative_gap(ub_, lb) <= opt_.rel_gap) {
                        open_.push(node);
                        return stop_locked(Stop::GapReached);
                    }
                    if (prune_locked(node->bound)) {
                        node.reset();
                        continue;
                    }
                    in_flight_.insert(node->bound);
                    break;
                }
            }
            process(*node, lo, hi);
        }
    }

    void node_bounds(const Node& node, std::vector<double>& lo, std::vector<double>& hi) const {
        lo = lp_.col_lower;
        hi = lp_.col_upper;
        for (auto [col, val] : node.fixes) lo[col] = hi[col] = val;
    }

    void process(const Node& node, std::vector<double>& lo, std::vector<double>& hi) {
        node_bounds(node, lo, hi);
        LpControl lc;
        lc.warm_start = node.warm.get();
        lc.should_stop = [this] { return should_stop(); };
        LpSolution s = engine_.solve(lo, hi, lc);

        if (s.status == LpStatus::Interrupted) {
            std::lock_guard lock(mu_);
            in_flight_.erase(in_flight_.find(node.bound));
            open_.push(std::make_shared<Node>(node));
            if (!done_) stop_locked(cancel_requested() ? Stop::Cancelled : Stop::TimeLimit);
            return;
        }

        NodeEvent ev;
        ev.node = {0, node.depth, node.branch_var, node.direction, node.bound};
        if (s.status != LpStatus::Optimal) {
            std::lock_guard lock(mu_);
            in_flight_.erase(in_flight_.find(node.bound));
            if (s.status == LpStatus::Unbounded) stop_locked(Stop::Unbounded);
            ev.infeasible = s.status == LpStatus::Infeasible;
            finish_node_locked(ev);
            return;
        }

        const double bound = std::max(s.objective, node.bound);
        ev.node.bound = bound;
        int branch = -1;
        double worst = kIntegralityTolerance;
        for (int j : int_cols_) {
            const double frac = std::abs(s.x[j] - std::round(s.x[j]));
            if (frac > worst) {
                worst = frac;
                branch = j;
            }
        }
        auto basis = std::make_shared<const LpBasis>(std::move(s.basis));

        // Candidate incumbent: the integral LP point itself, or a rounding.
        try_incumbent(s.x, basis.get(), branch >= 0);
        if (branch >= 0 && want_dive(node)) dive(s.x, lo, hi, *basis);

        std::lock_guard lock(mu_);
        in_flight_.erase(in_flight_.find(node.bound));
        // An integral node whose point was not accepted still bounds its subtree.
        if (branch < 0 && ub_ > bound + 1e-9 * std::max(1.0, std::abs(bound))) pruned_min_ = std::min(pruned_min_, bound);
        if (branch >= 0 && !prune_locked(bound)) {
            for (int dir : {-1, 1}) {
                auto child = std::make_shared<Node>();
                child->bound = bound;
                child->seq = next_seq_++;
                child->depth = node.depth + 1;
                child->branch_var = branch;
                child->direction = dir;
                child->fixes = node.fixes;
                child->fixes.emplace_back(branch, static_cast<std::int8_t>(dir > 0 ? 1 : 0));
                child->warm = basis;
                open_.push(std::move(child));
            }
            cv_.notify_all();
        }
        finish_node_locked(ev);
    }

    void finish_node_locked(NodeEvent& ev) {
        ev.node.id = nodes_explored_++;
        ev.upper_bound = ub_;
        ev.lower_bound = lower_bound_locked();
        ev.gap = relative_gap(ub_, ev.lower_bound);
        if (ctl_.on_node) ctl_.on_node(ev);
        cv_.notify_all();
    }

    /// Rounds the binaries of x, optionally repairs startup/shutdown, fixes
    /// them and solves the dispatch LP. Accepts the result if it improves the
    /// incumbent and replays cleanly.
    void try_incumbent(const std::vector<double>& x, const LpBasis* warm, bool heuristic) {
        std::vector<std::uint8_t> pattern(int_cols_.size());
        std::vector<double> fixed(model_.n_vars(), 0.0);
        for (std::size_t k = 0; k < int_cols_.size(); ++k) fixed[int_cols_[k]] = std::round(x[int_cols_[k]]);
        if (heuristic && !repair_.empty()) {
            for (std::size_t g = 0; g < repair_.size(); ++g) {
                double prev = model_.layout->initial_on[g];
                for (const auto& c : repair_[g]) {
                    const double u = std::clamp(fixed[c[0]], 0.0, 1.0);
                    fixed[c[0]] = u;
                    fixed[c[1]] = u > prev ? 1.0 : 0.0;
                    fixed[c[2]] = u < prev ? 1.0 : 0.0;
                    prev = u;
                }
            }
        }
        for (std::size_t k = 0; k < int_cols_.size(); ++k)
            pattern[k] = static_cast<std::uint8_t>(fixed[int_cols_[k]] > 0.5 ? 1 : fixed[int_cols_[k]] < -0.5 ? 2 : 0);
        {
            std::lock_guard lock(mu_);
            if (!tried_.insert(pattern).second) return;
        }

        auto lo = lp_.col_lower;
        auto hi = lp_.col_upper;
        for (int j : int_cols_) lo[j] = hi[j] = fixed[j];
        for (int j : int_cols_)
            if (fixed[j] < lp_.col_lower[j] || fixed[j] > lp_.col_upper[j]) return;
        LpControl lc;
        lc.warm_start = warm;
        lc.should_stop = [this] { return should_stop(); };
        auto s = engine_.solve(lo, hi, lc);
        if (s.status != LpStatus::Optimal) return;
        for (int j : int_cols_) s.x[j] = fixed[j];

        std::vector<double> z, y;
        split(s.x, z, y);
        const auto ev = evaluate(model_, z, y);
        if (ev.max_residual() > kIncumbentResidualTolerance || ev.integrality > kIntegralityTolerance) return;

        std::lock_guard lock(mu_);
        if (ev.objective < ub_) {
            ub_ = ev.objective;
            best_z_ = std::move(z);
            best_y_ = std::move(y);
        }
    }

    bool want_dive(const Node& node) {
        std::lock_guard lock(mu_);
        if (node.depth == 0) return true;
        return !std::isfinite(ub_) && nodes_explored_ >= next_dive_ && (next_dive_ = nodes_explored_ + kDiveInterval, true);
    }

    void dive(std::vector<double> x, std::vector<double> lo, std::vector<double> hi, LpBasis basis) {
        auto fractional = [](double v) { return std::abs(v - std::round(v)) > kIntegralityTolerance; };
        LpControl lc;
        lc.should_stop = [this] { return should_stop(); };
        auto resolve = [&] {
            lc.warm_start = &basis;
            auto s = engine_.solve(lo, hi, lc);
            if (s.status != LpStatus::Optimal) return s.status;
            x = std::move(s.x);
            basis = std::move(s.basis);
            return s.status;
        };
        for (std::size_t step = 0; step <= dive_cols_.size(); ++step) {
            if (std::none_of(int_cols_.begin(), int_cols_.end(), [&](int j) { return fractional(x[j]); })) {
                try_incumbent(x, &basis, false);
                return;
            }
            std::vector<int> batch;
            int top = -1;
            for (int j : dive_cols_) {
                if (lo[j] == hi[j]) continue;
                if (!fractional(x[j])) {
                    lo[j] = hi[j] = std::round(x[j]);
                    continue;
                }
                if (x[j] >= 0.9) batch.push_back(j);
                if (top < 0 || x[j] > x[top]) top = j;
            }
            if (top < 0) {
                // Only non-dive columns are fractional; fall back to rounding.
                try_incumbent(x, &basis, true);
                return;
            }
            if (batch.empty()) batch.push_back(top);
            for (int j : batch) lo[j] = 1.0;
            auto st = resolve();
            if (st == LpStatus::Infeasible && batch.size() > 1) {
                for (int j : batch) lo[j] = 0.0;
                lo[top] = 1.0;
                st = resolve();
            }
            if (st == LpStatus::Infeasible) {
                lo[top] = 0.0;
                hi[top] = 0.0;
                st = resolve();
            }
            if (st != LpStatus::Optimal) return;
        }
    }

    void split(const std::vector<double>& x, std::vector<double>& z, std::vector<double>& y) const {
        z.assign(x.begin(), x.begin() + model_.n_z());
        y.assign(x.begin() + model_.n_z(), x.end());
    }

    MipResult finish() {
        MipResult r;
        r.nodes_explored = nodes_explored_;
        r.solve_seconds = elapsed();
        r.objective = ub_;
        r.z = best_z_;
        r.y = best_y_;
        const bool incumbent = std::isfinite(ub_);
        double lb = open_.empty() && in_flight_.empty() ? pruned_min_ : open_min_locked();
        if (!std::isfinite(lb) && lb > 0) lb = ub_;  // nothing left open: LB meets UB
        lb = std::max(lb, reported_lb_);
        if (incumbent) lb = std::min(lb, ub_);
        r.best_bound = lb;
        r.rel_gap_achieved = relative_gap(ub_, lb);

        switch (stop_) {
            case Stop::Exhausted:
            case Stop::GapReached:
            case Stop::None:
                r.status = incumbent ? MipStatus::OptimalWithinGap : MipStatus::Infeasible;
                if (!incumbent) r.best_bound = kInf;
                if (incumbent && r.rel_gap_achieved > opt_.rel_gap) r.status = MipStatus::TimeLimit;
                break;
            case Stop::TimeLimit: r.status = MipStatus::TimeLimit; break;
            case Stop::Cancelled: r.status = MipStatus::Cancelled; break;
            case Stop::Unbounded:
                r.status = MipStatus::Unbounded;
                r.best_bound = -kInf;
                break;
        }
        return r;
    }

    const CompactModel& model_;
    SolverOptions opt_;
    const MipControl& ctl_;
    LpProblem lp_;
    SimplexEngine engine_;
    Clock::time_point start_;
    std::optional<Clock::time_point> deadline_;
    std::vector<int> int_cols_;
    std::vector<std::vector<std::array<int, 3>>> repair_;

    std::mutex mu_;
    std::condition_variable cv_;
    std::priority_queue<NodePtr, std::vector<NodePtr>, WorseFirst> open_;
    std::multiset<double> in_flight_;
    std::set<std::vector<std::uint8_t>> tried_;
    std::vector<int> dive_cols_;
    long next_dive_ = 0;
    double pruned_min_ = kInf;
    double reported_lb_ = -kInf;
    double ub_ = kInf;
    std::vector<double> best_z_, best_y_;
    long next_seq_ = 0;
    long nodes_explored_ = 0;
    std::atomic<bool> done_{false};
    Stop stop_ = Stop::None;
    std::exception_ptr error_;
};

}  // namespace detail

inline void validate_options(const SolverOptions& options) {
    if (!(options.rel_gap >= 0.0 && options.rel_gap < 1.0)) throw ArgumentError("rel_gap must lie in [0, 1)");
    if (options.worker_count < 1) throw ArgumentError("worker_count must be >= 1");
    if (options.time_limit && !(*options.time_limit >= 0.0)) throw ArgumentError("time_limit must be >= 0");
}

/// Branch-and-bound to the configured relative gap. With worker_count = 1
/// the run is deterministic, including the node event sequence.
inline MipResult solve_mip(const CompactModel& model, const SolverOptions& options, const MipControl& control = {}) {
    validate_options(options);
    detail::BranchAndBound bb(model, options, control);
    return bb.run();
}

}  // namespace scuc
