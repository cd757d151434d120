#pragma once

// Bounded-variable revised simplex.
//
// Every row i gets a logical variable r_i = a_i x whose bounds encode the
// row sense, so the working system is [A  -I] (x, r) = 0 with simple bounds
// on all n + m variables.
//
// When the starting basis is dual feasible (possibly after moving boxed
// nonbasics to their other bound) a dual simplex with dual steepest-edge
// pricing runs first; branch-and-bound children always qualify. The primal
// simplex then confirms optimality, or takes over when the dual phase does
// not apply or reports infeasibility. The all-logical basis is always
// available, which lets primal phase 1 start from any basis without
// artificial columns: phase 1 minimizes the sum of bound violations of the
// basic variables, phase 2 the true objective.
//
// The basis is held as a sparse LU (lu.hpp) plus a product-form eta file,
// refactored every kRefactorInterval updates.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "scuc/errors.hpp"
#include "scuc/lu.hpp"
#include "scuc/sparse.hpp"

namespace scuc {

struct LpProblem {
    std::vector<double> objective;  // minimize objective' x
    std::vector<double> col_lower;
    std::vector<double> col_upper;
    SparseMatrix matrix;  // rows x cols
    std::vector<Sense> sense;
    std::vector<double> rhs;

    int num_cols() const { return static_cast<int>(objective.size()); }
    int num_rows() const { return static_cast<int>(rhs.size()); }

    int add_column(double cost, double lo, double hi) {
        objective.push_back(cost);
        col_lower.push_back(lo);
        col_upper.push_back(hi);
        matrix.cols = num_cols();
        return num_cols() - 1;
    }
    int add_row(std::initializer_list<std::pair<int, double>> coefs, Sense s, double b) {
        const int r = num_rows();
        for (auto [c, v] : coefs) matrix.add(r, c, v);
        sense.push_back(s);
        rhs.push_back(b);
        matrix.rows = num_rows();
        return r;
    }

    /// Throws ArgumentError when the problem is malformed.
    void check() const {
        const auto n = objective.size();
        if (col_lower.size() != n || col_upper.size() != n || matrix.cols != static_cast<int>(n))
            throw ArgumentError("LpProblem: column arrays disagree in size");
        if (sense.size() != rhs.size() || matrix.rows != static_cast<int>(rhs.size()))
            throw ArgumentError("LpProblem: row arrays disagree in size");
        for (std::size_t j = 0; j < n; ++j) {
            if (!std::isfinite(objective[j])) throw ArgumentError("LpProblem: non-finite objective coefficient");
            if (col_lower[j] > col_upper[j]) throw ArgumentError("LpProblem: lower bound exceeds upper bound");
            if (std::isnan(col_lower[j]) || std::isnan(col_upper[j])) throw ArgumentError("LpProblem: NaN bound");
        }
        for (const auto& e : matrix.entries)
            if (e.row < 0 || e.row >= matrix.rows || e.col < 0 || e.col >= matrix.cols || !std::isfinite(e.value))
                throw ArgumentError("LpProblem: bad matrix entry");
        for (double b : rhs)
            if (!std::isfinite(b)) throw ArgumentError("LpProblem: non-finite right-hand side");
    }
};

enum class LpStatus { Optimal, Infeasible, Unbounded, Interrupted };

inline const char* to_string(LpStatus s) {
    switch (s) {
        case LpStatus::Optimal: return "Optimal";
        case LpStatus::Infeasible: return "Infeasible";
        case LpStatus::Unbounded: return "Unbounded";
        case LpStatus::Interrupted: return "Interrupted";
    }
    return "?";
}

enum class VarState : std::uint8_t { Basic, AtLower, AtUpper, AtZero };

/// Status of all n structural then m logical variables.
struct LpBasis {
    std::vector<VarState> state;
    bool empty() const { return state.empty(); }
};

struct LpSolution {
    LpStatus status = LpStatus::Infeasible;
    std::vector<double> x;
    double objective = 0.0;
    /// Row multipliers y with reduced costs c - A'y. Nonpositive on binding
    /// <= rows, nonnegative on >= rows.
    std::vector<double> duals;
    /// On Infeasible: row multipliers y with sup over the bound box of
    /// y'(A x - r) < 0, see farkas_certificate().
    std::vector<double> farkas;
    long iterations = 0;
    LpBasis basis;
};

struct LpControl {
    const LpBasis* warm_start = nullptr;
    /// Polled every few iterations; returning true ends the solve as Interrupted.
    std::function<bool()> should_stop;
};

struct Fixing {
    int col = 0;
    double value = 0.0;
};

struct LpTolerances {
    static constexpr double pivot = 1e-9;
    static constexpr double feasibility = 1e-7;
    static constexpr double optimality = 1e-7;
    static constexpr long degenerate_before_bland = 1000;
    static constexpr int iteration_cap_factor = 50;
    /// Bounds are widened by up to this much (relative to 1 + |bound|) while
    /// iterating, then restored before the final answer.
    static constexpr double perturbation = 1e-6;
};

/// Value of the Farkas certificate for a row multiplier vector:
///   sup_{l <= x <= u} (A'y)'x + sum_i sup_{r_i in range_i} (-y_i r_i).
/// A negative value proves the row system infeasible. Multiplier products
/// smaller than `zero` in magnitude are dropped so that roundoff on an
/// unbounded side does not produce +inf.
inline double farkas_certificate(const LpProblem& p, std::span<const double> y,
                                 std::span<const double> lower, std::span<const double> upper,
                                 double zero = LpTolerances::optimality) {
    std::vector<double> g(p.num_cols(), 0.0);
    for (const auto& e : p.matrix.entries) g[e.col] += e.value * y[e.row];
    auto sup = [zero](double coef, double lo, double hi) {
        if (std::abs(coef) <= zero) return 0.0;
        return coef > 0 ? coef * hi : coef * lo;
    };
    double total = 0.0;
    for (int j = 0; j < p.num_cols(); ++j) total += sup(g[j], lower[j], upper[j]);
    for (int i = 0; i < p.num_rows(); ++i) {
        const double lo = p.sense[i] == Sense::Le ? -std::numeric_limits<double>::infinity() : p.rhs[i];
        const double hi = p.sense[i] == Sense::Ge ? std::numeric_limits<double>::infinity() : p.rhs[i];
        total += sup(-y[i], lo, hi);
    }
    return total;
}

/// Column-oriented copy of an LpProblem that can be solved repeatedly with
/// different column bounds and warm starts. Immutable after construction, so
/// one engine may serve several threads.
class SimplexEngine {
   public:
    explicit SimplexEngine(const LpProblem& p)
        : n_(p.num_cols()), m_(p.num_rows()), a_(p.matrix), cost_(p.objective), orig_cost_(p.objective) {
        p.check();
        row_lo_.resize(m_);
        row_hi_.resize(m_);
        for (int i = 0; i < m_; ++i) {
            row_lo_[i] = p.sense[i] == Sense::Le ? -kInfinity : p.rhs[i];
            row_hi_[i] = p.sense[i] == Sense::Ge ? kInfinity : p.rhs[i];
        }
        scale();
        at_ = a_.transposed();
    }

    int num_cols() const { return n_; }
    int num_rows() const { return m_; }

    LpSolution solve(std::span<const double> lower, std::span<const double> upper, const LpControl& ctl = {}) const;

   private:
    friend class SimplexRun;
    static constexpr double kInfinity = std::numeric_limits<double>::infinity();

    /// Geometric-mean scaling of rows and columns by powers of two, so the
    /// scaled problem is exact and the unscaling loses nothing.
    void scale() {
        row_scale_.assign(m_, 1.0);
        col_scale_.assign(n_, 1.0);
        auto pow2 = [](double v) { return std::exp2(std::round(std::log2(v))); };
        for (int pass = 0; pass < 4; ++pass) {
            std::vector<double> lo(m_, kInfinity), hi(m_, 0.0);
            for (int j = 0; j < n_; ++j)
                for (int k = a_.start[j]; k < a_.start[j + 1]; ++k) {
                    const double v = std::abs(a_.value[k]) * col_scale_[j] * row_scale_[a_.index[k]];
                    if (v == 0.0) continue;
                    lo[a_.index[k]] = std::min(lo[a_.index[k]], v);
                    hi[a_.index[k]] = std::max(hi[a_.index[k]], v);
                }
            for (int i = 0; i < m_; ++i)
                if (hi[i] > 0.0) row_scale_[i] *= pow2(1.0 / std::sqrt(lo[i] * hi[i]));
            for (int j = 0; j < n_; ++j) {
                double clo = kInfinity, chi = 0.0;
                for (int k = a_.start[j]; k < a_.start[j + 1]; ++k) {
                    const double v = std::abs(a_.value[k]) * col_scale_[j] * row_scale_[a_.index[k]];
                    if (v == 0.0) continue;
                    clo = std::min(clo, v);
                    chi = std::max(chi, v);
                }
                if (chi > 0.0) col_scale_[j] *= pow2(1.0 / std::sqrt(clo * chi));
            }
        }
        for (int j = 0; j < n_; ++j) {
            cost_[j] *= col_scale_[j];
            for (int k = a_.start[j]; k < a_.start[j + 1]; ++k) a_.value[k] *= col_scale_[j] * row_scale_[a_.index[k]];
        }
        for (int i = 0; i < m_; ++i) {
            row_lo_[i] *= row_scale_[i];
            row_hi_[i] *= row_scale_[i];
        }
    }

    int n_, m_;
    CscMatrix a_;
    CscMatrix at_;  // a_ by rows
    std::vector<double> cost_;
    std::vector<double> row_lo_, row_hi_;
    std::vector<double> orig_cost_;
    std::vector<double> row_scale_, col_scale_;
};

class SimplexRun {
   public:
    static constexpr int kRefactorInterval = 64;

    SimplexRun(const SimplexEngine& e, std::span<const double> lower, std::span<const double> upper,
               const LpControl& ctl)
        : e_(e), ctl_(ctl), n_(e.n_), m_(e.m_), total_(e.n_ + e.m_) {
        lo_.resize(total_);
        hi_.resize(total_);
        cost_.assign(total_, 0.0);
        for (int j = 0; j < n_; ++j) {
            lo_[j] = lower[j];
            hi_[j] = upper[j];
            cost_[j] = e.cost_[j];
        }
        for (int i = 0; i < m_; ++i) {
            lo_[n_ + i] = e.row_lo_[i];
            hi_[n_ + i] = e.row_hi_[i];
        }
        x_.assign(total_, 0.0);
        state_.assign(total_, VarState::AtLower);
        head_.assign(m_, -1);
    }

    LpSolution run() {
        LpSolution sol;
        for (int j = 0; j < total_; ++j)
            if (lo_[j] > hi_[j]) {
                sol.status = LpStatus::Infeasible;
                sol.x.assign(n_, 0.0);
                return sol;
            }
        if (m_ == 0) return solve_unconstrained();

        if (!(ctl_.warm_start && install_basis(*ctl_.warm_start))) slack_basis();
        if (!refactor()) recover();
        compute_basic_values();

        const long cap = static_cast<long>(LpTolerances::iteration_cap_factor) * (m_ + n_);
        std::vector<double> cb(m_), y(m_), alpha(m_);
        long iter = 0;
        switch (dual_phase(iter, cap)) {
            case DualOutcome::Interrupted: return finish(LpStatus::Interrupted, iter, y);
            case DualOutcome::Optimal: break;
            case DualOutcome::Fallback: start_perturbation(); break;
        }

        long degenerate = 0;
        bool bland = false;
        bool fresh = true;
        for (;; ++iter) {
            if (iter > cap)
                throw NumericalError("simplex: iteration cap of " + std::to_string(cap) + " reached");
            if (ctl_.should_stop && iter % 8 == 0 && ctl_.should_stop()) return finish(LpStatus::Interrupted, iter, y);
            if (updates_ >= kRefactorInterval) {
                if (!refactor()) recover();
                compute_basic_values();
                fresh = true;
            }

            if (perturbed_) absorb_drift();
            const bool phase1 = set_phase_costs(cb);
            btran(cb, y);

            int q = -1;
            double dq = 0.0;
            price(phase1, y, bland, q, dq);
            if (q < 0) {
                if (!fresh) {
                    if (!refactor()) recover();
                    compute_basic_values();
                    fresh = true;
                    continue;
                }
                if (perturbed_) {
                    restore_bounds();
                    continue;
                }
                return finish(phase1 ? LpStatus::Infeasible : LpStatus::Optimal, iter, y);
            }
            const int dir = dq < 0 ? 1 : -1;
            column(q, alpha);
            ftran(alpha);

            const Step step = bland ? ratio_bland(q, dir, alpha, phase1) : ratio_harris(q, dir, alpha, phase1);
            if (step.unbounded) {
                if (!phase1 && perturbed_) {
                    restore_bounds();
                    fresh = true;
                    continue;
                }
                if (!phase1) return finish(LpStatus::Unbounded, iter, y);
                if (fresh) throw NumericalError("simplex: unbounded ray in phase 1");
                if (!refactor()) recover();
                compute_basic_values();
                fresh = true;
                continue;
            }

            apply(q, dir, step, alpha);
            fresh = false;
            if (step.length <= 1e-12) {
                if (++degenerate >= LpTolerances::degenerate_before_bland) bland = true;
            } else {
                degenerate = 0;
                bland = false;
            }
        }
    }

   private:
    static constexpr double kInf = std::numeric_limits<double>::infinity();

    enum class DualOutcome { Optimal, Fallback, Interrupted };

    /// Reduced costs c_j - y'a_j of every nonbasic variable for the true costs.
    void compute_duals() {
        std::vector<double> y(m_);
        for (int r = 0; r < m_; ++r) y[r] = cost_[head_[r]];
        btran_vec(y);
        d_.assign(total_, 0.0);
        for (int j = 0; j < total_; ++j)
            if (state_[j] != VarState::Basic) d_[j] = cost_[j] - dot_column(j, y);
    }

    double dot_column(int j, const std::vector<double>& y) const {
        double s = 0.0;
        for_column(j, [&](int i, double v) { s += y[i] * v; });
        return s;
    }

    /// Moves boxed nonbasics to the bound their reduced cost prefers.
    /// Returns false if some other nonbasic is dual infeasible.
    bool make_dual_feasible() {
        const double tol = LpTolerances::optimality;
        bool moved = false;
        for (int j = 0; j < total_; ++j) {
            const VarState s = state_[j];
            if (s == VarState::Basic || lo_[j] == hi_[j]) continue;
            const double d = d_[j];
            if (s == VarState::AtLower && d < -tol) {
                if (!std::isfinite(hi_[j])) return false;
                state_[j] = VarState::AtUpper;
                x_[j] = hi_[j];
                moved = true;
            } else if (s == VarState::AtUpper && d > tol) {
                if (!std::isfinite(lo_[j])) return false;
                state_[j] = VarState::AtLower;
                x_[j] = lo_[j];
                moved = true;
            } else if (s == VarState::AtZero && std::abs(d) > tol) {
                return false;
            }
        }
        if (moved) compute_basic_values();
        return true;
    }

    /// Dual simplex from a dual feasible basis. Optimal means primal and
    /// dual feasible within tolerance; Fallback hands over to the primal
    /// simplex (not dual feasible, a suspected infeasibility, or numerical
    /// trouble).
    DualOutcome dual_phase(long& iter, long cap) {
        compute_duals();
        if (!make_dual_feasible()) return DualOutcome::Fallback;
        std::vector<double> w(m_, 1.0), viol(m_);
        std::vector<double> rho(m_), col(m_), tau(m_), row(total_, 0.0);
        std::vector<int> touched;
        std::vector<char> mark(total_, 0);
        const double ptol = LpTolerances::feasibility;
        const double dtol = LpTolerances::optimality;
        bool fresh = true;
        // Signed bound violation of the basic variable in each row.
        auto violation = [&](int i) {
            const int j = head_[i];
            if (x_[j] < lo_[j] - ptol) return x_[j] - lo_[j];
            if (x_[j] > hi_[j] + ptol) return x_[j] - hi_[j];
            return 0.0;
        };
        auto all_violations = [&] {
            for (int i = 0; i < m_; ++i) viol[i] = violation(i);
        };
        all_violations();

        for (;; ++iter) {
            if (iter > cap) return DualOutcome::Fallback;
            if (ctl_.should_stop && iter % 8 == 0 && ctl_.should_stop()) return DualOutcome::Interrupted;
            if (updates_ >= kRefactorInterval) {
                if (!refactor()) {
                    recover();
                    compute_basic_values();
                    return DualOutcome::Fallback;
                }
                compute_basic_values();
                compute_duals();
                if (!make_dual_feasible()) return DualOutcome::Fallback;
                all_violations();
                fresh = true;
            }

            // Leaving row: largest infeasibility^2 / weight.
            int r = -1;
            double best = 0.0, delta = 0.0;
            for (int i = 0; i < m_; ++i) {
                const double v = viol[i];
                if (v == 0.0) continue;
                const double score = v * v / w[i];
                if (score > best) {
                    best = score;
                    r = i;
                    delta = v;
                }
            }
            if (r < 0) return DualOutcome::Optimal;
            const int p = head_[r];

            // rho = row r of B^-1; the pivot row of the tableau over nonbasics.
            std::fill(rho.begin(), rho.end(), 0.0);
            rho[r] = 1.0;
            btran_vec(rho);
            for (int j : touched) {
                row[j] = 0.0;
                mark[j] = 0;
            }
            touched.clear();
            auto touch = [&](int j, double v) {
                if (!mark[j]) {
                    mark[j] = 1;
                    touched.push_back(j);
                }
                row[j] += v;
            };
            for (int i = 0; i < m_; ++i) {
                const double ri = rho[i];
                if (ri == 0.0) continue;
                for (int k = e_.at_.start[i]; k < e_.at_.start[i + 1]; ++k) touch(e_.at_.index[k], ri * e_.at_.value[k]);
                touch(n_ + i, -ri);
            }

            // Harris two-pass ratio test on the reduced costs.
            const double sgn = delta < 0 ? -1.0 : 1.0;
            auto eligible = [&](int j, double& ab) {
                const VarState s = state_[j];
                if (s == VarState::Basic || lo_[j] == hi_[j]) return false;
                ab = sgn * row[j];
                if (std::abs(ab) < LpTolerances::pivot) return false;
                if (s == VarState::AtLower) return ab > 0;
                if (s == VarState::AtUpper) return ab < 0;
                return true;
            };
            double bound_t = kInf;
            for (int j : touched) {
                double ab;
                if (!eligible(j, ab)) continue;
                bound_t = std::min(bound_t, (std::abs(d_[j]) + dtol) / std::abs(ab));
            }
            if (!std::isfinite(bound_t)) return DualOutcome::Fallback;  // dual unbounded
            int q = -1;
            double best_pivot = 0.0;
            for (int j : touched) {
                double ab;
                if (!eligible(j, ab)) continue;
                if (std::abs(d_[j]) / std::abs(ab) <= bound_t && std::abs(ab) > best_pivot) {
                    best_pivot = std::abs(ab);
                    q = j;
                }
            }
            const double arq_row = row[q];

            column(q, col);
            ftran(col);
            const double arq = col[r];
            if (std::abs(arq - arq_row) > 1e-7 * (1.0 + std::abs(arq)) || std::abs(arq) < LpTolerances::pivot) {
                if (fresh) return DualOutcome::Fallback;
                if (!refactor()) {
                    recover();
                    compute_basic_values();
                    return DualOutcome::Fallback;
                }
                compute_basic_values();
                compute_duals();
                if (!make_dual_feasible()) return DualOutcome::Fallback;
                all_violations();
                fresh = true;
                continue;
            }
            tau = rho;
            ftran(tau);

            // Primal step: the leaving variable lands on its violated bound.
            const double target = delta < 0 ? lo_[p] : hi_[p];
            const double theta_p = (x_[p] - target) / arq;
            for (int i = 0; i < m_; ++i)
                if (col[i] != 0.0) x_[head_[i]] -= theta_p * col[i];
            x_[q] += theta_p;

            // Dual step.
            const double t = std::abs(d_[q]) / std::abs(sgn * arq_row);
            const double theta_d = delta < 0 ? -t : t;
            for (int j : touched)
                if (state_[j] != VarState::Basic) d_[j] -= theta_d * row[j];
            d_[q] = 0.0;
            d_[p] = -theta_d;

            // Dual steepest-edge weights.
            const double wr = w[r];
            for (int i = 0; i < m_; ++i) {
                if (i == r || col[i] == 0.0) continue;
                const double ratio = col[i] / arq;
                w[i] = std::max(w[i] + ratio * (ratio * wr - 2.0 * tau[i]), 1e-8);
            }
            w[r] = std::max(wr / (arq * arq), 1e-8);

            x_[p] = target;
            state_[p] = target == lo_[p] ? VarState::AtLower : VarState::AtUpper;
            head_[r] = q;
            state_[q] = VarState::Basic;
            for (int i = 0; i < m_; ++i)
                if (col[i] != 0.0) viol[i] = violation(i);
            viol[r] = violation(r);
            push_eta(r, col);
            fresh = false;
        }
    }

    void start_perturbation() {
        perturb_bounds();
        for (int j = 0; j < total_; ++j)
            if (state_[j] != VarState::Basic) place_nonbasic(j, state_[j]);
        compute_basic_values();
    }

    struct Eta {
        int row;
        double pivot;
        std::vector<int> index;
        std::vector<double> value;
    };
    struct Step {
        bool unbounded = false;
        bool flip = false;
        int row = -1;
        double length = 0.0;
        double bound = 0.0;
    };

    /// Widens every finite, non-fixed bound by a small deterministic amount
    /// so that degenerate vertices split apart.
    void perturb_bounds() {
        orig_lo_ = lo_;
        orig_hi_ = hi_;
        std::uint64_t h = 0x9e3779b97f4a7c15ull;
        auto next = [&h] {
            h ^= h >> 33;
            h *= 0xff51afd7ed558ccdull;
            h ^= h >> 33;
            h += 0x9e3779b97f4a7c15ull;
            return 0.5 + static_cast<double>(h >> 11) * 0x1.0p-53;
        };
        for (int j = 0; j < total_; ++j) {
            if (lo_[j] == hi_[j]) continue;
            if (std::isfinite(lo_[j])) lo_[j] -= LpTolerances::perturbation * (1.0 + std::abs(lo_[j])) * next();
            if (std::isfinite(hi_[j])) hi_[j] += LpTolerances::perturbation * (1.0 + std::abs(hi_[j])) * next();
        }
        perturbed_ = true;
    }

    /// While bounds are perturbed anyway, a basic value that drifted just past
    /// its (perturbed) bound gets the bound moved to it instead of a trip
    /// through phase 1. Only done when every violation is that small.
    void absorb_drift() {
        auto limit = [](double b) { return LpTolerances::perturbation * (1.0 + std::abs(b)); };
        bool any = false;
        for (int r = 0; r < m_; ++r) {
            const int j = head_[r];
            const double below = lo_[j] - x_[j], above = x_[j] - hi_[j];
            if (below > LpTolerances::feasibility) {
                if (below > limit(lo_[j])) return;
                any = true;
            } else if (above > LpTolerances::feasibility) {
                if (above > limit(hi_[j])) return;
                any = true;
            }
        }
        if (!any) return;
        for (int r = 0; r < m_; ++r) {
            const int j = head_[r];
            if (x_[j] < lo_[j]) lo_[j] = x_[j];
            if (x_[j] > hi_[j]) hi_[j] = x_[j];
        }
    }

    /// Puts the true bounds back, snaps nonbasic values onto them and
    /// recomputes the basics; iteration then continues from this basis.
    void restore_bounds() {
        lo_ = orig_lo_;
        hi_ = orig_hi_;
        perturbed_ = false;
        for (int j = 0; j < total_; ++j)
            if (state_[j] != VarState::Basic) place_nonbasic(j, state_[j]);
        if (!refactor()) recover();
        compute_basic_values();
    }

    void place_nonbasic(int j, VarState preferred) {
        const bool has_lo = std::isfinite(lo_[j]);
        const bool has_hi = std::isfinite(hi_[j]);
        VarState s;
        if (preferred == VarState::AtUpper && has_hi)
            s = VarState::AtUpper;
        else if (has_lo)
            s = VarState::AtLower;
        else if (has_hi)
            s = VarState::AtUpper;
        else
            s = VarState::AtZero;
        state_[j] = s;
        x_[j] = s == VarState::AtLower ? lo_[j] : s == VarState::AtUpper ? hi_[j] : 0.0;
    }

    void slack_basis() {
        for (int j = 0; j < n_; ++j) place_nonbasic(j, VarState::AtLower);
        for (int i = 0; i < m_; ++i) {
            head_[i] = n_ + i;
            state_[n_ + i] = VarState::Basic;
        }
    }

    bool install_basis(const LpBasis& b) {
        if (static_cast<int>(b.state.size()) != total_) return false;
        int basic = 0;
        for (auto s : b.state) basic += s == VarState::Basic;
        if (basic != m_) return false;
        int r = 0;
        for (int j = 0; j < total_; ++j) {
            if (b.state[j] == VarState::Basic) {
                head_[r++] = j;
                state_[j] = VarState::Basic;
            } else {
                place_nonbasic(j, b.state[j]);
            }
        }
        return true;
    }

    /// After a failed factorization, swaps the logicals of the unpivoted rows
    /// in for the singular basis columns; falls back to the slack basis.
    void recover() {
        for (int attempt = 0; attempt < 3; ++attempt) {
            const auto cols = lu_.singular_positions();
            const auto rows = lu_.unpivoted_rows();
            for (std::size_t k = 0; k < cols.size() && k < rows.size(); ++k) {
                const int pos = cols[k];
                place_nonbasic(head_[pos], VarState::AtLower);
                head_[pos] = n_ + rows[k];
                state_[n_ + rows[k]] = VarState::Basic;
            }
            if (refactor()) return;
        }
        slack_basis();
        if (!refactor()) throw NumericalError("simplex: slack basis failed to factor");
    }

    template <typename F>
    void for_column(int j, F&& f) const {
        if (j < n_) {
            for (int k = e_.a_.start[j]; k < e_.a_.start[j + 1]; ++k) f(e_.a_.index[k], e_.a_.value[k]);
        } else {
            f(j - n_, -1.0);
        }
    }

    void column(int j, std::vector<double>& out) const {
        std::fill(out.begin(), out.end(), 0.0);
        for_column(j, [&](int i, double v) { out[i] = v; });
    }

    bool refactor() {
        etas_.clear();
        updates_ = 0;
        return lu_.factor(m_, [&](int pos, const std::function<void(int, double)>& emit) {
            for_column(head_[pos], emit);
        });
    }

    void ftran(std::vector<double>& v) const {
        lu_.ftran(v);
        for (const auto& eta : etas_) {
            const double xr = v[eta.row] / eta.pivot;
            if (xr != 0.0)
                for (std::size_t k = 0; k < eta.index.size(); ++k) v[eta.index[k]] -= eta.value[k] * xr;
            v[eta.row] = xr;
        }
    }

    void btran(const std::vector<double>& c, std::vector<double>& y) const {
        y = c;
        btran_vec(y);
    }

    void btran_vec(std::vector<double>& y) const {
        for (auto it = etas_.rbegin(); it != etas_.rend(); ++it) {
            double s = y[it->row];
            for (std::size_t k = 0; k < it->index.size(); ++k) s -= y[it->index[k]] * it->value[k];
            y[it->row] = s / it->pivot;
        }
        lu_.btran(y);
    }

    void compute_basic_values() {
        std::vector<double> rhs(m_, 0.0);
        for (int j = 0; j < total_; ++j) {
            if (state_[j] == VarState::Basic || x_[j] == 0.0) continue;
            const double xj = x_[j];
            for_column(j, [&](int i, double v) { rhs[i] -= v * xj; });
        }
        ftran(rhs);
        for (int r = 0; r < m_; ++r) x_[head_[r]] = rhs[r];
    }

    /// Fills basic costs for the current phase; returns true in phase 1.
    bool set_phase_costs(std::vector<double>& cb) const {
        bool infeasible = false;
        for (int r = 0; r < m_; ++r) {
            const int j = head_[r];
            if (x_[j] < lo_[j] - LpTolerances::feasibility) {
                cb[r] = -1.0;
                infeasible = true;
            } else if (x_[j] > hi_[j] + LpTolerances::feasibility) {
                cb[r] = 1.0;
                infeasible = true;
            } else {
                cb[r] = 0.0;
            }
        }
        if (!infeasible)
            for (int r = 0; r < m_; ++r) cb[r] = cost_[head_[r]];
        return infeasible;
    }

    double reduced_cost(int j, bool phase1, const std::vector<double>& y) const {
        double d = phase1 ? 0.0 : cost_[j];
        for_column(j, [&](int i, double v) { d -= y[i] * v; });
        return d;
    }

    void price(bool phase1, const std::vector<double>& y, bool bland, int& q, double& dq) const {
        double best = 0.0;
        for (int j = 0; j < total_; ++j) {
            const VarState s = state_[j];
            if (s == VarState::Basic || lo_[j] == hi_[j]) continue;
            const double d = reduced_cost(j, phase1, y);
            bool eligible = false;
            switch (s) {
                case VarState::AtLower: eligible = d < -LpTolerances::optimality; break;
                case VarState::AtUpper: eligible = d > LpTolerances::optimality; break;
                case VarState::AtZero: eligible = std::abs(d) > LpTolerances::optimality; break;
                case VarState::Basic: break;
            }
            if (!eligible) continue;
            if (bland) {
                q = j;
                dq = d;
                return;
            }
            if (std::abs(d) > best) {
                best = std::abs(d);
                q = j;
                dq = d;
            }
        }
    }

    /// Bound that basic row r runs into when moving with rate delta, or none.
    bool blocking_bound(int r, double delta, bool phase1, double& bound) const {
        const int j = head_[r];
        const double xv = x_[j];
        if (delta < 0) {
            if (phase1 && xv > hi_[j] + LpTolerances::feasibility) {
                bound = hi_[j];
                return true;
            }
            if (xv >= lo_[j] - LpTolerances::feasibility && std::isfinite(lo_[j])) {
                bound = lo_[j];
                return true;
            }
        } else {
            if (phase1 && xv < lo_[j] - LpTolerances::feasibility) {
                bound = lo_[j];
                return true;
            }
            if (xv <= hi_[j] + LpTolerances::feasibility && std::isfinite(hi_[j])) {
                bound = hi_[j];
                return true;
            }
        }
        return false;
    }

    Step ratio_harris(int q, int dir, const std::vector<double>& alpha, bool phase1) const {
        double relaxed_min = kInf;
        for (int r = 0; r < m_; ++r) {
            if (std::abs(alpha[r]) < LpTolerances::pivot) continue;
            const double delta = -dir * alpha[r];
            double bound;
            if (!blocking_bound(r, delta, phase1, bound)) continue;
            const double gap = delta < 0 ? x_[head_[r]] - bound : bound - x_[head_[r]];
            relaxed_min = std::min(relaxed_min, (gap + LpTolerances::feasibility) / std::abs(delta));
        }
        Step s;
        const double range = hi_[q] - lo_[q];
        if (std::isfinite(range) && range <= relaxed_min) {
            s.flip = true;
            s.length = range;
            return s;
        }
        if (!std::isfinite(relaxed_min)) {
            s.unbounded = true;
            return s;
        }
        double best_pivot = 0.0;
        for (int r = 0; r < m_; ++r) {
            if (std::abs(alpha[r]) < LpTolerances::pivot) continue;
            const double delta = -dir * alpha[r];
            double bound;
            if (!blocking_bound(r, delta, phase1, bound)) continue;
            const double gap = delta < 0 ? x_[head_[r]] - bound : bound - x_[head_[r]];
            const double exact = std::max(0.0, gap / std::abs(delta));
            if (exact <= relaxed_min && std::abs(alpha[r]) > best_pivot) {
                best_pivot = std::abs(alpha[r]);
                s.row = r;
                s.length = exact;
                s.bound = bound;
            }
        }
        return s;
    }

    Step ratio_bland(int q, int dir, const std::vector<double>& alpha, bool phase1) const {
        Step s;
        double best = kInf;
        for (int r = 0; r < m_; ++r) {
            if (std::abs(alpha[r]) < LpTolerances::pivot) continue;
            const double delta = -dir * alpha[r];
            double bound;
            if (!blocking_bound(r, delta, phase1, bound)) continue;
            const double gap = delta < 0 ? x_[head_[r]] - bound : bound - x_[head_[r]];
            const double exact = std::max(0.0, gap / std::abs(delta));
            if (exact < best - 1e-12 || (std::abs(exact - best) <= 1e-12 && s.row >= 0 && head_[r] < head_[s.row])) {
                best = exact;
                s.row = r;
                s.bound = bound;
            }
        }
        const double range = hi_[q] - lo_[q];
        if (std::isfinite(range) && range <= best) {
            s = Step{};
            s.flip = true;
            s.length = range;
            return s;
        }
        if (s.row < 0) {
            s.unbounded = true;
            return s;
        }
        s.length = best;
        return s;
    }

    void apply(int q, int dir, const Step& s, const std::vector<double>& alpha) {
        const double move = dir * s.length;
        if (move != 0.0)
            for (int r = 0; r < m_; ++r)
                if (alpha[r] != 0.0) x_[head_[r]] -= move * alpha[r];
        if (s.flip) {
            state_[q] = dir > 0 ? VarState::AtUpper : VarState::AtLower;
            x_[q] = dir > 0 ? hi_[q] : lo_[q];
            return;
        }
        x_[q] += move;
        const int leaving = head_[s.row];
        x_[leaving] = s.bound;
        state_[leaving] = s.bound == lo_[leaving] ? VarState::AtLower : VarState::AtUpper;
        head_[s.row] = q;
        state_[q] = VarState::Basic;

        push_eta(s.row, alpha);
    }

    void push_eta(int row, const std::vector<double>& alpha) {
        Eta eta{row, alpha[row], {}, {}};
        for (int r = 0; r < m_; ++r)
            if (r != row && std::abs(alpha[r]) > 1e-14) {
                eta.index.push_back(r);
                eta.value.push_back(alpha[r]);
            }
        etas_.push_back(std::move(eta));
        ++updates_;
    }

    LpSolution finish(LpStatus status, long iterations, const std::vector<double>& y) const {
        LpSolution sol;
        sol.status = status;
        sol.iterations = iterations;
        sol.x.assign(x_.begin(), x_.begin() + n_);
        sol.objective = 0.0;
        for (int j = 0; j < n_; ++j) sol.objective += cost_[j] * x_[j];
        if (status == LpStatus::Optimal) sol.duals = y;
        if (status == LpStatus::Infeasible) sol.farkas = y;
        sol.basis.state = state_;
        return sol;
    }

    LpSolution solve_unconstrained() {
        LpSolution sol;
        sol.status = LpStatus::Optimal;
        sol.x.assign(n_, 0.0);
        for (int j = 0; j < n_; ++j) {
            const double c = cost_[j];
            double v;
            if (c > 0)
                v = lo_[j];
            else if (c < 0)
                v = hi_[j];
            else
                v = std::isfinite(lo_[j]) ? lo_[j] : std::isfinite(hi_[j]) ? hi_[j] : 0.0;
            if (!std::isfinite(v)) {
                sol.status = LpStatus::Unbounded;
                v = 0.0;
            }
            sol.x[j] = v;
            sol.objective += c * v;
            state_[j] = v == lo_[j] ? VarState::AtLower : v == hi_[j] ? VarState::AtUpper : VarState::AtZero;
        }
        sol.basis.state = state_;
        return sol;
    }

    const SimplexEngine& e_;
    const LpControl& ctl_;
    int n_, m_, total_;
    std::vector<double> lo_, hi_, cost_, x_, d_;
    std::vector<double> orig_lo_, orig_hi_;
    bool perturbed_ = false;
    std::vector<VarState> state_;
    std::vector<int> head_;
    SparseLu lu_;
    std::vector<Eta> etas_;
    int updates_ = 0;
};

inline LpSolution SimplexEngine::solve(std::span<const double> lower, std::span<const double> upper,
                                       const LpControl& ctl) const {
    if (static_cast<int>(lower.size()) != n_ || static_cast<int>(upper.size()) != n_)
        throw DimensionError("simplex: bound vectors do not match the column count");
    std::vector<double> lo(n_), hi(n_);
    for (int j = 0; j < n_; ++j) {
        lo[j] = lower[j] / col_scale_[j];
        hi[j] = upper[j] / col_scale_[j];
    }
    SimplexRun run(*this, lo, hi, ctl);
    LpSolution sol = run.run();
    sol.objective = 0.0;
    for (int j = 0; j < n_; ++j) {
        sol.x[j] *= col_scale_[j];
        sol.objective += orig_cost_[j] * sol.x[j];
    }
    for (std::size_t i = 0; i < sol.duals.size(); ++i) sol.duals[i] *= row_scale_[i];
    for (std::size_t i = 0; i < sol.farkas.size(); ++i) sol.farkas[i] *= row_scale_[i];
    return sol;
}

/// Solves min c'x over the rows and column bounds of `p`.
inline LpSolution solve_lp(const LpProblem& p, const LpControl& ctl = {}) {
    SimplexEngine engine(p);
    return engine.solve(p.col_lower, p.col_upper, ctl);
}

/// Bounds of `p` pinched to the fixed values: a fixing outside the
/// original bounds leaves an empty box and the result is Infeasible.
inline std::pair<std::vector<double>, std::vector<double>> pinched_bounds(const LpProblem& p,
                                                                          std::span<const Fixing> fixings) {
    auto lo = p.col_lower;
    auto hi = p.col_upper;
    for (const auto& f : fixings) {
        if (f.col < 0 || f.col >= p.num_cols())
            throw ArgumentError("fixing refers to column " + std::to_string(f.col) + " outside the problem");
        lo[f.col] = std::max(lo[f.col], f.value);
        hi[f.col] = std::min(hi[f.col], f.value);
    }
    return {std::move(lo), std::move(hi)};
}

inline LpSolution solve_lp_fixed(const LpProblem& p, std::span<const Fixing> fixings, const LpControl& ctl = {}) {
    SimplexEngine engine(p);
    auto [lo, hi] = pinched_bounds(p, fixings);
    return engine.solve(lo, hi, ctl);
}

}  // namespace scuc
