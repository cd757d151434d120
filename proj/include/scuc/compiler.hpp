#pragma once

// Lowers a UcInstance into the compact block MILP
//
//   min  c'z + b'y
//   s.t. F z <= f            commitment logic, min up/down, initial forcing
//        H y <= h            line flow limits
//        A z + B y <= g      capacity, segment, ramp coupling
//        I_u y = d           nodal balance
//        z binary
//
// Equality rows (logic, capacity definition, balance, initial forcing) are
// stored as equalities; every other row is a <= row.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "scuc/errors.hpp"
#include "scuc/instance.hpp"
#include "scuc/sparse.hpp"

namespace scuc {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

enum class Family { U, V, W, P, PSeg, Theta, Other };

struct VariableKey {
    Family family = Family::Other;
    int a = -1;  // generator, or bus for Theta
    int t = -1;
    int k = -1;  // segment

    friend bool operator==(const VariableKey&, const VariableKey&) = default;
};

/// Generator-level facts the branch-and-bound rounding heuristic needs to
/// repair startup/shutdown values from a rounded on/off pattern.
struct CommitmentLayout {
    int generators = 0;
    int periods = 0;
    std::vector<int> initial_on;  // per generator, 0 or 1
};

/// Bijective map between named variables and column indices.
/// Columns [0, n_z) are the binary block z = (u, v, w); columns [n_z, n) are
/// the continuous block y = (p, p_seg, theta). Each family is contiguous.
class VariableIndex {
   public:
    VariableIndex() = default;

    /// Layout for a compiled UC model. `segments[g]` is K for generator g;
    /// `theta_buses` lists the non-reference buses in order.
    VariableIndex(int generators, int periods, const std::vector<int>& segments, const std::vector<int>& theta_buses)
        : generators_(generators), periods_(periods), theta_buses_(theta_buses) {
        const int gt = generators * periods;
        seg_offset_.resize(generators + 1, 0);
        for (int g = 0; g < generators; ++g) seg_offset_[g + 1] = seg_offset_[g] + segments[g] * periods;
        u0_ = 0;
        v0_ = gt;
        w0_ = 2 * gt;
        n_z_ = 3 * gt;
        p0_ = n_z_;
        seg0_ = p0_ + gt;
        theta0_ = seg0_ + seg_offset_[generators];
        n_ = theta0_ + static_cast<int>(theta_buses.size()) * periods;
        theta_slot_.assign(theta_buses.empty() ? 0 : *std::max_element(theta_buses.begin(), theta_buses.end()) + 1, -1);
        for (std::size_t i = 0; i < theta_buses.size(); ++i) theta_slot_[theta_buses[i]] = static_cast<int>(i);
        build_names();
    }

    /// Generic index from column names (as read from an MPS file). Names that
    /// follow the compiled naming scheme are decoded back into keys.
    static VariableIndex from_names(std::vector<std::string> names, int n_binary) {
        VariableIndex ix;
        ix.n_ = static_cast<int>(names.size());
        ix.n_z_ = n_binary;
        ix.names_ = std::move(names);
        ix.keys_.reserve(ix.names_.size());
        for (const auto& s : ix.names_) ix.keys_.push_back(decode(s));
        ix.build_lookup();
        return ix;
    }

    int size() const { return n_; }
    int n_binary() const { return n_z_; }
    int n_continuous() const { return n_ - n_z_; }
    bool is_binary(int col) const { return col < n_z_; }
    bool has_uc_layout() const { return generators_ > 0; }
    int generators() const { return generators_; }
    int periods() const { return periods_; }
    int segments(int g) const { return (seg_offset_[g + 1] - seg_offset_[g]) / periods_; }

    int u(int g, int t) const { return u0_ + g * periods_ + t; }
    int v(int g, int t) const { return v0_ + g * periods_ + t; }
    int w(int g, int t) const { return w0_ + g * periods_ + t; }
    int p(int g, int t) const { return p0_ + g * periods_ + t; }
    int pseg(int g, int t, int k) const { return seg0_ + seg_offset_[g] + t * segments(g) + k; }
    /// Column of theta[b,t], or -1 for the reference bus (angle fixed at 0).
    int theta(int bus, int t) const {
        if (bus < 0 || bus >= static_cast<int>(theta_slot_.size()) || theta_slot_[bus] < 0) return -1;
        return theta0_ + theta_slot_[bus] * periods_ + t;
    }

    const VariableKey& key(int col) const { return keys_.at(col); }
    const std::string& name(int col) const { return names_.at(col); }
    const std::vector<std::string>& names() const { return names_; }
    std::optional<int> find(const std::string& n) const {
        auto it = lookup_.find(n);
        if (it == lookup_.end()) return std::nullopt;
        return it->second;
    }
    std::optional<int> find(const VariableKey& k) const { return find(encode(k)); }

    static std::string encode(const VariableKey& k) {
        switch (k.family) {
            case Family::U: return "u_" + std::to_string(k.a) + "_" + std::to_string(k.t);
            case Family::V: return "v_" + std::to_string(k.a) + "_" + std::to_string(k.t);
            case Family::W: return "w_" + std::to_string(k.a) + "_" + std::to_string(k.t);
            case Family::P: return "p_" + std::to_string(k.a) + "_" + std::to_string(k.t);
            case Family::PSeg:
                return "pseg_" + std::to_string(k.a) + "_" + std::to_string(k.t) + "_" + std::to_string(k.k);
            case Family::Theta: return "theta_" + std::to_string(k.a) + "_" + std::to_string(k.t);
            case Family::Other: break;
        }
        return {};
    }

    static VariableKey decode(std::string_view s) {
        auto split = [](std::string_view rest, int want, int* out) {
            for (int i = 0; i < want; ++i) {
                if (rest.empty()) return false;
                auto us = rest.find('_');
                auto piece = rest.substr(0, us);
                auto [ptr, ec] = std::from_chars(piece.data(), piece.data() + piece.size(), out[i]);
                if (ec != std::errc{} || ptr != piece.data() + piece.size()) return false;
                rest = us == std::string_view::npos ? std::string_view{} : rest.substr(us + 1);
                if (i + 1 == want && !rest.empty()) return false;
                if (i + 1 < want && us == std::string_view::npos) return false;
            }
            return true;
        };
        const std::pair<std::string_view, Family> prefixes[] = {{"u_", Family::U},    {"v_", Family::V},
                                                                {"w_", Family::W},    {"p_", Family::P},
                                                                {"pseg_", Family::PSeg}, {"theta_", Family::Theta}};
        for (auto [pre, fam] : prefixes) {
            if (!s.starts_with(pre)) continue;
            int parts[3] = {-1, -1, -1};
            const int want = fam == Family::PSeg ? 3 : 2;
            if (split(s.substr(pre.size()), want, parts)) return {fam, parts[0], parts[1], want == 3 ? parts[2] : -1};
        }
        return {};
    }

   private:
    void build_names() {
        names_.resize(n_);
        keys_.resize(n_);
        auto put = [&](int col, VariableKey k) {
            keys_[col] = k;
            names_[col] = encode(k);
        };
        for (int g = 0; g < generators_; ++g)
            for (int t = 0; t < periods_; ++t) {
                put(u(g, t), {Family::U, g, t});
                put(v(g, t), {Family::V, g, t});
                put(w(g, t), {Family::W, g, t});
                put(p(g, t), {Family::P, g, t});
                for (int k = 0; k < segments(g); ++k) put(pseg(g, t, k), {Family::PSeg, g, t, k});
            }
        for (int b : theta_buses_)
            for (int t = 0; t < periods_; ++t) put(theta(b, t), {Family::Theta, b, t});
        build_lookup();
    }
    void build_lookup() {
        lookup_.clear();
        lookup_.reserve(names_.size());
        for (int i = 0; i < n_; ++i) lookup_.emplace(names_[i], i);
    }

    int generators_ = 0;
    int periods_ = 0;
    std::vector<int> theta_buses_;
    std::vector<int> theta_slot_;
    std::vector<int> seg_offset_{0};
    int u0_ = 0, v0_ = 0, w0_ = 0, p0_ = 0, seg0_ = 0, theta0_ = 0;
    int n_z_ = 0;
    int n_ = 0;
    std::vector<std::string> names_;
    std::vector<VariableKey> keys_;
    std::unordered_map<std::string, int> lookup_;
};

/// A group of rows with its own z-part and y-part coefficient matrices.
/// The z-part has |z| columns, the y-part |y| columns (local y index).
struct RowBlock {
    SparseMatrix z_part;
    SparseMatrix y_part;
    std::vector<Sense> sense;
    std::vector<double> rhs;
    std::vector<std::string> names;

    RowBlock() = default;
    RowBlock(int nz, int ny) : z_part(0, nz), y_part(0, ny) {}

    int rows() const { return static_cast<int>(rhs.size()); }

    /// Starts a new row and returns its index.
    int add_row(Sense s, double r, std::string name) {
        sense.push_back(s);
        rhs.push_back(r);
        names.push_back(std::move(name));
        ++z_part.rows;
        ++y_part.rows;
        return rows() - 1;
    }
    std::size_t nonzeros() const { return z_part.nonzeros() + y_part.nonzeros(); }

    friend bool operator==(const RowBlock&, const RowBlock&) = default;
};

struct CompactModel {
    std::string name;
    VariableIndex index;
    std::optional<CommitmentLayout> layout;
    std::vector<double> c;  // over z
    std::vector<double> b;  // over y
    RowBlock commitment;    // F, f
    RowBlock dispatch;      // H, h
    RowBlock coupling;      // A, B, g
    RowBlock balance;       // I_u, d
    std::vector<double> lower, upper;  // per global column
    std::vector<bool> integer;         // integrality mask per global column

    int n_z() const { return index.n_binary(); }
    int n_y() const { return index.n_continuous(); }
    int n_vars() const { return index.size(); }

    const SparseMatrix& F() const { return commitment.z_part; }
    const std::vector<double>& f() const { return commitment.rhs; }
    const SparseMatrix& H() const { return dispatch.y_part; }
    const std::vector<double>& h() const { return dispatch.rhs; }
    const SparseMatrix& A() const { return coupling.z_part; }
    const SparseMatrix& B() const { return coupling.y_part; }
    const std::vector<double>& g() const { return coupling.rhs; }
    const SparseMatrix& I_u() const { return balance.y_part; }
    const std::vector<double>& d() const { return balance.rhs; }

    /// Blocks in canonical order: F, H, coupling, balance.
    std::array<const RowBlock*, 4> blocks() const { return {&commitment, &dispatch, &coupling, &balance}; }
};

struct ModelStats {
    int n_vars = 0;
    int n_binary = 0;
    int n_continuous = 0;
    int rows_commitment = 0;
    int rows_dispatch = 0;
    int rows_coupling = 0;
    int rows_balance = 0;
    std::size_t nonzeros = 0;
};

inline ModelStats model_stats(const CompactModel& m) {
    ModelStats s;
    s.n_binary = m.n_z();
    s.n_continuous = m.n_y();
    s.n_vars = s.n_binary + s.n_continuous;
    s.rows_commitment = m.commitment.rows();
    s.rows_dispatch = m.dispatch.rows();
    s.rows_coupling = m.coupling.rows();
    s.rows_balance = m.balance.rows();
    for (const auto* blk : m.blocks()) s.nonzeros += blk->nonzeros();
    return s;
}

namespace detail {

inline std::string row_name(std::string_view block, std::string_view kind, std::initializer_list<int> ix) {
    std::string s(block);
    s += '_';
    s += kind;
    for (int i : ix) {
        s += '_';
        s += std::to_string(i);
    }
    return s;
}

}  // namespace detail

/// Builds the compact model. Throws ValidationError unless the instance is valid.
inline CompactModel compile(const UcInstance& inst) {
    require_valid(inst);
    const int G = static_cast<int>(inst.generators.size());
    const int T = inst.horizon_T;
    const int ref = inst.reference_bus();

    std::vector<int> segs(G);
    for (int g = 0; g < G; ++g) segs[g] = static_cast<int>(inst.generators[g].segments.size());
    std::vector<int> theta_buses;
    for (int b = 0; b < static_cast<int>(inst.buses.size()); ++b)
        if (b != ref) theta_buses.push_back(b);

    CompactModel m;
    m.name = inst.name;
    m.index = VariableIndex(G, T, segs, theta_buses);
    const auto& ix = m.index;
    const int nz = ix.n_binary();
    const int ny = ix.n_continuous();
    auto yc = [nz](int col) { return col - nz; };

    m.layout = CommitmentLayout{G, T, {}};
    for (const auto& gen : inst.generators) m.layout->initial_on.push_back(gen.init_on ? 1 : 0);

    m.c.assign(nz, 0.0);
    m.b.assign(ny, 0.0);
    m.lower.assign(ix.size(), 0.0);
    m.upper.assign(ix.size(), 1.0);
    m.integer.assign(ix.size(), false);
    for (int j = 0; j < nz; ++j) m.integer[j] = true;
    m.commitment = RowBlock(nz, ny);
    m.dispatch = RowBlock(nz, ny);
    m.coupling = RowBlock(nz, ny);
    m.balance = RowBlock(nz, ny);

    using detail::row_name;
    for (int g = 0; g < G; ++g) {
        const auto& gen = inst.generators[g];
        const int K = segs[g];
        for (int t = 0; t < T; ++t) {
            m.c[ix.u(g, t)] = gen.no_load_cost;
            m.c[ix.v(g, t)] = gen.startup_cost;
            m.c[ix.w(g, t)] = gen.shutdown_cost;
            m.upper[ix.p(g, t)] = gen.p_max;
            for (int k = 0; k < K; ++k) {
                m.b[yc(ix.pseg(g, t, k))] = gen.segments[k].marginal_cost * inst.period_hours;
                m.upper[ix.pseg(g, t, k)] = gen.segments[k].width;
            }
        }

        // Commitment logic: u[t] - u[t-1] - v[t] + w[t] = 0, with u[-1] = init_on.
        auto& F = m.commitment;
        for (int t = 0; t < T; ++t) {
            const int r = F.add_row(Sense::Eq, t == 0 && gen.init_on ? 1.0 : 0.0, row_name("F", "logic", {g, t}));
            F.z_part.add(r, ix.u(g, t), 1.0);
            if (t > 0) F.z_part.add(r, ix.u(g, t - 1), -1.0);
            F.z_part.add(r, ix.v(g, t), -1.0);
            F.z_part.add(r, ix.w(g, t), 1.0);
        }
        for (int t = 0; t < T; ++t) {
            const int r = F.add_row(Sense::Le, 1.0, row_name("F", "vw", {g, t}));
            F.z_part.add(r, ix.v(g, t), 1.0);
            F.z_part.add(r, ix.w(g, t), 1.0);
        }
        // Minimum up: sum_{tau = t-UT+1..t} v[tau] - u[t] <= 0.
        for (int t = 0; t < T; ++t) {
            const int r = F.add_row(Sense::Le, 0.0, row_name("F", "minup", {g, t}));
            for (int tau = std::max(0, t - gen.min_up + 1); tau <= t; ++tau) F.z_part.add(r, ix.v(g, tau), 1.0);
            F.z_part.add(r, ix.u(g, t), -1.0);
        }
        // Minimum down: sum_{tau = t-DT+1..t} w[tau] + u[t] <= 1.
        for (int t = 0; t < T; ++t) {
            const int r = F.add_row(Sense::Le, 1.0, row_name("F", "mindown", {g, t}));
            for (int tau = std::max(0, t - gen.min_down + 1); tau <= t; ++tau) F.z_part.add(r, ix.w(g, tau), 1.0);
            F.z_part.add(r, ix.u(g, t), 1.0);
        }
        // Initial-state forcing for the unserved part of the minimum up/down time.
        const int deficit = (gen.init_on ? gen.min_up : gen.min_down) - gen.init_periods_in_state;
        for (int t = 0; t < std::min(deficit, T); ++t) {
            const int r = F.add_row(Sense::Eq, gen.init_on ? 1.0 : 0.0,
                                    row_name("F", gen.init_on ? "initon" : "initoff", {g, t}));
            F.z_part.add(r, ix.u(g, t), 1.0);
        }

        auto& C = m.coupling;
        for (int t = 0; t < T; ++t) {
            // p = p_min u + sum_k p_seg[k]
            const int r = C.add_row(Sense::Eq, 0.0, row_name("AB", "cap", {g, t}));
            C.y_part.add(r, yc(ix.p(g, t)), 1.0);
            C.z_part.add(r, ix.u(g, t), -gen.p_min);
            for (int k = 0; k < K; ++k) C.y_part.add(r, yc(ix.pseg(g, t, k)), -1.0);
        }
        for (int t = 0; t < T; ++t)
            for (int k = 0; k < K; ++k) {
                // p_seg[k] <= width_k u
                const int r = C.add_row(Sense::Le, 0.0, row_name("AB", "seg", {g, t, k}));
                C.y_part.add(r, yc(ix.pseg(g, t, k)), 1.0);
                C.z_part.add(r, ix.u(g, t), -gen.segments[k].width);
            }
        const double u_prev0 = gen.init_on ? 1.0 : 0.0;
        for (int t = 0; t < T; ++t) {
            // p[t] - p[t-1] <= RU u[t-1] + SU v[t]
            const double rhs = t == 0 ? gen.init_power + gen.ramp_up * u_prev0 : 0.0;
            const int r = C.add_row(Sense::Le, rhs, row_name("AB", "rampup", {g, t}));
            C.y_part.add(r, yc(ix.p(g, t)), 1.0);
            if (t > 0) {
                C.y_part.add(r, yc(ix.p(g, t - 1)), -1.0);
                C.z_part.add(r, ix.u(g, t - 1), -gen.ramp_up);
            }
            C.z_part.add(r, ix.v(g, t), -gen.startup_ramp);
        }
        for (int t = 0; t < T; ++t) {
            // p[t-1] - p[t] <= RD u[t] + SD w[t]
            const double rhs = t == 0 ? -gen.init_power : 0.0;
            const int r = C.add_row(Sense::Le, rhs, row_name("AB", "rampdown", {g, t}));
            if (t > 0) C.y_part.add(r, yc(ix.p(g, t - 1)), 1.0);
            C.y_part.add(r, yc(ix.p(g, t)), -1.0);
            C.z_part.add(r, ix.u(g, t), -gen.ramp_down);
            C.z_part.add(r, ix.w(g, t), -gen.shutdown_ramp);
        }
    }

    for (int j = ix.size() - static_cast<int>(theta_buses.size()) * T; j < ix.size(); ++j) {
        m.lower[j] = -kInf;
        m.upper[j] = kInf;
    }

    // Line limits on flow = susceptance (theta_from - theta_to), both directions.
    std::vector<int> from(inst.lines.size()), to(inst.lines.size());
    for (std::size_t l = 0; l < inst.lines.size(); ++l) {
        from[l] = inst.bus_index(inst.lines[l].from_bus);
        to[l] = inst.bus_index(inst.lines[l].to_bus);
    }
    auto add_flow = [&](SparseMatrix& mat, int row, std::size_t l, int t, double sign) {
        const double bsus = inst.lines[l].susceptance;
        if (int c = ix.theta(from[l], t); c >= 0) mat.add(row, yc(c), sign * bsus);
        if (int c = ix.theta(to[l], t); c >= 0) mat.add(row, yc(c), -sign * bsus);
    };
    auto& H = m.dispatch;
    for (std::size_t l = 0; l < inst.lines.size(); ++l)
        for (int t = 0; t < T; ++t) {
            const int li = static_cast<int>(l);
            int r = H.add_row(Sense::Le, inst.lines[l].flow_limit, row_name("H", "flowfwd", {li, t}));
            add_flow(H.y_part, r, l, t, 1.0);
            r = H.add_row(Sense::Le, inst.lines[l].flow_limit, row_name("H", "flowrev", {li, t}));
            add_flow(H.y_part, r, l, t, -1.0);
        }

    // Nodal balance: generation - outgoing flow + incoming flow = demand.
    std::vector<std::vector<int>> gens_at(inst.buses.size());
    for (int g = 0; g < G; ++g) gens_at[inst.bus_index(inst.generators[g].bus)].push_back(g);
    std::vector<std::vector<std::size_t>> lines_at(inst.buses.size());
    for (std::size_t l = 0; l < inst.lines.size(); ++l) {
        lines_at[from[l]].push_back(l);
        if (to[l] != from[l]) lines_at[to[l]].push_back(l);
    }
    auto& Bal = m.balance;
    for (int bus = 0; bus < static_cast<int>(inst.buses.size()); ++bus)
        for (int t = 0; t < T; ++t) {
            const int r = Bal.add_row(Sense::Eq, inst.demand[bus][t], row_name("BAL", "bus", {bus, t}));
            for (int g : gens_at[bus]) Bal.y_part.add(r, yc(ix.p(g, t)), 1.0);
            for (std::size_t l : lines_at[bus]) {
                if (from[l] == bus) add_flow(Bal.y_part, r, l, t, -1.0);
                if (to[l] == bus) add_flow(Bal.y_part, r, l, t, 1.0);
            }
        }
    for (RowBlock* blk : {&m.commitment, &m.dispatch, &m.coupling, &m.balance}) {
        blk->z_part.merge_duplicates();
        blk->y_part.merge_duplicates();
    }
    return m;
}

struct Evaluation {
    double objective = 0.0;
    double commitment = 0.0;  // max violation of F z <= f
    double dispatch = 0.0;    // H y <= h
    double coupling = 0.0;    // A z + B y <= g
    double balance = 0.0;     // |I_u y - d|
    double bounds = 0.0;      // column bounds
    double integrality = 0.0; // max distance of a z entry to {0, 1}

    double max_residual() const { return std::max({commitment, dispatch, coupling, balance, bounds}); }
};

namespace detail {

inline double block_residual(const RowBlock& blk, std::span<const double> z, std::span<const double> y) {
    std::vector<double> act(blk.rows(), 0.0);
    for (const auto& e : blk.z_part.entries) act[e.row] += e.value * z[e.col];
    for (const auto& e : blk.y_part.entries) act[e.row] += e.value * y[e.col];
    double worst = 0.0;
    for (int i = 0; i < blk.rows(); ++i) {
        const double diff = act[i] - blk.rhs[i];
        double viol = 0.0;
        switch (blk.sense[i]) {
            case Sense::Le: viol = std::max(0.0, diff); break;
            case Sense::Ge: viol = std::max(0.0, -diff); break;
            case Sense::Eq: viol = std::abs(diff); break;
        }
        worst = std::max(worst, viol);
    }
    return worst;
}

}  // namespace detail

/// Objective c'z + b'y and the worst violation in each constraint block.
inline Evaluation evaluate(const CompactModel& m, std::span<const double> z, std::span<const double> y) {
    if (static_cast<int>(z.size()) != m.n_z() || static_cast<int>(y.size()) != m.n_y())
        throw DimensionError("evaluate: expected |z|=" + std::to_string(m.n_z()) + " and |y|=" +
                             std::to_string(m.n_y()) + ", got " + std::to_string(z.size()) + " and " +
                             std::to_string(y.size()));
    Evaluation ev;
    for (int j = 0; j < m.n_z(); ++j) ev.objective += m.c[j] * z[j];
    for (int j = 0; j < m.n_y(); ++j) ev.objective += m.b[j] * y[j];
    ev.commitment = detail::block_residual(m.commitment, z, y);
    ev.dispatch = detail::block_residual(m.dispatch, z, y);
    ev.coupling = detail::block_residual(m.coupling, z, y);
    ev.balance = detail::block_residual(m.balance, z, y);
    for (int j = 0; j < m.n_vars(); ++j) {
        const double x = j < m.n_z() ? z[j] : y[j - m.n_z()];
        ev.bounds = std::max({ev.bounds, m.lower[j] - x, x - m.upper[j]});
        if (m.integer[j]) ev.integrality = std::max(ev.integrality, std::abs(x - std::round(x)));
    }
    return ev;
}

}  // namespace scuc
