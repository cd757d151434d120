#pragma once

// Free-format MPS export and import for compact models.
//
// Export writes rows in block order (F, H, coupling, balance) and columns in
// VariableIndex order, with the binary block wrapped in INTORG/INTEND
// markers. Import accepts any free-format file with the usual sections and
// rebuilds a CompactModel: integer columns become the z block, rows are
// assigned to blocks by name prefix (F_, H_, AB_, BAL_) or, failing that,
// by which blocks their nonzeros touch.

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "scuc/compiler.hpp"
#include "scuc/errors.hpp"

namespace scuc {

namespace detail {

inline std::string mps_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string mps_name(std::string_view s) {
    std::string out(s.empty() ? "model" : s);
    for (char& c : out)
        if (c == ' ' || c == '\t') c = '_';
    return out;
}

}  // namespace detail

inline std::string export_mps(const CompactModel& m) {
    using detail::mps_number;
    const int nz = m.n_z();
    const int n = m.n_vars();

    std::vector<const std::string*> row_names;
    std::vector<Sense> senses;
    std::vector<double> rhs;
    // Column-wise entries: (global row, value).
    std::vector<std::vector<std::pair<int, double>>> cols(n);
    int offset = 0;
    for (const auto* blk : m.blocks()) {
        for (int i = 0; i < blk->rows(); ++i) {
            row_names.push_back(&blk->names[i]);
            senses.push_back(blk->sense[i]);
            rhs.push_back(blk->rhs[i]);
        }
        for (const auto& e : blk->z_part.entries) cols[e.col].push_back({offset + e.row, e.value});
        for (const auto& e : blk->y_part.entries) cols[nz + e.col].push_back({offset + e.row, e.value});
        offset += blk->rows();
    }
    for (auto& c : cols) std::stable_sort(c.begin(), c.end(), [](auto& a, auto& b) { return a.first < b.first; });

    std::ostringstream out;
    out << "NAME " << detail::mps_name(m.name) << "\n";
    out << "ROWS\n N COST\n";
    for (std::size_t i = 0; i < row_names.size(); ++i) {
        const char* s = senses[i] == Sense::Le ? "L" : senses[i] == Sense::Ge ? "G" : "E";
        out << " " << s << " " << *row_names[i] << "\n";
    }
    out << "COLUMNS\n";
    bool in_marker = false;
    for (int j = 0; j < n; ++j) {
        const bool integer = m.integer[j];
        if (integer && !in_marker) {
            out << " MARKER 'MARKER' 'INTORG'\n";
            in_marker = true;
        } else if (!integer && in_marker) {
            out << " MARKER 'MARKER' 'INTEND'\n";
            in_marker = false;
        }
        const std::string& name = m.index.name(j);
        const double cost = j < nz ? m.c[j] : m.b[j - nz];
        bool wrote = false;
        if (cost != 0.0) {
            out << " " << name << " COST " << mps_number(cost) << "\n";
            wrote = true;
        }
        for (auto [row, v] : cols[j]) {
            out << " " << name << " " << *row_names[row] << " " << mps_number(v) << "\n";
            wrote = true;
        }
        // A column with no entries still has to be declared.
        if (!wrote) out << " " << name << " COST 0\n";
    }
    if (in_marker) out << " MARKER 'MARKER' 'INTEND'\n";

    out << "RHS\n";
    for (std::size_t i = 0; i < rhs.size(); ++i)
        if (rhs[i] != 0.0) out << " RHS " << *row_names[i] << " " << mps_number(rhs[i]) << "\n";

    out << "BOUNDS\n";
    for (int j = 0; j < n; ++j) {
        const std::string& name = m.index.name(j);
        const double lo = m.lower[j], hi = m.upper[j];
        if (lo == hi) {
            out << " FX BND " << name << " " << mps_number(lo) << "\n";
            continue;
        }
        if (std::isinf(lo) && std::isinf(hi)) {
            out << " FR BND " << name << "\n";
            continue;
        }
        if (std::isinf(lo))
            out << " MI BND " << name << "\n";
        else if (lo != 0.0 || m.integer[j])
            out << " LO BND " << name << " " << mps_number(lo) << "\n";
        if (std::isfinite(hi))
            out << " UP BND " << name << " " << mps_number(hi) << "\n";
        else if (m.integer[j])
            out << " PL BND " << name << "\n";
    }
    out << "ENDATA\n";
    return out.str();
}

namespace detail {

class MpsReader {
   public:
    explicit MpsReader(std::string_view text) : text_(text) {}

    CompactModel read() {
        enum class Section { None, Name, Rows, Columns, Rhs, Ranges, Bounds, End };
        Section sec = Section::None;
        std::size_t pos = 0;
        while (pos <= text_.size() && sec != Section::End) {
            const std::size_t eol = std::min(text_.find('\n', pos), text_.size());
            std::string_view raw = text_.substr(pos, eol - pos);
            pos = eol + 1;
            ++line_;
            if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
            if (raw.empty() || raw.front() == '*') continue;
            auto tok = split(raw);
            if (tok.empty()) continue;

            if (raw.front() != ' ' && raw.front() != '\t') {
                const std::string_view head = tok[0];
                if (head == "NAME") {
                    name_ = tok.size() > 1 ? std::string(tok[1]) : std::string();
                    sec = Section::Name;
                } else if (head == "ROWS") {
                    sec = Section::Rows;
                } else if (head == "COLUMNS") {
                    sec = Section::Columns;
                } else if (head == "RHS") {
                    sec = Section::Rhs;
                } else if (head == "RANGES") {
                    sec = Section::Ranges;
                } else if (head == "BOUNDS") {
                    sec = Section::Bounds;
                } else if (head == "ENDATA") {
                    sec = Section::End;
                } else {
                    fail("unknown section '" + std::string(head) + "'");
                }
                if (sec != Section::Name && sec != Section::End && tok.size() > 1)
                    fail("unexpected text after section header");
                continue;
            }

            switch (sec) {
                case Section::Rows: row_line(tok); break;
                case Section::Columns: column_line(tok); break;
                case Section::Rhs: rhs_line(tok); break;
                case Section::Ranges: range_line(tok); break;
                case Section::Bounds: bound_line(tok); break;
                default: fail("data line outside a section");
            }
        }
        if (sec != Section::End) fail("missing ENDATA");
        return build();
    }

   private:
    struct Row {
        std::string name;
        char type;  // N, L, G, E
        double rhs = 0.0;
        std::optional<double> range;
    };
    struct Col {
        std::string name;
        bool integer = false;
        double cost = 0.0;
        double lo = 0.0;
        double hi = kInf;
        bool bounded = false;  // any BOUNDS entry seen
        std::vector<std::pair<int, double>> entries;
    };

    [[noreturn]] void fail(const std::string& what) const { throw MpsParseError(line_, what); }

    static std::vector<std::string_view> split(std::string_view s) {
        std::vector<std::string_view> out;
        std::size_t i = 0;
        while (i < s.size()) {
            while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
            const std::size_t b = i;
            while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
            if (i > b) out.push_back(s.substr(b, i - b));
        }
        return out;
    }

    double number(std::string_view s) const {
        if (s.size() > 1 && s.front() == '+') s.remove_prefix(1);
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
        if (ec != std::errc{} || ptr != s.data() + s.size()) fail("bad number '" + std::string(s) + "'");
        return v;
    }

    int row_of(std::string_view name) const {
        auto it = row_ix_.find(std::string(name));
        if (it == row_ix_.end()) fail("unknown row '" + std::string(name) + "'");
        return it->second;
    }
    int col_of(std::string_view name) const {
        auto it = col_ix_.find(std::string(name));
        if (it == col_ix_.end()) fail("unknown column '" + std::string(name) + "'");
        return it->second;
    }

    void row_line(const std::vector<std::string_view>& tok) {
        if (tok.size() != 2) fail("ROWS entry needs a type and a name");
        if (tok[0].size() != 1 || std::string_view("NLGE").find(tok[0][0]) == std::string_view::npos)
            fail("bad row type '" + std::string(tok[0]) + "'");
        const char type = tok[0][0];
        std::string name(tok[1]);
        if (row_ix_.count(name) || name == objective_) fail("duplicate row '" + name + "'");
        if (type == 'N') {
            if (objective_.empty())
                objective_ = name;
            else
                free_rows_.emplace(name, 0);
            return;
        }
        row_ix_.emplace(name, static_cast<int>(rows_.size()));
        rows_.push_back({std::move(name), type, 0.0, std::nullopt});
    }

    void column_line(const std::vector<std::string_view>& tok) {
        if (tok.size() >= 3 && tok[1] == "'MARKER'") {
            if (tok[2] == "'INTORG'")
                in_int_ = true;
            else if (tok[2] == "'INTEND'")
                in_int_ = false;
            else
                fail("unknown marker " + std::string(tok[2]));
            return;
        }
        if (tok.size() != 3 && tok.size() != 5) fail("COLUMNS entry needs a column and one or two (row, value) pairs");
        const std::string name(tok[0]);
        auto it = col_ix_.find(name);
        int j;
        if (it == col_ix_.end()) {
            j = static_cast<int>(cols_.size());
            col_ix_.emplace(name, j);
            Col c;
            c.name = name;
            c.integer = in_int_;
            cols_.push_back(std::move(c));
        } else {
            j = it->second;
            if (j != static_cast<int>(cols_.size()) - 1) fail("entries for column '" + name + "' are not contiguous");
        }
        for (std::size_t k = 1; k + 1 < tok.size(); k += 2) {
            const double v = number(tok[k + 1]);
            if (tok[k] == objective_) {
                cols_[j].cost += v;
            } else if (free_rows_.count(std::string(tok[k]))) {
                continue;
            } else {
                cols_[j].entries.push_back({row_of(tok[k]), v});
            }
        }
    }

    void rhs_line(const std::vector<std::string_view>& tok) {
        // The set name is optional in free format when the line has an even count.
        const std::size_t first = tok.size() % 2 == 1 ? 1 : 0;
        if (tok.size() < 2 + first) fail("RHS entry needs (row, value)");
        for (std::size_t k = first; k + 1 < tok.size(); k += 2) {
            const double v = number(tok[k + 1]);
            if (tok[k] == objective_) {
                if (v != 0.0) fail("objective constants are not supported");
                continue;
            }
            if (free_rows_.count(std::string(tok[k]))) continue;
            rows_[row_of(tok[k])].rhs = v;
        }
    }

    void range_line(const std::vector<std::string_view>& tok) {
        const std::size_t first = tok.size() % 2 == 1 ? 1 : 0;
        if (tok.size() < 2 + first) fail("RANGES entry needs (row, value)");
        for (std::size_t k = first; k + 1 < tok.size(); k += 2) {
            auto& row = rows_[row_of(tok[k])];
            row.range = number(tok[k + 1]);
        }
    }

    void bound_line(const std::vector<std::string_view>& tok) {
        if (tok.size() < 2) fail("BOUNDS entry too short");
        const std::string_view type = tok[0];
        const bool needs_value = type == "UP" || type == "LO" || type == "FX" || type == "LI" || type == "UI";
        const bool no_value = type == "FR" || type == "MI" || type == "PL" || type == "BV";
        if (!needs_value && !no_value) fail("unknown bound type '" + std::string(type) + "'");
        // Forms: TYPE SET COL [VAL] or TYPE COL [VAL] (set name omitted).
        std::string_view colname;
        std::optional<double> value;
        if (needs_value) {
            if (tok.size() == 4) {
                colname = tok[2];
            } else if (tok.size() == 3) {
                colname = tok[1];
            } else {
                fail("bound '" + std::string(type) + "' needs a value");
            }
            value = number(tok.back());
        } else {
            if (tok.size() == 3)
                colname = tok[2];
            else if (tok.size() == 2)
                colname = tok[1];
            else if (tok.size() == 4 && type == "BV")
                colname = tok[2];  // some writers add a value to BV
            else
                fail("bound '" + std::string(type) + "' takes no value");
        }
        auto& c = cols_[col_of(colname)];
        c.bounded = true;
        if (type == "UP") {
            c.hi = *value;
            if (*value < 0.0 && c.lo == 0.0) c.lo = -kInf;
        } else if (type == "LO") {
            c.lo = *value;
        } else if (type == "FX") {
            c.lo = c.hi = *value;
        } else if (type == "FR") {
            c.lo = -kInf;
            c.hi = kInf;
        } else if (type == "MI") {
            c.lo = -kInf;
        } else if (type == "PL") {
            c.hi = kInf;
        } else if (type == "BV") {
            c.integer = true;
            c.lo = 0.0;
            c.hi = 1.0;
        } else if (type == "LI") {
            c.integer = true;
            c.lo = *value;
        } else if (type == "UI") {
            c.integer = true;
            c.hi = *value;
        }
    }

    CompactModel build() {
        // Integer columns with no explicit bounds are binary by convention.
        for (auto& c : cols_) {
            if (!c.integer) continue;
            if (!c.bounded) c.hi = 1.0;
            if (c.lo < 0.0 || c.hi > 1.0)
                fail("integer column '" + c.name + "' is not binary; only 0/1 variables are supported");
        }

        // z block first, keeping file order inside each block.
        std::vector<int> order;
        for (int j = 0; j < static_cast<int>(cols_.size()); ++j)
            if (cols_[j].integer) order.push_back(j);
        const int nz = static_cast<int>(order.size());
        for (int j = 0; j < static_cast<int>(cols_.size()); ++j)
            if (!cols_[j].integer) order.push_back(j);
        std::vector<int> pos(cols_.size());
        std::vector<std::string> names;
        for (int k = 0; k < static_cast<int>(order.size()); ++k) {
            pos[order[k]] = k;
            names.push_back(cols_[order[k]].name);
        }
        const int n = static_cast<int>(names.size());
        const int ny = n - nz;

        CompactModel m;
        m.name = name_;
        m.index = VariableIndex::from_names(std::move(names), nz);
        m.c.assign(nz, 0.0);
        m.b.assign(ny, 0.0);
        m.lower.assign(n, 0.0);
        m.upper.assign(n, 0.0);
        m.integer.assign(n, false);
        for (int j = 0; j < static_cast<int>(cols_.size()); ++j) {
            const int k = pos[j];
            (k < nz ? m.c[k] : m.b[k - nz]) = cols_[j].cost;
            m.lower[k] = cols_[j].lo;
            m.upper[k] = cols_[j].hi;
            m.integer[k] = cols_[j].integer;
        }

        // Row-wise entries in global column numbering.
        std::vector<std::vector<std::pair<int, double>>> by_row(rows_.size());
        for (int j = 0; j < static_cast<int>(cols_.size()); ++j)
            for (auto [r, v] : cols_[j].entries) by_row[r].push_back({pos[j], v});

        std::array<RowBlock*, 4> blocks = {&m.commitment, &m.dispatch, &m.coupling, &m.balance};
        for (auto* blk : blocks) *blk = RowBlock(nz, ny);
        auto block_for = [&](const Row& row, const std::vector<std::pair<int, double>>& coefs) -> RowBlock* {
            const std::string& s = row.name;
            if (s.starts_with("F_")) return &m.commitment;
            if (s.starts_with("H_")) return &m.dispatch;
            if (s.starts_with("AB_")) return &m.coupling;
            if (s.starts_with("BAL_")) return &m.balance;
            bool has_z = false, has_y = false;
            for (auto [c, v] : coefs) (c < nz ? has_z : has_y) = true;
            if (has_z && has_y) return &m.coupling;
            if (has_z) return &m.commitment;
            return &m.dispatch;
        };
        auto emit = [&](RowBlock* blk, Sense s, double rhs, std::string name,
                        const std::vector<std::pair<int, double>>& coefs) {
            const int r = blk->add_row(s, rhs, std::move(name));
            for (auto [c, v] : coefs) {
                if (c < nz)
                    blk->z_part.add(r, c, v);
                else
                    blk->y_part.add(r, c - nz, v);
            }
        };
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            const Row& row = rows_[i];
            RowBlock* blk = block_for(row, by_row[i]);
            if (!row.range) {
                const Sense s = row.type == 'L' ? Sense::Le : row.type == 'G' ? Sense::Ge : Sense::Eq;
                emit(blk, s, row.rhs, row.name, by_row[i]);
                continue;
            }
            // A ranged row becomes a pair of one-sided rows.
            const double R = *row.range;
            double lo, hi;
            switch (row.type) {
                case 'L':
                    lo = row.rhs - std::abs(R);
                    hi = row.rhs;
                    break;
                case 'G':
                    lo = row.rhs;
                    hi = row.rhs + std::abs(R);
                    break;
                default:
                    lo = R < 0 ? row.rhs + R : row.rhs;
                    hi = R < 0 ? row.rhs : row.rhs + R;
                    break;
            }
            if (lo == hi) {
                emit(blk, Sense::Eq, lo, row.name, by_row[i]);
            } else {
                emit(blk, Sense::Ge, lo, row.name, by_row[i]);
                emit(blk, Sense::Le, hi, row.name + "_range", by_row[i]);
            }
        }
        for (auto* blk : blocks) {
            blk->z_part.merge_duplicates();
            blk->y_part.merge_duplicates();
        }
        m.layout = rebuild_layout(m);
        return m;
    }

    /// Recovers generator/period structure from u/v/w column names, with the
    /// initial state read off the period-0 commitment logic row.
    static std::optional<CommitmentLayout> rebuild_layout(const CompactModel& m) {
        const auto& ix = m.index;
        int G = 0, T = 0;
        for (int j = 0; j < m.n_z(); ++j) {
            const auto& k = ix.key(j);
            if (k.family != Family::U && k.family != Family::V && k.family != Family::W) return std::nullopt;
            G = std::max(G, k.a + 1);
            T = std::max(T, k.t + 1);
        }
        if (G == 0 || 3 * G * T != m.n_z()) return std::nullopt;
        CommitmentLayout L{G, T, std::vector<int>(G, 0)};
        for (int g = 0; g < G; ++g) {
            for (int t = 0; t < T; ++t)
                for (Family f : {Family::U, Family::V, Family::W})
                    if (!ix.find(VariableKey{f, g, t})) return std::nullopt;
            const std::string logic = "F_logic_" + std::to_string(g) + "_0";
            for (int r = 0; r < m.commitment.rows(); ++r)
                if (m.commitment.names[r] == logic) L.initial_on[g] = m.commitment.rhs[r] > 0.5 ? 1 : 0;
        }
        return L;
    }

    std::string_view text_;
    int line_ = 0;
    std::string name_;
    std::string objective_;
    std::unordered_map<std::string, int> free_rows_;
    std::vector<Row> rows_;
    std::unordered_map<std::string, int> row_ix_;
    std::vector<Col> cols_;
    std::unordered_map<std::string, int> col_ix_;
    bool in_int_ = false;
};

}  // namespace detail

/// Parses free-format MPS. Throws MpsParseError with the offending line.
inline CompactModel import_mps(std::string_view text) { return detail::MpsReader(text).read(); }

}  // namespace scuc
