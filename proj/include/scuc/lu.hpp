#pragma once

// Sparse LU of a simplex basis.
//
// Gaussian elimination with Markowitz pivot selection (threshold 0.01
// relative to the row maximum; singletons are taken without a threshold
// since they cause no fill or growth). The result is a sequence of pivots
// (p_k, q_k), column etas L_k and the pivot rows of U, stored both by row
// and by column so the triangular solves can skip zeros.
//
// Rows index constraints; columns index basis positions.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace scuc {

class SparseLu {
public:
    struct Entry {
        int index;
        double value;
    };

    /// Column `pos` of the basis is produced by `column(pos, emit)` with
    /// emit(row, value). Returns false when the basis is singular; then
    /// singular_positions() and unpivoted_rows() say what is missing.
    bool factor(int m, const std::function<void(int, const std::function<void(int, double)>&)>& column);

    /// B x = v: v is indexed by row on entry, by basis position on exit.
    void ftran(std::vector<double>& v) const;
    /// B' y = c: c is indexed by basis position on entry, by row on exit.
    void btran(std::vector<double>& c) const;

    const std::vector<int>& singular_positions() const { return singular_cols_; }
    const std::vector<int>& unpivoted_rows() const { return singular_rows_; }
    std::size_t nonzeros() const { return l_nnz_ + u_nnz_; }

private:
    static constexpr double kThreshold = 0.01;
    static constexpr double kTiny = 1e-11;

    // Count buckets: doubly linked lists of rows or columns by active count.
    struct Buckets {
        std::vector<int> head, next, prev, count;
        void init(int n, int max_count) {
            head.assign(max_count + 2, -1);
            next.assign(n, -1);
            prev.assign(n, -1);
            count.assign(n, 0);
        }
        void insert(int x, int c) {
            count[x] = c;
            prev[x] = -1;
            next[x] = head[c];
            if (head[c] >= 0) prev[head[c]] = x;
            head[c] = x;
        }
        void remove(int x) {
            const int c = count[x];
            if (prev[x] >= 0)
                next[prev[x]] = next[x];
            else
                head[c] = next[x];
            if (next[x] >= 0) prev[next[x]] = prev[x];
        }
        void move(int x, int c) {
            remove(x);
            insert(x, c);
        }
    };

    int m_ = 0;
    std::vector<int> piv_row_, piv_col_;
    std::vector<double> diag_;
    std::vector<std::vector<Entry>> l_;       // per step: (row, multiplier)
    std::vector<std::vector<Entry>> u_rows_;  // per step: (position, value), diagonal excluded
    std::vector<std::vector<Entry>> u_cols_;  // per position: (row, value), diagonal excluded
    std::vector<int> singular_cols_, singular_rows_;
    std::size_t l_nnz_ = 0, u_nnz_ = 0;
    mutable std::vector<double> work_;
};

inline bool SparseLu::factor(int m, const std::function<void(int, const std::function<void(int, double)>&)>& column) {
    m_ = m;
    piv_row_.clear();
    piv_col_.clear();
    diag_.clear();
    l_.clear();
    u_rows_.clear();
    singular_cols_.clear();
    singular_rows_.clear();
    l_nnz_ = u_nnz_ = 0;

    // Active submatrix: values live in the rows; columns keep row lists.
    std::vector<std::vector<Entry>> rows(m);
    std::vector<std::vector<int>> cols(m);
    for (int c = 0; c < m; ++c)
        column(c, [&](int r, double v) {
            if (v == 0.0) return;
            rows[r].push_back({c, v});
            cols[c].push_back(r);
        });
    // Sum duplicate positions within each row.
    {
        std::vector<int> where(m, -1);
        for (int r = 0; r < m; ++r) {
            auto& row = rows[r];
            std::size_t out = 0;
            for (std::size_t k = 0; k < row.size(); ++k) {
                if (where[row[k].index] >= 0) {
                    row[where[row[k].index]].value += row[k].value;
                } else {
                    where[row[k].index] = static_cast<int>(out);
                    row[out++] = row[k];
                }
            }
            row.resize(out);
            for (const auto& e : row) where[e.index] = -1;
        }
        for (auto& col : cols) {
            std::sort(col.begin(), col.end());
            col.erase(std::unique(col.begin(), col.end()), col.end());
        }
    }

    std::vector<char> row_done(m, 0), col_done(m, 0);
    Buckets rb, cb;
    rb.init(m, m);
    cb.init(m, m);
    for (int r = 0; r < m; ++r) rb.insert(r, static_cast<int>(rows[r].size()));
    for (int c = 0; c < m; ++c) cb.insert(c, static_cast<int>(cols[c].size()));

    auto value_at = [&](int r, int c) -> double* {
        for (auto& e : rows[r])
            if (e.index == c) return &e.value;
        return nullptr;
    };
    auto row_max = [&](int r) {
        double mx = 0.0;
        for (const auto& e : rows[r]) mx = std::max(mx, std::abs(e.value));
        return mx;
    };

    std::vector<int> where(m, -1);
    for (int step = 0; step < m; ++step) {
        // Pivot search.
        int pr = -1, pc = -1;
        double best_cost = 0.0;
        int searched = 0;
        auto consider = [&](int r, int c, double v, double cost) {
            if (std::abs(v) <= kTiny) return;
            if (pr < 0 || cost < best_cost) {
                pr = r;
                pc = c;
                best_cost = cost;
            }
        };
        for (int cnt = 1; cnt <= m; ++cnt) {
            for (int c = cb.head[cnt]; c >= 0; c = cb.next[c]) {
                for (int r : cols[c]) {
                    const double* v = value_at(r, c);
                    if (!v) continue;
                    if (cnt > 1 && std::abs(*v) < kThreshold * row_max(r)) continue;
                    consider(r, c, *v, static_cast<double>(rb.count[r] - 1) * (cnt - 1));
                }
                if (pr >= 0 && (cnt == 1 || ++searched >= 4)) break;
            }
            if (pr >= 0 && (cnt == 1 || searched >= 4)) break;
            for (int r = rb.head[cnt]; r >= 0; r = rb.next[r]) {
                const double mx = row_max(r);
                for (const auto& e : rows[r]) {
                    if (cnt > 1 && std::abs(e.value) < kThreshold * mx) continue;
                    consider(r, e.index, e.value, static_cast<double>(cnt - 1) * (cb.count[e.index] - 1));
                }
                if (pr >= 0 && (cnt == 1 || ++searched >= 4)) break;
            }
            if (pr >= 0 && (cnt == 1 || searched >= 4)) break;
            if (pr >= 0 && best_cost <= static_cast<double>(cnt) * cnt) break;
        }
        if (pr < 0) break;  // what is left is numerically empty

        const double pivot = *value_at(pr, pc);
        piv_row_.push_back(pr);
        piv_col_.push_back(pc);
        diag_.push_back(pivot);

        // Pivot row goes to U; it leaves the active rows.
        std::vector<Entry> urow;
        for (const auto& e : rows[pr])
            if (e.index != pc) urow.push_back(e);
        row_done[pr] = 1;
        rb.remove(pr);
        for (const auto& e : rows[pr]) {
            auto& col = cols[e.index];
            col.erase(std::find(col.begin(), col.end(), pr));
            if (e.index != pc) cb.move(e.index, static_cast<int>(col.size()));
        }

        // Eliminate column pc from the remaining rows.
        std::vector<Entry> lcol;
        for (int r : cols[pc]) {
            auto& row = rows[r];
            double a = 0.0;
            for (std::size_t k = 0; k < row.size(); ++k)
                if (row[k].index == pc) {
                    a = row[k].value;
                    row[k] = row.back();
                    row.pop_back();
                    break;
                }
            const double l = a / pivot;
            if (l != 0.0) {
                lcol.push_back({r, l});
                for (std::size_t k = 0; k < row.size(); ++k) where[row[k].index] = static_cast<int>(k);
                for (const auto& e : urow) {
                    if (where[e.index] >= 0) {
                        row[where[e.index]].value -= l * e.value;
                    } else {
                        row.push_back({e.index, -l * e.value});
                        cols[e.index].push_back(r);
                        cb.move(e.index, static_cast<int>(cols[e.index].size()));
                    }
                }
                for (const auto& e : row) where[e.index] = -1;
            }
            rb.move(r, static_cast<int>(row.size()));
        }
        cols[pc].clear();
        col_done[pc] = 1;
        cb.remove(pc);

        l_nnz_ += lcol.size();
        u_nnz_ += urow.size() + 1;
        l_.push_back(std::move(lcol));
        u_rows_.push_back(std::move(urow));
    }

    if (static_cast<int>(piv_row_.size()) < m) {
        for (int c = 0; c < m; ++c)
            if (!col_done[c]) singular_cols_.push_back(c);
        for (int r = 0; r < m; ++r)
            if (!row_done[r]) singular_rows_.push_back(r);
        return false;
    }

    u_cols_.assign(m, {});
    for (int k = 0; k < m; ++k)
        for (const auto& e : u_rows_[k]) u_cols_[e.index].push_back({piv_row_[k], e.value});
    work_.assign(m, 0.0);
    return true;
}

inline void SparseLu::ftran(std::vector<double>& v) const {
    for (int k = 0; k < m_; ++k) {
        const double a = v[piv_row_[k]];
        if (a == 0.0) continue;
        for (const auto& e : l_[k]) v[e.index] -= e.value * a;
    }
    auto& x = work_;
    for (int k = m_ - 1; k >= 0; --k) {
        const int q = piv_col_[k];
        const double val = v[piv_row_[k]] / diag_[k];
        x[q] = val;
        if (val == 0.0) continue;
        for (const auto& e : u_cols_[q]) v[e.index] -= e.value * val;
    }
    v.swap(x);
}

inline void SparseLu::btran(std::vector<double>& c) const {
    auto& w = work_;
    for (int k = 0; k < m_; ++k) {
        const double val = c[piv_col_[k]] / diag_[k];
        w[piv_row_[k]] = val;
        if (val == 0.0) continue;
        for (const auto& e : u_rows_[k]) c[e.index] -= e.value * val;
    }
    for (int k = m_ - 1; k >= 0; --k) {
        double s = 0.0;
        for (const auto& e : l_[k]) s += e.value * w[e.index];
        w[piv_row_[k]] -= s;
    }
    c.swap(w);
}

}  // namespace scuc
