#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace scuc {

enum class Sense { Le, Eq, Ge };

inline const char* to_string(Sense s) {
    switch (s) {
        case Sense::Le: return "<=";
        case Sense::Eq: return "=";
        case Sense::Ge: return ">=";
    }
    return "?";
}

struct Triplet {
    int row = 0;
    int col = 0;
    double value = 0.0;

    friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Coordinate-form sparse matrix. Entries keep insertion order until
/// merge_duplicates() sorts them row-major and sums repeated positions.
struct SparseMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<Triplet> entries;

    SparseMatrix() = default;
    SparseMatrix(int r, int c) : rows(r), cols(c) {}

    void add(int row, int col, double value) {
        if (value != 0.0) entries.push_back({row, col, value});
    }
    std::size_t nonzeros() const { return entries.size(); }

    void merge_duplicates() {
        std::stable_sort(entries.begin(), entries.end(),
                         [](const Triplet& a, const Triplet& b) { return a.row != b.row ? a.row < b.row : a.col < b.col; });
        std::vector<Triplet> out;
        out.reserve(entries.size());
        for (const auto& e : entries) {
            if (!out.empty() && out.back().row == e.row && out.back().col == e.col)
                out.back().value += e.value;
            else
                out.push_back(e);
        }
        std::erase_if(out, [](const Triplet& e) { return e.value == 0.0; });
        entries = std::move(out);
    }

    /// y += M x
    void multiply_add(const std::vector<double>& x, std::vector<double>& y) const {
        for (const auto& e : entries) y[e.row] += e.value * x[e.col];
    }

    friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;
};

/// Compressed sparse column copy, built once for column-oriented access.
struct CscMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<int> start;  // size cols + 1
    std::vector<int> index;
    std::vector<double> value;

    CscMatrix() = default;
    explicit CscMatrix(const SparseMatrix& m) : rows(m.rows), cols(m.cols), start(m.cols + 1, 0) {
        for (const auto& e : m.entries) ++start[e.col + 1];
        for (int j = 0; j < cols; ++j) start[j + 1] += start[j];
        index.resize(m.entries.size());
        value.resize(m.entries.size());
        std::vector<int> fill(start.begin(), start.end() - 1);
        for (const auto& e : m.entries) {
            const int at = fill[e.col]++;
            index[at] = e.row;
            value[at] = e.value;
        }
        // Sum repeated (row, col) positions so every column lists each row once.
        std::vector<int> last(rows, -1);
        int out = 0;
        for (int j = 0; j < cols; ++j) {
            const int begin = out;
            for (int k = start[j]; k < start[j + 1]; ++k) {
                const int i = index[k];
                if (last[i] >= begin) {
                    value[last[i]] += value[k];
                    continue;
                }
                last[i] = out;
                index[out] = i;
                value[out++] = value[k];
            }
            start[j] = begin;
        }
        start[cols] = out;
        index.resize(out);
        value.resize(out);
    }

    /// The transpose; used to walk the matrix by rows.
    CscMatrix transposed() const {
        CscMatrix t;
        t.rows = cols;
        t.cols = rows;
        t.start.assign(rows + 1, 0);
        for (int i : index) ++t.start[i + 1];
        for (int i = 0; i < rows; ++i) t.start[i + 1] += t.start[i];
        t.index.resize(index.size());
        t.value.resize(value.size());
        std::vector<int> fill(t.start.begin(), t.start.end() - 1);
        for (int j = 0; j < cols; ++j)
            for (int k = start[j]; k < start[j + 1]; ++k) {
                const int at = fill[index[k]]++;
                t.index[at] = j;
                t.value[at] = value[k];
            }
        return t;
    }
};

}  // namespace scuc
