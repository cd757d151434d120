#pragma once

// Monte-Carlo solve-time trials and cross-environment comparison.
//
// Sign convention: percent_gain is positive when an environment is faster
// than the baseline (a gain) and negative when it is slower (a loss).
//
// Means and sample standard deviations cover successful trials only.
// Failed trials stay in the trial CSV with empty objective, rel_gap and
// nodes fields, and the report counts them separately.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scuc/compiler.hpp"
#include "scuc/errors.hpp"
#include "scuc/instance.hpp"
#include "scuc/mip.hpp"
#include "scuc/solution.hpp"

namespace scuc {

struct EnvironmentProfile {
    std::string name;
    int cpu_count = 1;
    double ram_gb = 0.0;
    bool ssd = false;
    std::string processor;

    friend bool operator==(const EnvironmentProfile&, const EnvironmentProfile&) = default;
};

struct TrialRecord {
    std::string env;
    int trial = 0;
    double compile_seconds = 0.0;
    double solve_seconds = 0.0;
    double objective = kInf;
    double rel_gap = kInf;
    long nodes = 0;
    std::string timestamp;  // UTC, ISO 8601, trial start
    bool ok = true;
    std::string error;
    bool deterministic_stub = false;
};

/// Solver under test. The default runs solve_mip; tests inject stubs.
struct TrialSolver {
    std::function<MipResult(const CompactModel&, const SolverOptions&)> solve;
    bool deterministic_stub = false;
};

struct ComparisonRow {
    std::string env;
    std::optional<EnvironmentProfile> profile;
    int trials = 0;  // successful
    int failed = 0;
    double mean_seconds = 0.0;
    double sd_seconds = 0.0;
    double percent_gain = 0.0;

    bool incomplete() const { return failed > 0; }
};

struct ComparisonReport {
    std::string baseline;
    std::vector<ComparisonRow> rows;  // descending percent_gain, then name
};

namespace detail {

inline void check_env_name(const std::string& name) {
    if (name.empty()) throw ArgumentError("environment name must not be empty");
    if (name.find_first_of(",\"\n\r=") != std::string::npos)
        throw ArgumentError("environment name '" + name + "' must not contain commas, quotes, '=' or newlines");
}

inline std::string num(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, const std::string& what) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw SchemaError(what, "not a number: '" + s + "'");
    }
}

}  // namespace detail

inline void validate_profile(const EnvironmentProfile& env) {
    detail::check_env_name(env.name);
    if (env.cpu_count < 1) throw ArgumentError("cpu_count must be at least 1");
    if (!(env.ram_gb >= 0.0) || !std::isfinite(env.ram_gb)) throw ArgumentError("ram_gb must be a nonnegative number");
    if (env.processor.find_first_of(",\n\r") != std::string::npos)
        throw ArgumentError("processor must not contain commas or newlines");
}

/// Runs n_trials timed solves one after another. Each trial compiles the
/// instance (timed as compile_seconds) and then solves it (solve_seconds,
/// monotonic clock). Solver exceptions and non-optimal statuses are recorded
/// as failed trials; the loop continues.
inline std::vector<TrialRecord> run_trials(const UcInstance& inst, const SolverOptions& options, int n_trials,
                                           const EnvironmentProfile& env, const TrialSolver& solver = {}) {
    if (n_trials < 1) throw ArgumentError("n_trials must be at least 1");
    validate_profile(env);
    require_valid(inst);
    using Clock = std::chrono::steady_clock;
    auto solve = solver.solve ? solver.solve
                              : [](const CompactModel& m, const SolverOptions& o) { return solve_mip(m, o); };

    std::vector<TrialRecord> out;
    out.reserve(n_trials);
    for (int i = 0; i < n_trials; ++i) {
        TrialRecord rec;
        rec.env = env.name;
        rec.trial = i;
        rec.deterministic_stub = solver.deterministic_stub;
        rec.timestamp = utc_timestamp(std::chrono::system_clock::now());
        try {
            const auto c0 = Clock::now();
            const CompactModel model = compile(inst);
            const auto c1 = Clock::now();
            rec.compile_seconds = std::chrono::duration<double>(c1 - c0).count();
            MipResult r;
            const auto s0 = Clock::now();
            try {
                r = solve(model, options);
            } catch (...) {
                rec.solve_seconds = std::chrono::duration<double>(Clock::now() - s0).count();
                throw;
            }
            rec.solve_seconds = std::chrono::duration<double>(Clock::now() - s0).count();
            if (r.status != MipStatus::OptimalWithinGap) {
                rec.ok = false;
                rec.error = to_string(r.status);
            } else if (r.rel_gap_achieved > options.rel_gap) {
                rec.ok = false;
                rec.error = "gap contract violated";
            } else if (r.has_incumbent() && !solver.deterministic_stub) {
                const auto ev = evaluate(model, r.z, r.y);
                if (ev.max_residual() > kIncumbentResidualTolerance || ev.integrality > kIntegralityTolerance) {
                    rec.ok = false;
                    rec.error = "incumbent failed replay";
                }
            }
            if (rec.ok) {
                rec.objective = r.objective;
                rec.rel_gap = r.rel_gap_achieved;
                rec.nodes = r.nodes_explored;
            }
        } catch (const std::exception& e) {
            rec.ok = false;
            rec.error = e.what();
        }
        out.push_back(std::move(rec));
    }
    return out;
}

/// 100 (baseline - env) / baseline; positive means env is faster.
inline double percent_gain(double baseline_mean, double env_mean) {
    if (!(baseline_mean > 0.0)) throw ArgumentError("baseline mean must be positive");
    return 100.0 * (baseline_mean - env_mean) / baseline_mean;
}

/// Single-pass mean and sample standard deviation.
struct RunningStats {
    long n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / static_cast<double>(n);
        m2 += d * (x - mean);
    }
    double sd() const { return n > 1 ? std::sqrt(m2 / static_cast<double>(n - 1)) : 0.0; }
};

inline ComparisonReport compare(const std::vector<TrialRecord>& records, const std::string& baseline,
                                const std::vector<EnvironmentProfile>& profiles = {}) {
    std::map<std::string, std::vector<double>> times;
    std::map<std::string, int> failed;
    for (const auto& r : records) {
        auto& v = times[r.env];
        if (r.ok)
            v.push_back(r.solve_seconds);
        else
            ++failed[r.env];
    }
    if (!times.count(baseline)) throw MissingBaselineError("baseline environment '" + baseline + "' has no records");

    ComparisonReport rep;
    rep.baseline = baseline;
    for (auto& [env, v] : times) {
        if (v.empty()) throw EmptyEnvironmentError("environment '" + env + "' has no successful trials");
        // Sorting makes the sums independent of trial order.
        std::sort(v.begin(), v.end());
        RunningStats s;
        for (double x : v) s.add(x);
        ComparisonRow row;
        row.env = env;
        row.trials = static_cast<int>(s.n);
        row.failed = failed[env];
        row.mean_seconds = s.mean;
        row.sd_seconds = s.sd();
        for (const auto& p : profiles)
            if (p.name == env) row.profile = p;
        rep.rows.push_back(std::move(row));
    }
    double base_mean = 0.0;
    for (const auto& row : rep.rows)
        if (row.env == baseline) base_mean = row.mean_seconds;
    for (auto& row : rep.rows) row.percent_gain = percent_gain(base_mean, row.mean_seconds);
    std::sort(rep.rows.begin(), rep.rows.end(), [](const ComparisonRow& a, const ComparisonRow& b) {
        if (a.percent_gain != b.percent_gain) return a.percent_gain > b.percent_gain;
        return a.env < b.env;
    });
    return rep;
}

// ---- CSV ---------------------------------------------------------------

inline constexpr const char* kTrialCsvHeader = "env,trial,compile_seconds,solve_seconds,objective,rel_gap,nodes,timestamp";
inline constexpr const char* kReportCsvHeader = "env,cpu,ram_gb,trials,mean_s,sd_s,percent_gain";

/// Trial CSV. With a profile, a leading `# env=...,cpu=...` comment line
/// carries the environment metadata for compare.
inline std::string write_trials_csv(const std::vector<TrialRecord>& records,
                                    const std::optional<EnvironmentProfile>& env = std::nullopt) {
    std::ostringstream out;
    if (env)
        out << "# env=" << env->name << ",cpu=" << env->cpu_count << ",ram_gb=" << detail::num(env->ram_gb)
            << ",ssd=" << (env->ssd ? "true" : "false") << ",processor=" << env->processor << "\n";
    out << kTrialCsvHeader << "\n";
    for (const auto& r : records) {
        out << r.env << "," << r.trial << "," << detail::num(r.compile_seconds) << "," << detail::num(r.solve_seconds)
            << ",";
        if (r.ok) out << detail::num(r.objective) << "," << detail::num(r.rel_gap) << "," << r.nodes;
        else out << ",,";
        out << "," << r.timestamp << "\n";
    }
    return out.str();
}

struct TrialCsv {
    std::optional<EnvironmentProfile> profile;
    std::vector<TrialRecord> records;
};

inline EnvironmentProfile parse_profile_comment(const std::string& body) {
    EnvironmentProfile p;
    bool named = false;
    for (const auto& field : detail::split_csv(body)) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) throw SchemaError("profile", "expected key=value, got '" + field + "'");
        const auto key = field.substr(0, eq);
        const auto val = field.substr(eq + 1);
        if (key == "env") {
            p.name = val;
            named = true;
        } else if (key == "cpu") {
            p.cpu_count = static_cast<int>(detail::parse_double(val, "cpu"));
        } else if (key == "ram_gb") {
            p.ram_gb = detail::parse_double(val, "ram_gb");
        } else if (key == "ssd") {
            p.ssd = val == "true" || val == "1";
        } else if (key == "processor") {
            p.processor = val;
        }
    }
    if (!named) throw SchemaError("profile", "missing env=");
    return p;
}

inline TrialCsv read_trials_csv(const std::string& text) {
    TrialCsv out;
    std::istringstream in(text);
    std::string line;
    bool header = false;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto body = line.substr(line.find_first_not_of("# "));
            if (!header && body.rfind("env=", 0) == 0) out.profile = parse_profile_comment(body);
            continue;
        }
        if (!header) {
            if (line != kTrialCsvHeader) throw SchemaError("header", "expected '" + std::string(kTrialCsvHeader) + "'");
            header = true;
            continue;
        }
        const auto f = detail::split_csv(line);
        const std::string where = "line " + std::to_string(line_no);
        if (f.size() != 8) throw SchemaError(where, "expected 8 fields");
        TrialRecord r;
        r.env = f[0];
        r.trial = static_cast<int>(detail::parse_double(f[1], where + ".trial"));
        r.compile_seconds = detail::parse_double(f[2], where + ".compile_seconds");
        r.solve_seconds = detail::parse_double(f[3], where + ".solve_seconds");
        r.ok = !f[4].empty();
        if (r.ok) {
            r.objective = detail::parse_double(f[4], where + ".objective");
            r.rel_gap = detail::parse_double(f[5], where + ".rel_gap");
            r.nodes = static_cast<long>(detail::parse_double(f[6], where + ".nodes"));
        } else {
            r.error = "failed";
        }
        r.timestamp = f[7];
        out.records.push_back(std::move(r));
    }
    if (!header) throw SchemaError("header", "no trial CSV header");
    return out;
}

inline std::string write_report_csv(const ComparisonReport& rep) {
    std::ostringstream out;
    out << kReportCsvHeader << "\n";
    for (const auto& r : rep.rows) {
        out << r.env << ",";
        if (r.profile) out << r.profile->cpu_count << "," << detail::num(r.profile->ram_gb);
        else out << ",";
        out << "," << r.trials << "," << detail::num(r.mean_seconds) << "," << detail::num(r.sd_seconds) << ","
            << detail::num(r.percent_gain) << "\n";
    }
    return out.str();
}

/// Two whitespace-separated columns (quoted label, percent gain), one bar
/// per environment, in report order.
inline std::string write_plot_data(const ComparisonReport& rep) {
    std::ostringstream out;
    out << "# baseline=" << rep.baseline << "\n# env percent_gain\n";
    for (const auto& r : rep.rows) out << "\"" << r.env << "\" " << detail::num(r.percent_gain) << "\n";
    return out.str();
}

}  // namespace scuc
