// scuc: command-line front end.
//
// Exit codes: 0 success, 1 bad input (usage, schema, validation), 2 solver
// failure, 3 I/O error. Relative --out paths land under $SCUC_OUTPUT_DIR
// when it is set.

#include <CLI11.hpp>
#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <unistd.h>
#include <vector>

#include "scuc/benchmark.hpp"
#include "scuc/compiler.hpp"
#include "scuc/errors.hpp"
#include "scuc/http_service.hpp"
#include "scuc/instance.hpp"
#include "scuc/mip.hpp"
#include "scuc/mps.hpp"
#include "scuc/service.hpp"
#include "scuc/solution.hpp"
#include "scuc/synth.hpp"

namespace fs = std::filesystem;
using namespace scuc;

namespace {

enum Exit { kOk = 0, kBadInput = 1, kSolverFailed = 2, kIoFailed = 3 };

struct SolverFailure : Error {
    using Error::Error;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw IoError("read failed: " + path);
    return ss.str();
}

fs::path output_path(const std::string& out, const std::string& fallback) {
    fs::path p = out.empty() ? fs::path(fallback) : fs::path(out);
    if (p.is_relative())
        if (const char* dir = std::getenv("SCUC_OUTPUT_DIR"); dir && *dir) p = fs::path(dir) / p;
    return p;
}

// Temp file in the target directory, then rename over the target.
void write_atomic(const fs::path& path, const std::string& body) {
    std::error_code ec;
    if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
    fs::path tmp = path;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << body;
        out.flush();
        if (!out) {
            out.close();
            fs::remove(tmp, ec);
            throw IoError("write failed: " + tmp.string());
        }
    }
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename into " + path.string());
    }
}

UcInstance load_instance(const std::string& path) {
    auto inst = parse_instance(read_file(path));
    require_valid(inst);
    return inst;
}

std::string stem(const std::string& path) { return fs::path(path).stem().string(); }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

struct SolveArgs {
    std::string instance, out, log;
    double gap = SolverOptions{}.rel_gap;
    double time_limit = 0.0;
    int workers = 1;
};

int cmd_solve(const SolveArgs& a) {
    auto inst = load_instance(a.instance);
    SolverOptions opt;
    opt.rel_gap = a.gap;
    if (a.time_limit > 0) opt.time_limit = a.time_limit;
    opt.worker_count = a.workers;
    validate_options(opt);

    const auto t0 = std::chrono::steady_clock::now();
    auto model = compile(inst);
    const double compile_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    std::string log;
    MipControl ctl;
    if (!a.log.empty()) ctl.on_node = [&](const NodeEvent& e) { log += format_event(e) + "\n"; };
    auto r = solve_mip(model, opt, ctl);
    auto doc = make_solution_document(inst, model, r, compile_s);
    write_atomic(output_path(a.out, stem(a.instance) + ".solution.json"), serialize_solution(doc));
    if (!a.log.empty()) write_atomic(output_path(a.log, stem(a.instance) + ".events.log"), log);

    std::cout << "status " << to_string(r.status) << " objective " << fmt(r.objective) << " bound "
              << fmt(r.best_bound) << " gap " << fmt(r.rel_gap_achieved) << " nodes " << r.nodes_explored
              << " compile_s " << fmt(compile_s) << " solve_s " << fmt(r.solve_seconds) << "\n";
    if (r.status != MipStatus::OptimalWithinGap) throw SolverFailure(std::string("solve ended ") + to_string(r.status));
    return kOk;
}

int cmd_export(const std::string& instance, const std::string& out) {
    auto model = compile(load_instance(instance));
    write_atomic(output_path(out, stem(instance) + ".mps"), export_mps(model));
    return kOk;
}

struct SynthArgs {
    int gens = 0, buses = 0, lines = 0, horizon = 24;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_synth(const SynthArgs& a) {
    auto inst = synth_instance(a.gens, a.buses, a.lines, a.horizon, a.seed);
    const std::string name = "synth_g" + std::to_string(a.gens) + "_b" + std::to_string(a.buses) + "_l" +
                             std::to_string(a.lines) + "_t" + std::to_string(a.horizon) + "_s" +
                             std::to_string(a.seed) + ".json";
    write_atomic(output_path(a.out, name), serialize_instance(inst));
    return kOk;
}

struct BenchArgs {
    std::string instance, out;
    int trials = 100;
    EnvironmentProfile env;
    double gap = SolverOptions{}.rel_gap;
    double time_limit = 0.0;
    int workers = 1;
};

int cmd_bench(BenchArgs a) {
    auto inst = load_instance(a.instance);
    SolverOptions opt;
    opt.rel_gap = a.gap;
    if (a.time_limit > 0) opt.time_limit = a.time_limit;
    opt.worker_count = a.workers;
    validate_options(opt);
    validate_profile(a.env);

    auto records = run_trials(inst, opt, a.trials, a.env);
    write_atomic(output_path(a.out, a.env.name + ".csv"), write_trials_csv(records, a.env));

    RunningStats stats;
    int failed = 0;
    for (const auto& r : records) {
        if (r.ok)
            stats.add(r.solve_seconds);
        else
            ++failed;
    }
    std::cout << "env " << a.env.name << " trials " << records.size() << " failed " << failed;
    if (stats.n > 0) std::cout << " mean_s " << fmt(stats.mean) << " sd_s " << fmt(stats.sd());
    std::cout << "\n";
    if (failed > 0) throw SolverFailure(std::to_string(failed) + " of " + std::to_string(records.size()) + " trials failed");
    return kOk;
}

int cmd_compare(const std::string& baseline, const std::vector<std::string>& files, const std::string& out,
                const std::string& plot) {
    std::vector<TrialRecord> all;
    std::map<std::string, EnvironmentProfile> profiles;
    for (const auto& f : files) {
        TrialCsv csv;
        try {
            csv = read_trials_csv(read_file(f));
        } catch (const SchemaError& e) {
            throw SchemaError(e.path, f + ": " + e.what());
        }
        if (csv.profile) profiles[csv.profile->name] = *csv.profile;
        all.insert(all.end(), csv.records.begin(), csv.records.end());
    }
    std::vector<EnvironmentProfile> declared;
    for (auto& [name, prof] : profiles) declared.push_back(prof);
    auto rep = compare(all, baseline, declared);
    const std::string csv = write_report_csv(rep);
    write_atomic(output_path(out, "report.csv"), csv);
    if (!plot.empty()) write_atomic(output_path(plot, "report.dat"), write_plot_data(rep));
    std::cout << csv;
    return kOk;
}

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop = true; }

int cmd_serve(const std::string& host, int port, int workers, int depth) {
    ServiceConfig cfg;
    cfg.workers = workers;
    cfg.queue_depth = static_cast<std::size_t>(depth);
    SolveService service(cfg);
    HttpService http(service);
    const int bound = http.bind(host, port);
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    std::thread watcher([&] {
        while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        http.stop();
    });
    std::cout << "listening on " << host << ":" << bound << std::endl;
    http.run();
    g_stop = true;
    watcher.join();
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Security-constrained unit commitment: compile, solve, benchmark, serve."};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    SolveArgs solve;
    auto* s = app.add_subcommand("solve", "Solve an instance to the requested gap");
    s->add_option("instance", solve.instance, "Instance JSON")->required();
    s->add_option("--gap", solve.gap, "Relative optimality gap")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    s->add_option("--time-limit", solve.time_limit, "Seconds; 0 means none")->check(CLI::NonNegativeNumber);
    s->add_option("--workers", solve.workers, "Branch-and-bound threads")->capture_default_str()->check(CLI::PositiveNumber);
    s->add_option("--out", solve.out, "Solution JSON path");
    s->add_option("--log", solve.log, "Node event log path");

    std::string mps_instance, mps_out;
    auto* e = app.add_subcommand("export-mps", "Write the compiled model as free-format MPS");
    e->add_option("instance", mps_instance, "Instance JSON")->required();
    e->add_option("--out", mps_out, "MPS path");

    SynthArgs synth;
    auto* y = app.add_subcommand("synth", "Generate a random feasible instance");
    y->add_option("--gens", synth.gens, "Generators")->required()->check(CLI::PositiveNumber);
    y->add_option("--buses", synth.buses, "Buses")->required()->check(CLI::PositiveNumber);
    y->add_option("--lines", synth.lines, "Lines")->required()->check(CLI::NonNegativeNumber);
    y->add_option("--horizon", synth.horizon, "Periods")->capture_default_str()->check(CLI::PositiveNumber);
    y->add_option("--seed", synth.seed, "Random seed")->capture_default_str();
    y->add_option("--out", synth.out, "Instance JSON path");

    BenchArgs bench;
    auto* b = app.add_subcommand("bench", "Time repeated solves in one environment");
    b->add_option("instance", bench.instance, "Instance JSON")->required();
    b->add_option("--trials", bench.trials, "Number of trials")->capture_default_str()->check(CLI::PositiveNumber);
    b->add_option("--env-name", bench.env.name, "Environment name")->required();
    b->add_option("--cpus", bench.env.cpu_count, "CPU count")->capture_default_str()->check(CLI::PositiveNumber);
    b->add_option("--ram", bench.env.ram_gb, "RAM in GB")->check(CLI::NonNegativeNumber);
    b->add_flag("--ssd", bench.env.ssd, "Storage is SSD");
    b->add_option("--processor", bench.env.processor, "Processor family");
    b->add_option("--gap", bench.gap, "Relative optimality gap")->capture_default_str()->check(CLI::Range(0.0, 1.0));
    b->add_option("--time-limit", bench.time_limit, "Seconds per trial; 0 means none")->check(CLI::NonNegativeNumber);
    b->add_option("--workers", bench.workers, "Branch-and-bound threads")->capture_default_str()->check(CLI::PositiveNumber);
    b->add_option("--out", bench.out, "Trial CSV path");

    std::string baseline, report_out, plot_out;
    std::vector<std::string> csvs;
    auto* c = app.add_subcommand("compare", "Percent gain of each environment against a baseline");
    c->add_option("--baseline", baseline, "Baseline environment name")->required();
    c->add_option("files", csvs, "Trial CSV files")->required();
    c->add_option("--out", report_out, "Report CSV path");
    c->add_option("--plot", plot_out, "Plot data path (env percent_gain)");

    std::string host = "127.0.0.1";
    int port = 8080, serve_workers = 1, depth = 64;
    auto* v = app.add_subcommand("serve", "Run the HTTP job service");
    v->add_option("--host", host, "Listen address")->capture_default_str();
    v->add_option("--port", port, "Port; 0 picks a free one")->capture_default_str()->check(CLI::Range(0, 65535));
    v->add_option("--workers", serve_workers, "Worker pool size")->capture_default_str()->check(CLI::PositiveNumber);
    v->add_option("--queue-depth", depth, "Queued job limit")->capture_default_str()->check(CLI::PositiveNumber);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::CallForAllHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        std::cerr << "error: " << ex.what() << "\n\n";
        auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
        std::cerr << sub->help();
        return kBadInput;
    }

    try {
        if (*s) return cmd_solve(solve);
        if (*e) return cmd_export(mps_instance, mps_out);
        if (*y) return cmd_synth(synth);
        if (*b) return cmd_bench(bench);
        if (*c) return cmd_compare(baseline, csvs, report_out, plot_out);
        if (*v) return cmd_serve(host, port, serve_workers, depth);
    } catch (const ValidationError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        for (const auto& vi : ex.violations) std::cerr << "  " << vi.path << ": " << vi.message << "\n";
        return kBadInput;
    } catch (const SchemaError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kBadInput;
    } catch (const ArgumentError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kBadInput;
    } catch (const MissingBaselineError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kBadInput;
    } catch (const EmptyEnvironmentError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kBadInput;
    } catch (const IoError& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kIoFailed;
    } catch (const fs::filesystem_error& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kIoFailed;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kSolverFailed;
    }
    return kBadInput;
}
