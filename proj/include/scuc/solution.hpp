#pragma once

// Solution documents: the JSON form of a solve result, carrying both the
// per-generator schedule and the raw z/y vectors so a solution can be
// replayed through evaluate() without the instance.
//
// Non-finite numbers (an empty incumbent, an unknown bound) are written as
// null and read back as the matching infinity.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <string>
#include <vector>

#include <json.hpp>

#include "scuc/compiler.hpp"
#include "scuc/errors.hpp"
#include "scuc/instance.hpp"
#include "scuc/mip.hpp"

namespace scuc {

/// UTC, ISO 8601 with milliseconds: 2024-01-02T03:04:05.678Z
inline std::string utc_timestamp(std::chrono::system_clock::time_point tp) {
    const auto secs = std::chrono::time_point_cast<std::chrono::seconds>(tp);
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(tp - secs).count();
    const std::time_t tt = std::chrono::system_clock::to_time_t(secs);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    char buf[40];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
    char out[48];
    std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
    return out;
}

struct GeneratorSchedule {
    std::string id;
    std::vector<int> u;
    std::vector<double> p;

    friend bool operator==(const GeneratorSchedule&, const GeneratorSchedule&) = default;
};

struct SolutionDocument {
    std::string instance;
    std::string status;
    double objective = kInf;
    double best_bound = -kInf;
    double rel_gap = kInf;
    long nodes_explored = 0;
    double compile_seconds = 0.0;
    double solve_seconds = 0.0;
    std::vector<GeneratorSchedule> generators;
    std::vector<double> z;
    std::vector<double> y;

    friend bool operator==(const SolutionDocument&, const SolutionDocument&) = default;
};

inline SolutionDocument make_solution_document(const UcInstance& inst, const CompactModel& model, const MipResult& r,
                                               double compile_seconds = 0.0) {
    SolutionDocument doc;
    doc.instance = inst.name;
    doc.status = to_string(r.status);
    doc.objective = r.objective;
    doc.best_bound = r.best_bound;
    doc.rel_gap = r.rel_gap_achieved;
    doc.nodes_explored = r.nodes_explored;
    doc.compile_seconds = compile_seconds;
    doc.solve_seconds = r.solve_seconds;
    doc.z = r.z;
    doc.y = r.y;
    if (!r.has_incumbent() || !model.index.has_uc_layout()) return doc;
    const auto& ix = model.index;
    const int nz = model.n_z();
    for (int g = 0; g < static_cast<int>(inst.generators.size()); ++g) {
        GeneratorSchedule s;
        s.id = inst.generators[g].id;
        for (int t = 0; t < inst.horizon_T; ++t) {
            s.u.push_back(r.z[ix.u(g, t)] > 0.5 ? 1 : 0);
            s.p.push_back(r.y[ix.p(g, t) - nz]);
        }
        doc.generators.push_back(std::move(s));
    }
    return doc;
}

namespace detail {

inline nlohmann::ordered_json finite_or_null(double v) {
    if (std::isfinite(v)) return v;
    return nullptr;
}

inline double number_or(const nlohmann::json& j, const char* key, double if_null) {
    if (!j.contains(key)) throw SchemaError(key, "missing field");
    const auto& v = j.at(key);
    if (v.is_null()) return if_null;
    if (!v.is_number()) throw SchemaError(key, "expected a number or null");
    return v.get<double>();
}

}  // namespace detail

inline nlohmann::ordered_json solution_to_json(const SolutionDocument& d) {
    using detail::finite_or_null;
    nlohmann::ordered_json j;
    j["instance"] = d.instance;
    j["status"] = d.status;
    j["objective"] = finite_or_null(d.objective);
    j["best_bound"] = finite_or_null(d.best_bound);
    j["rel_gap"] = finite_or_null(d.rel_gap);
    j["nodes_explored"] = d.nodes_explored;
    j["compile_seconds"] = d.compile_seconds;
    j["solve_seconds"] = d.solve_seconds;
    auto gens = nlohmann::ordered_json::array();
    for (const auto& g : d.generators) {
        nlohmann::ordered_json e;
        e["id"] = g.id;
        e["u"] = g.u;
        e["p"] = g.p;
        gens.push_back(std::move(e));
    }
    j["generators"] = std::move(gens);
    j["z"] = d.z;
    j["y"] = d.y;
    return j;
}

inline std::string serialize_solution(const SolutionDocument& d, int indent = 2) {
    return solution_to_json(d).dump(indent) + "\n";
}

inline SolutionDocument solution_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw SchemaError("", "solution document must be an object");
    SolutionDocument d;
    try {
        d.instance = j.at("instance").get<std::string>();
        d.status = j.at("status").get<std::string>();
        d.objective = detail::number_or(j, "objective", kInf);
        d.best_bound = detail::number_or(j, "best_bound", -kInf);
        d.rel_gap = detail::number_or(j, "rel_gap", kInf);
        d.nodes_explored = j.at("nodes_explored").get<long>();
        d.compile_seconds = j.at("compile_seconds").get<double>();
        d.solve_seconds = j.at("solve_seconds").get<double>();
        for (const auto& g : j.at("generators"))
            d.generators.push_back({g.at("id").get<std::string>(), g.at("u").get<std::vector<int>>(),
                                    g.at("p").get<std::vector<double>>()});
        d.z = j.at("z").get<std::vector<double>>();
        d.y = j.at("y").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError("", std::string("solution document: ") + e.what());
    }
    if (!mip_status_from_string(d.status)) throw SchemaError("status", "unknown status '" + d.status + "'");
    return d;
}

inline SolutionDocument parse_solution(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("", std::string("malformed JSON: ") + e.what());
    }
    return solution_from_json(j);
}

}  // namespace scuc
