#pragma once

// Power-system instance types, validation, and the canonical JSON document.
//
// Units are fixed throughout: MW for power, hours for period length, $/MWh
// for marginal costs and $ for fixed costs.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "scuc/errors.hpp"

namespace scuc {

struct CostSegment {
    double width = 0.0;          // MW
    double marginal_cost = 0.0;  // $/MWh

    friend bool operator==(const CostSegment&, const CostSegment&) = default;
};

struct Generator {
    std::string id;
    std::string bus;
    double p_min = 0.0;
    double p_max = 0.0;
    double ramp_up = 0.0;
    double ramp_down = 0.0;
    double startup_ramp = 0.0;
    double shutdown_ramp = 0.0;
    int min_up = 1;
    int min_down = 1;
    double no_load_cost = 0.0;  // $ per period, includes the cost of running at p_min
    double startup_cost = 0.0;
    double shutdown_cost = 0.0;
    std::vector<CostSegment> segments;
    bool init_on = false;
    double init_power = 0.0;
    int init_periods_in_state = 1;

    friend bool operator==(const Generator&, const Generator&) = default;
};

struct Bus {
    std::string id;
    bool is_reference = false;

    friend bool operator==(const Bus&, const Bus&) = default;
};

struct Line {
    std::string id;
    std::string from_bus;
    std::string to_bus;
    double susceptance = 1.0;
    double flow_limit = 0.0;

    friend bool operator==(const Line&, const Line&) = default;
};

struct UcInstance {
    std::string name;
    int horizon_T = 1;
    double period_hours = 1.0;
    std::vector<Bus> buses;
    std::vector<Line> lines;
    std::vector<Generator> generators;
    /// demand[b][t] in MW, rows ordered like `buses`.
    std::vector<std::vector<double>> demand;

    int bus_index(const std::string& id) const {
        for (std::size_t i = 0; i < buses.size(); ++i)
            if (buses[i].id == id) return static_cast<int>(i);
        return -1;
    }
    int reference_bus() const {
        for (std::size_t i = 0; i < buses.size(); ++i)
            if (buses[i].is_reference) return static_cast<int>(i);
        return -1;
    }

    friend bool operator==(const UcInstance&, const UcInstance&) = default;
};

struct SolverOptions {
    double rel_gap = 0.005;
    std::optional<double> time_limit;  // seconds
    int worker_count = 1;
    std::uint64_t seed = 0;
};

inline constexpr double kSegmentWidthTolerance = 1e-6;

namespace detail {

inline bool finite(double x) { return std::isfinite(x); }

inline std::string gen_path(std::size_t g) { return "generators[" + std::to_string(g) + "]"; }

}  // namespace detail

/// Every violated invariant; empty iff the instance is valid.
inline std::vector<Violation> validate_instance(const UcInstance& inst) {
    using detail::finite;
    std::vector<Violation> out;
    auto bad = [&](std::string path, std::string msg) { out.push_back({std::move(path), std::move(msg)}); };

    if (inst.horizon_T < 1) bad("horizon_T", "must be >= 1");
    if (!(inst.period_hours > 0.0) || !finite(inst.period_hours)) bad("period_hours", "must be > 0");

    std::set<std::string> bus_ids;
    int refs = 0;
    if (inst.buses.empty()) bad("buses", "at least one bus is required");
    for (std::size_t b = 0; b < inst.buses.size(); ++b) {
        if (!bus_ids.insert(inst.buses[b].id).second)
            bad("buses[" + std::to_string(b) + "].id", "duplicate bus id '" + inst.buses[b].id + "'");
        if (inst.buses[b].is_reference) ++refs;
    }
    if (!inst.buses.empty() && refs != 1)
        bad("buses", "exactly one reference bus required, found " + std::to_string(refs));

    std::set<std::string> line_ids;
    for (std::size_t l = 0; l < inst.lines.size(); ++l) {
        const auto& ln = inst.lines[l];
        const std::string p = "lines[" + std::to_string(l) + "]";
        if (!line_ids.insert(ln.id).second) bad(p + ".id", "duplicate line id '" + ln.id + "'");
        if (ln.from_bus == ln.to_bus) bad(p, "from_bus equals to_bus");
        if (!bus_ids.count(ln.from_bus)) bad(p + ".from_bus", "unknown bus '" + ln.from_bus + "'");
        if (!bus_ids.count(ln.to_bus)) bad(p + ".to_bus", "unknown bus '" + ln.to_bus + "'");
        if (!(ln.susceptance > 0.0) || !finite(ln.susceptance)) bad(p + ".susceptance", "must be > 0");
        if (!(ln.flow_limit > 0.0) || !finite(ln.flow_limit)) bad(p + ".flow_limit", "must be > 0");
    }

    std::set<std::string> gen_ids;
    if (inst.generators.empty()) bad("generators", "at least one generator is required");
    for (std::size_t g = 0; g < inst.generators.size(); ++g) {
        const auto& gen = inst.generators[g];
        const std::string p = detail::gen_path(g);
        if (!gen_ids.insert(gen.id).second) bad(p + ".id", "duplicate generator id '" + gen.id + "'");
        if (!bus_ids.count(gen.bus)) bad(p + ".bus", "unknown bus '" + gen.bus + "'");
        for (auto [name, v] : {std::pair{"p_min", gen.p_min}, {"p_max", gen.p_max}, {"ramp_up", gen.ramp_up},
                               {"ramp_down", gen.ramp_down}, {"startup_ramp", gen.startup_ramp},
                               {"shutdown_ramp", gen.shutdown_ramp}, {"init_power", gen.init_power}})
            if (!finite(v) || v < 0.0) bad(p + "." + name, "must be finite and >= 0");
        for (auto [name, v] : {std::pair{"no_load_cost", gen.no_load_cost}, {"startup_cost", gen.startup_cost},
                               {"shutdown_cost", gen.shutdown_cost}})
            if (!finite(v)) bad(p + "." + name, "must be finite");
        if (gen.p_min > gen.p_max) bad(p, "generator '" + gen.id + "': p_min exceeds p_max");
        if (gen.min_up < 1) bad(p + ".min_up", "must be >= 1");
        if (gen.min_down < 1) bad(p + ".min_down", "must be >= 1");
        if (gen.init_periods_in_state < 1) bad(p + ".init_periods_in_state", "must be >= 1");

        if (gen.segments.empty()) bad(p + ".segments", "at least one cost segment is required");
        double width_sum = 0.0;
        bool widths_ok = true;
        for (std::size_t k = 0; k < gen.segments.size(); ++k) {
            const auto& s = gen.segments[k];
            if (!finite(s.width) || s.width < 0.0) {
                bad(p + ".segments[" + std::to_string(k) + "].width", "must be finite and >= 0");
                widths_ok = false;
            }
            if (!finite(s.marginal_cost))
                bad(p + ".segments[" + std::to_string(k) + "].marginal_cost", "must be finite");
            width_sum += s.width;
        }
        if (widths_ok && !gen.segments.empty() &&
            std::abs(width_sum - (gen.p_max - gen.p_min)) > kSegmentWidthTolerance)
            bad(p + ".segments", "generator '" + gen.id + "': segment widths sum to " + std::to_string(width_sum) +
                                     ", expected p_max - p_min = " + std::to_string(gen.p_max - gen.p_min));
        for (std::size_t k = 1; k < gen.segments.size(); ++k)
            if (gen.segments[k].marginal_cost < gen.segments[k - 1].marginal_cost) {
                bad(p + ".segments", "generator '" + gen.id + "': marginal costs must be nondecreasing (convexity)");
                break;
            }

        if (!gen.init_on && gen.init_power != 0.0)
            bad(p + ".init_power", "generator '" + gen.id + "' is initially off, init_power must be 0");
        if (gen.init_on && (gen.init_power < gen.p_min || gen.init_power > gen.p_max))
            bad(p + ".init_power", "generator '" + gen.id + "' is initially on, init_power must lie in [p_min, p_max]");
    }

    if (inst.demand.size() != inst.buses.size())
        bad("demand", "expected " + std::to_string(inst.buses.size()) + " bus rows, found " +
                          std::to_string(inst.demand.size()));
    for (std::size_t b = 0; b < inst.demand.size(); ++b) {
        const std::string key = b < inst.buses.size() ? inst.buses[b].id : std::to_string(b);
        if (static_cast<int>(inst.demand[b].size()) != inst.horizon_T)
            bad("demand." + key, "expected " + std::to_string(inst.horizon_T) + " periods, found " +
                                     std::to_string(inst.demand[b].size()));
        for (double d : inst.demand[b])
            if (!finite(d) || d < 0.0) {
                bad("demand." + key, "entries must be finite and >= 0");
                break;
            }
    }

    // Connectivity from the reference bus, only meaningful once the bus set is sane.
    const int ref = inst.reference_bus();
    if (inst.buses.size() > 1 && refs == 1) {
        std::map<std::string, std::vector<std::string>> adj;
        for (const auto& ln : inst.lines) {
            adj[ln.from_bus].push_back(ln.to_bus);
            adj[ln.to_bus].push_back(ln.from_bus);
        }
        std::set<std::string> seen{inst.buses[ref].id};
        std::queue<std::string> frontier;
        frontier.push(inst.buses[ref].id);
        while (!frontier.empty()) {
            auto cur = frontier.front();
            frontier.pop();
            for (const auto& nb : adj[cur])
                if (seen.insert(nb).second) frontier.push(nb);
        }
        for (const auto& bus : inst.buses)
            if (!seen.count(bus.id)) {
                out.push_back({"buses", "bus '" + bus.id + "' is not reachable from the reference bus", true});
                break;
            }
    }
    return out;
}

/// Throws DisconnectedNetworkError or ValidationError unless the instance is valid.
inline void require_valid(const UcInstance& inst) {
    auto v = validate_instance(inst);
    if (v.empty()) return;
    for (const auto& x : v)
        if (x.connectivity) throw DisconnectedNetworkError(std::move(v));
    throw ValidationError(std::move(v));
}

// ---------------------------------------------------------------------------
// Canonical JSON document

namespace detail {

using ojson = nlohmann::ordered_json;

class Reader {
   public:
    static const nlohmann::json& field(const nlohmann::json& obj, const std::string& path, const char* key) {
        auto it = obj.find(key);
        if (it == obj.end()) throw SchemaError(path.empty() ? key : path + "." + key, "missing required field");
        return *it;
    }

    static void only_keys(const nlohmann::json& obj, const std::string& path, std::initializer_list<const char*> keys) {
        if (!obj.is_object()) throw SchemaError(path, "expected an object");
        for (auto it = obj.begin(); it != obj.end(); ++it) {
            bool known = false;
            for (const char* k : keys) known = known || it.key() == k;
            if (!known) throw SchemaError(path.empty() ? it.key() : path + "." + it.key(), "unknown field");
        }
        for (const char* k : keys) field(obj, path, k);
    }

    static double number(const nlohmann::json& obj, const std::string& path, const char* key) {
        const auto& v = field(obj, path, key);
        if (!v.is_number()) throw SchemaError(join(path, key), "expected a number");
        return v.get<double>();
    }
    static int integer(const nlohmann::json& obj, const std::string& path, const char* key) {
        const auto& v = field(obj, path, key);
        if (!v.is_number_integer()) throw SchemaError(join(path, key), "expected an integer");
        const auto x = v.get<std::int64_t>();
        if (x < INT32_MIN || x > INT32_MAX) throw SchemaError(join(path, key), "integer out of range");
        return static_cast<int>(x);
    }
    static bool boolean(const nlohmann::json& obj, const std::string& path, const char* key) {
        const auto& v = field(obj, path, key);
        if (!v.is_boolean()) throw SchemaError(join(path, key), "expected a boolean");
        return v.get<bool>();
    }
    static std::string string(const nlohmann::json& obj, const std::string& path, const char* key) {
        const auto& v = field(obj, path, key);
        if (!v.is_string()) throw SchemaError(join(path, key), "expected a string");
        return v.get<std::string>();
    }
    static const nlohmann::json& array(const nlohmann::json& obj, const std::string& path, const char* key) {
        const auto& v = field(obj, path, key);
        if (!v.is_array()) throw SchemaError(join(path, key), "expected an array");
        return v;
    }

    static std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }
};

}  // namespace detail

/// Builds an instance from an already-parsed JSON value without validating invariants.
inline UcInstance instance_from_json(const nlohmann::json& doc) {
    using R = detail::Reader;
    R::only_keys(doc, "", {"name", "horizon_T", "period_hours", "buses", "lines", "generators", "demand"});
    UcInstance inst;
    inst.name = R::string(doc, "", "name");
    inst.horizon_T = R::integer(doc, "", "horizon_T");
    inst.period_hours = R::number(doc, "", "period_hours");

    const auto& buses = R::array(doc, "", "buses");
    for (std::size_t i = 0; i < buses.size(); ++i) {
        const std::string p = "buses[" + std::to_string(i) + "]";
        R::only_keys(buses[i], p, {"id", "is_reference"});
        inst.buses.push_back({R::string(buses[i], p, "id"), R::boolean(buses[i], p, "is_reference")});
    }
    const auto& lines = R::array(doc, "", "lines");
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const std::string p = "lines[" + std::to_string(i) + "]";
        const auto& j = lines[i];
        R::only_keys(j, p, {"id", "from_bus", "to_bus", "susceptance", "flow_limit"});
        inst.lines.push_back({R::string(j, p, "id"), R::string(j, p, "from_bus"), R::string(j, p, "to_bus"),
                              R::number(j, p, "susceptance"), R::number(j, p, "flow_limit")});
    }
    const auto& gens = R::array(doc, "", "generators");
    for (std::size_t i = 0; i < gens.size(); ++i) {
        const std::string p = detail::gen_path(i);
        const auto& j = gens[i];
        R::only_keys(j, p,
                     {"id", "bus", "p_min", "p_max", "ramp_up", "ramp_down", "startup_ramp", "shutdown_ramp",
                      "min_up", "min_down", "no_load_cost", "startup_cost", "shutdown_cost", "segments", "init_on",
                      "init_power", "init_periods_in_state"});
        Generator g;
        g.id = R::string(j, p, "id");
        g.bus = R::string(j, p, "bus");
        g.p_min = R::number(j, p, "p_min");
        g.p_max = R::number(j, p, "p_max");
        g.ramp_up = R::number(j, p, "ramp_up");
        g.ramp_down = R::number(j, p, "ramp_down");
        g.startup_ramp = R::number(j, p, "startup_ramp");
        g.shutdown_ramp = R::number(j, p, "shutdown_ramp");
        g.min_up = R::integer(j, p, "min_up");
        g.min_down = R::integer(j, p, "min_down");
        g.no_load_cost = R::number(j, p, "no_load_cost");
        g.startup_cost = R::number(j, p, "startup_cost");
        g.shutdown_cost = R::number(j, p, "shutdown_cost");
        const auto& segs = R::array(j, p, "segments");
        for (std::size_t k = 0; k < segs.size(); ++k) {
            const std::string sp = p + ".segments[" + std::to_string(k) + "]";
            R::only_keys(segs[k], sp, {"width", "marginal_cost"});
            g.segments.push_back({R::number(segs[k], sp, "width"), R::number(segs[k], sp, "marginal_cost")});
        }
        g.init_on = R::boolean(j, p, "init_on");
        g.init_power = R::number(j, p, "init_power");
        g.init_periods_in_state = R::integer(j, p, "init_periods_in_state");
        inst.generators.push_back(std::move(g));
    }

    const auto& demand = R::field(doc, "", "demand");
    if (!demand.is_object()) throw SchemaError("demand", "expected an object mapping bus id to an array");
    std::vector<Violation> unknown;
    for (auto it = demand.begin(); it != demand.end(); ++it)
        if (inst.bus_index(it.key()) < 0) unknown.push_back({"demand." + it.key(), "unknown bus"});
    if (!unknown.empty()) throw ValidationError(std::move(unknown));
    for (const auto& bus : inst.buses) {
        std::vector<double> row;
        auto it = demand.find(bus.id);
        if (it != demand.end()) {
            if (!it->is_array()) throw SchemaError("demand." + bus.id, "expected an array");
            for (const auto& v : *it) {
                if (!v.is_number()) throw SchemaError("demand." + bus.id, "expected numbers");
                row.push_back(v.get<double>());
            }
        }
        inst.demand.push_back(std::move(row));
    }
    return inst;
}

/// Parses and validates the canonical instance document.
inline UcInstance parse_instance(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw SchemaError("", std::string("malformed JSON: ") + e.what());
    }
    UcInstance inst = instance_from_json(doc);
    require_valid(inst);
    return inst;
}

inline nlohmann::ordered_json instance_to_json(const UcInstance& inst) {
    using detail::ojson;
    ojson doc;
    doc["name"] = inst.name;
    doc["horizon_T"] = inst.horizon_T;
    doc["period_hours"] = inst.period_hours;
    doc["buses"] = ojson::array();
    for (const auto& b : inst.buses) doc["buses"].push_back(ojson{{"id", b.id}, {"is_reference", b.is_reference}});
    doc["lines"] = ojson::array();
    for (const auto& l : inst.lines)
        doc["lines"].push_back(ojson{{"id", l.id},
                                     {"from_bus", l.from_bus},
                                     {"to_bus", l.to_bus},
                                     {"susceptance", l.susceptance},
                                     {"flow_limit", l.flow_limit}});
    doc["generators"] = ojson::array();
    for (const auto& g : inst.generators) {
        ojson segs = ojson::array();
        for (const auto& s : g.segments) segs.push_back(ojson{{"width", s.width}, {"marginal_cost", s.marginal_cost}});
        doc["generators"].push_back(ojson{{"id", g.id},
                                          {"bus", g.bus},
                                          {"p_min", g.p_min},
                                          {"p_max", g.p_max},
                                          {"ramp_up", g.ramp_up},
                                          {"ramp_down", g.ramp_down},
                                          {"startup_ramp", g.startup_ramp},
                                          {"shutdown_ramp", g.shutdown_ramp},
                                          {"min_up", g.min_up},
                                          {"min_down", g.min_down},
                                          {"no_load_cost", g.no_load_cost},
                                          {"startup_cost", g.startup_cost},
                                          {"shutdown_cost", g.shutdown_cost},
                                          {"segments", segs},
                                          {"init_on", g.init_on},
                                          {"init_power", g.init_power},
                                          {"init_periods_in_state", g.init_periods_in_state}});
    }
    ojson demand = ojson::object();
    for (std::size_t b = 0; b < inst.buses.size() && b < inst.demand.size(); ++b)
        demand[inst.buses[b].id] = inst.demand[b];
    doc["demand"] = demand;
    return doc;
}

inline std::string serialize_instance(const UcInstance& inst, int indent = 2) {
    return instance_to_json(inst).dump(indent) + "\n";
}

}  // namespace scuc
