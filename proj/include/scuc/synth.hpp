#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>

#include "scuc/errors.hpp"
#include "scuc/instance.hpp"

namespace scuc {

namespace detail {

/// mt19937_64 is fully specified by the standard; the distributions in
/// <random> are not, so values are mapped by hand to keep documents
/// identical across standard libraries.
class SynthRng {
   public:
    explicit SynthRng(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo, double hi) {
        const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }
    /// Integer in [lo, hi].
    int integer(int lo, int hi) {
        const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<int>(engine_() % span);
    }
    bool coin(double p) { return uniform(0.0, 1.0) < p; }

   private:
    std::mt19937_64 engine_;
};

/// Rounds to a fixed number of decimals so generated documents stay readable.
inline double tidy(double x, double scale = 100.0) { return std::round(x * scale) / scale; }

}  // namespace detail

/// Random connected instance: a spanning tree over the buses plus random
/// chords, generators at random buses with four convex cost segments, and a
/// daily-shaped demand profile whose system total stays at or below 80% of
/// installed capacity. Initial states and line limits are chosen so the
/// instance has a feasible schedule.
inline UcInstance synth_instance(int generators, int buses, int lines, int horizon, std::uint64_t seed) {
    if (generators < 1) throw ArgumentError("synth: need at least one generator");
    if (buses < 1) throw ArgumentError("synth: need at least one bus");
    if (horizon < 1) throw ArgumentError("synth: horizon must be >= 1");
    if (lines < buses - 1) throw ArgumentError("synth: lines must be >= buses - 1 for a connected network");
    if (buses == 1 && lines > 0) throw ArgumentError("synth: a single-bus network cannot have lines");

    detail::SynthRng rng(seed);
    using detail::tidy;

    UcInstance inst;
    inst.name = "synth-g" + std::to_string(generators) + "-b" + std::to_string(buses) + "-l" +
                std::to_string(lines) + "-t" + std::to_string(horizon) + "-s" + std::to_string(seed);
    inst.horizon_T = horizon;
    inst.period_hours = 1.0;
    for (int b = 0; b < buses; ++b) inst.buses.push_back({"b" + std::to_string(b + 1), b == 0});

    double capacity = 0.0;
    std::vector<double> init_power;
    for (int g = 0; g < generators; ++g) {
        Generator gen;
        gen.id = "g" + std::to_string(g + 1);
        gen.bus = inst.buses[rng.integer(0, buses - 1)].id;
        gen.p_max = tidy(rng.uniform(50.0, 400.0));
        gen.p_min = tidy(gen.p_max * rng.uniform(0.15, 0.3));
        const double span = gen.p_max - gen.p_min;
        double mc = tidy(rng.uniform(10.0, 45.0));
        double used = 0.0;
        for (int k = 0; k < 4; ++k) {
            const double width = k < 3 ? tidy(span / 4.0) : tidy(span - used);
            used += width;
            gen.segments.push_back({width, mc});
            mc = tidy(mc + rng.uniform(0.5, 6.0));
        }
        gen.ramp_up = tidy(gen.p_max * rng.uniform(0.4, 0.8));
        gen.ramp_down = gen.ramp_up;
        gen.startup_ramp = tidy(std::max(gen.p_min, gen.p_max * 0.5));
        gen.shutdown_ramp = gen.startup_ramp;
        gen.min_up = rng.integer(1, 4);
        gen.min_down = rng.integer(1, 4);
        gen.no_load_cost = tidy(gen.p_min * gen.segments.front().marginal_cost * rng.uniform(1.0, 1.3));
        gen.startup_cost = tidy(rng.uniform(100.0, 2000.0));
        gen.shutdown_cost = tidy(rng.uniform(0.0, 200.0));
        // Initial state already satisfies min up/down, so nothing is forced.
        // Which units start on is settled once the demand is known.
        init_power.push_back(tidy(gen.p_min + span * rng.uniform(0.2, 0.4)));
        gen.init_periods_in_state = rng.integer(std::max(gen.min_up, gen.min_down), 8);
        capacity += gen.p_max;
        inst.generators.push_back(std::move(gen));
    }

    for (int b = 1; b < buses; ++b) {
        const int parent = rng.integer(0, b - 1);
        inst.lines.push_back({"l" + std::to_string(b), inst.buses[parent].id, inst.buses[b].id,
                              tidy(rng.uniform(5.0, 50.0)), 0.0});
    }
    for (int l = buses - 1; l < lines; ++l) {
        const int from = rng.integer(0, buses - 1);
        int to = rng.integer(0, buses - 2);
        if (to >= from) ++to;
        inst.lines.push_back({"l" + std::to_string(l + 1), inst.buses[from].id, inst.buses[to].id,
                              tidy(rng.uniform(5.0, 50.0)), 0.0});
    }

    // Load weights: roughly 60% of buses carry load, at least one does.
    std::vector<double> weight(buses, 0.0);
    double total_weight = 0.0;
    for (int b = 0; b < buses; ++b) {
        if (rng.coin(0.6)) weight[b] = rng.uniform(0.2, 1.0);
        total_weight += weight[b];
    }
    if (total_weight == 0.0) {
        weight[rng.integer(0, buses - 1)] = 1.0;
        total_weight = 1.0;
    }

    // System demand between 40% and 75% of capacity, peaking mid-horizon.
    inst.demand.assign(buses, std::vector<double>(horizon, 0.0));
    const double pi = std::acos(-1.0);
    for (int t = 0; t < horizon; ++t) {
        const double phase = horizon == 1 ? 0.5 : static_cast<double>(t) / (horizon - 1);
        const double level = 0.4 + 0.3 * std::sin(pi * phase) + rng.uniform(0.0, 0.05);
        const double system = capacity * std::min(level, 0.75);
        for (int b = 0; b < buses; ++b)
            inst.demand[b][t] = std::floor(system * weight[b] / total_weight * 100.0) / 100.0;
    }

    // DC flows never exceed total demand on any line, so limits at or above
    // the peak keep every instance feasible.
    double peak = 0.0;
    for (int t = 0; t < horizon; ++t) {
        double total = 0.0;
        for (const auto& row : inst.demand) total += row[t];
        peak = std::max(peak, total);
    }
    for (auto& ln : inst.lines) ln.flow_limit = tidy(std::max(1.0, peak) * rng.uniform(1.0, 1.5));

    // Units start on in merit order until they can cover the first period
    // with some margin; the rest start off.
    double first = 0.0;
    for (const auto& row : inst.demand) first += row[0];
    std::vector<int> order(generators);
    for (int g = 0; g < generators; ++g) order[g] = g;
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return inst.generators[a].segments.front().marginal_cost < inst.generators[b].segments.front().marginal_cost;
    });
    double reach = 0.0;
    for (int g : order) {
        auto& gen = inst.generators[g];
        gen.init_on = reach < 1.2 * first;
        gen.init_power = gen.init_on ? init_power[g] : 0.0;
        if (gen.init_on) reach += std::min(gen.p_max, gen.init_power + gen.ramp_up);
    }
    return inst;
}

}  // namespace scuc
