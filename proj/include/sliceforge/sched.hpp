#pragma once

// Slice schedulers and the shared episode loop.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sliceforge/core.hpp"
#include "sliceforge/mapper.hpp"

namespace sliceforge {

// All  : VNF-level greedy over every VNF, no slice scheduling.
// Max/Min/Total : static slice order, descending by per-slice max/min/total demand.
// Drn  : learned, re-evaluated at every step.
enum class SchedulerKind { All, Max, Min, Total, Drn };

inline std::string_view to_string(SchedulerKind kind) {
    switch (kind) {
        case SchedulerKind::All: return "all";
        case SchedulerKind::Max: return "max";
        case SchedulerKind::Min: return "min";
        case SchedulerKind::Total: return "total";
        case SchedulerKind::Drn: return "drn";
    }
    return "?";
}

inline std::optional<SchedulerKind> parse_scheduler(std::string_view name) {
    for (auto k : {SchedulerKind::All, SchedulerKind::Max, SchedulerKind::Min, SchedulerKind::Total,
                   SchedulerKind::Drn})
        if (to_string(k) == name) return k;
    return std::nullopt;
}

inline std::vector<std::size_t> baseline_order(SchedulerKind kind, const Scenario& scenario) {
    if (kind == SchedulerKind::All || kind == SchedulerKind::Drn)
        throw UsageError("baseline_order: '" + std::string(to_string(kind)) + "' has no static slice order");
    std::vector<Resource> key(scenario.l);
    for (std::size_t i = 0; i < scenario.l; ++i) {
        const auto row = scenario.slice_demands(i);
        switch (kind) {
            case SchedulerKind::Max: key[i] = *std::ranges::max_element(row); break;
            case SchedulerKind::Min: key[i] = *std::ranges::min_element(row); break;
            default: key[i] = std::accumulate(row.begin(), row.end(), Resource{0}); break;
        }
    }
    std::vector<std::size_t> order(scenario.l);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return key[a] > key[b]; });
    return order;
}

struct VnfRef {
    std::size_t slice = 0;
    std::size_t vnf = 0;

    friend bool operator==(const VnfRef&, const VnfRef&) = default;
};

// Every VNF of the instance, descending demand, then slice index, then VNF index.
inline std::vector<VnfRef> global_vnf_order(const Scenario& scenario) {
    std::vector<VnfRef> order;
    order.reserve(scenario.l * scenario.s);
    for (std::size_t i = 0; i < scenario.l; ++i)
        for (std::size_t j = 0; j < scenario.s; ++j) order.push_back({i, j});
    std::ranges::stable_sort(order, [&](const VnfRef& a, const VnfRef& b) {
        return scenario.demand(a.slice, a.vnf) > scenario.demand(b.slice, b.vnf);
    });
    return order;
}

struct AllBaselineResult {
    std::vector<std::uint8_t> accommodated;
    std::size_t count = 0;
    EnvState state;
};

// No rollback: a slice whose VNFs were only partly placed keeps its
// placements and simply does not count.
inline AllBaselineResult run_baseline_all(const Scenario& scenario) {
    const auto order = global_vnf_order(scenario);
    EnvState state = init_episode(scenario);
    std::vector<Resource> all(order.size());
    for (std::size_t p = 0; p < order.size(); ++p) all[p] = scenario.demand(order[p].slice, order[p].vnf);
    DemandProfile remaining(all);
    for (const auto& ref : order) {
        const Resource demand = scenario.demand(ref.slice, ref.vnf);
        remaining.remove(demand);
        if (auto node = select_node(state.avail, demand, remaining))
            assign_vnf(state, scenario, ref.slice, ref.vnf, *node);
    }
    AllBaselineResult result;
    result.accommodated = state.accommodated;
    result.count = state.accommodated_count();
    result.state = std::move(state);
    return result;
}

// Chooses the next slice. `feasible` has at least one set entry.
using SlicePicker =
    std::function<std::size_t(const EnvState&, const StateEncoding&, std::span<const std::uint8_t> feasible)>;

// First feasible slice in a fixed order; blocked slices are skipped.
inline SlicePicker static_order_picker(std::vector<std::size_t> order) {
    return [order = std::move(order)](const EnvState&, const StateEncoding&,
                                      std::span<const std::uint8_t> feasible) {
        for (std::size_t i : order)
            if (feasible[i]) return i;
        throw UsageError("static order does not cover a feasible slice");
    };
}

// Runs one episode: at every step the feasibility of each pending slice is
// re-tested with the mapper, the picker chooses among feasible slices, and the
// chosen slice is committed. Ends when nothing pending is feasible.
inline EpisodeTrace run_episode(const Scenario& scenario, const SlicePicker& pick, double scale = 1.0) {
    EpisodeTrace trace;
    EnvState state = init_episode(scenario);
    std::vector<std::optional<std::vector<Placement>>> plans(scenario.l);
    std::vector<std::uint8_t> feasible(scenario.l);
    for (;;) {
        bool any = false;
        for (std::size_t i = 0; i < scenario.l; ++i) {
            plans[i] = map_slice(state, i);
            feasible[i] = plans[i].has_value() ? 1 : 0;
            any = any || feasible[i];
        }
        if (!any) break;

        TraceStep step;
        step.encoding = encode_state(state, scale);
        step.feasible = feasible;
        step.action = pick(state, step.encoding, feasible);
        if (step.action >= scenario.l || !feasible[step.action])
            throw UsageError("scheduler picked an infeasible slice");
        commit_slice(state, step.action, *plans[step.action]);
        step.n_r_after = state.accommodated_count();
        trace.steps.push_back(std::move(step));
    }
    trace.terminal_reached = true;
    trace.final_state = std::move(state);
    return trace;
}

inline EpisodeTrace run_static_baseline(SchedulerKind kind, const Scenario& scenario, double scale = 1.0) {
    return run_episode(scenario, static_order_picker(baseline_order(kind, scenario)), scale);
}

}  // namespace sliceforge
