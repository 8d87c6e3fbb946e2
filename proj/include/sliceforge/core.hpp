#pragma once

// Problem instances, episode state and the tensors fed to the scheduler.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sliceforge/error.hpp"
#include "sliceforge/rng.hpp"

namespace sliceforge {

// Resource blocks. Capacities and demands are whole blocks.
using Resource = std::int64_t;

struct Interval {
    Resource lo = 0;
    Resource hi = 0;

    bool contains(Resource v) const noexcept { return lo <= v && v <= hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

struct ScenarioConfig {
    std::size_t n = 100;
    Interval cap_range{10, 30};
    std::size_t l = 20;
    std::size_t s = 10;
    Interval demand_range{1, 19};
    std::uint64_t seed = 0;

    // 100 nodes in [10,30], 20 slices of 10 VNFs in [1,19].
    static ScenarioConfig base() { return {}; }

    // Desk-scale profile used by CI: 20 nodes in [2,8], 6 slices of 4 VNFs in [1,7].
    static ScenarioConfig mini() { return {20, {2, 8}, 6, 4, {1, 7}, 0}; }

    void validate() const {
        if (n == 0 || l == 0 || s == 0)
            throw ConfigError("scenario config: n, l and s must be positive");
        if (cap_range.lo < 0 || cap_range.lo > cap_range.hi)
            throw ConfigError("scenario config: need 0 <= cap_lo <= cap_hi");
        if (demand_range.lo < 0 || demand_range.lo > demand_range.hi)
            throw ConfigError("scenario config: need 0 <= d_lo <= d_hi");
    }

    friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

// Immutable problem instance: node capacities plus an l x s demand matrix
// (row-major, rows are slices). Short slices are padded with zero demands.
struct Scenario {
    std::size_t n = 0;
    std::size_t l = 0;
    std::size_t s = 0;
    std::vector<Resource> capacities;
    std::vector<Resource> demands;

    Resource demand(std::size_t slice, std::size_t vnf) const { return demands[slice * s + vnf]; }

    std::span<const Resource> slice_demands(std::size_t slice) const {
        return std::span<const Resource>(demands).subspan(slice * s, s);
    }

    void validate() const {
        if (n == 0 || l == 0 || s == 0) throw ConfigError("scenario: n, l and s must be positive");
        if (capacities.size() != n) throw ConfigError("scenario: capacities length != n");
        if (demands.size() != l * s) throw ConfigError("scenario: demand matrix is not l x s");
        auto negative = [](Resource v) { return v < 0; };
        if (std::ranges::any_of(capacities, negative) || std::ranges::any_of(demands, negative))
            throw ConfigError("scenario: negative resource value");
    }

    friend bool operator==(const Scenario&, const Scenario&) = default;
};

// Capacities first (node order), then demands row-major, all from the
// Scenario stream of config.seed.
inline Scenario generate_scenario(const ScenarioConfig& config) {
    config.validate();
    Rng rng = Rng::stream(config.seed, StreamPurpose::Scenario);
    Scenario sc;
    sc.n = config.n;
    sc.l = config.l;
    sc.s = config.s;
    sc.capacities.resize(config.n);
    for (auto& c : sc.capacities) c = rng.uniform_int(config.cap_range.lo, config.cap_range.hi);
    sc.demands.resize(config.l * config.s);
    for (auto& d : sc.demands) d = rng.uniform_int(config.demand_range.lo, config.demand_range.hi);
    return sc;
}

// Pads ragged slices with zero-demand VNFs up to the longest slice.
inline Scenario make_scenario(std::vector<Resource> capacities,
                              const std::vector<std::vector<Resource>>& slices) {
    Scenario sc;
    sc.n = capacities.size();
    sc.l = slices.size();
    sc.s = 0;
    for (const auto& row : slices) sc.s = std::max(sc.s, row.size());
    sc.capacities = std::move(capacities);
    sc.demands.assign(sc.l * sc.s, 0);
    for (std::size_t i = 0; i < sc.l; ++i)
        std::ranges::copy(slices[i], sc.demands.begin() + static_cast<std::ptrdiff_t>(i * sc.s));
    sc.validate();
    return sc;
}

struct Assignment {
    std::size_t slice = 0;
    std::size_t vnf = 0;
    std::size_t node = 0;
    Resource amount = 0;

    friend bool operator==(const Assignment&, const Assignment&) = default;
};

struct Placement {
    std::size_t vnf = 0;
    std::size_t node = 0;

    friend bool operator==(const Placement&, const Placement&) = default;
};

// Mutable episode state. pending mirrors the demand matrix with the rows of
// accommodated slices zeroed.
struct EnvState {
    std::size_t t = 0;
    std::size_t l = 0;
    std::size_t s = 0;
    std::vector<Resource> avail;
    std::vector<Resource> pending;
    std::vector<std::uint8_t> accommodated;
    std::vector<Assignment> assignments;

    std::size_t n() const noexcept { return avail.size(); }
    bool is_accommodated(std::size_t slice) const { return accommodated[slice] != 0; }
    Resource pending_demand(std::size_t slice, std::size_t vnf) const { return pending[slice * s + vnf]; }

    std::size_t accommodated_count() const {
        return static_cast<std::size_t>(std::ranges::count(accommodated, std::uint8_t{1}));
    }

    bool is_placed(std::size_t slice, std::size_t vnf) const {
        return std::ranges::any_of(assignments, [&](const Assignment& a) {
            return a.slice == slice && a.vnf == vnf;
        });
    }

    friend bool operator==(const EnvState&, const EnvState&) = default;
};

inline EnvState init_episode(const Scenario& scenario) {
    EnvState st;
    st.l = scenario.l;
    st.s = scenario.s;
    st.avail = scenario.capacities;
    st.pending = scenario.demands;
    st.accommodated.assign(scenario.l, 0);
    return st;
}

// Places a single VNF outside of slice scheduling (the All baseline). The
// slice becomes accommodated once all of its VNFs are in the ledger. Demand is
// taken from the scenario, not from pending.
inline void assign_vnf(EnvState& state, const Scenario& scenario, std::size_t slice,
                       std::size_t vnf, std::size_t node) {
    if (slice >= state.l || vnf >= state.s || node >= state.n())
        throw CommitError("assign_vnf: index out of range");
    if (state.is_placed(slice, vnf)) throw CommitError("assign_vnf: VNF already placed");
    const Resource amount = scenario.demand(slice, vnf);
    if (amount > state.avail[node]) throw CommitError("assign_vnf: demand exceeds node capacity");
    state.avail[node] -= amount;
    state.pending[slice * state.s + vnf] = 0;
    state.assignments.push_back({slice, vnf, node, amount});
    const auto placed = std::ranges::count_if(state.assignments,
                                              [&](const Assignment& a) { return a.slice == slice; });
    if (static_cast<std::size_t>(placed) == state.s) state.accommodated[slice] = 1;
}

// Applies a full slice mapping atomically: either every placement is
// recorded or the state is left untouched and CommitError is thrown.
inline void commit_slice(EnvState& state, std::size_t slice, std::span<const Placement> placements) {
    if (slice >= state.l) throw CommitError("commit_slice: slice index out of range");
    if (state.is_accommodated(slice)) throw CommitError("commit_slice: slice already accommodated");
    if (placements.size() != state.s)
        throw CommitError("commit_slice: placements must cover every VNF of the slice");

    std::vector<std::uint8_t> seen(state.s, 0);
    std::vector<Resource> avail = state.avail;
    for (const auto& p : placements) {
        if (p.vnf >= state.s || p.node >= avail.size())
            throw CommitError("commit_slice: placement index out of range");
        if (seen[p.vnf]++) throw CommitError("commit_slice: VNF placed twice");
        if (state.is_placed(slice, p.vnf)) throw CommitError("commit_slice: VNF already in ledger");
        const Resource demand = state.pending_demand(slice, p.vnf);
        if (demand > avail[p.node])
            throw CommitError("commit_slice: VNF " + std::to_string(p.vnf) + " of slice " +
                              std::to_string(slice) + " does not fit node " +
                              std::to_string(p.node));
        avail[p.node] -= demand;
    }

    for (const auto& p : placements)
        state.assignments.push_back({slice, p.vnf, p.node, state.pending_demand(slice, p.vnf)});
    state.avail = std::move(avail);
    std::fill_n(state.pending.begin() + static_cast<std::ptrdiff_t>(slice * state.s), state.s, 0);
    state.accommodated[slice] = 1;
    ++state.t;
}

// Scaled network inputs: substrate is length n, demand is l x s row-major.
struct StateEncoding {
    std::vector<double> substrate;
    std::vector<double> demand;

    friend bool operator==(const StateEncoding&, const StateEncoding&) = default;
};

inline StateEncoding encode_state(const EnvState& state, double scale) {
    if (!(scale > 0.0)) throw ConfigError("encode_state: scale must be positive");
    StateEncoding enc;
    enc.substrate.reserve(state.avail.size());
    for (Resource r : state.avail) enc.substrate.push_back(static_cast<double>(r) / scale);
    enc.demand.resize(state.pending.size());
    for (std::size_t i = 0; i < state.l; ++i)
        for (std::size_t j = 0; j < state.s; ++j)
            enc.demand[i * state.s + j] =
                state.is_accommodated(i) ? 0.0 : static_cast<double>(state.pending_demand(i, j)) / scale;
    return enc;
}

struct TraceStep {
    StateEncoding encoding;
    std::vector<std::uint8_t> feasible;
    std::size_t action = 0;
    std::size_t n_r_after = 0;
};

struct EpisodeTrace {
    std::vector<TraceStep> steps;
    bool terminal_reached = false;
    std::vector<double> returns;
    EnvState final_state;

    // Q_AS of the episode.
    std::size_t accommodated() const { return steps.empty() ? 0 : steps.back().n_r_after; }
};

// ---- JSON ----------------------------------------------------------------

inline void to_json(nlohmann::json& j, const ScenarioConfig& c) {
    j = nlohmann::json{{"n", c.n},
                       {"cap_range", {c.cap_range.lo, c.cap_range.hi}},
                       {"l", c.l},
                       {"s", c.s},
                       {"demand_range", {c.demand_range.lo, c.demand_range.hi}},
                       {"seed", c.seed}};
}

namespace detail {

inline Interval interval_from_json(const nlohmann::json& j, const char* name) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number_integer() || !j[1].is_number_integer())
        throw ConfigError(std::string("config: '") + name + "' must be [lo, hi] integers");
    return {j[0].get<Resource>(), j[1].get<Resource>()};
}

inline std::size_t positive_from_json(const nlohmann::json& j, const char* name) {
    if (!j.is_number_integer() || j.get<std::int64_t>() <= 0)
        throw ConfigError(std::string("config: '") + name + "' must be a positive integer");
    return j.get<std::size_t>();
}

inline nlohmann::json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("'" + path + "': " + e.what());
    }
}

inline void write_file(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path + "'");
}

}  // namespace detail

// Missing fields keep the base-profile defaults; unknown fields are rejected.
inline void from_json(const nlohmann::json& j, ScenarioConfig& c) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    c = ScenarioConfig::base();
    for (const auto& [key, value] : j.items()) {
        if (key == "n") c.n = detail::positive_from_json(value, "n");
        else if (key == "l") c.l = detail::positive_from_json(value, "l");
        else if (key == "s") c.s = detail::positive_from_json(value, "s");
        else if (key == "cap_range") c.cap_range = detail::interval_from_json(value, "cap_range");
        else if (key == "demand_range") c.demand_range = detail::interval_from_json(value, "demand_range");
        else if (key == "seed") {
            if (!value.is_number_unsigned() && !(value.is_number_integer() && value.get<std::int64_t>() >= 0))
                throw ConfigError("config: 'seed' must be a non-negative integer");
            c.seed = value.get<std::uint64_t>();
        } else {
            throw ConfigError("config: unknown field '" + key + "'");
        }
    }
    c.validate();
}

inline void to_json(nlohmann::json& j, const Scenario& sc) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < sc.l; ++i) {
        auto row = sc.slice_demands(i);
        rows.push_back(std::vector<Resource>(row.begin(), row.end()));
    }
    j = nlohmann::json{{"n", sc.n}, {"capacities", sc.capacities}, {"l", sc.l}, {"s", sc.s}, {"demands", rows}};
}

inline void from_json(const nlohmann::json& j, Scenario& sc) {
    try {
        sc.n = j.at("n").get<std::size_t>();
        sc.l = j.at("l").get<std::size_t>();
        sc.s = j.at("s").get<std::size_t>();
        sc.capacities = j.at("capacities").get<std::vector<Resource>>();
        const auto rows = j.at("demands").get<std::vector<std::vector<Resource>>>();
        if (rows.size() != sc.l) throw ConfigError("scenario: demands has " + std::to_string(rows.size()) + " rows, l = " + std::to_string(sc.l));
        sc.demands.clear();
        for (const auto& row : rows) {
            if (row.size() != sc.s) throw ConfigError("scenario: demand row length != s");
            sc.demands.insert(sc.demands.end(), row.begin(), row.end());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario: ") + e.what());
    }
    sc.validate();
}

inline ScenarioConfig load_config(const std::string& path) {
    return detail::parse_file(path).get<ScenarioConfig>();
}

inline Scenario load_scenario(const std::string& path) {
    return detail::parse_file(path).get<Scenario>();
}

inline void save_scenario(const std::string& path, const Scenario& sc) {
    detail::write_file(path, nlohmann::json(sc).dump() + "\n");
}

}  // namespace sliceforge
