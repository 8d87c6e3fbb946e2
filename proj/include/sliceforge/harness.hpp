#pragma once

// Q_AS estimation, scarcity sweeps and result export.

#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "json.hpp"
#include "sliceforge/core.hpp"
#include "sliceforge/drn.hpp"
#include "sliceforge/sched.hpp"

namespace sliceforge {

struct Scheduler {
    SchedulerKind kind = SchedulerKind::Max;
    const DrnParams* model = nullptr;  // required for Drn
};

// Number of slices the scheduler accommodates on one instance.
inline std::size_t run_scheduler(const Scheduler& sched, const Scenario& scenario) {
    switch (sched.kind) {
        case SchedulerKind::All: return run_baseline_all(scenario).count;
        case SchedulerKind::Drn:
            if (!sched.model) throw UsageError("drn scheduler needs a model");
            return run_drn_episode(*sched.model, scenario).accommodated();
        default: return run_static_baseline(sched.kind, scenario).accommodated();
    }
}

// Instance e of an evaluation depends only on (config.seed, e), never on the
// scheduler, so results across schedulers are paired.
inline Scenario evaluation_scenario(const ScenarioConfig& config, std::size_t episode) {
    ScenarioConfig c = config;
    c.seed = Rng::stream(config.seed, StreamPurpose::Evaluation, episode).next();
    return generate_scenario(c);
}

struct EvalResult {
    SchedulerKind kind = SchedulerKind::Max;
    ScenarioConfig config;
    std::size_t episodes = 0;
    double mean_accommodated = 0.0;
    double std = 0.0;  // population standard deviation
    std::vector<std::size_t> per_episode;
};

inline EvalResult evaluate(const Scheduler& sched, const ScenarioConfig& config, std::size_t episodes,
                           std::size_t threads = 1) {
    config.validate();
    if (episodes == 0) throw ConfigError("evaluate: episodes must be >= 1");
    if (sched.kind == SchedulerKind::Drn && sched.model &&
        (sched.model->config.n != config.n || sched.model->config.l != config.l || sched.model->config.s != config.s))
        throw ShapeError("evaluate: model dimensions do not match the scenario config");

    EvalResult r{sched.kind, config, episodes, 0.0, 0.0, std::vector<std::size_t>(episodes, 0)};
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t e = begin; e < end; ++e) r.per_episode[e] = run_scheduler(sched, evaluation_scenario(config, e));
    };
    threads = std::clamp<std::size_t>(threads, 1, episodes);
    if (threads == 1) {
        work(0, episodes);
    } else {
        std::vector<std::jthread> pool;
        const std::size_t block = (episodes + threads - 1) / threads;
        for (std::size_t b = 0; b < episodes; b += block) pool.emplace_back(work, b, std::min(episodes, b + block));
    }

    double sum = 0.0;
    for (auto c : r.per_episode) sum += static_cast<double>(c);
    r.mean_accommodated = sum / static_cast<double>(episodes);
    double sq = 0.0;
    for (auto c : r.per_episode) sq += (static_cast<double>(c) - r.mean_accommodated) * (static_cast<double>(c) - r.mean_accommodated);
    r.std = std::sqrt(sq / static_cast<double>(episodes));
    return r;
}

// ---- sweeps ----------------------------------------------------------------

enum class SweepAxis { SliceCount, VnfsPerSlice, MeanDemand, MeanCapacity };

inline std::string_view to_string(SweepAxis axis) {
    switch (axis) {
        case SweepAxis::SliceCount: return "slices";
        case SweepAxis::VnfsPerSlice: return "vnfs";
        case SweepAxis::MeanDemand: return "demand";
        case SweepAxis::MeanCapacity: return "capacity";
    }
    return "?";
}

inline std::optional<SweepAxis> parse_axis(std::string_view name) {
    for (auto a : {SweepAxis::SliceCount, SweepAxis::VnfsPerSlice, SweepAxis::MeanDemand, SweepAxis::MeanCapacity})
        if (to_string(a) == name) return a;
    return std::nullopt;
}

// Demand mean mu -> [1, 2mu-1]; capacity mean mu -> [mu-10, mu+10].
inline ScenarioConfig apply_axis(ScenarioConfig base, SweepAxis axis, std::int64_t value) {
    switch (axis) {
        case SweepAxis::SliceCount:
            if (value < 1) throw ConfigError("sweep: slice count must be >= 1");
            base.l = static_cast<std::size_t>(value);
            break;
        case SweepAxis::VnfsPerSlice:
            if (value < 1) throw ConfigError("sweep: VNFs per slice must be >= 1");
            base.s = static_cast<std::size_t>(value);
            break;
        case SweepAxis::MeanDemand:
            if (value < 1) throw ConfigError("sweep: demand mean must be >= 1");
            base.demand_range = {1, 2 * value - 1};
            break;
        case SweepAxis::MeanCapacity:
            if (value < 10) throw ConfigError("sweep: capacity mean must be >= 10");
            base.cap_range = {value - 10, value + 10};
            break;
    }
    base.validate();
    return base;
}

// from..to inclusive in unit steps, in either direction.
inline std::vector<std::int64_t> axis_values(std::int64_t from, std::int64_t to) {
    std::vector<std::int64_t> out;
    const std::int64_t step = from <= to ? 1 : -1;
    for (std::int64_t v = from;; v += step) {
        out.push_back(v);
        if (v == to) break;
    }
    return out;
}

struct SweepSpec {
    SweepAxis axis = SweepAxis::SliceCount;
    std::vector<std::int64_t> values;
    ScenarioConfig base = ScenarioConfig::base();
    std::size_t episodes = 100;
};

struct ResultRow {
    std::string axis;
    std::int64_t value = 0;
    std::string scheduler;
    std::size_t episodes = 0;
    double mean_accommodated = 0.0;
    double std = 0.0;
    std::uint64_t seed = 0;

    friend bool operator==(const ResultRow&, const ResultRow&) = default;
};

using ResultTable = std::vector<ResultRow>;

inline ResultRow make_row(std::string axis, std::int64_t value, const EvalResult& r) {
    return {std::move(axis), value, std::string(to_string(r.kind)), r.episodes, r.mean_accommodated, r.std, r.config.seed};
}

// Supplies the trained network for an axis point (dimensions vary along the
// slices/vnfs axes).
using ModelProvider = std::function<const DrnParams&(const ScenarioConfig&)>;

// One row per (axis value, scheduler), in value order then scheduler order.
inline ResultTable sweep(const SweepSpec& spec, std::span<const SchedulerKind> schedulers,
                         const ModelProvider& models = {}, std::size_t threads = 1) {
    ResultTable table;
    for (std::int64_t v : spec.values) {
        const ScenarioConfig cfg = apply_axis(spec.base, spec.axis, v);
        for (SchedulerKind kind : schedulers) {
            Scheduler sched{kind, nullptr};
            if (kind == SchedulerKind::Drn) {
                if (!models) throw UsageError("sweep: drn scheduler needs a model provider");
                sched.model = &models(cfg);
            }
            table.push_back(make_row(std::string(to_string(spec.axis)), v, evaluate(sched, cfg, spec.episodes, threads)));
        }
    }
    return table;
}

// ---- export ----------------------------------------------------------------

enum class ResultFormat { Csv, Json };

inline ResultFormat format_from_path(std::string_view path) {
    if (path.ends_with(".json")) return ResultFormat::Json;
    if (path.ends_with(".csv")) return ResultFormat::Csv;
    throw ConfigError("output path must end in .csv or .json: " + std::string(path));
}

namespace detail {

// Shortest representation that round-trips.
inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

inline constexpr std::string_view kResultColumns = "axis,value,scheduler,episodes,mean_accommodated,std,seed";

// A non-null header (the resolved run configuration) becomes a leading
// "# config: {...}" comment line in CSV and a "config" member in JSON.
inline std::string results_csv(const ResultTable& table, const nlohmann::json* header = nullptr) {
    std::string out;
    if (header) out += "# config: " + header->dump() + "\n";
    out += std::string(kResultColumns) + "\n";
    for (const auto& r : table) {
        out += r.axis + "," + std::to_string(r.value) + "," + r.scheduler + "," + std::to_string(r.episodes) + "," +
               detail::format_double(r.mean_accommodated) + "," + detail::format_double(r.std) + "," +
               std::to_string(r.seed) + "\n";
    }
    return out;
}

inline nlohmann::json results_json(const ResultTable& table, const nlohmann::json* header = nullptr) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : table)
        rows.push_back({{"axis", r.axis},
                        {"value", r.value},
                        {"scheduler", r.scheduler},
                        {"episodes", r.episodes},
                        {"mean_accommodated", r.mean_accommodated},
                        {"std", r.std},
                        {"seed", r.seed}});
    nlohmann::json doc{{"rows", rows}};
    if (header) doc["config"] = *header;
    return doc;
}

inline void export_results(const ResultTable& table, const std::string& path, ResultFormat format,
                           const nlohmann::json* header = nullptr) {
    try {
        detail::write_file(path, format == ResultFormat::Csv ? results_csv(table, header)
                                                             : results_json(table, header).dump(2) + "\n");
    } catch (const IoError& e) {
        throw IoError(std::string("export_results: ") + e.what());
    }
}

inline ResultTable load_results_json(const std::string& path) {
    const auto doc = detail::parse_file(path);
    ResultTable table;
    try {
        for (const auto& r : doc.at("rows"))
            table.push_back({r.at("axis").get<std::string>(), r.at("value").get<std::int64_t>(),
                             r.at("scheduler").get<std::string>(), r.at("episodes").get<std::size_t>(),
                             r.at("mean_accommodated").get<double>(), r.at("std").get<double>(),
                             r.at("seed").get<std::uint64_t>()});
    } catch (const nlohmann::json::exception& e) {
        throw IoError("'" + path + "': " + e.what());
    }
    return table;
}

}  // namespace sliceforge
