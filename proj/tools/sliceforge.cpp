// sliceforge: scenario generation, DRN training, evaluation and sweeps.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 runtime failure.

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "sliceforge/sliceforge.hpp"

using namespace sliceforge;
using nlohmann::json;

namespace {

std::size_t thread_count() {
    if (const char* env = std::getenv("SLICEFORGE_THREADS")) {
        try {
            const long v = std::stol(env);
            if (v >= 1) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
        throw UsageError("SLICEFORGE_THREADS must be a positive integer");
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Scenario settings shared by every subcommand.
struct ScenarioOptions {
    std::string config_path;
    std::string profile = "base";

    void add(CLI::App& app) {
        app.add_option("--config", config_path, "Scenario config JSON (missing fields take base defaults)");
        app.add_option("--profile", profile, "Built-in scenario profile when no --config is given")
            ->check(CLI::IsMember({"base", "mini"}));
    }

    ScenarioConfig resolve() const {
        if (!config_path.empty()) return load_config(config_path);
        return profile == "mini" ? ScenarioConfig::mini() : ScenarioConfig::base();
    }
};

struct GenOptions {
    ScenarioOptions scenario;
    std::optional<std::uint64_t> seed;
    std::string out;
};

struct TrainOptions {
    ScenarioOptions scenario;
    std::uint64_t seed = 0;
    TrainConfig cfg;
    std::string out, log;
    bool timing = false;
    std::size_t progress = 0;
};

struct EvalOptions {
    ScenarioOptions scenario;
    std::string scheduler, ckpt, out;
    std::size_t episodes = 100;
    std::uint64_t seed = 0;
};

struct SweepOptions {
    ScenarioOptions scenario;
    std::string axis, out;
    std::int64_t from = 0, to = 0;
    std::vector<std::string> schedulers;
    std::vector<std::string> ckpts;
    std::size_t episodes = 100;
    std::uint64_t seed = 0;
    std::size_t train_iters = 0;
    double train_lr = TrainConfig{}.learning_rate;
    std::size_t train_batch = TrainConfig{}.batch_size;
    std::uint64_t train_seed = 0;
};

struct GradCheckOptions {
    std::string profile = "mini";
    std::uint64_t seed = 0;
    std::size_t samples = 16;
    double tolerance = 1e-3;
};

json train_config_json(const TrainConfig& c) {
    return {{"iterations", c.iterations},
            {"batch_size", c.batch_size},
            {"learning_rate", c.learning_rate},
            {"eps_start", c.eps_start},
            {"eps_end", c.eps_end},
            {"eps_decay_fraction", c.eps_decay_fraction},
            {"alpha", c.reward.alpha},
            {"beta", c.reward.beta},
            {"lambda", c.reward.lambda},
            {"replay_capacity", c.replay_capacity},
            {"seed", c.seed},
            {"scenario", c.scenario}};
}

std::vector<SchedulerKind> parse_schedulers(const std::vector<std::string>& names) {
    std::vector<SchedulerKind> out;
    for (const auto& name : names) {
        const auto kind = parse_scheduler(name);
        if (!kind) throw UsageError("unknown scheduler '" + name + "'");
        out.push_back(*kind);
    }
    if (out.empty()) throw UsageError("no schedulers given");
    return out;
}

int run_gen(const GenOptions& o) {
    ScenarioConfig cfg = o.scenario.resolve();
    if (o.seed) cfg.seed = *o.seed;
    json doc = generate_scenario(cfg);
    doc["config"] = cfg;
    detail::write_file(o.out, doc.dump() + "\n");
    return 0;
}

int run_train(TrainOptions o) {
    o.cfg.scenario = o.scenario.resolve();
    o.cfg.seed = o.seed;
    const auto t0 = std::chrono::steady_clock::now();
    auto observe = [&](const TrainLogRow& row) {
        if (o.progress == 0 || (row.iteration + 1) % o.progress != 0) return;
        std::cerr << "iteration " << row.iteration + 1 << "/" << o.cfg.iterations << "  n_r " << row.n_r;
        if (row.loss) std::cerr << "  loss " << *row.loss;
        std::cerr << "  eps " << row.epsilon << "\n";
    };
    const TrainResult result = train(o.cfg, observe, o.timing);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    json ckpt = checkpoint_json(result.model);
    ckpt["train_config"] = train_config_json(o.cfg);
    detail::write_file(o.out, ckpt.dump() + "\n");
    if (!o.log.empty())
        detail::write_file(o.log, "# config: " + train_config_json(o.cfg).dump() + "\n" + train_log_csv(result.log));

    std::cout << "trained " << o.cfg.iterations << " iterations (" << result.model.iteration << " updates) in "
              << secs << " s -> " << o.out << "\n";
    return 0;
}

int run_eval(const EvalOptions& o) {
    const auto kind = parse_scheduler(o.scheduler);
    if (!kind) throw UsageError("unknown scheduler '" + o.scheduler + "'");
    if (*kind == SchedulerKind::Drn && o.ckpt.empty()) throw UsageError("--scheduler drn requires --ckpt");
    ScenarioConfig cfg = o.scenario.resolve();
    cfg.seed = o.seed;

    std::optional<DrnParams> model;
    if (*kind == SchedulerKind::Drn) model = load_checkpoint(o.ckpt, DrnConfig::for_scenario(cfg));
    const auto result = evaluate({*kind, model ? &*model : nullptr}, cfg, o.episodes, thread_count());

    json header{{"command", "eval"}, {"scheduler", o.scheduler}, {"episodes", o.episodes}, {"scenario", cfg}};
    if (!o.ckpt.empty()) header["ckpt"] = o.ckpt;
    const ResultTable table{make_row("none", 0, result)};
    export_results(table, o.out, format_from_path(o.out), &header);
    std::cout << o.scheduler << ": mean accommodated " << result.mean_accommodated << " (std " << result.std
              << ", " << o.episodes << " episodes)\n";
    return 0;
}

int run_sweep(const SweepOptions& o) {
    const auto axis = parse_axis(o.axis);
    if (!axis) throw UsageError("unknown axis '" + o.axis + "'");
    const auto kinds = parse_schedulers(o.schedulers);
    const bool wants_drn = std::ranges::find(kinds, SchedulerKind::Drn) != kinds.end();
    if (wants_drn && o.ckpts.empty() && o.train_iters == 0)
        throw UsageError("sweeping drn requires --ckpt or --train-iters");
    const auto format = format_from_path(o.out);

    SweepSpec spec{*axis, axis_values(o.from, o.to), o.scenario.resolve(), o.episodes};
    spec.base.seed = o.seed;

    std::vector<DrnParams> loaded;
    for (const auto& path : o.ckpts) loaded.push_back(load_checkpoint(path));
    std::map<std::string, DrnParams> trained;  // keyed by the scenario config it was trained for
    const ModelProvider models = [&](const ScenarioConfig& c) -> const DrnParams& {
        ScenarioConfig key_cfg = c;
        key_cfg.seed = 0;
        const std::string key = json(key_cfg).dump();
        for (const auto& m : loaded)
            if (m.config.n == c.n && m.config.l == c.l && m.config.s == c.s) return m;
        if (auto it = trained.find(key); it != trained.end()) return it->second;
        if (o.train_iters == 0)
            throw UsageError("no checkpoint matches n=" + std::to_string(c.n) + " l=" + std::to_string(c.l) +
                             " s=" + std::to_string(c.s));
        TrainConfig tc;
        tc.scenario = key_cfg;
        tc.iterations = o.train_iters;
        tc.learning_rate = o.train_lr;
        tc.batch_size = o.train_batch;
        tc.seed = o.train_seed;
        std::cerr << "training for " << key << "\n";
        return trained.emplace(key, train(tc).model).first->second;
    };

    const ResultTable table = sweep(spec, kinds, models, thread_count());
    json header{{"command", "sweep"},
                {"axis", o.axis},
                {"from", o.from},
                {"to", o.to},
                {"schedulers", o.schedulers},
                {"episodes", o.episodes},
                {"scenario", spec.base}};
    if (!o.ckpts.empty()) header["ckpts"] = o.ckpts;
    if (o.train_iters > 0)
        header["train"] = {{"iterations", o.train_iters}, {"learning_rate", o.train_lr},
                           {"batch_size", o.train_batch}, {"seed", o.train_seed}};
    export_results(table, o.out, format, &header);
    for (const auto& r : table) std::cout << r.axis << "=" << r.value << " " << r.scheduler << " " << r.mean_accommodated << "\n";
    return 0;
}

int run_grad_check(const GradCheckOptions& o) {
    const ScenarioConfig sc = o.profile == "mini" ? ScenarioConfig::mini() : ScenarioConfig::base();
    DrnParams p = build_drn(DrnConfig::for_scenario(sc), o.seed);
    Rng rng = Rng::stream(o.seed, StreamPurpose::Evaluation);
    // Fresh zero biases leave dead rows exactly on the ReLU kink.
    for (const auto& r : p.params())
        if (r.name.ends_with(".b"))
            for (auto& v : r.value->data) v = rng.uniform_real(-0.1, 0.1);

    // Random states, random query rows and a random linear functional of the
    // outputs; the full profile probes a sample of entries per tensor.
    std::vector<StateEncoding> encs(3);
    for (auto& e : encs) {
        for (std::size_t k = 0; k < sc.n; ++k) e.substrate.push_back(rng.uniform01());
        for (std::size_t k = 0; k < sc.l * sc.s; ++k) e.demand.push_back(rng.uniform01());
    }
    std::vector<DrnQuery> queries;
    for (const auto& e : encs) queries.push_back({&e, {rng.uniform_index(sc.l), rng.uniform_index(sc.l)}});
    DrnTape tape;
    const auto out = drn_forward(p, queries, &tape);
    std::vector<double> weights(out.size());
    for (auto& w : weights) w = rng.uniform_real(-1.0, 1.0);
    p.zero_grad();
    drn_backward(p, tape, weights);
    auto loss = [&] {
        const auto y = drn_forward(p, queries);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * weights[i];
        return s;
    };
    const auto r = nn::grad_check(loss, p.params(), 1e-6, o.profile == "mini" ? 0 : o.samples, o.seed);
    const bool ok = r.max_rel_error < o.tolerance;
    std::cout << "grad-check " << o.profile << ": " << r.checked << " entries, max relative error " << r.max_rel_error
              << " at " << r.worst << " -> " << (ok ? "PASS" : "FAIL") << "\n";
    return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"sliceforge: network slice admission with a deep reward network"};
    app.require_subcommand(1, 1);

    GenOptions gen;
    auto* gen_cmd = app.add_subcommand("gen", "Generate a random scenario");
    gen.scenario.add(*gen_cmd);
    gen_cmd->add_option("--seed", gen.seed, "Scenario seed (overrides the config)");
    gen_cmd->add_option("--out", gen.out, "Output scenario JSON")->required();

    TrainOptions tr;
    auto* train_cmd = app.add_subcommand("train", "Train a DRN checkpoint");
    tr.scenario.add(*train_cmd);
    train_cmd->add_option("--seed", tr.seed, "Training seed");
    train_cmd->add_option("--lr", tr.cfg.learning_rate, "Adam learning rate")->capture_default_str();
    train_cmd->add_option("--iters", tr.cfg.iterations, "Training iterations")->capture_default_str();
    train_cmd->add_option("--batch", tr.cfg.batch_size, "Episodes per update")->capture_default_str();
    train_cmd->add_option("--replay", tr.cfg.replay_capacity, "Replay memory capacity")->capture_default_str();
    train_cmd->add_option("--eps-start", tr.cfg.eps_start, "Initial exploration rate")->capture_default_str();
    train_cmd->add_option("--eps-end", tr.cfg.eps_end, "Final exploration rate")->capture_default_str();
    train_cmd->add_option("--eps-decay", tr.cfg.eps_decay_fraction, "Share of iterations with decaying epsilon")
        ->capture_default_str();
    train_cmd->add_option("--alpha", tr.cfg.reward.alpha, "Reward per resolved slice")->capture_default_str();
    train_cmd->add_option("--beta", tr.cfg.reward.beta, "Penalty per unresolved slice")->capture_default_str();
    train_cmd->add_option("--lambda", tr.cfg.reward.lambda, "Discount")->capture_default_str();
    train_cmd->add_option("--out", tr.out, "Checkpoint path")->required();
    train_cmd->add_option("--log", tr.log, "Training log CSV");
    train_cmd->add_flag("--timing", tr.timing, "Record wall-clock milliseconds in the log");
    train_cmd->add_option("--progress", tr.progress, "Print a progress line every N iterations");

    EvalOptions ev;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate one scheduler");
    ev.scenario.add(*eval_cmd);
    eval_cmd->add_option("--scheduler", ev.scheduler, "all|max|min|total|drn")->required();
    eval_cmd->add_option("--ckpt", ev.ckpt, "DRN checkpoint");
    eval_cmd->add_option("--episodes", ev.episodes, "Evaluation episodes")->capture_default_str()->check(CLI::PositiveNumber);
    eval_cmd->add_option("--seed", ev.seed, "Evaluation seed");
    eval_cmd->add_option("--out", ev.out, "Result file (.csv or .json)")->required();

    SweepOptions sw;
    auto* sweep_cmd = app.add_subcommand("sweep", "Evaluate schedulers along a scarcity axis");
    sw.scenario.add(*sweep_cmd);
    sweep_cmd->add_option("--axis", sw.axis, "slices|vnfs|demand|capacity")->required();
    sweep_cmd->add_option("--from", sw.from, "First axis value")->required();
    sweep_cmd->add_option("--to", sw.to, "Last axis value")->required();
    sweep_cmd->add_option("--schedulers", sw.schedulers, "Comma-separated schedulers")->required()->delimiter(',');
    sweep_cmd->add_option("--ckpt", sw.ckpts, "DRN checkpoint(s), matched to axis points by dimensions");
    sweep_cmd->add_option("--train-iters", sw.train_iters, "Train a DRN per axis point for this many iterations");
    sweep_cmd->add_option("--train-lr", sw.train_lr, "Learning rate for --train-iters")->capture_default_str();
    sweep_cmd->add_option("--train-batch", sw.train_batch, "Batch size for --train-iters")->capture_default_str();
    sweep_cmd->add_option("--train-seed", sw.train_seed, "Seed for --train-iters");
    sweep_cmd->add_option("--episodes", sw.episodes, "Episodes per point")->capture_default_str()->check(CLI::PositiveNumber);
    sweep_cmd->add_option("--seed", sw.seed, "Evaluation seed");
    sweep_cmd->add_option("--out", sw.out, "Result file (.csv or .json)")->required();

    GradCheckOptions gc;
    auto* gc_cmd = app.add_subcommand("grad-check", "Finite-difference check of DRN gradients");
    gc_cmd->add_option("--profile", gc.profile, "mini (every entry) or full (sampled entries)")
        ->check(CLI::IsMember({"mini", "full"}))
        ->capture_default_str();
    gc_cmd->add_option("--seed", gc.seed, "Seed for weights and probes");
    gc_cmd->add_option("--samples", gc.samples, "Entries probed per tensor for the full profile")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    try {
        if (*gen_cmd) return run_gen(gen);
        if (*train_cmd) return run_train(tr);
        if (*eval_cmd) return run_eval(ev);
        if (*sweep_cmd) return run_sweep(sw);
        if (*gc_cmd) return run_grad_check(gc);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
