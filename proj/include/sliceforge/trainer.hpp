#pragma once

// Return computation, experience replay and the DRN training loop.

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "sliceforge/core.hpp"
#include "sliceforge/drn.hpp"
#include "sliceforge/nn.hpp"
#include "sliceforge/sched.hpp"

namespace sliceforge {

struct RewardConfig {
    double alpha = 0.2;    // per resolved slice
    double beta = -1.0;    // per unresolved slice at the terminal step
    double lambda = 0.9;   // discount

    void validate() const {
        if (!(alpha > 0.0)) throw ConfigError("reward: alpha must be > 0");
        if (!(beta < 0.0)) throw ConfigError("reward: beta must be < 0");
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("reward: lambda must be in [0, 1]");
    }
};

// Backward pass over the trace:
//   terminal step:  P = n_r alpha + (l - n_r) beta
//   earlier steps:  P = n_r alpha + lambda P(next)
inline std::vector<double> compute_returns(const EpisodeTrace& trace, const RewardConfig& cfg, std::size_t l) {
    std::vector<double> ret(trace.steps.size());
    for (std::size_t t = ret.size(); t-- > 0;) {
        const auto nr = static_cast<double>(trace.steps[t].n_r_after);
        if (t + 1 == ret.size())
            ret[t] = nr * cfg.alpha + (static_cast<double>(l) - nr) * cfg.beta;
        else
            ret[t] = nr * cfg.alpha + cfg.lambda * ret[t + 1];
    }
    return ret;
}

// Training view of a finished episode. The mask of step t is one-hot at actions[t].
struct EpisodeRecord {
    std::vector<StateEncoding> states;
    std::vector<std::size_t> actions;
    std::vector<double> returns;
    std::size_t accommodated = 0;
};

inline EpisodeRecord make_record(const EpisodeTrace& trace, std::vector<double> returns) {
    EpisodeRecord rec;
    for (const auto& step : trace.steps) {
        rec.states.push_back(step.encoding);
        rec.actions.push_back(step.action);
    }
    rec.returns = std::move(returns);
    rec.accommodated = trace.accommodated();
    return rec;
}

// Bounded FIFO of episodes.
class ReplayMemory {
public:
    explicit ReplayMemory(std::size_t capacity) : capacity_(capacity) {
        if (capacity == 0) throw ConfigError("replay memory: capacity must be positive");
    }

    void push(EpisodeRecord rec) {
        if (episodes_.size() == capacity_) episodes_.pop_front();
        episodes_.push_back(std::move(rec));
    }

    std::size_t size() const noexcept { return episodes_.size(); }
    std::size_t capacity() const noexcept { return capacity_; }
    const EpisodeRecord& operator[](std::size_t i) const { return episodes_[i]; }

    // k distinct episodes, uniformly at random (partial Fisher-Yates).
    std::vector<const EpisodeRecord*> sample(std::size_t k, Rng& rng) const {
        if (k > episodes_.size()) throw UsageError("replay memory: sample larger than memory");
        std::vector<std::size_t> idx(episodes_.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::vector<const EpisodeRecord*> out;
        out.reserve(k);
        for (std::size_t i = 0; i < k; ++i) {
            std::swap(idx[i], idx[i + rng.uniform_index(idx.size() - i)]);
            out.push_back(&episodes_[idx[i]]);
        }
        return out;
    }

private:
    std::size_t capacity_;
    std::deque<EpisodeRecord> episodes_;
};

// sum_t masked_mse(pred_t, P_t * 1, m_t); every mask must be one-hot.
inline double loss_episode(std::span<const std::vector<double>> preds, std::span<const double> returns,
                           std::span<const std::vector<std::uint8_t>> masks) {
    if (preds.size() != returns.size() || preds.size() != masks.size())
        throw ShapeError("loss_episode: step counts differ");
    double total = 0.0;
    for (std::size_t t = 0; t < preds.size(); ++t) {
        if (std::ranges::count(masks[t], std::uint8_t{1}) != 1 ||
            std::ranges::any_of(masks[t], [](std::uint8_t m) { return m > 1; }))
            throw UsageError("loss_episode: mask of step " + std::to_string(t) + " is not one-hot");
        const std::vector<double> target(preds[t].size(), returns[t]);
        total += nn::masked_mse(preds[t], target, masks[t]).loss;
    }
    return total;
}

// Mean over episodes of loss_episode, with gradients accumulated into p.
// Only the taken action's row passes through the head: masked-out rows
// contribute neither loss nor gradient.
inline double batch_loss_and_grad(DrnParams& p, std::span<const EpisodeRecord* const> episodes,
                                  std::size_t chunk_states = 512) {
    p.zero_grad();
    if (episodes.empty()) return 0.0;
    const double inv_e = 1.0 / static_cast<double>(episodes.size());

    std::vector<DrnQuery> queries;
    std::vector<double> targets;
    double loss = 0.0;
    auto flush = [&] {
        if (queries.empty()) return;
        DrnTape tape;
        const auto pred = drn_forward(p, queries, &tape);
        std::vector<double> dout(pred.size());
        for (std::size_t i = 0; i < pred.size(); ++i) {
            const double diff = pred[i] - targets[i];
            loss += diff * diff * inv_e;
            dout[i] = 2.0 * diff * inv_e;
        }
        drn_backward(p, tape, dout);
        queries.clear();
        targets.clear();
    };
    for (const EpisodeRecord* ep : episodes) {
        for (std::size_t t = 0; t < ep->states.size(); ++t) {
            queries.push_back({&ep->states[t], {ep->actions[t]}});
            targets.push_back(ep->returns[t]);
            if (queries.size() == chunk_states) flush();
        }
    }
    flush();
    return loss;
}

// DRN scheduling with epsilon-greedy exploration over feasible slices. One
// uniform draw per step decides exploration; a second picks the slice.
inline EpisodeTrace rollout(const DrnParams& p, const Scenario& scenario, double epsilon, Rng& rng) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("rollout: epsilon must be in [0, 1]");
    if (!p.config.matches(scenario)) throw ShapeError("rollout: scenario dimensions do not match the network");
    auto pick = [&](const EnvState&, const StateEncoding& enc, std::span<const std::uint8_t> feasible) {
        if (rng.uniform01() < epsilon) {
            std::vector<std::size_t> options;
            for (std::size_t i = 0; i < feasible.size(); ++i)
                if (feasible[i]) options.push_back(i);
            return options[rng.uniform_index(options.size())];
        }
        return select_action(drn_forward(p, enc), feasible);
    };
    return run_episode(scenario, pick, p.config.scale);
}

struct TrainConfig {
    std::size_t iterations = 500;
    std::size_t batch_size = 256;
    double learning_rate = 1e-3;
    double eps_start = 1.0;
    double eps_end = 0.05;
    double eps_decay_fraction = 0.5;  // share of iterations over which epsilon decays linearly
    RewardConfig reward;
    ScenarioConfig scenario = ScenarioConfig::base();
    std::uint64_t seed = 0;
    std::size_t replay_capacity = 10000;
    std::size_t chunk_states = 512;
    // When non-empty, iteration i trains on fixed_scenarios[i % size] instead
    // of a freshly generated instance.
    std::vector<Scenario> fixed_scenarios;

    void validate() const {
        if (iterations == 0) throw ConfigError("train: iterations must be >= 1");
        if (batch_size == 0) throw ConfigError("train: batch size must be >= 1");
        if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning rate must be >= 0");
        if (!(eps_start >= 0.0 && eps_start <= 1.0 && eps_end >= 0.0 && eps_end <= 1.0))
            throw ConfigError("train: epsilon bounds must be in [0, 1]");
        if (!(eps_decay_fraction >= 0.0 && eps_decay_fraction <= 1.0))
            throw ConfigError("train: epsilon decay fraction must be in [0, 1]");
        if (replay_capacity < batch_size) throw ConfigError("train: replay capacity below batch size");
        if (chunk_states == 0) throw ConfigError("train: chunk size must be positive");
        reward.validate();
        scenario.validate();
        for (const auto& sc : fixed_scenarios)
            if (sc.n != scenario.n || sc.l != scenario.l || sc.s != scenario.s)
                throw ConfigError("train: fixed scenario dimensions differ from the scenario config");
    }

    double epsilon_at(std::size_t iteration) const {
        const double span = std::floor(eps_decay_fraction * static_cast<double>(iterations));
        if (span < 1.0 || static_cast<double>(iteration) >= span) return eps_end;
        return eps_start + (eps_end - eps_start) * static_cast<double>(iteration) / span;
    }

    // Seed of the instance generated at `iteration`.
    std::uint64_t scenario_seed(std::size_t iteration) const {
        return Rng::stream(seed, StreamPurpose::Scenario, iteration).next();
    }
};

struct TrainLogRow {
    std::size_t iteration = 0;
    std::optional<double> loss;  // empty until the memory can fill a batch
    std::size_t n_r = 0;
    double epsilon = 0.0;
    double wall_ms = 0.0;
};

struct TrainResult {
    DrnParams model;
    std::vector<TrainLogRow> log;
};

using TrainObserver = std::function<void(const TrainLogRow&)>;

// Each iteration: new instance, one exploring rollout, returns, then (once
// the memory holds batch_size episodes) one Adam step on the current episode
// plus batch_size-1 replayed ones. The episode enters memory afterwards.
inline TrainResult train(const TrainConfig& cfg, const TrainObserver& observe = {}, bool record_time = false,
                         std::optional<DrnParams> initial = std::nullopt) {
    cfg.validate();
    TrainResult result{initial ? std::move(*initial) : build_drn(DrnConfig::for_scenario(cfg.scenario), cfg.seed), {}};
    DrnParams& model = result.model;
    if (model.config.n != cfg.scenario.n || model.config.l != cfg.scenario.l || model.config.s != cfg.scenario.s)
        throw ConfigError("train: initial model dimensions differ from the scenario config");
    Rng explore = Rng::stream(cfg.seed, StreamPurpose::Exploration);
    Rng replay = Rng::stream(cfg.seed, StreamPurpose::Replay);
    ReplayMemory memory(cfg.replay_capacity);
    auto params = model.params();

    for (std::size_t it = 0; it < cfg.iterations; ++it) {
        const auto start = std::chrono::steady_clock::now();
        Scenario scenario;
        if (cfg.fixed_scenarios.empty()) {
            ScenarioConfig sc = cfg.scenario;
            sc.seed = cfg.scenario_seed(it);
            scenario = generate_scenario(sc);
        } else {
            scenario = cfg.fixed_scenarios[it % cfg.fixed_scenarios.size()];
        }

        TrainLogRow row;
        row.iteration = it;
        row.epsilon = cfg.epsilon_at(it);
        const EpisodeTrace trace = rollout(model, scenario, row.epsilon, explore);
        EpisodeRecord record = make_record(trace, compute_returns(trace, cfg.reward, scenario.l));
        row.n_r = record.accommodated;

        if (memory.size() >= cfg.batch_size) {
            auto batch = memory.sample(cfg.batch_size - 1, replay);
            batch.push_back(&record);
            const double loss = batch_loss_and_grad(model, batch, cfg.chunk_states);
            if (!std::isfinite(loss))
                throw NumericError("train: non-finite loss at iteration " + std::to_string(it));
            nn::adam_step(params, model.adam, cfg.learning_rate);
            ++model.iteration;
            row.loss = loss;
        }
        memory.push(std::move(record));

        if (record_time)
            row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        if (observe) observe(row);
        result.log.push_back(row);
    }
    return result;
}

inline std::string train_log_csv(std::span<const TrainLogRow> log) {
    std::ostringstream out;
    out.precision(17);
    out << "iteration,loss,n_r,epsilon,wall_ms\n";
    for (const auto& r : log) {
        out << r.iteration << ',';
        if (r.loss) out << *r.loss;
        out << ',' << r.n_r << ',' << r.epsilon << ',' << r.wall_ms << '\n';
    }
    return out.str();
}

}  // namespace sliceforge
