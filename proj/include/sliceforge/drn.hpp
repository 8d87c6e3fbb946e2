#pragma once

// Deep Reward Network: predicts, for every slice, the return obtained if that
// slice is accommodated next.
//
//   U_sub = Emb_sub(substrate)            n -> n -> n -> n
//   U_sl  = Emb_sl(row) for every row     s -> s -> s -> s
//   S     = MHSA context of U_sl          l x l, 5 heads of width s
//   rho_i = Head([U_sub | U_sl[i] | S[i]])  (n+s+l) -> 3(n+s) x3 -> 1
//
// The head is shared across rows, so each slice gets one scalar.

#include <cstddef>
#include <cstdint>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sliceforge/core.hpp"
#include "sliceforge/nn.hpp"
#include "sliceforge/sched.hpp"

namespace sliceforge {

inline constexpr int kCheckpointFormatVersion = 1;

struct DrnConfig {
    std::size_t n = 0;
    std::size_t l = 0;
    std::size_t s = 0;
    std::size_t heads = 5;
    std::size_t head_width = 0;   // 3(n+s)
    std::size_t head_hidden = 3;  // hidden layers in the output head
    std::size_t embed_layers = 3;
    double scale = 1.0;           // divisor applied by encode_state

    static DrnConfig for_scenario(const ScenarioConfig& sc) {
        DrnConfig c;
        c.n = sc.n;
        c.l = sc.l;
        c.s = sc.s;
        c.head_width = 3 * (sc.n + sc.s);
        c.scale = sc.cap_range.hi > 0 ? static_cast<double>(sc.cap_range.hi) : 1.0;
        return c;
    }

    std::size_t head_input_width() const noexcept { return n + s + l; }

    bool matches(const Scenario& sc) const noexcept { return sc.n == n && sc.l == l && sc.s == s; }

    void validate() const {
        if (n == 0 || l == 0 || s == 0 || heads == 0 || head_width == 0 || embed_layers == 0)
            throw ConfigError("drn config: all widths must be positive");
        if (!(scale > 0.0)) throw ConfigError("drn config: scale must be positive");
    }

    friend bool operator==(const DrnConfig&, const DrnConfig&) = default;
};

struct DrnParams {
    DrnConfig config;
    std::vector<nn::DenseLayer> substrate_embed;
    std::vector<nn::DenseLayer> slice_embed;
    nn::MhsaParams mhsa;
    std::vector<nn::DenseLayer> head;
    nn::AdamState adam;
    std::uint64_t iteration = 0;

    // Stable order; names double as checkpoint keys.
    std::vector<nn::ParamRef> params() {
        std::vector<nn::ParamRef> out;
        auto add_block = [&](const std::string& prefix, std::vector<nn::DenseLayer>& block) {
            for (std::size_t i = 0; i < block.size(); ++i) {
                out.push_back({prefix + "." + std::to_string(i) + ".W", &block[i].W, &block[i].dW});
                out.push_back({prefix + "." + std::to_string(i) + ".b", &block[i].b, &block[i].db});
            }
        };
        add_block("substrate_embed", substrate_embed);
        add_block("slice_embed", slice_embed);
        for (std::size_t h = 0; h < mhsa.heads(); ++h) {
            out.push_back({"mhsa." + std::to_string(h) + ".Wq", &mhsa.Wq[h], &mhsa.dWq[h]});
            out.push_back({"mhsa." + std::to_string(h) + ".Wk", &mhsa.Wk[h], &mhsa.dWk[h]});
        }
        add_block("head", head);
        return out;
    }

    void zero_grad() {
        for (auto& p : params()) p.grad->fill(0.0);
    }
};

inline DrnParams build_drn(const DrnConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng = Rng::stream(seed, StreamPurpose::Init);
    DrnParams p;
    p.config = config;
    for (std::size_t i = 0; i < config.embed_layers; ++i) p.substrate_embed.push_back(nn::make_dense(config.n, config.n, rng));
    for (std::size_t i = 0; i < config.embed_layers; ++i) p.slice_embed.push_back(nn::make_dense(config.s, config.s, rng));
    p.mhsa = nn::make_mhsa(config.s, config.heads, config.s, rng);
    std::size_t width = config.head_input_width();
    for (std::size_t i = 0; i < config.head_hidden; ++i) {
        p.head.push_back(nn::make_dense(width, config.head_width, rng));
        width = config.head_width;
    }
    p.head.push_back(nn::make_dense(width, 1, rng));
    p.adam = nn::make_adam(p.params());
    return p;
}

// One encoded state and the slice rows whose reward is wanted.
struct DrnQuery {
    const StateEncoding* state = nullptr;
    std::vector<std::size_t> rows;
};

struct DrnTape {
    std::vector<DrnQuery> queries;
    nn::MlpTape substrate, slices, head;
    nn::Tensor u_sub;                 // G x n
    std::vector<nn::Tensor> u_slice;  // per query, l x s
    std::vector<nn::MhsaTape> mhsa;
    std::vector<nn::Tensor> context;  // per query, l x l
};

// Rewards for every requested row, concatenated in query order.
inline std::vector<double> drn_forward(const DrnParams& p, std::span<const DrnQuery> queries, DrnTape* tape = nullptr) {
    const auto& c = p.config;
    const std::size_t G = queries.size();
    nn::Tensor xs = nn::Tensor::matrix(G, c.n);
    nn::Tensor xd = nn::Tensor::matrix(G * c.l, c.s);
    std::size_t total_rows = 0;
    for (std::size_t g = 0; g < G; ++g) {
        const auto& enc = *queries[g].state;
        if (enc.substrate.size() != c.n || enc.demand.size() != c.l * c.s)
            throw ShapeError("drn_forward: encoding does not match network dimensions");
        std::ranges::copy(enc.substrate, xs.data.begin() + static_cast<std::ptrdiff_t>(g * c.n));
        std::ranges::copy(enc.demand, xd.data.begin() + static_cast<std::ptrdiff_t>(g * c.l * c.s));
        for (std::size_t r : queries[g].rows)
            if (r >= c.l) throw ShapeError("drn_forward: row index out of range");
        total_rows += queries[g].rows.size();
    }

    nn::MlpTape sub_tape, slice_tape, head_tape;
    const nn::Tensor u_sub = nn::mlp_forward(p.substrate_embed, xs, tape ? &sub_tape : nullptr);
    const nn::Tensor u_all = nn::mlp_forward(p.slice_embed, xd, tape ? &slice_tape : nullptr);

    const std::size_t width = c.head_input_width();
    nn::Tensor z = nn::Tensor::matrix(total_rows, width);
    std::vector<nn::Tensor> u_slice(G), context(G);
    std::vector<nn::MhsaTape> mhsa_tapes(tape ? G : 0);
    std::size_t r_out = 0;
    for (std::size_t g = 0; g < G; ++g) {
        u_slice[g] = nn::Tensor::matrix(c.l, c.s);
        std::copy_n(u_all.data.begin() + static_cast<std::ptrdiff_t>(g * c.l * c.s), c.l * c.s, u_slice[g].data.begin());
        context[g] = nn::mhsa_forward(p.mhsa, u_slice[g], tape ? &mhsa_tapes[g] : nullptr);
        for (std::size_t i : queries[g].rows) {
            double* dst = &z(r_out++, 0);
            dst = std::copy_n(&u_sub(g, 0), c.n, dst);
            dst = std::copy_n(&u_slice[g](i, 0), c.s, dst);
            std::copy_n(&context[g](i, 0), c.l, dst);
        }
    }
    nn::Tensor out = nn::mlp_forward(p.head, z, tape ? &head_tape : nullptr);

    if (tape) {
        tape->queries.assign(queries.begin(), queries.end());
        tape->substrate = std::move(sub_tape);
        tape->slices = std::move(slice_tape);
        tape->head = std::move(head_tape);
        tape->u_sub = u_sub;
        tape->u_slice = std::move(u_slice);
        tape->mhsa = std::move(mhsa_tapes);
        tape->context = std::move(context);
    }
    return out.values();
}

// Rewards of all l slices in one state.
inline std::vector<double> drn_forward(const DrnParams& p, const StateEncoding& enc) {
    DrnQuery q{&enc, {}};
    for (std::size_t i = 0; i < p.config.l; ++i) q.rows.push_back(i);
    return drn_forward(p, std::span<const DrnQuery>(&q, 1));
}

// Accumulates parameter gradients given d(loss)/d(output) per returned row.
inline void drn_backward(DrnParams& p, const DrnTape& tape, std::span<const double> dout) {
    const auto& c = p.config;
    const std::size_t G = tape.queries.size();
    nn::Tensor dz = nn::mlp_backward(p.head, tape.head, nn::Tensor::from({dout.size(), 1}, {dout.begin(), dout.end()}));

    nn::Tensor du_sub = nn::Tensor::matrix(G, c.n);
    nn::Tensor du_all = nn::Tensor::matrix(G * c.l, c.s);
    std::size_t r = 0;
    for (std::size_t g = 0; g < G; ++g) {
        const auto& rows = tape.queries[g].rows;
        if (rows.empty()) continue;
        nn::Tensor dctx = nn::Tensor::matrix(c.l, c.l);
        for (std::size_t i : rows) {
            const double* src = &dz(r++, 0);
            for (std::size_t k = 0; k < c.n; ++k) du_sub(g, k) += src[k];
            for (std::size_t k = 0; k < c.s; ++k) du_all(g * c.l + i, k) += src[c.n + k];
            for (std::size_t k = 0; k < c.l; ++k) dctx(i, k) += src[c.n + c.s + k];
        }
        const nn::Tensor du = nn::mhsa_backward(p.mhsa, tape.u_slice[g], tape.mhsa[g], dctx);
        for (std::size_t k = 0; k < c.l * c.s; ++k) du_all.data[g * c.l * c.s + k] += du.data[k];
    }
    nn::mlp_backward(p.substrate_embed, tape.substrate, std::move(du_sub));
    nn::mlp_backward(p.slice_embed, tape.slices, std::move(du_all));
}

// Highest reward among feasible slices; lowest index on ties.
inline std::size_t select_action(std::span<const double> rho, std::span<const std::uint8_t> feasible) {
    if (rho.size() != feasible.size()) throw ShapeError("select_action: length mismatch");
    std::size_t best = rho.size();
    for (std::size_t i = 0; i < rho.size(); ++i)
        if (feasible[i] && (best == rho.size() || rho[i] > rho[best])) best = i;
    if (best == rho.size()) throw UsageError("select_action: no feasible slice");
    return best;
}

inline SlicePicker drn_picker(const DrnParams& p) {
    return [&p](const EnvState&, const StateEncoding& enc, std::span<const std::uint8_t> feasible) {
        const auto rho = drn_forward(p, enc);
        return select_action(rho, feasible);
    };
}

inline EpisodeTrace run_drn_episode(const DrnParams& p, const Scenario& scenario) {
    if (!p.config.matches(scenario)) throw ShapeError("drn: scenario dimensions do not match the network");
    return run_episode(scenario, drn_picker(p), p.config.scale);
}

// ---- checkpoints -------------------------------------------------------------

inline void to_json(nlohmann::json& j, const DrnConfig& c) {
    j = nlohmann::json{{"n", c.n},         {"l", c.l},
                       {"s", c.s},         {"heads", c.heads},
                       {"head_width", c.head_width}, {"head_hidden", c.head_hidden},
                       {"embed_layers", c.embed_layers}, {"scale", c.scale}};
}

inline void from_json(const nlohmann::json& j, DrnConfig& c) {
    c.n = j.at("n").get<std::size_t>();
    c.l = j.at("l").get<std::size_t>();
    c.s = j.at("s").get<std::size_t>();
    c.heads = j.at("heads").get<std::size_t>();
    c.head_width = j.at("head_width").get<std::size_t>();
    c.head_hidden = j.at("head_hidden").get<std::size_t>();
    c.embed_layers = j.at("embed_layers").get<std::size_t>();
    c.scale = j.at("scale").get<double>();
}

namespace detail {

inline nlohmann::json tensor_json(const nn::Tensor& t) { return {{"shape", t.shape}, {"data", t.values()}}; }

inline void tensor_from_json(const nlohmann::json& j, nn::Tensor& t, const std::string& name) {
    auto shape = j.at("shape").get<std::vector<std::size_t>>();
    if (shape != t.shape) throw IoError("checkpoint: shape mismatch for '" + name + "'");
    auto data = j.at("data").get<std::vector<double>>();
    if (data.size() != t.size()) throw IoError("checkpoint: data length mismatch for '" + name + "'");
    t.data.assign(data.begin(), data.end());
}

}  // namespace detail

inline nlohmann::json checkpoint_json(const DrnParams& cp) {
    auto& p = const_cast<DrnParams&>(cp);  // params() hands out mutable refs; only read here
    nlohmann::json params = nlohmann::json::object(), m = nlohmann::json::object(), v = nlohmann::json::object();
    const auto refs = p.params();
    for (std::size_t k = 0; k < refs.size(); ++k) {
        params[refs[k].name] = detail::tensor_json(*refs[k].value);
        m[refs[k].name] = detail::tensor_json(p.adam.m[k]);
        v[refs[k].name] = detail::tensor_json(p.adam.v[k]);
    }
    return {{"format_version", kCheckpointFormatVersion},
            {"config", p.config},
            {"iteration", p.iteration},
            {"params", params},
            {"adam", {{"beta1", p.adam.beta1}, {"beta2", p.adam.beta2}, {"eps", p.adam.eps},
                      {"step", p.adam.step}, {"m", m}, {"v", v}}}};
}

inline DrnParams checkpoint_from_json(const nlohmann::json& j) {
    try {
        const int version = j.at("format_version").get<int>();
        if (version != kCheckpointFormatVersion)
            throw IoError("checkpoint: unsupported format_version " + std::to_string(version));
        DrnParams p = build_drn(j.at("config").get<DrnConfig>(), 0);
        p.iteration = j.at("iteration").get<std::uint64_t>();
        const auto& adam = j.at("adam");
        p.adam.beta1 = adam.at("beta1").get<double>();
        p.adam.beta2 = adam.at("beta2").get<double>();
        p.adam.eps = adam.at("eps").get<double>();
        p.adam.step = adam.at("step").get<std::uint64_t>();
        const auto refs = p.params();
        if (j.at("params").size() != refs.size()) throw IoError("checkpoint: parameter count mismatch");
        for (std::size_t k = 0; k < refs.size(); ++k) {
            detail::tensor_from_json(j.at("params").at(refs[k].name), *refs[k].value, refs[k].name);
            detail::tensor_from_json(adam.at("m").at(refs[k].name), p.adam.m[k], refs[k].name);
            detail::tensor_from_json(adam.at("v").at(refs[k].name), p.adam.v[k], refs[k].name);
        }
        return p;
    } catch (const nlohmann::json::exception& e) {
        throw IoError(std::string("checkpoint: ") + e.what());
    } catch (const ConfigError& e) {
        throw IoError(std::string("checkpoint: ") + e.what());
    }
}

inline void save_checkpoint(const DrnParams& p, const std::string& path) {
    detail::write_file(path, checkpoint_json(p).dump() + "\n");
}

inline DrnParams load_checkpoint(const std::string& path) {
    return checkpoint_from_json(detail::parse_file(path));
}

// Rejects checkpoints whose dimensions differ from the expected config.
inline DrnParams load_checkpoint(const std::string& path, const DrnConfig& expected) {
    DrnParams p = load_checkpoint(path);
    if (p.config.n != expected.n || p.config.l != expected.l || p.config.s != expected.s)
        throw IoError("checkpoint '" + path + "' was trained for n=" + std::to_string(p.config.n) +
                      ", l=" + std::to_string(p.config.l) + ", s=" + std::to_string(p.config.s));
    return p;
}

}  // namespace sliceforge
