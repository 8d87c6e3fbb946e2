#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "sliceforge/drn.hpp"

using namespace sliceforge;

namespace {

StateEncoding random_encoding(const DrnConfig& c, Rng& rng) {
    StateEncoding enc;
    for (std::size_t k = 0; k < c.n; ++k) enc.substrate.push_back(rng.uniform_real(0.0, 1.0));
    for (std::size_t k = 0; k < c.l * c.s; ++k) enc.demand.push_back(rng.uniform_real(0.0, 1.0));
    return enc;
}

std::vector<std::size_t> all_rows(std::size_t l) {
    std::vector<std::size_t> r(l);
    std::iota(r.begin(), r.end(), std::size_t{0});
    return r;
}

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("sliceforge_drn_" + name)).string();
}

// Central-difference check of every DRN parameter on a linear functional of
// the outputs of several queries.
double drn_grad_error(const ScenarioConfig& sc, std::uint64_t seed) {
    DrnParams p = build_drn(DrnConfig::for_scenario(sc), seed);
    Rng rng(seed + 1000);
    // Zero biases put dead rows exactly on the ReLU kink, where central
    // differences see half a slope.
    for (const auto& r : p.params())
        if (r.name.ends_with(".b"))
            for (auto& v : r.value->data) v = rng.uniform_real(-0.1, 0.1);
    std::vector<StateEncoding> encs;
    for (int g = 0; g < 3; ++g) encs.push_back(random_encoding(p.config, rng));
    std::vector<DrnQuery> queries;
    for (const auto& e : encs) {
        DrnQuery q{&e, {}};
        for (std::size_t i = 0; i < p.config.l; ++i)
            if (rng.uniform01() < 0.5) q.rows.push_back(i);
        if (q.rows.empty()) q.rows.push_back(rng.uniform_index(p.config.l));
        queries.push_back(q);
    }
    DrnTape tape;
    const auto out = drn_forward(p, queries, &tape);
    std::vector<double> c(out.size());
    for (auto& v : c) v = rng.uniform_real(-1.0, 1.0);
    p.zero_grad();
    drn_backward(p, tape, c);
    auto loss = [&] {
        const auto y = drn_forward(p, queries);
        double s = 0.0;
        for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * c[i];
        return s;
    };
    return nn::grad_check(loss, p.params(), 1e-6).max_rel_error;
}

}  // namespace

TEST(DrnConfig, WidthsFollowScenario) {
    const auto base = DrnConfig::for_scenario(ScenarioConfig::base());
    EXPECT_EQ(base.head_input_width(), 130u);
    EXPECT_EQ(base.head_width, 330u);
    EXPECT_EQ(base.heads, 5u);
    EXPECT_EQ(base.scale, 30.0);
    const auto mini = DrnConfig::for_scenario(ScenarioConfig::mini());
    EXPECT_EQ(mini.head_input_width(), 30u);
    EXPECT_EQ(mini.head_width, 72u);
}

TEST(BuildDrn, LayerShapes) {
    const DrnParams p = build_drn(DrnConfig::for_scenario(ScenarioConfig::mini()), 1);
    ASSERT_EQ(p.substrate_embed.size(), 3u);
    ASSERT_EQ(p.slice_embed.size(), 3u);
    ASSERT_EQ(p.head.size(), 4u);
    EXPECT_EQ(p.substrate_embed[0].W.shape, (std::vector<std::size_t>{20, 20}));
    EXPECT_EQ(p.slice_embed[2].W.shape, (std::vector<std::size_t>{4, 4}));
    EXPECT_EQ(p.mhsa.heads(), 5u);
    EXPECT_EQ(p.head[0].W.shape, (std::vector<std::size_t>{72, 30}));
    EXPECT_EQ(p.head[3].W.shape, (std::vector<std::size_t>{1, 72}));
    for (const auto& layer : p.head)
        for (double b : layer.b.data) EXPECT_EQ(b, 0.0);
    const double bound = 1.0 / std::sqrt(30.0);
    for (double w : p.head[0].W.data) EXPECT_LE(std::abs(w), bound);
}

TEST(BuildDrn, SameSeedSameWeights) {
    const auto c = DrnConfig::for_scenario(ScenarioConfig::mini());
    EXPECT_EQ(checkpoint_json(build_drn(c, 3)), checkpoint_json(build_drn(c, 3)));
    EXPECT_NE(checkpoint_json(build_drn(c, 3)), checkpoint_json(build_drn(c, 4)));
}

TEST(DrnForward, OneRewardPerSlice) {
    const auto c = DrnConfig::for_scenario(ScenarioConfig::mini());
    const DrnParams p = build_drn(c, 1);
    Rng rng(1);
    const auto rho = drn_forward(p, random_encoding(c, rng));
    ASSERT_EQ(rho.size(), c.l);
    for (double v : rho) EXPECT_TRUE(std::isfinite(v));
}

TEST(DrnForward, RejectsWrongEncoding) {
    const auto c = DrnConfig::for_scenario(ScenarioConfig::mini());
    const DrnParams p = build_drn(c, 1);
    StateEncoding enc{std::vector<double>(c.n + 1, 0.0), std::vector<double>(c.l * c.s, 0.0)};
    EXPECT_THROW(drn_forward(p, enc), ShapeError);
}

TEST(DrnForward, IdenticalSlicesGetIdenticalRewards) {
    const auto c = DrnConfig::for_scenario(ScenarioConfig::mini());
    const DrnParams p = build_drn(c, 2);
    Rng rng(2);
    StateEncoding enc = random_encoding(c, rng);
    for (std::size_t k = 0; k < c.s; ++k) enc.demand[3 * c.s + k] = enc.demand[1 * c.s + k];
    const auto rho = drn_forward(p, enc);
    EXPECT_EQ(rho[1], rho[3]);
}

TEST(DrnForward, PermutingSlicesPermutesContextConsistently) {
    // Reordering the slices permutes the rows of the context matrix and its
    // columns alike, so the attention block is equivariant.
    const auto c = DrnConfig::for_scenario(ScenarioConfig::mini());
    const DrnParams p = build_drn(c, 5);
    Rng rng(5);
    nn::Tensor u = nn::Tensor::matrix(c.l, c.s);
    for (auto& v : u.data) v = rng.uniform_real(-1, 1);
    const std::vector<std::size_t> perm{3, 5, 0, 1, 4, 2};
    nn::Tensor up = nn::Tensor::matrix(c.l, c.s);
    for (std::size_t i = 0; i < c.l; ++i)
        for (std::size_t k = 0; k < c.s; ++k) up(i, k) = u(perm[i], k);
    const auto s = nn::mhsa_forward(p.mhsa, u), sp = nn::mhsa_forward(p.mhsa, up);
    for (std::size_t i = 0; i < c.l; ++i)
        for (std::size_t j = 0; j < c.l; ++j) EXPECT_NEAR(sp(i, j), s(perm[i], perm[j]), 1e-14);
}

TEST(DrnForward, BatchedMatchesSingleState) {
    const auto c = DrnConfig::for_scenario(ScenarioConfig::mini());
    const DrnParams p = build_drn(c, 6);
    Rng rng(6);
    std::vector<StateEncoding> encs;
    for (int g = 0; g < 4; ++g) encs.push_back(random_encoding(c, rng));
    std::vector<DrnQuery> queries;
    for (const auto& e : encs) queries.push_back({&e, {4, 0}});
    const auto batched = drn_forward(p, queries);
    ASSERT_EQ(batched.size(), 8u);
    for (std::size_t g = 0; g < encs.size(); ++g) {
        const auto single = drn_forward(p, encs[g]);
        EXPECT_NEAR(batched[2 * g], single[4], 1e-12);
        EXPECT_NEAR(batched[2 * g + 1], single[0], 1e-12);
    }
}

TEST(DrnBackward, GradientMatchesFiniteDifferences) {
    double worst = 0.0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) worst = std::max(worst, drn_grad_error(ScenarioConfig::mini(), seed));
    EXPECT_LT(worst, 1e-3);
}

TEST(SelectAction, Examples) {
    const std::vector<double> rho{0.3, 0.9, 0.5};
    EXPECT_EQ(select_action(rho, std::vector<std::uint8_t>{1, 0, 1}), 2u);
    EXPECT_EQ(select_action(rho, std::vector<std::uint8_t>{1, 1, 1}), 1u);
    const std::vector<double> tie{0.7, 0.7, 0.1};
    EXPECT_EQ(select_action(tie, std::vector<std::uint8_t>{1, 1, 1}), 0u);
    EXPECT_THROW(select_action(rho, std::vector<std::uint8_t>{0, 0, 0}), UsageError);
    EXPECT_THROW(select_action(rho, std::vector<std::uint8_t>{1, 0}), ShapeError);
}

TEST(SelectAction, InvariantUnderMonotoneTransform) {
    Rng rng(8);
    for (int trial = 0; trial < 500; ++trial) {
        std::vector<double> rho(7), moved(7);
        std::vector<std::uint8_t> feasible(7);
        for (std::size_t i = 0; i < 7; ++i) {
            rho[i] = rng.uniform_real(-3, 3);
            moved[i] = std::exp(2.0 * rho[i]) + 1.0;
            feasible[i] = rng.uniform01() < 0.5;
        }
        feasible[rng.uniform_index(7)] = 1;
        ASSERT_EQ(select_action(rho, feasible), select_action(moved, feasible));
    }
}

TEST(RunDrnEpisode, DimensionMismatchRejected) {
    const DrnParams p = build_drn(DrnConfig::for_scenario(ScenarioConfig::mini()), 1);
    EXPECT_THROW(run_drn_episode(p, generate_scenario(ScenarioConfig::base())), ShapeError);
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const auto c = DrnConfig::for_scenario(ScenarioConfig::mini());
    DrnParams p = build_drn(c, 11);
    p.iteration = 17;
    p.adam.step = 17;
    Rng rng(11);
    for (auto& m : p.adam.m)
        for (auto& v : m.data) v = rng.uniform_real(-1e-3, 1e-3);
    const auto path = temp_path("roundtrip.json");
    save_checkpoint(p, path);
    const DrnParams q = load_checkpoint(path, c);
    EXPECT_EQ(q.config, p.config);
    EXPECT_EQ(q.iteration, 17u);
    auto& pm = const_cast<DrnParams&>(p);
    auto& qm = const_cast<DrnParams&>(q);
    const auto a = pm.params(), b = qm.params();
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(*a[k].value, *b[k].value) << a[k].name;
    for (std::size_t k = 0; k < a.size(); ++k) EXPECT_EQ(p.adam.m[k], q.adam.m[k]);
    Rng enc_rng(12);
    const auto enc = random_encoding(c, enc_rng);
    EXPECT_EQ(drn_forward(p, enc), drn_forward(q, enc));
    std::filesystem::remove(path);
}

TEST(Checkpoint, TruncatedFileRejected) {
    const DrnParams p = build_drn(DrnConfig::for_scenario(ScenarioConfig::mini()), 1);
    const auto path = temp_path("truncated.json");
    const auto text = checkpoint_json(p).dump();
    {
        std::ofstream out(path);
        out << text.substr(0, text.size() / 2);
    }
    EXPECT_THROW(load_checkpoint(path), IoError);
    std::filesystem::remove(path);
    EXPECT_THROW(load_checkpoint(path), IoError);
}

TEST(Checkpoint, MismatchedDimensionsRejected) {
    const DrnParams p = build_drn(DrnConfig::for_scenario(ScenarioConfig::mini()), 1);
    const auto path = temp_path("mismatch.json");
    save_checkpoint(p, path);
    EXPECT_THROW(load_checkpoint(path, DrnConfig::for_scenario(ScenarioConfig::base())), IoError);
    std::filesystem::remove(path);
}

TEST(Checkpoint, UnknownVersionRejected) {
    const DrnParams p = build_drn(DrnConfig::for_scenario(ScenarioConfig::mini()), 1);
    auto j = checkpoint_json(p);
    j["format_version"] = kCheckpointFormatVersion + 1;
    EXPECT_THROW(checkpoint_from_json(j), IoError);
    j = checkpoint_json(p);
    j["params"]["head.0.W"]["shape"] = {1, 1};
    EXPECT_THROW(checkpoint_from_json(j), IoError);
}
