#include <gtest/gtest.h>

#include <cmath>

#include "twotower/gradcheck.hpp"
#include "twotower/model.hpp"
#include "twotower/rng.hpp"

using namespace twotower;

namespace {

ModelConfig config(std::size_t levels, std::size_t channels, bool clue = true) {
    ModelConfig c;
    c.levels = levels;
    c.base_channels = channels;
    c.use_clue = clue;
    return c;
}

Tensor image(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({n, c, h, w});
    for (auto& v : t.data()) v = rng.uniform();
    return t;
}

// Layer-by-layer count, independent of ModelParams::named().
std::size_t expected_params(const ModelConfig& c) {
    auto conv = [](std::size_t in, std::size_t out, std::size_t k) { return out * in * k * k + out; };
    auto block = [&](std::size_t in, std::size_t out) { return conv(in, out, 5) + conv(out, out, 5); };
    const std::size_t L = c.levels;
    std::size_t n = 0;
    for (std::size_t l = 0; l <= L; ++l) n += block(l == 0 ? c.in_primary() : c.width(l - 1), c.width(l));
    for (std::size_t l = 0; l < L; ++l) n += block(l == 0 ? 3 : c.width(l - 1), c.width(l));
    for (std::size_t l = 0; l < L; ++l) n += conv(c.width(l + 1), c.width(l), 4) + block(2 * c.width(l), c.width(l));
    return n + conv(c.width(0), 1, 1);
}

Tensor run(const ModelParams& p, const Tensor& left, const Tensor& clue, const Tensor& right) {
    return predict(p, left, clue, right);
}

}  // namespace

TEST(ModelConfig, ValidationAndDivisibility) {
    EXPECT_THROW(config(0, 8).validate(), ConfigError);
    EXPECT_THROW(config(3, 0).validate(), ConfigError);
    EXPECT_NO_THROW(config(1, 1).validate());
    try {
        config(3, 8).check_input(64, 60);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("width 60"), std::string::npos) << e.what();
    }
    try {
        config(3, 8).check_input(36, 64);
        FAIL();
    } catch (const ConfigError& e) {
        EXPECT_NE(std::string(e.what()).find("height 36"), std::string::npos) << e.what();
    }
}

TEST(Build, DeterministicPerSeed) {
    EXPECT_EQ(build(config(3, 8), 7), build(config(3, 8), 7));
    EXPECT_NE(build(config(3, 8), 7), build(config(3, 8), 8));
}

TEST(Build, InitializationBoundsAndZeroBias) {
    const ModelParams p = build(config(2, 4), 3);
    for (const auto& nt : p.named()) {
        if (nt.name.ends_with(".bias")) {
            EXPECT_EQ(nt.tensor->max_abs(), 0.0) << nt.name;
            continue;
        }
        const Shape& s = nt.tensor->shape();
        const bool up = nt.name.find(".up.") != std::string::npos;
        const std::size_t fan_in = up ? s[0] * 4 : s[1] * s[2] * s[3];
        EXPECT_LE(nt.tensor->max_abs(), std::sqrt(6.0 / double(fan_in))) << nt.name;
        EXPECT_GT(nt.tensor->max_abs(), 0.5 * std::sqrt(6.0 / double(fan_in))) << nt.name;
    }
}

TEST(Build, TowersHaveDistinctStorageAndInputWidths) {
    ModelParams p = build(config(3, 8), 1);
    EXPECT_EQ(p.primary.size(), 4u);
    EXPECT_EQ(p.secondary.size(), 3u);
    EXPECT_EQ(p.primary[0].first.weight.dim(1), 4u);
    EXPECT_EQ(p.secondary[0].first.weight.dim(1), 3u);
    EXPECT_NE(p.primary[1].first.weight.raw(), p.secondary[1].first.weight.raw());
    EXPECT_NE(p.primary[1].first.weight, p.secondary[1].first.weight);
}

TEST(ParamCount, MinimalConfigByHand) {
    // primary 101+26+52+102, secondary 76+26, decoder 33+51+26, head 2
    EXPECT_EQ(param_count(build(config(1, 1), 0)).trainable, 495u);
    EXPECT_EQ(param_count(build(config(1, 1), 0)).total, 495u);
}

TEST(ParamCount, ClosedFormAndSeedInvariance) {
    for (std::size_t L : {1, 2, 3, 4}) {
        for (std::size_t C : {1, 2, 8}) {
            for (bool clue : {true, false}) {
                const ModelConfig c = config(L, C, clue);
                EXPECT_EQ(param_count(build(c, 0)).trainable, expected_params(c));
                EXPECT_EQ(param_count(build(c, 0)).trainable, param_count(build(c, 99)).trainable);
            }
        }
    }
    EXPECT_EQ(param_count(build(config(3, 8), 0)).trainable, 398537u);
}

TEST(ParamCount, ClueAddsOneInputChannelOfFirstConv) {
    for (std::size_t C : {1, 4, 8}) {
        const auto with = param_count(build(config(3, C, true), 0)).trainable;
        const auto without = param_count(build(config(3, C, false), 0)).trainable;
        EXPECT_EQ(with - without, C * 25);
    }
}

TEST(Encoder, SkipShapes) {
    const ModelParams p = build(config(2, 4, false), 0);
    Graph g;
    const Var x = g.input(image(1, 3, 16, 16, 1));
    const EncoderOutput e = encoder_forward(g, p.secondary, x, 2);
    ASSERT_EQ(e.skips.size(), 2u);
    EXPECT_EQ(g.value(e.skips[0]).shape(), (Shape{1, 4, 16, 16}));
    EXPECT_EQ(g.value(e.skips[1]).shape(), (Shape{1, 8, 8, 8}));
    EXPECT_EQ(e.deepest, e.skips[1]);

    const EncoderOutput ep = encoder_forward(g, p.primary, x, 2);
    EXPECT_EQ(g.value(ep.deepest).shape(), (Shape{1, 16, 4, 4}));
}

TEST(Encoder, ZeroWeightsGiveZeroFeatures) {
    ModelParams p = build(config(2, 4, false), 0);
    for (auto& nt : p.named()) nt.tensor->fill(0.0);
    Graph g;
    const EncoderOutput e = encoder_forward(g, p.secondary, g.input(image(1, 3, 8, 8, 2)), 2);
    for (Var s : e.skips) EXPECT_EQ(g.value(s).max_abs(), 0.0);
}

TEST(Fuse, OnesAndZeros) {
    Graph g;
    const Tensor a = image(1, 2, 4, 4, 3);
    const std::vector<Var> prim{g.input(a)};
    const std::vector<Var> ones{g.input(Tensor(a.shape(), 1.0))};
    const std::vector<Var> zeros{g.input(Tensor(a.shape(), 0.0))};
    EXPECT_EQ(g.value(fuse(g, prim, ones)[0]), a);
    EXPECT_EQ(g.value(fuse(g, prim, zeros)[0]).max_abs(), 0.0);
    const std::vector<Var> two{prim[0], prim[0]};
    EXPECT_THROW(fuse(g, prim, two), ShapeError);
}

TEST(Forward, ShapeAndRangeContract) {
    for (std::size_t L : {2, 3, 4}) {
        for (std::size_t C : {2, 8}) {
            for (std::size_t H : {32, 64}) {
                const ModelParams p = build(config(L, C), L * 10 + C);
                const Tensor out = run(p, image(1, 3, H, H, 1), image(1, 1, H, H, 2), image(1, 3, H, H, 3));
                ASSERT_EQ(out.shape(), (Shape{1, 1, H, H}));
                for (double v : out.data()) {
                    ASSERT_GT(v, 0.0);
                    ASSERT_LT(v, 1.0);
                }
            }
        }
    }
}

TEST(Forward, RejectsBadInputs) {
    const ModelParams p = build(config(2, 2), 0);
    EXPECT_THROW(run(p, image(1, 3, 8, 8, 1), image(1, 1, 8, 4, 2), image(1, 3, 8, 8, 3)), ShapeError);
    EXPECT_THROW(run(p, image(1, 3, 8, 8, 1), image(1, 1, 8, 8, 2), image(2, 3, 8, 8, 3)), ShapeError);
    EXPECT_THROW(run(p, image(1, 3, 8, 6, 1), image(1, 1, 8, 6, 2), image(1, 3, 8, 6, 3)), ConfigError);
}

TEST(Forward, WithoutClueIgnoresClueInput) {
    const ModelParams p = build(config(2, 2, false), 4);
    const Tensor l = image(1, 3, 8, 8, 1), r = image(1, 3, 8, 8, 2);
    Graph g;
    const Var out = forward(g, p, g.input(l), Var{}, g.input(r));
    EXPECT_EQ(g.value(out), run(p, l, image(1, 1, 8, 8, 5), r));
}

TEST(Forward, BatchIndependenceAndPermutation) {
    const ModelParams p = build(config(2, 4), 5);
    const Tensor l0 = image(1, 3, 16, 16, 1), l1 = image(1, 3, 16, 16, 2);
    const Tensor c0 = image(1, 1, 16, 16, 3), c1 = image(1, 1, 16, 16, 4);
    const Tensor r0 = image(1, 3, 16, 16, 5), r1 = image(1, 3, 16, 16, 6);
    auto stack = [](const Tensor& a, const Tensor& b) {
        const std::vector<Tensor> v{a, b};
        return stack_batch(v);
    };
    const Tensor both = run(p, stack(l0, l1), stack(c0, c1), stack(r0, r1));
    const Tensor swapped = run(p, stack(l1, l0), stack(c1, c0), stack(r1, r0));
    const Tensor o0 = run(p, l0, c0, r0), o1 = run(p, l1, c1, r1);
    EXPECT_EQ(both.batch_slice(0, 1), o0);
    EXPECT_EQ(both.batch_slice(1, 2), o1);
    EXPECT_EQ(swapped.batch_slice(0, 1), o1);
    EXPECT_EQ(swapped.batch_slice(1, 2), o0);
}

TEST(Forward, RightImageIsLive) {
    const ModelParams p = build(config(3, 8), 6);
    const Tensor l = image(1, 3, 32, 32, 1), c = image(1, 1, 32, 32, 2);
    Tensor r = image(1, 3, 32, 32, 3);
    const Tensor before = run(p, l, c, r);
    for (auto& v : r.data()) v = std::min(1.0, v + 0.1);
    Tensor diff = run(p, l, c, r);
    diff *= -1.0;
    diff += before;
    EXPECT_GT(diff.max_abs(), 0.0);
}

TEST(Forward, ZeroSecondaryTowerStaysFinite) {
    ModelParams p = build(config(3, 8), 7);
    for (auto& block : p.secondary) {
        for (ConvLayer* layer : {&block.first, &block.second}) {
            layer->weight.fill(0.0);
            layer->bias.fill(0.0);
        }
    }
    Graph g;
    const Var l = g.input(image(1, 3, 32, 32, 1)), c = g.input(image(1, 1, 32, 32, 2));
    const Var r = g.input(image(1, 3, 32, 32, 3));
    const Var out = forward(g, p, l, c, r);
    EXPECT_TRUE(g.value(out).all_finite());
    // Every fused skip is a product with an all-zero secondary feature.
    for (std::size_t i = 0; i < g.size(); ++i) {
        const Var v{i};
        if (g.op(v) == OpKind::kMul) EXPECT_EQ(g.value(v).max_abs(), 0.0);
    }
}

// Both first-layer weights are reached through the multiplicative fusion.
TEST(Gradients, TandemUpdateOfBothTowers) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const ModelParams p = build(config(2, 4), seed);
        Graph g;
        const Var out = forward(g, p, g.input(image(1, 3, 16, 16, seed + 1)), g.input(image(1, 1, 16, 16, seed + 2)),
                                g.input(image(1, 3, 16, 16, seed + 3)));
        const Var loss = g.l1_loss(out, g.input(image(1, 1, 16, 16, seed + 4)));
        const Gradients grads = g.backward(loss);
        const auto first_p = g.find_parameter(&p.primary[0].first.weight);
        const auto first_s = g.find_parameter(&p.secondary[0].first.weight);
        ASSERT_TRUE(first_p && first_s);
        EXPECT_GT(grads[*first_p].max_abs(), 0.0);
        EXPECT_GT(grads[*first_s].max_abs(), 0.0);
    }
}

TEST(Checkpoint, RoundTripIsBitExact) {
    const ModelParams p = build(config(2, 3, false), 11);
    const auto bytes = serialize_checkpoint(p);
    const ModelParams q = deserialize_checkpoint(bytes);
    EXPECT_EQ(p, q);
    EXPECT_EQ(serialize_checkpoint(q), bytes);
}

TEST(Checkpoint, CorruptionIsReported) {
    const auto bytes = serialize_checkpoint(build(config(1, 1), 0));
    auto bad_magic = bytes;
    bad_magic[0] = 'X';
    EXPECT_THROW(deserialize_checkpoint(bad_magic), CheckpointError);
    const std::vector<unsigned char> truncated(bytes.begin(), bytes.end() - 9);
    try {
        deserialize_checkpoint(truncated);
        FAIL();
    } catch (const CheckpointError& e) {
        EXPECT_NE(std::string(e.what()).find("byte"), std::string::npos);
    }
    auto trailing = bytes;
    trailing.push_back(0);
    EXPECT_THROW(deserialize_checkpoint(trailing), CheckpointError);
}
