#include <gtest/gtest.h>

#include <cmath>

#include "twotower/gradcheck.hpp"
#include "twotower/graph.hpp"
#include "twotower/kernels.hpp"

using namespace twotower;

namespace {

// Direct-loop oracles, written independently of the im2col kernels.
Tensor naive_conv(const Tensor& x, const Tensor& w, const Tensor& b, std::size_t pad) {
    const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
    const std::size_t co = w.dim(0), k = w.dim(2);
    const std::size_t oh = h + 2 * pad - k + 1, ow = wd + 2 * pad - k + 1;
    Tensor y({n, co, oh, ow});
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t r = 0; r < oh; ++r)
                for (std::size_t c = 0; c < ow; ++c) {
                    double s = b[o];
                    for (std::size_t i = 0; i < ci; ++i)
                        for (std::size_t u = 0; u < k; ++u)
                            for (std::size_t v = 0; v < k; ++v) {
                                const long yy = long(r + u) - long(pad), xx = long(c + v) - long(pad);
                                if (yy < 0 || xx < 0 || yy >= long(h) || xx >= long(wd)) continue;
                                s += x.at(in, i, yy, xx) * w.at(o, i, u, v);
                            }
                    y.at(in, o, r, c) = s;
                }
    return y;
}

// Scatter-add definition: every input pixel stamps its kernel at (2i-1, 2j-1).
Tensor naive_up(const Tensor& x, const Tensor& w, const Tensor& b) {
    const std::size_t n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3), co = w.dim(1);
    Tensor y({n, co, 2 * h, 2 * wd});
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t o = 0; o < co; ++o)
            for (std::size_t r = 0; r < 2 * h; ++r)
                for (std::size_t c = 0; c < 2 * wd; ++c) y.at(in, o, r, c) = b[o];
    for (std::size_t in = 0; in < n; ++in)
        for (std::size_t i = 0; i < ci; ++i)
            for (std::size_t r = 0; r < h; ++r)
                for (std::size_t c = 0; c < wd; ++c)
                    for (std::size_t o = 0; o < co; ++o)
                        for (std::size_t u = 0; u < 4; ++u)
                            for (std::size_t v = 0; v < 4; ++v) {
                                const long yy = long(2 * r + u) - 1, xx = long(2 * c + v) - 1;
                                if (yy < 0 || xx < 0 || yy >= long(2 * h) || xx >= long(2 * wd)) continue;
                                y.at(in, o, yy, xx) += x.at(in, i, r, c) * w.at(i, o, u, v);
                            }
    return y;
}

void expect_near(const Tensor& a, const Tensor& b, double tol) {
    ASSERT_EQ(a.shape(), b.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) EXPECT_NEAR(a[i], b[i], tol) << "at " << i;
}

}  // namespace

TEST(Tensor, ConstructionValidatesSize) {
    EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), ShapeError);
    const Tensor t = Tensor::from({2, 2}, {1, 2, 3, 4});
    EXPECT_EQ(t.numel(), 4u);
    EXPECT_DOUBLE_EQ(t.sum(), 10.0);
    EXPECT_THROW(t.reshaped({3}), ShapeError);
}

TEST(Tensor, ZeroExtentAllowed) {
    const Tensor t({1, 0, 3, 3});
    EXPECT_TRUE(t.empty());
    EXPECT_EQ(t.rank(), 4u);
}

TEST(Tensor, StackBatch) {
    const std::vector<Tensor> items{Tensor({1, 2, 2}, 1.0), Tensor({1, 2, 2}, 2.0)};
    const Tensor s = stack_batch(items);
    EXPECT_EQ(s.shape(), (Shape{2, 1, 2, 2}));
    EXPECT_EQ(s.at(1, 0, 1, 1), 2.0);
    const std::vector<Tensor> bad{Tensor({1, 2, 2}), Tensor({1, 3, 2})};
    EXPECT_THROW(stack_batch(bad), ShapeError);
}

TEST(Kernels, ConvOnesThreeByThree) {
    const Tensor x({1, 1, 4, 4}, 1.0), w({1, 1, 3, 3}, 1.0), b({1}, 0.0);
    const Tensor y = kernels::conv2d(x, w, b, 1);
    EXPECT_EQ(y.shape(), (Shape{1, 1, 4, 4}));
    EXPECT_EQ(y.at(0, 0, 1, 1), 9.0);
    EXPECT_EQ(y.at(0, 0, 0, 1), 6.0);
    EXPECT_EQ(y.at(0, 0, 0, 0), 4.0);
    EXPECT_EQ(y.at(0, 0, 3, 3), 4.0);
}

TEST(Kernels, ConvMatchesDirectLoop) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Tensor x = random_tensor({2, 3, 7, 6}, seed), w = random_tensor({4, 3, 5, 5}, seed + 100);
        const Tensor b = random_tensor({4}, seed + 200);
        expect_near(kernels::conv2d(x, w, b, 2), naive_conv(x, w, b, 2), 1e-12);
        expect_near(kernels::conv2d(x, w, b, 0), naive_conv(x, w, b, 0), 1e-12);
    }
}

TEST(Kernels, ConvShapeErrors) {
    EXPECT_THROW(kernels::conv2d(Tensor({1, 2, 4, 4}), Tensor({1, 3, 3, 3}), Tensor({1}), 1), ShapeError);
    EXPECT_THROW(kernels::conv2d(Tensor({1, 3, 4, 4}), Tensor({2, 3, 3, 3}), Tensor({1}), 1), ShapeError);
}

TEST(Kernels, TransposedConvScatterOracle) {
    // One input pixel, unit kernel: a 4x4 footprint clipped by the pad.
    const Tensor x = Tensor::from({1, 1, 1, 1}, {2.0});
    const Tensor w({1, 1, 4, 4}, 1.0), b({1}, 0.5);
    const Tensor y = kernels::conv_transpose2d(x, w, b);
    ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 2}));
    for (double v : y.data()) EXPECT_EQ(v, 2.5);

    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Tensor xi = random_tensor({2, 3, 3, 5}, seed), wi = random_tensor({3, 2, 4, 4}, seed + 7);
        const Tensor bi = random_tensor({2}, seed + 9);
        expect_near(kernels::conv_transpose2d(xi, wi, bi), naive_up(xi, wi, bi), 1e-12);
    }
}

TEST(Kernels, MaxPoolRamp) {
    Tensor x({1, 1, 4, 4});
    for (std::size_t i = 0; i < 16; ++i) x[i] = static_cast<double>(i);
    const auto r = kernels::maxpool2d(x);
    EXPECT_EQ(r.output, Tensor::from({1, 1, 2, 2}, {5, 7, 13, 15}));
    EXPECT_EQ(r.argmax, (std::vector<std::size_t>{5, 7, 13, 15}));
    EXPECT_THROW(kernels::maxpool2d(Tensor({1, 1, 3, 4})), ShapeError);
}

TEST(Kernels, MaxPoolTieTakesFirst) {
    const Tensor x({1, 1, 2, 2}, 1.0);
    const auto r = kernels::maxpool2d(x);
    EXPECT_EQ(r.argmax[0], 0u);
    const Tensor g = kernels::maxpool2d_backward(x.shape(), r.argmax, Tensor({1, 1, 1, 1}, 3.0));
    EXPECT_EQ(g, Tensor::from({1, 1, 2, 2}, {3, 0, 0, 0}));
}

TEST(Graph, SumOfSquaresGradient) {
    Graph g;
    const Var x = g.input(Tensor::from({3}, {1, 2, 3}), true);
    const Var y = g.sum(g.mul(x, x));
    EXPECT_EQ(g.value(y)[0], 14.0);
    const Gradients grads = g.backward(y);
    EXPECT_EQ(grads[x], Tensor::from({3}, {2, 4, 6}));
}

TEST(Graph, MulBackwardSwapsOperands) {
    Graph g;
    const Var a = g.input(Tensor::from({2}, {3, -1}), true);
    const Var b = g.input(Tensor::from({2}, {5, 4}), true);
    const Gradients grads = g.backward(g.sum(g.mul(a, b)));
    EXPECT_EQ(grads[a], Tensor::from({2}, {5, 4}));
    EXPECT_EQ(grads[b], Tensor::from({2}, {3, -1}));
}

TEST(Graph, MulShapeMismatchNamesShapes) {
    Graph g;
    const Var a = g.input(Tensor({1, 2, 4, 4}));
    const Var b = g.input(Tensor({1, 2, 4, 5}));
    try {
        g.mul(a, b);
        FAIL();
    } catch (const ShapeError& e) {
        const std::string m = e.what();
        EXPECT_NE(m.find("1x2x4x4"), std::string::npos) << m;
        EXPECT_NE(m.find("1x2x4x5"), std::string::npos) << m;
    }
}

TEST(Graph, ConcatChannelsIncludingEmpty) {
    Graph g;
    const Var a = g.input(Tensor({1, 2, 3, 3}, 1.0), true);
    const Var b = g.input(Tensor({1, 1, 3, 3}, 2.0), true);
    const Var c = g.concat_channels(a, b);
    EXPECT_EQ(g.value(c).shape(), (Shape{1, 3, 3, 3}));
    EXPECT_EQ(g.value(c).at(0, 2, 1, 1), 2.0);
    EXPECT_EQ(g.value(c).at(0, 1, 1, 1), 1.0);

    const Var e = g.input(Tensor({1, 0, 3, 3}));
    const Var ce = g.concat_channels(a, e);
    EXPECT_EQ(g.value(ce), g.value(a));
    EXPECT_THROW(g.concat_channels(a, g.input(Tensor({1, 1, 3, 4}))), ShapeError);
}

TEST(Graph, ReluAndSigmoid) {
    Graph g;
    const Var x = g.input(Tensor::from({4}, {-2, 0, 0.5, 800}), true);
    const Var r = g.relu(x);
    EXPECT_EQ(g.value(r), Tensor::from({4}, {0, 0, 0.5, 800}));
    const Var s = g.sigmoid(x);
    const Tensor sv = g.value(s);
    EXPECT_NEAR(sv[0], 1.0 / (1.0 + std::exp(2.0)), 1e-15);
    EXPECT_EQ(sv[1], 0.5);
    EXPECT_LT(sv[3], 1.0);
    const Gradients grads = g.backward(g.sum(r));
    EXPECT_EQ(grads[x], Tensor::from({4}, {0, 0, 1, 1}));
}

TEST(Graph, L1LossValueAndSubgradient) {
    Graph g;
    const Var p = g.input(Tensor::from({4}, {1, 2, 3, 4}), true);
    const Var t = g.input(Tensor::from({4}, {1, 0, 4, 4}));
    const Var l = g.l1_loss(p, t);
    EXPECT_DOUBLE_EQ(g.value(l)[0], 0.75);
    const Gradients grads = g.backward(l);
    EXPECT_EQ(grads[p], Tensor::from({4}, {0, 0.25, -0.25, 0}));
}

TEST(Graph, BackwardRequiresScalar) {
    Graph g;
    const Var x = g.input(Tensor({2}), true);
    EXPECT_THROW(g.backward(g.relu(x)), ShapeError);
}

TEST(Graph, UnreachedParameterGetsZeroGradient) {
    Graph g;
    const Tensor w({2}, 1.0);
    const Var used = g.input(Tensor({2}, 3.0), true);
    const Var p = g.parameter(w);
    const Gradients grads = g.backward(g.sum(used));
    ASSERT_TRUE(grads.has(p));
    EXPECT_EQ(grads[p], Tensor({2}, 0.0));
}

TEST(Graph, ReplayPicksUpParameterChanges) {
    Tensor w({1}, 2.0);
    Graph g;
    const Var p = g.parameter(w);
    const Var y = g.sum(g.mul(p, p));
    EXPECT_EQ(g.value(y)[0], 4.0);
    w[0] = 3.0;
    g.replay();
    EXPECT_EQ(g.value(y)[0], 9.0);
}

// Property: the analytic gradient of every operator matches central differences.
TEST(GradCheck, EveryOperatorOnRandomInputs) {
    const double tol = 1e-5;
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        EXPECT_LT(grad_check([](Graph& g, std::span<const Var> v) { return g.sum(g.conv2d(v[0], v[1], v[2], 1)); },
                             {{1, 2, 5, 4}, {3, 2, 3, 3}, {3}}, kGradCheckEpsilon, seed),
                  tol);
        EXPECT_LT(grad_check([](Graph& g, std::span<const Var> v) {
                                 const Var y = g.conv_transpose2d(v[0], v[1], v[2]);
                                 return g.sum(g.mul(y, y));
                             },
                             {{1, 2, 3, 2}, {2, 3, 4, 4}, {3}}, kGradCheckEpsilon, seed),
                  tol);
        EXPECT_LT(grad_check([](Graph& g, std::span<const Var> v) {
                                 return g.sum(g.mul(g.maxpool2d(v[0]), v[1]));
                             },
                             {{2, 2, 4, 6}, {2, 2, 2, 3}}, kGradCheckEpsilon, seed),
                  tol);
        EXPECT_LT(grad_check([](Graph& g, std::span<const Var> v) {
                                 return g.sum(g.mul(g.sigmoid(g.concat_channels(v[0], v[1])), v[2]));
                             },
                             {{1, 1, 3, 3}, {1, 2, 3, 3}, {1, 3, 3, 3}}, kGradCheckEpsilon, seed),
                  tol);
    }
}

TEST(GradCheck, DetectsTruncationError) {
    // For sum(x^3) the central difference is off by exactly eps^2.
    Tensor x({2}, 0.7);
    std::vector<Tensor*> wrt{&x};
    const double err = grad_check(
        [&](Graph& g) {
            const Var p = g.parameter(x);
            return g.sum(g.mul(g.mul(p, p), p));
        },
        wrt, 0.5);
    EXPECT_NEAR(err, 0.25 / (3 * 0.49), 1e-9);
    EXPECT_EQ(x, Tensor({2}, 0.7));  // restored
}

TEST(GradCheck, KinkUsesActivePiece) {
    // relu at exactly 0: the subgradient 0 is the left derivative.
    Tensor x({3}, 0.0);
    x[1] = 1e-6;  // within epsilon of the kink, on the positive piece
    std::vector<Tensor*> wrt{&x};
    EXPECT_LT(grad_check([&](Graph& g) { return g.sum(g.relu(g.parameter(x))); }, wrt), 1e-9);
}

TEST(Graph, BranchPatternTracksKinks) {
    Tensor x = Tensor::from({2}, {-1.0, 2.0});
    Graph g;
    g.sum(g.relu(g.parameter(x)));
    const auto before = g.branch_pattern();
    EXPECT_EQ(before, (std::vector<std::int64_t>{0, 1}));
    x[0] = 0.5;
    g.replay();
    EXPECT_NE(g.branch_pattern(), before);
}
