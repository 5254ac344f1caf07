#include <gtest/gtest.h>

#include <cmath>

#include "twotower/metrics.hpp"
#include "twotower/rng.hpp"
#include "oracles.hpp"

using namespace twotower;

namespace {

Tensor positive_map(std::size_t h, std::size_t w, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t({1, h, w});
    for (auto& v : t.data()) v = rng.uniform(0.05, 1.0);
    return t;
}

void expect_close(const DepthMetrics& a, const DepthMetrics& b, double tol) {
    EXPECT_NEAR(a.abs_rel, b.abs_rel, tol);
    EXPECT_NEAR(a.sq_rel, b.sq_rel, tol);
    EXPECT_NEAR(a.log10, b.log10, tol);
    EXPECT_NEAR(a.rmse, b.rmse, tol);
    EXPECT_NEAR(a.sigma1, b.sigma1, tol);
    EXPECT_NEAR(a.sigma2, b.sigma2, tol);
    EXPECT_NEAR(a.sigma3, b.sigma3, tol);
    EXPECT_NEAR(a.ssim, b.ssim, tol);
}

}  // namespace

TEST(Metrics, TwoPixelExample) {
    const Tensor p = Tensor::from({1, 1, 2}, {1, 2}), g = Tensor::from({1, 1, 2}, {2, 2});
    EXPECT_DOUBLE_EQ(abs_rel(p, g), 0.25);
    EXPECT_DOUBLE_EQ(sq_rel(p, g), 0.25);
    EXPECT_NEAR(rmse(p, g), 0.70711, 1e-5);
    EXPECT_NEAR(log10_error(p, g), 0.15051, 1e-5);
    EXPECT_DOUBLE_EQ(threshold_accuracy(p, g, 1), 0.5);
    EXPECT_DOUBLE_EQ(threshold_accuracy(p, g, 3), 0.5);
}

TEST(Metrics, ThresholdIsStrict) {
    const Tensor g = Tensor::from({1, 1, 2}, {1, 1}), p = Tensor::from({1, 1, 2}, {1.25, 1.0});
    EXPECT_DOUBLE_EQ(threshold_accuracy(p, g, 1), 0.5);
    EXPECT_THROW(threshold_accuracy(p, g, 4), std::invalid_argument);
}

TEST(Metrics, AgreeWithStraightLoopOracle) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const Tensor p = positive_map(12, 13, seed), g = positive_map(12, 13, seed + 50);
        expect_close(compute_metrics(p, g), oracle::metrics(p, g), 1e-10);
        const DepthMetrics m = compute_metrics(p, g);
        EXPECT_LE(m.sigma1, m.sigma2);
        EXPECT_LE(m.sigma2, m.sigma3);
    }
}

TEST(Metrics, DomainErrorsNamePixel) {
    Tensor g = positive_map(12, 12, 1);
    g[2 * 12 + 5] = 0.0;
    try {
        abs_rel(positive_map(12, 12, 2), g);
        FAIL();
    } catch (const MetricDomainError& e) {
        EXPECT_NE(std::string(e.what()).find("row 2, col 5"), std::string::npos) << e.what();
    }
    Tensor p = positive_map(12, 12, 2);
    p[0] = -1.0;
    EXPECT_NO_THROW(rmse(p, positive_map(12, 12, 1)));
    EXPECT_THROW(log10_error(p, positive_map(12, 12, 1)), MetricDomainError);
    EXPECT_THROW(rmse(p, positive_map(12, 11, 1)), ShapeError);
}

TEST(Ssim, IdentitySymmetryAndSign) {
    const Tensor a = positive_map(16, 16, 3), b = positive_map(16, 16, 4);
    EXPECT_NEAR(ssim(a, a), 1.0, 1e-9);
    EXPECT_DOUBLE_EQ(ssim(a, b), ssim(b, a));
    Tensor checker({1, 16, 16}), inverse({1, 16, 16});
    for (std::size_t i = 0; i < 256; ++i) {
        checker[i] = ((i / 16 + i % 16) % 2) ? 0.9 : 0.1;
        inverse[i] = 1.0 - checker[i];
    }
    EXPECT_LT(ssim(checker, inverse), 0.0);
    EXPECT_THROW(ssim(positive_map(10, 16, 1), positive_map(10, 16, 2)), ShapeError);
    EXPECT_THROW(ssim(Tensor({2, 16, 16}, 0.5), Tensor({2, 16, 16}, 0.5)), ShapeError);
}

TEST(Metrics, ScaleInvariance) {
    const Tensor p = positive_map(8, 8, 5), g = positive_map(8, 8, 6);
    Tensor ps = p, gs = g;
    ps *= 3.0;
    gs *= 3.0;
    EXPECT_NEAR(abs_rel(ps, gs), abs_rel(p, g), 1e-12);
    EXPECT_NEAR(sq_rel(ps, gs), 3.0 * sq_rel(p, g), 1e-12);
    EXPECT_NEAR(rmse(ps, gs), 3.0 * rmse(p, g), 1e-12);
    EXPECT_EQ(threshold_accuracy(ps, gs, 1), threshold_accuracy(p, g, 1));
}

TEST(Evaluate, UniformAverageAndPermutationInvariance) {
    std::vector<Tensor> preds, gts;
    for (std::uint64_t s = 0; s < 4; ++s) {
        preds.push_back(positive_map(12, 12, s));
        gts.push_back(positive_map(12, 12, s + 10));
    }
    const DepthMetrics all = evaluate(preds, gts);
    double mean_abs = 0;
    for (std::size_t i = 0; i < 4; ++i) mean_abs += abs_rel(preds[i], gts[i]) / 4.0;
    EXPECT_NEAR(all.abs_rel, mean_abs, 1e-15);

    std::vector<Tensor> rp{preds[2], preds[0], preds[3], preds[1]}, rg{gts[2], gts[0], gts[3], gts[1]};
    expect_close(evaluate(rp, rg), all, 1e-14);

    EXPECT_THROW(evaluate(std::vector<Tensor>{}, std::vector<Tensor>{}), std::invalid_argument);
    EXPECT_THROW(evaluate(rp, std::vector<Tensor>(gts.begin(), gts.begin() + 3)), std::invalid_argument);
}

TEST(Report, CsvAndTableShape) {
    DepthMetrics m;
    m.sigma1 = 1.0;
    const std::vector<std::pair<std::string, DepthMetrics>> rows{{"perfect", m}};
    const std::string csv = metrics_csv(rows);
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "method,abs_rel,sq_rel,log10,rmse,sigma1,sigma2,sigma3,ssim");
    const std::string table = metrics_table(rows);
    EXPECT_NE(table.find("perfect"), std::string::npos);
    EXPECT_NE(table.find("1.000"), std::string::npos);
}

TEST(Metrics, IdentityAndScaleExamples) {
    const Tensor g = positive_map(12, 12, 8);
    const DepthMetrics same = compute_metrics(g, g);
    EXPECT_EQ(same.abs_rel, 0.0);
    EXPECT_EQ(same.sq_rel, 0.0);
    EXPECT_EQ(same.rmse, 0.0);
    EXPECT_EQ(same.log10, 0.0);
    EXPECT_EQ(same.sigma1, 1.0);
    EXPECT_EQ(same.sigma3, 1.0);

    Tensor twice = g;
    twice *= 2.0;
    EXPECT_NEAR(log10_error(twice, g), std::log10(2.0), 1e-15);

    Tensor beyond = g;
    beyond *= std::pow(1.25, 3) + 1e-9;
    EXPECT_EQ(threshold_accuracy(beyond, g, 3), 0.0);
}

TEST(Ssim, SmallestValidMapAndTooSmall) {
    const Tensor a = positive_map(11, 11, 1), b = positive_map(11, 11, 2);
    EXPECT_NEAR(ssim(a, b), oracle::ssim(a, b), 1e-10);
    EXPECT_THROW(ssim(positive_map(8, 8, 1), positive_map(8, 8, 2)), ShapeError);
}
