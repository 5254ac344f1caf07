#include "twotower/gradcheck_suite.hpp"

#include <algorithm>
#include <cstdio>
#include <functional>
#include <sstream>

#include "twotower/model.hpp"
#include "twotower/rng.hpp"

namespace twotower {
namespace {

// sum(x * weights) for a fixed random weighting that takes no gradient.
Var weighted_sum(Graph& g, Var x, std::uint64_t seed) {
    const Var w = g.input(random_tensor(g.value(x).shape(), Rng::mix(seed ^ 0x5eed)));
    return g.sum(g.mul(x, w));
}

struct OpCase {
    const char* name;
    // Draws shapes for one seed and returns the function under test.
    std::function<std::pair<std::vector<Shape>, InputFunction>(Rng&, std::uint64_t)> make;
};

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
    return static_cast<std::size_t>(rng.integer(static_cast<std::int64_t>(lo), static_cast<std::int64_t>(hi)));
}

std::vector<OpCase> op_cases() {
    std::vector<OpCase> cases;
    cases.push_back({"conv2d", [](Rng& rng, std::uint64_t seed) {
        const std::size_t n = pick(rng, 1, 2), cin = pick(rng, 1, 4), cout = pick(rng, 1, 4);
        const std::size_t k = 2 * pick(rng, 0, 2) + 1, h = pick(rng, 3, 8), w = pick(rng, 3, 8);
        const std::size_t pad = k / 2;
        return std::make_pair(std::vector<Shape>{{n, cin, h, w}, {cout, cin, k, k}, {cout}},
                              InputFunction([=](Graph& g, std::span<const Var> v) {
                                  return weighted_sum(g, g.conv2d(v[0], v[1], v[2], pad), seed);
                              }));
    }});
    cases.push_back({"conv_transpose2d", [](Rng& rng, std::uint64_t seed) {
        const std::size_t n = pick(rng, 1, 2), cin = pick(rng, 1, 4), cout = pick(rng, 1, 4);
        const std::size_t h = pick(rng, 1, 4), w = pick(rng, 1, 4);
        return std::make_pair(std::vector<Shape>{{n, cin, h, w}, {cin, cout, 4, 4}, {cout}},
                              InputFunction([=](Graph& g, std::span<const Var> v) {
                                  return weighted_sum(g, g.conv_transpose2d(v[0], v[1], v[2]), seed);
                              }));
    }});
    cases.push_back({"maxpool2d", [](Rng& rng, std::uint64_t seed) {
        const std::size_t n = pick(rng, 1, 2), c = pick(rng, 1, 4);
        const std::size_t h = 2 * pick(rng, 1, 4), w = 2 * pick(rng, 1, 4);
        return std::make_pair(std::vector<Shape>{{n, c, h, w}},
                              InputFunction([=](Graph& g, std::span<const Var> v) {
                                  return weighted_sum(g, g.maxpool2d(v[0]), seed);
                              }));
    }});
    cases.push_back({"elementwise_mul", [](Rng& rng, std::uint64_t seed) {
        const Shape s{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 8), pick(rng, 1, 8)};
        return std::make_pair(std::vector<Shape>{s, s}, InputFunction([=](Graph& g, std::span<const Var> v) {
                                  return weighted_sum(g, g.mul(v[0], v[1]), seed);
                              }));
    }});
    cases.push_back({"concat_channels", [](Rng& rng, std::uint64_t seed) {
        const std::size_t n = pick(rng, 1, 2), h = pick(rng, 1, 8), w = pick(rng, 1, 8);
        const std::size_t ca = pick(rng, 1, 3), cb = pick(rng, 1, 4 - ca + 1);
        return std::make_pair(std::vector<Shape>{{n, ca, h, w}, {n, cb, h, w}},
                              InputFunction([=](Graph& g, std::span<const Var> v) {
                                  return weighted_sum(g, g.concat_channels(v[0], v[1]), seed);
                              }));
    }});
    cases.push_back({"relu", [](Rng& rng, std::uint64_t seed) {
        const Shape s{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 8), pick(rng, 1, 8)};
        return std::make_pair(std::vector<Shape>{s}, InputFunction([=](Graph& g, std::span<const Var> v) {
                                  return weighted_sum(g, g.relu(v[0]), seed);
                              }));
    }});
    cases.push_back({"sigmoid", [](Rng& rng, std::uint64_t seed) {
        const Shape s{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 8), pick(rng, 1, 8)};
        return std::make_pair(std::vector<Shape>{s}, InputFunction([=](Graph& g, std::span<const Var> v) {
                                  return weighted_sum(g, g.sigmoid(v[0]), seed);
                              }));
    }});
    cases.push_back({"l1_loss", [](Rng& rng, std::uint64_t) {
        const Shape s{pick(rng, 1, 2), pick(rng, 1, 4), pick(rng, 1, 8), pick(rng, 1, 8)};
        return std::make_pair(std::vector<Shape>{s, s}, InputFunction([](Graph& g, std::span<const Var> v) {
                                  return g.l1_loss(v[0], v[1]);
                              }));
    }});
    return cases;
}

}  // namespace

double model_gradcheck(std::uint64_t seed, double epsilon) {
    ModelConfig cfg;
    cfg.levels = 2;
    cfg.base_channels = 2;
    cfg.use_clue = true;
    ModelParams params = build(cfg, seed);

    Rng rng(Rng::mix(seed ^ 0xda7a));
    auto image = [&](std::size_t c) {
        Tensor t({1, c, 8, 8});
        for (auto& v : t.data()) v = rng.uniform();
        return t;
    };
    Tensor left = image(3), clue = image(1), right = image(3);
    Tensor gt = image(1);
    for (auto& v : gt.data()) v = 0.05 + 0.9 * v;

    std::vector<Tensor*> wrt{&left, &clue, &right};
    for (auto& nt : params.named()) wrt.push_back(nt.tensor);

    return grad_check(
        [&](Graph& g) {
            const Var pred = forward(g, params, g.parameter(left), g.parameter(clue), g.parameter(right));
            return g.l1_loss(pred, g.input(gt));
        },
        wrt, epsilon);
}

std::vector<GradCheckRow> run_gradcheck_suite(std::size_t seeds, double epsilon, double tolerance) {
    std::vector<GradCheckRow> rows;
    for (const auto& c : op_cases()) {
        GradCheckRow row{c.name, 0.0, seeds, false};
        for (std::size_t s = 0; s < seeds; ++s) {
            Rng rng(Rng::mix(s + 1));
            auto [shapes, fn] = c.make(rng, s);
            row.max_rel_error = std::max(row.max_rel_error, grad_check(fn, shapes, epsilon, s));
        }
        row.pass = row.max_rel_error < tolerance;
        rows.push_back(row);
    }
    GradCheckRow model{"two_tower_model", 0.0, seeds, false};
    for (std::size_t s = 0; s < seeds; ++s) {
        model.max_rel_error = std::max(model.max_rel_error, model_gradcheck(s, epsilon));
    }
    model.pass = model.max_rel_error < tolerance;
    rows.push_back(model);
    return rows;
}

std::string gradcheck_table(const std::vector<GradCheckRow>& rows) {
    std::ostringstream os;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-18s %6s %14s  %s\n", "operator", "seeds", "max_rel_err", "result");
    os << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-18s %6zu %14.3e  %s\n", r.op.c_str(), r.seeds, r.max_rel_error,
                      r.pass ? "PASS" : "FAIL");
        os << buf;
    }
    return os.str();
}

}  // namespace twotower
