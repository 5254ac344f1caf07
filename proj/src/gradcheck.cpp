#include "twotower/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "twotower/rng.hpp"

namespace twotower {

Tensor random_tensor(const Shape& shape, std::uint64_t seed) {
    Rng rng(seed);
    Tensor t(shape);
    for (auto& v : t.data()) v = rng.uniform(-1.0, 1.0);
    return t;
}

double grad_check(const ScalarBuilder& build, std::span<Tensor* const> wrt, double epsilon) {
    Graph graph;
    const Var result = build(graph);
    const Gradients grads = graph.backward(result);
    const std::vector<std::int64_t> base = graph.branch_pattern();

    // Value at the perturbed point, and whether it lies on the base piece.
    struct Probe {
        double value;
        bool same_piece;
    };
    auto probe = [&](Tensor& t, std::size_t i, double saved, double offset) {
        t[i] = saved + offset;
        graph.replay();
        return Probe{graph.value(result)[0], graph.branch_pattern() == base};
    };

    double worst = 0.0;
    for (Tensor* t : wrt) {
        const auto bound = graph.find_parameter(t);
        for (std::size_t i = 0; i < t->numel(); ++i) {
            const double analytic = bound ? grads[*bound][i] : 0.0;
            const double saved = (*t)[i];
            const Probe plus = probe(*t, i, saved, epsilon);
            const Probe minus = probe(*t, i, saved, -epsilon);
            double numeric = (plus.value - minus.value) / (2.0 * epsilon);
            if (!plus.same_piece || !minus.same_piece) {
                // A kink lies within epsilon. Differentiate the active piece with
                // a second-order one-sided stencil on whichever side stays on it.
                const double h = plus.same_piece ? epsilon : -epsilon;
                const Probe far = probe(*t, i, saved, 2.0 * h);
                t->data()[i] = saved;
                graph.replay();
                const double f0 = graph.value(result)[0];
                const double f1 = plus.same_piece ? plus.value : minus.value;
                if ((plus.same_piece || minus.same_piece) && far.same_piece) {
                    numeric = (-3.0 * f0 + 4.0 * f1 - far.value) / (2.0 * h);
                }
            }
            (*t)[i] = saved;
            worst = std::max(worst, std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic)));
        }
    }
    graph.replay();
    return worst;
}

double grad_check(const InputFunction& fn, const std::vector<Shape>& shapes, double epsilon,
                  std::uint64_t seed) {
    std::vector<Tensor> inputs;
    inputs.reserve(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        inputs.push_back(random_tensor(shapes[i], Rng::mix(seed * 131 + i)));
    }
    std::vector<Tensor*> wrt;
    for (auto& t : inputs) wrt.push_back(&t);

    return grad_check(
        [&](Graph& g) {
            std::vector<Var> vars;
            for (auto& t : inputs) vars.push_back(g.parameter(t));
            return fn(g, vars);
        },
        wrt, epsilon);
}

}  // namespace twotower
