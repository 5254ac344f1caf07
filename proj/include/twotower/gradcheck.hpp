#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "twotower/graph.hpp"

namespace twotower {

inline constexpr double kGradCheckEpsilon = 1e-5;

/// Builds a scalar result on a fresh graph. Tensors under test must enter the
/// graph through Graph::parameter so that in-place perturbation reaches them.
using ScalarBuilder = std::function<Var(Graph&)>;

/// Compares backward() against central differences for every element of every
/// tensor in `wrt`. Returns max |analytic - numeric| / max(1, |analytic|).
/// The tensors are perturbed in place and restored before returning.
double grad_check(const ScalarBuilder& build, std::span<Tensor* const> wrt,
                  double epsilon = kGradCheckEpsilon);

/// Builds a scalar from the given inputs, bound in order.
using InputFunction = std::function<Var(Graph&, std::span<const Var>)>;

/// Draws inputs of the given shapes uniformly from [-1, 1] using `seed` and
/// checks the function's gradient with respect to all of them.
double grad_check(const InputFunction& fn, const std::vector<Shape>& shapes,
                  double epsilon = kGradCheckEpsilon, std::uint64_t seed = 0);

/// Uniform [-1, 1) tensor; used to draw grad-check inputs.
Tensor random_tensor(const Shape& shape, std::uint64_t seed);

}  // namespace twotower
