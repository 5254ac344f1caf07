#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "twotower/gradcheck.hpp"

namespace twotower {

inline constexpr double kGradCheckTolerance = 1e-5;

struct GradCheckRow {
    std::string op;
    double max_rel_error = 0.0;  // worst over all seeds
    std::size_t seeds = 0;
    bool pass = false;
};

/// Gradient check of every differentiable operator on randomized shapes up to
/// 2 x 4 x 8 x 8, plus a full two-tower model (L=2, C=2, 8x8) through the L1
/// loss. Each operator output is reduced by a random weighting so that every
/// output element contributes a distinct gradient.
std::vector<GradCheckRow> run_gradcheck_suite(std::size_t seeds = 10, double epsilon = kGradCheckEpsilon,
                                              double tolerance = kGradCheckTolerance);

/// Gradient check of the full model only, for one seed.
double model_gradcheck(std::uint64_t seed, double epsilon = kGradCheckEpsilon);

std::string gradcheck_table(const std::vector<GradCheckRow>& rows);

}  // namespace twotower
