#pragma once

#include <functional>
#include <string>
#include <vector>

#include "proxytrain/autograd.hpp"
#include "proxytrain/rng.hpp"

namespace proxytrain {

/// One gradient-checkable component: `make` draws a randomized small instance
/// (loss builder plus initial parameter tensors) from the given stream.
/// Instances avoid non-differentiable points (hinge boundaries, max ties) by
/// construction.
struct GradCheckCase {
    std::string name;
    std::function<std::pair<LossFn, std::vector<Tensor>>(Rng&)> make;
};

struct GradCheckResult {
    std::string name;
    double max_error = 0.0;
    int instances = 0;
    bool passed(double tolerance) const { return max_error <= tolerance; }
};

/// Every loss and layer in the toolkit.
std::vector<GradCheckCase> standard_gradcheck_cases();

/// Worst finite-difference error per case over `instances` random instances.
std::vector<GradCheckResult> run_gradcheck(const std::vector<GradCheckCase>& cases, int instances,
                                           double eps, std::uint64_t seed);

constexpr double kGradCheckTolerance = 1e-5;
constexpr double kGradCheckEps = 1e-6;

}  // namespace proxytrain
