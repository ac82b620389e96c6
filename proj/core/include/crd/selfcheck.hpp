#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "crd/gradcheck.hpp"

namespace crd {

struct GradientCheckCase {
    std::string name;
    GradCheckResult result;
};

struct GradientSuiteOptions {
    std::size_t size = 8;    // images are 1 x size x size
    std::size_t patch = 4;   // square patch side
    std::uint64_t seed = 0;
    std::size_t budget = 0;  // triplet budget, 0: all
    // Per-tensor coordinate cap for generator parameters.
    std::size_t max_param_coordinates = 12;
    GradCheckOptions check;
};

/// Finite-difference checks of the distillation objective and its parts
/// w.r.t. the student output (and the student generator parameters for the
/// composite objective).
std::vector<GradientCheckCase> run_gradient_suite(const GradientSuiteOptions& options);

}  // namespace crd
