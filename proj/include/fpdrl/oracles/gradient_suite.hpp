#pragma once

#include <cstdint>
#include <vector>

#include "fpdrl/oracles/suite.hpp"

namespace fpdrl::oracles {

/// Reverse-mode vs central differences (h = 1e-5) for every diffcore
/// primitive, worst relative error over `seeds` random instances each.
std::vector<Check> primitive_gradient_checks(int seeds, double tolerance = 1e-4);

/// Forward-mode (jvp) vs central differences, and gradients of a jvp result
/// w.r.t. weights vs central differences of a finite-difference Jacobian.
std::vector<Check> jvp_checks(int seeds, double tolerance = 1e-4);

}  // namespace fpdrl::oracles
