#pragma once

#include <cstdint>
#include <vector>

#include "fpdrl/oracles/suite.hpp"

namespace fpdrl::oracles {

/// Reverse-mode d log_prob / d params of a K = 2, d = 2 transformer flow vs
/// central differences over every parameter element.
std::vector<Check> flow_logprob_gradient_checks(int seeds, double tolerance = 1e-3);

/// Analytic-field log-probability checks: zero field against the squashed
/// standard normal, constant field trace, and the linear field v = -z with
/// K = 100 against the +1 log-density shift.
std::vector<Check> flow_logprob_oracle_checks(std::uint64_t seed);

/// Hutchinson estimates for `matrices` random 8x8 linear fields: worst
/// relative error at 10^4 probes, and the log-log slope of RMS error vs
/// probe count.
std::vector<Check> hutchinson_checks(std::uint64_t seed, int matrices = 20);

/// Random J with diagonal U(1, 2) and off-diagonal U(-0.5, 0.5).
std::vector<double> random_jacobian(std::size_t d, std::uint64_t seed);

}  // namespace fpdrl::oracles
