#pragma once

#include <vector>

#include "fpdrl/diff/params.hpp"
#include "fpdrl/flow/velocity.hpp"

namespace fpdrl::oracles {

/// Plain-loop forward pass of the velocity transformer over a full token
/// sequence with an explicit causal mask. Shares no code with the graph
/// implementation; reads weights by parameter name.
///
/// Tokens are [state, (points[0], times[0]), (points[1], times[1]), ...].
/// Returns the head output at the token of points[query].
std::vector<double> reference_velocity(const diff::ParamSet& params, const flow::VelocityNetConfig& config,
                                       const std::vector<double>& state,
                                       const std::vector<std::vector<double>>& points,
                                       const std::vector<double>& times, std::size_t query);

}  // namespace fpdrl::oracles
