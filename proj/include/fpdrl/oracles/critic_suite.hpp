#pragma once

#include <cstdint>
#include <vector>

#include "fpdrl/oracles/suite.hpp"

namespace fpdrl::oracles {

/// Direct double-loop evaluation of the batch-mean quantile Huber loss.
double brute_force_quantile_loss(const std::vector<std::vector<double>>& theta,
                                 const std::vector<std::vector<double>>& targets, double kappa);

/// Graph loss vs brute force on random instances (N, N' <= 8,
/// kappa in {0.5, 1, 2}); worst absolute difference.
std::vector<Check> quantile_loss_checks(int instances, std::uint64_t seed, double tolerance = 1e-10);

/// Reverse-mode vs central differences for the quantile loss w.r.t. theta and
/// for the critic loss w.r.t. critic parameters on a 2-transition batch.
std::vector<Check> critic_gradient_checks(int seeds, double tolerance = 1e-3);

/// Contraction of the projected distributional Bellman operator on the
/// tabular MDP over random table pairs, and convergence of the table means
/// to the linear-algebra Q^pi.
std::vector<Check> contraction_checks(int pairs, int iterations, std::uint64_t seed);

}  // namespace fpdrl::oracles
