#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "fpdrl/envs/env.hpp"
#include "fpdrl/flow/policy.hpp"

namespace fpdrl::train {

struct EvalResult {
    std::vector<double> returns;  // undiscounted, one per episode
    double mean = 0.0;
    double std = 0.0;             // population std; 0 for one episode
};

EvalResult summarize_returns(std::vector<double> returns);

/// Deterministic-mode episodes (flow from A_0 = 0, Gaussian mean). Episode k
/// resets from its own stream derived from (seed, k), so results do not
/// depend on `threads`. Reads the policy only.
EvalResult evaluate(const flow::Policy& policy, const envs::Environment& env, std::size_t episodes,
                    std::uint64_t seed, std::size_t threads = 1);

/// Fractions of samples within `radius` of +0.6 and of -0.6.
std::pair<double, double> bimodality_score(const std::function<double(Rng&)>& sampler, std::size_t samples, Rng& rng,
                                           double radius = 0.1);

/// Stochastic policy actions at the (zero) bandit state.
std::pair<double, double> bimodality_score(const flow::Policy& policy, std::size_t samples, Rng& noise, Rng& probe,
                                           double radius = 0.1);

}  // namespace fpdrl::train
