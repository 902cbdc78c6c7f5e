#pragma once

#include <vector>

#include "fpdrl/envs/tabular.hpp"

namespace fpdrl::critic {

/// Quantile locations per state-action pair, indexed [s][a][i].
using QuantileTable = std::vector<std::vector<std::vector<double>>>;

/// Policy-evaluation distributional Bellman operator followed by the
/// bin-average quantile projection: the mixture of r(s,a) + gamma theta_j(s',a')
/// with weights P(s'|s,a) pi(a'|s') / N, projected back to N quantiles.
QuantileTable distributional_bellman(const envs::TabularMdp& mdp, const QuantileTable& table);

/// max over (s, a) of W1 between corresponding quantile sets.
double max_wasserstein1(const QuantileTable& a, const QuantileTable& b);

}  // namespace fpdrl::critic
