#pragma once

#include "fpdrl/critic/critic.hpp"
#include "fpdrl/flow/policy.hpp"

namespace fpdrl::train {

using diff::CompGraph;
using diff::DenseArray;
using diff::Var;

struct PolicyLossNodes {
    Var loss;      // scalar J_pi
    Var log_prob;  // B x 1
    Var q;         // B x 1, min over online critics of the quantile mean
};

/// Elementwise minimum over online critics of the mean location at (s, a).
/// Critic parameters enter as constants.
Var min_critic_mean(CompGraph& g, const critic::CriticEnsemble& critics, Var states, Var actions);

/// mean(alpha * log_prob - q).
Var policy_objective(CompGraph& g, Var log_prob, Var q, double alpha);

/// J_pi = E[alpha log pi(a|s) - Q(s, a)] with a ~ pi(.|s) reparameterized;
/// gradients reach the policy parameters only.
PolicyLossNodes policy_loss(CompGraph& g, const flow::Policy& policy, const critic::CriticEnsemble& critics,
                            const DenseArray& states, double alpha, Rng& noise, Rng& probe);

/// J(alpha) = mean(-exp(log_alpha) * (log_prob + target_entropy)); log_prob
/// values carry no gradient.
Var temperature_loss(CompGraph& g, Var log_alpha, const DenseArray& log_prob, double target_entropy);

}  // namespace fpdrl::train
