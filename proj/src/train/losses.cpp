#include "fpdrl/train/losses.hpp"

namespace fpdrl::train {

Var min_critic_mean(CompGraph& g, const critic::CriticEnsemble& critics, Var states, Var actions) {
    Var q{};
    for (std::size_t k = 0; k < critics.size(); ++k) {
        const Var out = critics.forward(g, states, actions, k, false, false);
        const Var mean = g.scale(g.sum_last(out), 1.0 / static_cast<double>(g.value(out).cols()));
        q = q.valid() ? g.minimum(q, mean) : mean;
    }
    return q;
}

Var policy_objective(CompGraph& g, Var log_prob, Var q, double alpha) {
    return g.mean(g.sub(g.scale(log_prob, alpha), q));
}

PolicyLossNodes policy_loss(CompGraph& g, const flow::Policy& policy, const critic::CriticEnsemble& critics,
                            const DenseArray& states, double alpha, Rng& noise, Rng& probe) {
    const Var s = g.constant_ref(states);
    const flow::PolicyBatch pb = policy.sample(g, s, true, true, noise, probe);
    const Var q = min_critic_mean(g, critics, s, pb.action);
    return {policy_objective(g, pb.log_prob, q, alpha), pb.log_prob, q};
}

Var temperature_loss(CompGraph& g, Var log_alpha, const DenseArray& log_prob, double target_entropy) {
    const std::size_t B = log_prob.rows();
    DenseArray shifted = log_prob;
    for (auto& v : shifted.values()) v += target_entropy;
    const Var alpha = g.broadcast(g.exp(log_alpha), B, 1);
    return g.neg(g.mean(g.mul(alpha, g.constant(std::move(shifted)))));
}

}  // namespace fpdrl::train
