#include <cmath>

#include "fpdrl/oracles/finite_diff.hpp"
#include "fpdrl/train/losses.hpp"
#include "fpdrl/verify/registry.hpp"

namespace fpdrl::verify {

std::vector<oracles::Check> train_gradient_checks(int seeds, double tolerance) {
    std::vector<oracles::Check> out;
    double worst_policy = 0.0, worst_alpha = 0.0;
    for (int s = 0; s < seeds; ++s) {
        const std::uint64_t seed = 100 + static_cast<std::uint64_t>(s);
        Rng init(seed);
        flow::VelocityNetConfig vc;
        vc.action_dim = 1;
        vc.state_dim = 2;
        vc.d_model = 8;
        vc.heads = 2;
        vc.layers = 1;
        vc.flow_steps = 2;
        flow::FlowPolicy policy(vc, flow::TraceMode::Exact, 1, init);
        for (auto& e : policy.params()) {
            for (auto& v : e.value.values()) v = init.uniform(-0.4, 0.4);
        }
        critic::CriticConfig cc;
        cc.state_dim = 2;
        cc.action_dim = 1;
        cc.hidden = 8;
        cc.quantiles = 4;
        critic::CriticEnsemble critics(cc, init);
        for (std::size_t k = 0; k < critics.size(); ++k) {
            for (auto& e : critics.online(k)) {
                for (auto& v : e.value.values()) v = init.uniform(-0.5, 0.5);
            }
        }
        diff::DenseArray states = diff::DenseArray::matrix(3, 2);
        for (auto& v : states.values()) v = init.normal();

        const oracles::ParamLoss policy_fn = [&](diff::CompGraph& g, bool) {
            Rng noise(seed), probe(seed + 1);
            return train::policy_loss(g, policy, critics, states, 0.3, noise, probe).loss;
        };
        worst_policy = std::max(worst_policy, oracles::max_param_gradient_error(policy.params(), policy_fn, 1e-5, 1e-4));

        diff::ParamSet temperature;
        temperature.add("log_alpha", diff::DenseArray::scalar(init.uniform(-2.0, 0.5)));
        diff::DenseArray log_prob = diff::DenseArray::matrix(5, 1);
        for (auto& v : log_prob.values()) v = init.normal();
        const oracles::ParamLoss alpha_fn = [&](diff::CompGraph& g, bool) {
            return train::temperature_loss(g, g.param(temperature, 0), log_prob, -1.0);
        };
        worst_alpha = std::max(worst_alpha, oracles::max_param_gradient_error(temperature, alpha_fn, 1e-6, 1e-6));
    }
    out.push_back(oracles::make_check("train/policy-loss-gradient", worst_policy, tolerance));
    out.push_back(oracles::make_check("train/temperature-loss-gradient", worst_alpha, tolerance));
    return out;
}

}  // namespace fpdrl::verify
