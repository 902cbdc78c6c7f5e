#include "fpdrl/verify/registry.hpp"

#include <stdexcept>

#include "fpdrl/oracles/critic_suite.hpp"
#include "fpdrl/oracles/flow_suite.hpp"
#include "fpdrl/oracles/gradient_suite.hpp"

namespace fpdrl::verify {

namespace {

std::vector<oracles::Check> concat(std::initializer_list<std::vector<oracles::Check>> parts) {
    std::vector<oracles::Check> out;
    for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
    return out;
}

}  // namespace

const std::vector<Suite>& suites() {
    static const std::vector<Suite> registry = {
        {"gradients", "reverse mode vs central differences: primitives, tangents, critic, flow log-prob, actor and temperature losses",
         [] {
             return concat({oracles::primitive_gradient_checks(3), oracles::jvp_checks(3),
                            oracles::critic_gradient_checks(3), oracles::flow_logprob_gradient_checks(3),
                            train_gradient_checks(3)});
         }},
        {"flow-logprob", "zero, constant and linear velocity fields against closed-form log-densities",
         [] { return oracles::flow_logprob_oracle_checks(1); }},
        {"quantile-loss", "quantile Huber loss against a brute-force evaluation on 1000 random instances",
         [] { return oracles::quantile_loss_checks(1000, 7); }},
        {"contraction", "distributional Bellman contraction and fixed point on the tabular MDP",
         [] { return oracles::contraction_checks(100, 200, 3); }},
        {"hutchinson", "Hutchinson trace estimates against exact traces of random 8x8 Jacobians",
         [] { return oracles::hutchinson_checks(5, 20); }},
    };
    return registry;
}

std::vector<std::string> suite_names() {
    std::vector<std::string> out;
    for (const auto& s : suites()) out.push_back(s.name);
    return out;
}

const Suite& find_suite(const std::string& name) {
    for (const auto& s : suites()) {
        if (s.name == name) return s;
    }
    throw std::invalid_argument("unknown suite '" + name + "'");
}

}  // namespace fpdrl::verify
