#pragma once

#include <cstddef>
#include <vector>

namespace fpdrl::envs {

/// Finite MDP with a fixed evaluation policy. Indices are [s][a][s'].
struct TabularMdp {
    std::size_t states = 0;
    std::size_t actions = 0;
    std::vector<std::vector<std::vector<double>>> transition;
    std::vector<std::vector<double>> reward;
    std::vector<std::vector<double>> policy;  // pi(a | s)
    double gamma = 0.9;

    /// Throws std::invalid_argument unless every row is a distribution.
    void validate() const;
};

/// The fixed two-state, two-action MDP used for critic contraction checks.
TabularMdp tabular_mdp();

/// Q^pi(s, a) by solving (I - gamma P_pi) Q = r.
std::vector<std::vector<double>> solve_q(const TabularMdp& mdp);

}  // namespace fpdrl::envs
