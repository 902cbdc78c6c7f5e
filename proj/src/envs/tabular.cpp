#include "fpdrl/envs/tabular.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

namespace fpdrl::envs {

namespace {

void check_distribution(const std::vector<double>& row, const std::string& what) {
    double sum = 0.0;
    for (double p : row) {
        if (p < 0.0) throw std::invalid_argument(what + " has a negative probability");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-12) throw std::invalid_argument(what + " does not sum to 1");
}

}  // namespace

void TabularMdp::validate() const {
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must be in [0, 1)");
    if (transition.size() != states || reward.size() != states || policy.size() != states) {
        throw std::invalid_argument("tabular MDP tables do not match the state count");
    }
    for (std::size_t s = 0; s < states; ++s) {
        if (transition[s].size() != actions || reward[s].size() != actions || policy[s].size() != actions) {
            throw std::invalid_argument("tabular MDP tables do not match the action count");
        }
        check_distribution(policy[s], "policy row " + std::to_string(s));
        for (std::size_t a = 0; a < actions; ++a) {
            if (transition[s][a].size() != states) throw std::invalid_argument("transition row has wrong length");
            check_distribution(transition[s][a], "transition row (" + std::to_string(s) + ", " + std::to_string(a) + ")");
        }
    }
}

TabularMdp tabular_mdp() {
    TabularMdp m;
    m.states = 2;
    m.actions = 2;
    m.transition = {{{0.9, 0.1}, {0.2, 0.8}}, {{0.7, 0.3}, {0.05, 0.95}}};
    m.reward = {{1.0, 0.0}, {-0.5, 2.0}};
    m.policy = {{0.6, 0.4}, {0.3, 0.7}};
    m.gamma = 0.9;
    return m;
}

std::vector<std::vector<double>> solve_q(const TabularMdp& mdp) {
    mdp.validate();
    const std::size_t S = mdp.states, A = mdp.actions, n = S * A;
    // Augmented system [I - gamma M | r], M[(s,a),(s',a')] = P(s'|s,a) pi(a'|s').
    std::vector<std::vector<double>> m(n, std::vector<double>(n + 1, 0.0));
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) {
            const std::size_t row = s * A + a;
            m[row][row] += 1.0;
            for (std::size_t s2 = 0; s2 < S; ++s2) {
                for (std::size_t a2 = 0; a2 < A; ++a2) {
                    m[row][s2 * A + a2] -= mdp.gamma * mdp.transition[s][a][s2] * mdp.policy[s2][a2];
                }
            }
            m[row][n] = mdp.reward[s][a];
        }
    }
    // Gaussian elimination with partial pivoting.
    for (std::size_t c = 0; c < n; ++c) {
        std::size_t pivot = c;
        for (std::size_t r = c + 1; r < n; ++r) {
            if (std::fabs(m[r][c]) > std::fabs(m[pivot][c])) pivot = r;
        }
        std::swap(m[c], m[pivot]);
        for (std::size_t r = 0; r < n; ++r) {
            if (r == c) continue;
            const double f = m[r][c] / m[c][c];
            for (std::size_t k = c; k <= n; ++k) m[r][k] -= f * m[c][k];
        }
    }
    std::vector<std::vector<double>> q(S, std::vector<double>(A));
    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t a = 0; a < A; ++a) q[s][a] = m[s * A + a][n] / m[s * A + a][s * A + a];
    }
    return q;
}

}  // namespace fpdrl::envs
