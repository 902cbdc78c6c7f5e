#include "fpdrl/critic/tabular_bellman.hpp"

#include <algorithm>
#include <stdexcept>

#include "fpdrl/critic/quantile.hpp"

namespace fpdrl::critic {

QuantileTable distributional_bellman(const envs::TabularMdp& mdp, const QuantileTable& table) {
    if (table.size() != mdp.states) throw std::invalid_argument("distributional_bellman: table/state mismatch");
    const std::size_t N = table.at(0).at(0).size();
    QuantileTable out(mdp.states, std::vector<std::vector<double>>(mdp.actions));
    for (std::size_t s = 0; s < mdp.states; ++s) {
        for (std::size_t a = 0; a < mdp.actions; ++a) {
            std::vector<double> atoms, weights;
            for (std::size_t s2 = 0; s2 < mdp.states; ++s2) {
                for (std::size_t a2 = 0; a2 < mdp.actions; ++a2) {
                    const double p = mdp.transition[s][a][s2] * mdp.policy[s2][a2];
                    if (p == 0.0) continue;
                    for (double theta : table[s2][a2]) {
                        atoms.push_back(mdp.reward[s][a] + mdp.gamma * theta);
                        weights.push_back(p / static_cast<double>(N));
                    }
                }
            }
            out[s][a] = project_quantiles(atoms, weights, N);
        }
    }
    return out;
}

double max_wasserstein1(const QuantileTable& a, const QuantileTable& b) {
    double worst = 0.0;
    for (std::size_t s = 0; s < a.size(); ++s) {
        for (std::size_t k = 0; k < a[s].size(); ++k) worst = std::max(worst, wasserstein1(a[s][k], b.at(s).at(k)));
    }
    return worst;
}

}  // namespace fpdrl::critic
