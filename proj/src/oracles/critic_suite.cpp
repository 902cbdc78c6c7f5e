#include "fpdrl/oracles/critic_suite.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fpdrl/critic/critic.hpp"
#include "fpdrl/critic/tabular_bellman.hpp"
#include "fpdrl/envs/tabular.hpp"
#include "fpdrl/oracles/finite_diff.hpp"
#include "fpdrl/util/rng.hpp"

namespace fpdrl::oracles {

double brute_force_quantile_loss(const std::vector<std::vector<double>>& theta,
                                 const std::vector<std::vector<double>>& targets, double kappa) {
    double total = 0.0;
    for (std::size_t b = 0; b < theta.size(); ++b) {
        const std::size_t N = theta[b].size(), M = targets[b].size();
        double inner = 0.0;
        for (std::size_t i = 0; i < N; ++i) {
            const double tau = (2.0 * (i + 1) - 1.0) / (2.0 * N);
            for (std::size_t j = 0; j < M; ++j) {
                const double d = targets[b][j] - theta[b][i];
                const double l = std::fabs(d) <= kappa ? 0.5 * d * d : kappa * (std::fabs(d) - 0.5 * kappa);
                const double indicator = d < 0.0 ? 1.0 : 0.0;
                inner += std::fabs(tau - indicator) * l;
            }
        }
        total += inner / static_cast<double>(N) / static_cast<double>(M);
    }
    return total / static_cast<double>(theta.size());
}

std::vector<Check> quantile_loss_checks(int instances, std::uint64_t seed, double tolerance) {
    Rng rng(seed);
    const double kappas[3] = {0.5, 1.0, 2.0};
    double worst = 0.0;
    for (int n = 0; n < instances; ++n) {
        const std::size_t B = 1 + rng.index(3);
        const std::size_t N = 1 + rng.index(8);
        const std::size_t M = 1 + rng.index(8);
        const double kappa = kappas[rng.index(3)];
        std::vector<std::vector<double>> th(B, std::vector<double>(N)), y(B, std::vector<double>(M));
        DenseArray tha = DenseArray::matrix(B, N), ya = DenseArray::matrix(B, M);
        for (std::size_t b = 0; b < B; ++b) {
            for (std::size_t i = 0; i < N; ++i) tha.at(b, i) = th[b][i] = rng.uniform(-3.0, 3.0);
            for (std::size_t j = 0; j < M; ++j) ya.at(b, j) = y[b][j] = rng.uniform(-3.0, 3.0);
        }
        CompGraph g;
        const double impl = g.value(critic::quantile_huber_loss(g, g.constant(tha), ya, kappa)).item();
        worst = std::max(worst, std::fabs(impl - brute_force_quantile_loss(th, y, kappa)));
    }
    return {make_check("critic/quantile-loss-bruteforce", worst, tolerance)};
}

std::vector<Check> critic_gradient_checks(int seeds, double tolerance) {
    double worst_theta = 0.0, worst_params = 0.0;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(derive_seed(static_cast<std::uint64_t>(s), Stream::Init, 0xC41));
        const std::size_t N = 4;
        DenseArray theta = DenseArray::matrix(2, N), targets = DenseArray::matrix(2, N);
        for (auto& v : theta.values()) v = rng.uniform(-2.0, 2.0);
        for (auto& v : targets.values()) v = rng.uniform(-2.0, 2.0);
        const ScalarBuilder f = [&](CompGraph& g, const std::vector<Var>& x) {
            return critic::quantile_huber_loss(g, x[0], targets, 1.0);
        };
        worst_theta = std::max(worst_theta, max_gradient_error(f, {theta}, 1e-6, 1e-4));

        critic::CriticConfig cfg;
        cfg.state_dim = 3;
        cfg.action_dim = 2;
        cfg.hidden = 8;
        cfg.quantiles = N;
        critic::CriticEnsemble critics(cfg, rng);
        auto& head = critics.online(0).value(critics.online(0).index_of("critic.l2.w"));
        for (auto& v : head.values()) v = rng.uniform(-0.5, 0.5);
        DenseArray states = DenseArray::matrix(2, 3), actions = DenseArray::matrix(2, 2);
        for (auto& v : states.values()) v = rng.uniform(-1.0, 1.0);
        for (auto& v : actions.values()) v = rng.uniform(-1.0, 1.0);
        const ParamLoss loss = [&](CompGraph& g, bool trainable) {
            const Var out = critics.forward(g, g.constant(states), g.constant(actions), 0, false, trainable);
            return critic::quantile_huber_loss(g, out, targets, 1.0);
        };
        worst_params = std::max(worst_params, max_param_gradient_error(critics.online(0), loss, 1e-6, 1e-4));
    }
    return {make_check("critic/quantile-loss-gradient", worst_theta, tolerance),
            make_check("critic/critic-param-gradient", worst_params, tolerance)};
}

std::vector<Check> contraction_checks(int pairs, int iterations, std::uint64_t seed) {
    const auto mdp = envs::tabular_mdp();
    const auto q = envs::solve_q(mdp);
    Rng rng(seed);
    constexpr std::size_t N = 16;
    auto random_table = [&] {
        critic::QuantileTable t(mdp.states, std::vector<std::vector<double>>(mdp.actions, std::vector<double>(N)));
        for (auto& row : t) {
            for (auto& cell : row) {
                for (auto& v : cell) v = rng.uniform(-10.0, 10.0);
                std::sort(cell.begin(), cell.end());
            }
        }
        return t;
    };

    double worst_ratio = 0.0;
    for (int p = 0; p < pairs; ++p) {
        const auto a = random_table();
        const auto b = random_table();
        const double before = critic::max_wasserstein1(a, b);
        const double after = critic::max_wasserstein1(critic::distributional_bellman(mdp, a),
                                                      critic::distributional_bellman(mdp, b));
        worst_ratio = std::max(worst_ratio, after / before);
    }

    auto table = random_table();
    for (int it = 0; it < iterations; ++it) table = critic::distributional_bellman(mdp, table);
    double worst_mean = 0.0;
    for (std::size_t s = 0; s < mdp.states; ++s) {
        for (std::size_t a = 0; a < mdp.actions; ++a) {
            const double m = critic::QuantileEstimate::from_locations(table[s][a]).mean();
            worst_mean = std::max(worst_mean, std::fabs(m - q[s][a]));
        }
    }
    return {make_check("critic/contraction-factor", worst_ratio, mdp.gamma + 0.01),
            make_check("critic/fixed-point-mean", worst_mean, 1e-6)};
}

}  // namespace fpdrl::oracles
