#include "fpdrl/train/evaluation.hpp"

#include <cmath>
#include <exception>
#include <thread>

namespace fpdrl::train {

EvalResult summarize_returns(std::vector<double> returns) {
    EvalResult r;
    r.returns = std::move(returns);
    if (r.returns.empty()) return r;
    double s = 0.0;
    for (double x : r.returns) s += x;
    r.mean = s / static_cast<double>(r.returns.size());
    double v = 0.0;
    for (double x : r.returns) v += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(v / static_cast<double>(r.returns.size()));
    return r;
}

EvalResult evaluate(const flow::Policy& policy, const envs::Environment& env, std::size_t episodes,
                    std::uint64_t seed, std::size_t threads) {
    std::vector<double> returns(episodes, 0.0);
    auto run_episode = [&](std::size_t k) {
        Rng rng(derive_seed(seed, Stream::Eval, k));
        envs::Episode ep(env);
        ep.reset(rng);
        double total = 0.0;
        while (!ep.done()) total += ep.step(policy.act_deterministic(ep.state())).reward;
        returns[k] = total;
    };
    threads = std::max<std::size_t>(1, std::min(threads, episodes));
    if (threads == 1) {
        for (std::size_t k = 0; k < episodes; ++k) run_episode(k);
    } else {
        std::vector<std::thread> pool;
        std::vector<std::exception_ptr> errors(threads);
        for (std::size_t w = 0; w < threads; ++w) {
            pool.emplace_back([&, w] {
                try {
                    for (std::size_t k = w; k < episodes; k += threads) run_episode(k);
                } catch (...) {
                    errors[w] = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    return summarize_returns(std::move(returns));
}

std::pair<double, double> bimodality_score(const std::function<double(Rng&)>& sampler, std::size_t samples, Rng& rng,
                                           double radius) {
    std::size_t plus = 0, minus = 0;
    for (std::size_t i = 0; i < samples; ++i) {
        const double a = sampler(rng);
        if (std::fabs(a - 0.6) <= radius) ++plus;
        if (std::fabs(a + 0.6) <= radius) ++minus;
    }
    const double n = static_cast<double>(samples);
    return {static_cast<double>(plus) / n, static_cast<double>(minus) / n};
}

std::pair<double, double> bimodality_score(const flow::Policy& policy, std::size_t samples, Rng& noise, Rng& probe,
                                           double radius) {
    diff::CompGraph g;
    const auto states = diff::DenseArray::matrix(samples, policy.state_dim(), 0.0);
    const flow::PolicyBatch b = policy.sample(g, g.constant(states), false, false, noise, probe);
    const auto& actions = g.value(b.action);
    std::size_t i = 0;
    const std::function<double(Rng&)> replay = [&](Rng&) { return actions.at(i++, 0); };
    Rng unused(0);
    return bimodality_score(replay, samples, unused, radius);
}

}  // namespace fpdrl::train
