#include "fpdrl/critic/critic.hpp"

#include <atomic>
#include <cmath>
#include <stdexcept>

namespace fpdrl::critic {

namespace {

std::atomic<Fault> g_fault{Fault::None};

DenseArray row_of(std::span<const double> v) { return DenseArray::row(std::vector<double>(v.begin(), v.end())); }

}  // namespace

void set_fault(Fault fault) { g_fault.store(fault); }
Fault active_fault() { return g_fault.load(); }

std::string to_string(CriticKind kind) { return kind == CriticKind::Quantile ? "quantile" : "mean"; }

CriticKind parse_critic_kind(const std::string& text) {
    if (text == "quantile") return CriticKind::Quantile;
    if (text == "mean") return CriticKind::Mean;
    throw std::invalid_argument("unknown critic kind '" + text + "' (expected quantile|mean)");
}

void CriticConfig::validate() const {
    if (state_dim == 0 || action_dim == 0 || hidden == 0) throw std::invalid_argument("critic dims must be positive");
    if (quantiles == 0) throw std::invalid_argument("quantile count must be >= 1");
    if (!(kappa > 0.0)) throw std::invalid_argument("kappa must be > 0");
}

CriticEnsemble::CriticEnsemble(const CriticConfig& config, Rng& init_rng) : config_(config) {
    config_.validate();
    const std::size_t count = config_.twin ? 2 : 1;
    for (std::size_t k = 0; k < count; ++k) {
        auto ps = std::make_unique<ParamSet>();
        // Every critic registers the same layout, so one Mlp's indices serve all.
        net_ = nn::Mlp(*ps, "critic", config_.state_dim + config_.action_dim, config_.hidden, config_.outputs(),
                       init_rng, /*zero_output=*/true);
        target_.push_back(std::make_unique<ParamSet>(*ps));
        online_.push_back(std::move(ps));
    }
}

Var CriticEnsemble::forward(CompGraph& g, Var states, Var actions, std::size_t k, bool use_target,
                            bool trainable) const {
    const Var parts[2] = {states, actions};
    const Var x = g.concat_cols(parts);
    if (use_target) return net_.forward(g, x, nn::Binding::frozen(target(k)));
    return net_.forward(g, x,
                        trainable ? nn::Binding::trainable(*online_.at(k)) : nn::Binding::frozen(online(k)));
}

QuantileEstimate CriticEnsemble::quantiles(std::span<const double> state, std::span<const double> action,
                                           std::size_t k, bool use_target) const {
    CompGraph g;
    const DenseArray& out =
        g.value(forward(g, g.constant(row_of(state)), g.constant(row_of(action)), k, use_target, false));
    return QuantileEstimate::from_locations(std::vector<double>(out.data(), out.data() + out.cols()));
}

void CriticEnsemble::update_targets(double rate) {
    for (std::size_t k = 0; k < size(); ++k) diff::ema_update(*online_[k], *target_[k], rate);
}

DenseArray soft_target_quantiles(const DenseArray& rewards, const DenseArray& terminals,
                                 const std::vector<DenseArray>& target_outputs, const DenseArray& next_log_prob,
                                 double alpha, double gamma) {
    if (target_outputs.empty()) throw std::invalid_argument("soft_target_quantiles: no target critics");
    const std::size_t B = rewards.rows();
    const std::size_t N = target_outputs.front().cols();
    for (const auto& t : target_outputs) {
        if (t.rows() != B || t.cols() != N) throw diff::ShapeError("soft_target_quantiles: target shape mismatch");
    }
    if (terminals.rows() != B || next_log_prob.rows() != B) {
        throw diff::ShapeError("soft_target_quantiles: batch size mismatch");
    }
    DenseArray y = DenseArray::matrix(B, N);
    for (std::size_t b = 0; b < B; ++b) {
        std::size_t pick = 0;
        double best = 0.0;
        for (std::size_t k = 0; k < target_outputs.size(); ++k) {
            double m = 0.0;
            for (std::size_t j = 0; j < N; ++j) m += target_outputs[k].at(b, j);
            m /= static_cast<double>(N);
            if (k == 0 || m < best) {
                best = m;
                pick = k;
            }
        }
        const bool terminal = terminals[b] != 0.0;
        for (std::size_t j = 0; j < N; ++j) {
            y.at(b, j) = terminal ? rewards[b]
                                  : rewards[b] + gamma * (target_outputs[pick].at(b, j) - alpha * next_log_prob[b]);
        }
    }
    return y;
}

Var quantile_huber_loss(CompGraph& g, Var theta, const DenseArray& targets, double kappa) {
    if (!(kappa > 0.0)) throw std::invalid_argument("quantile_huber_loss: kappa must be > 0");
    const DenseArray& th = g.value(theta);
    const std::size_t B = th.rows(), N = th.cols(), M = targets.cols();
    if (targets.rows() != B) {
        throw diff::ShapeError("quantile_huber_loss: theta " + th.shape().str() + " vs targets " +
                               targets.shape().str());
    }
    const auto tau = midpoint_fractions(N);
    const bool flipped = active_fault() == Fault::HuberSign;

    // Row (b, i) of the expanded residual matrix holds y_b. - theta_bi.
    DenseArray y = DenseArray::matrix(B * N, M);
    DenseArray w = DenseArray::matrix(B * N, M);
    for (std::size_t b = 0; b < B; ++b) {
        for (std::size_t i = 0; i < N; ++i) {
            const double t = th.at(b, i);
            for (std::size_t j = 0; j < M; ++j) {
                const double yj = targets.at(b, j);
                y.at(b * N + i, j) = yj;
                const bool below = flipped ? (yj - t > 0.0) : (yj - t < 0.0);
                w.at(b * N + i, j) = std::fabs(tau[i] - (below ? 1.0 : 0.0));
            }
        }
    }
    const Var delta = g.sub(g.constant(std::move(y)), g.broadcast(g.reshape(theta, B * N, 1), B * N, M));
    const Var ad = g.abs(delta);
    const Var m = g.minimum(ad, g.filled(B * N, M, kappa));
    // Huber: m^2 / 2 + kappa (|delta| - m) with m = min(|delta|, kappa).
    const Var h = g.add(g.scale(g.square(m), 0.5), g.scale(g.sub(ad, m), kappa));
    return g.scale(g.sum(g.mul(g.constant(std::move(w)), h)), 1.0 / static_cast<double>(B * N * M));
}

Var mean_critic_loss(CompGraph& g, Var q, const DenseArray& targets) {
    if (g.value(q).shape() != targets.shape()) {
        throw diff::ShapeError("mean_critic_loss: q " + g.value(q).shape().str() + " vs targets " +
                               targets.shape().str());
    }
    return g.mean(g.square(g.sub(q, g.constant(targets))));
}

DenseArray compute_targets(const CriticEnsemble& critics, const CriticBatch& batch, const flow::Policy& policy,
                           double alpha, double gamma, Rng& noise, Rng& probe) {
    CompGraph g;
    const Var next = g.constant_ref(batch.next_states);
    const flow::PolicyBatch pb = policy.sample(g, next, false, true, noise, probe);
    std::vector<DenseArray> outs;
    for (std::size_t k = 0; k < critics.size(); ++k) {
        outs.push_back(g.value(critics.forward(g, next, pb.action, k, true, false)));
    }
    return soft_target_quantiles(batch.rewards, batch.terminals, outs, g.value(pb.log_prob), alpha, gamma);
}

Var critic_loss(CompGraph& g, const CriticEnsemble& critics, std::size_t k, const DenseArray& states,
                const DenseArray& actions, const DenseArray& targets) {
    const Var out = critics.forward(g, g.constant_ref(states), g.constant_ref(actions), k, false, true);
    if (critics.config().kind == CriticKind::Mean) return mean_critic_loss(g, out, targets);
    return quantile_huber_loss(g, out, targets, critics.config().kappa);
}

std::vector<double> critic_step(CriticEnsemble& critics, std::vector<diff::AdamState>& adam,
                                const DenseArray& states, const DenseArray& actions, const DenseArray& targets) {
    if (adam.size() != critics.size()) throw std::invalid_argument("critic_step: one Adam state per critic");
    std::vector<double> losses;
    for (std::size_t k = 0; k < critics.size(); ++k) {
        critics.online(k).zero_grads();
        CompGraph g;
        const Var loss = critic_loss(g, critics, k, states, actions, targets);
        const double value = g.value(loss).item();
        if (!std::isfinite(value)) {
            throw diff::NonFiniteError("critic " + std::to_string(k) + " loss is not finite");
        }
        g.backward(loss);
        diff::adam_step(critics.online(k), adam[k]);
        losses.push_back(value);
    }
    return losses;
}

std::vector<double> critic_update(CriticEnsemble& critics, std::vector<diff::AdamState>& adam,
                                  const CriticBatch& batch, const flow::Policy& policy, double alpha, double gamma,
                                  Rng& noise, Rng& probe) {
    const DenseArray targets = compute_targets(critics, batch, policy, alpha, gamma, noise, probe);
    return critic_step(critics, adam, batch.states, batch.actions, targets);
}

}  // namespace fpdrl::critic
