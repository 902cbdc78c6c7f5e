#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fpdrl/diff/nn.hpp"
#include "fpdrl/flow/rollout.hpp"
#include "fpdrl/flow/velocity.hpp"

namespace fpdrl::flow {

enum class PolicyKind { Flow, Gaussian };

std::string to_string(PolicyKind kind);
PolicyKind parse_policy_kind(const std::string& text);

/// Batched, reparameterized policy output.
struct PolicyBatch {
    Var action;      // B x d in [-1, 1]
    Var pre_squash;  // B x d
    Var log_prob;    // B x 1, invalid when not requested
};

/// Common surface of the flow policy and the Gaussian ablation.
class Policy {
public:
    virtual ~Policy() = default;

    virtual PolicyKind kind() const = 0;
    virtual std::size_t state_dim() const = 0;
    virtual std::size_t action_dim() const = 0;
    virtual ParamSet& params() = 0;
    virtual const ParamSet& params() const = 0;

    /// Stochastic actions for a batch of states. With `trainable` the policy
    /// parameters enter the graph as leaves, otherwise as constants.
    virtual PolicyBatch sample(CompGraph& g, Var states, bool trainable, bool with_log_prob, Rng& noise,
                               Rng& probe) const = 0;

    /// Mode-seeking action: flow from A_0 = 0, or the Gaussian mean.
    virtual PolicyBatch deterministic(CompGraph& g, Var states) const = 0;

    std::vector<double> act(std::span<const double> state, Rng& noise) const;
    std::vector<double> act_deterministic(std::span<const double> state) const;
};

/// Flow-matching policy: Euler rollout of a causal transformer velocity field
/// from a standard normal prior, tanh-squashed.
class FlowPolicy final : public Policy {
public:
    FlowPolicy(const VelocityNetConfig& config, TraceMode trace, std::size_t probes, Rng& init_rng);

    PolicyKind kind() const override { return PolicyKind::Flow; }
    std::size_t state_dim() const override { return net_.config().state_dim; }
    std::size_t action_dim() const override { return net_.config().action_dim; }
    ParamSet& params() override { return params_; }
    const ParamSet& params() const override { return params_; }

    const VelocityNetConfig& config() const { return net_.config(); }
    const TransformerVelocity& net() const { return net_; }
    TraceMode trace_mode() const { return trace_; }
    std::size_t probes() const { return probes_; }

    PolicyBatch sample(CompGraph& g, Var states, bool trainable, bool with_log_prob, Rng& noise,
                       Rng& probe) const override;
    PolicyBatch deterministic(CompGraph& g, Var states) const override;

    /// Rollout from caller-supplied prior points (B x d).
    RolloutNodes rollout(CompGraph& g, Var states, const DenseArray& a0, bool trainable, TraceMode trace,
                         Rng* probe) const;

    /// Single-state sample with its full rollout record.
    std::pair<PolicySample, FlowRollout> sample_action(std::span<const double> state, Rng& noise, Rng& probe) const;

    // Value-level probes of the field at the newest point of `history`
    // (points A_{t_0} .. A_{t_i} with t_j = j/K). `t` must equal t_i.
    using History = std::vector<std::vector<double>>;
    std::vector<double> velocity(double t, const History& history, std::span<const double> state) const;
    double exact_trace(double t, const History& history, std::span<const double> state) const;
    double hutchinson_trace(double t, const History& history, std::span<const double> state, std::size_t probes,
                            Rng& rng) const;

private:
    ParamSet params_;
    TransformerVelocity net_;
    TraceMode trace_;
    std::size_t probes_;
};

/// Diagonal Gaussian ablation: a three-layer MLP emits mean and log-std
/// (clamped to [-20, 2]); actions are tanh-squashed reparameterized draws.
class GaussianPolicy final : public Policy {
public:
    static constexpr double kLogStdMin = -20.0;
    static constexpr double kLogStdMax = 2.0;

    GaussianPolicy(std::size_t state_dim, std::size_t action_dim, std::size_t hidden, Rng& init_rng);

    PolicyKind kind() const override { return PolicyKind::Gaussian; }
    std::size_t state_dim() const override { return state_dim_; }
    std::size_t action_dim() const override { return action_dim_; }
    ParamSet& params() override { return params_; }
    const ParamSet& params() const override { return params_; }
    std::size_t hidden() const { return hidden_; }

    PolicyBatch sample(CompGraph& g, Var states, bool trainable, bool with_log_prob, Rng& noise,
                       Rng& probe) const override;
    PolicyBatch deterministic(CompGraph& g, Var states) const override;

    /// Sample from explicit standard-normal noise (B x d).
    PolicyBatch sample_with_noise(CompGraph& g, Var states, const DenseArray& noise, bool trainable,
                                  bool with_log_prob) const;

private:
    std::pair<Var, Var> mean_and_log_std(CompGraph& g, Var states, bool trainable) const;

    ParamSet params_;
    nn::Mlp net_;
    std::size_t state_dim_;
    std::size_t action_dim_;
    std::size_t hidden_;
};

DenseArray standard_normal(std::size_t rows, std::size_t cols, Rng& rng);

}  // namespace fpdrl::flow
