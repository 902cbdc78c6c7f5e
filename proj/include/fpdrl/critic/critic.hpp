#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fpdrl/critic/quantile.hpp"
#include "fpdrl/diff/adam.hpp"
#include "fpdrl/diff/nn.hpp"
#include "fpdrl/flow/policy.hpp"

namespace fpdrl::critic {

using diff::CompGraph;
using diff::DenseArray;
using diff::ParamSet;
using diff::Var;

enum class CriticKind { Quantile, Mean };

std::string to_string(CriticKind kind);
CriticKind parse_critic_kind(const std::string& text);

struct CriticConfig {
    std::size_t state_dim = 1;
    std::size_t action_dim = 1;
    std::size_t hidden = 256;
    std::size_t quantiles = 32;  // N; ignored by the mean critic
    double kappa = 1.0;
    CriticKind kind = CriticKind::Quantile;
    bool twin = true;

    void validate() const;
    std::size_t outputs() const { return kind == CriticKind::Mean ? 1 : quantiles; }
};

/// One or two online critics (three-layer ReLU MLPs on concat(s, a)) with
/// EMA target copies.
class CriticEnsemble {
public:
    CriticEnsemble(const CriticConfig& config, Rng& init_rng);

    const CriticConfig& config() const { return config_; }
    std::size_t size() const { return online_.size(); }

    ParamSet& online(std::size_t k) { return *online_.at(k); }
    const ParamSet& online(std::size_t k) const { return *online_.at(k); }
    ParamSet& target(std::size_t k) { return *target_.at(k); }
    const ParamSet& target(std::size_t k) const { return *target_.at(k); }

    /// B x outputs() locations. Target critics always enter as constants.
    Var forward(CompGraph& g, Var states, Var actions, std::size_t k, bool use_target, bool trainable) const;

    QuantileEstimate quantiles(std::span<const double> state, std::span<const double> action, std::size_t k,
                               bool use_target) const;

    /// target <- (1 - rate) target + rate online for every critic.
    void update_targets(double rate);

private:
    CriticConfig config_;
    std::vector<std::unique_ptr<ParamSet>> online_;
    std::vector<std::unique_ptr<ParamSet>> target_;
    nn::Mlp net_;
};

/// y_bj = r_b + gamma (1 - terminal_b) (theta'_bj - alpha log pi_b), using for
/// each row the target critic whose location mean is smallest (whole vector).
/// `target_outputs` holds one B x N array per target critic.
DenseArray soft_target_quantiles(const DenseArray& rewards, const DenseArray& terminals,
                                 const std::vector<DenseArray>& target_outputs, const DenseArray& next_log_prob,
                                 double alpha, double gamma);

/// Mean over batch, i and j of rho^kappa_{tau_i}(y_j - theta_i).
/// theta: B x N node, targets: B x N' values.
Var quantile_huber_loss(CompGraph& g, Var theta, const DenseArray& targets, double kappa);

/// Mean over the batch of (q - y)^2 (not halved). q, targets: B x 1.
Var mean_critic_loss(CompGraph& g, Var q, const DenseArray& targets);

struct CriticBatch {
    DenseArray states;       // B x state_dim
    DenseArray actions;      // B x action_dim
    DenseArray rewards;      // B x 1
    DenseArray next_states;  // B x state_dim
    DenseArray terminals;    // B x 1, 1 for terminal transitions
};

/// Targets for a batch: a' ~ pi(s') with log-probability, frozen target critics.
DenseArray compute_targets(const CriticEnsemble& critics, const CriticBatch& batch, const flow::Policy& policy,
                           double alpha, double gamma, Rng& noise, Rng& probe);

/// Loss of online critic k against fixed targets (per critic kind).
Var critic_loss(CompGraph& g, const CriticEnsemble& critics, std::size_t k, const DenseArray& states,
                const DenseArray& actions, const DenseArray& targets);

/// One Adam step on every online critic against the same targets.
/// Returns per-critic losses; throws diff::NonFiniteError on a non-finite loss.
std::vector<double> critic_step(CriticEnsemble& critics, std::vector<diff::AdamState>& adam,
                                const DenseArray& states, const DenseArray& actions, const DenseArray& targets);

/// compute_targets followed by critic_step.
std::vector<double> critic_update(CriticEnsemble& critics, std::vector<diff::AdamState>& adam,
                                  const CriticBatch& batch, const flow::Policy& policy, double alpha, double gamma,
                                  Rng& noise, Rng& probe);

/// Deliberate defects for checking that the verification suites catch them.
enum class Fault { None, HuberSign };
void set_fault(Fault fault);
Fault active_fault();

}  // namespace fpdrl::critic
