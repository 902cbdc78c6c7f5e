#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fpdrl/critic/critic.hpp"
#include "fpdrl/diff/adam.hpp"
#include "fpdrl/diff/checkpoint.hpp"
#include "fpdrl/envs/env.hpp"
#include "fpdrl/flow/policy.hpp"
#include "fpdrl/train/config.hpp"
#include "fpdrl/train/evaluation.hpp"
#include "fpdrl/train/replay_buffer.hpp"

namespace fpdrl::train {

/// Policy, critics, temperature and their optimizer states.
class Agent {
public:
    Agent(const TrainConfig& config, const envs::EnvSpec& env);

    flow::Policy& policy() { return *policy_; }
    const flow::Policy& policy() const { return *policy_; }
    critic::CriticEnsemble& critics() { return *critics_; }
    const critic::CriticEnsemble& critics() const { return *critics_; }
    diff::ParamSet& temperature() { return temperature_; }
    double alpha() const;
    double target_entropy() const { return target_entropy_; }

    diff::AdamState& actor_adam() { return actor_adam_; }
    std::vector<diff::AdamState>& critic_adam() { return critic_adam_; }
    diff::AdamState& alpha_adam() { return alpha_adam_; }

    void save(diff::Checkpoint& ckpt) const;
    void load(const diff::Checkpoint& ckpt);

private:
    std::unique_ptr<flow::Policy> policy_;
    std::unique_ptr<critic::CriticEnsemble> critics_;
    diff::ParamSet temperature_;  // "log_alpha", 1 x 1
    double target_entropy_;
    diff::AdamState actor_adam_;
    std::vector<diff::AdamState> critic_adam_;
    diff::AdamState alpha_adam_;
};

enum class Phase { Critic, Actor, Temperature, Target };

struct UpdateStats {
    std::vector<double> critic_losses;
    double actor_loss = 0.0;
    double alpha_loss = 0.0;
    double entropy = 0.0;  // -mean log pi over the actor batch
    double mean_q = 0.0;
    double alpha = 0.0;    // value used by this update
};

/// One gradient update in the fixed order critic, actor, temperature, EMA.
UpdateStats update(Agent& agent, const critic::CriticBatch& batch, const TrainConfig& config, Rng& noise, Rng& probe,
                   const std::function<void(Phase)>& on_phase = {});

struct MetricsRow {
    std::uint64_t step = 0;
    std::uint64_t episodes = 0;             // completed training episodes so far
    std::optional<double> train_return;     // mean over episodes finished since the previous row
    std::uint64_t updates = 0;              // gradient updates since the previous row
    std::optional<double> actor_loss;       // interval means; empty before learning starts
    std::vector<double> critic_losses;
    std::optional<double> alpha_loss;
    std::optional<double> entropy;
    std::optional<double> mean_q;
    double alpha = 0.0;
    double eval_mean = 0.0;
    double eval_std = 0.0;

    std::string to_json_line() const;
    static MetricsRow from_json_line(const std::string& line);
};

struct TrainSummary {
    std::uint64_t steps = 0;
    std::uint64_t episodes = 0;
    double best_last_10pct = 0.0;   // highest eval mean among rows in the final 10% of steps
    double final_eval_mean = 0.0;
    std::optional<double> entropy_last_10pct;
    double target_entropy = 0.0;
    std::optional<std::pair<double, double>> bimodality;
    std::vector<MetricsRow> rows;

    std::string to_json() const;
};

/// Best eval mean among rows with step > 0.9 * total_steps (the last row if none).
double best_last_10pct(const std::vector<MetricsRow>& rows, std::uint64_t total_steps);
std::optional<double> mean_entropy_last_10pct(const std::vector<MetricsRow>& rows, std::uint64_t total_steps);

/// Raised when a loss or rollout goes non-finite; the offending batch is
/// written next to the metrics when a run directory is set.
class TrainingDiverged : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct TrainHooks {
    std::function<void(Phase)> on_phase;
    std::function<void(const MetricsRow&)> on_row;
    /// Return false to stop after the current step (used to test resumption).
    std::function<bool(std::uint64_t step)> keep_going;
};

/// Runs the training loop. With a run directory it writes config.txt,
/// metrics.jsonl, checkpoints/ and summary.json there.
class Trainer {
public:
    Trainer(TrainConfig config, std::filesystem::path run_dir = {}, TrainHooks hooks = {});

    /// Restores a run from <run_dir>/checkpoints/latest.ckpt and config.txt.
    static std::unique_ptr<Trainer> resume(const std::filesystem::path& run_dir, TrainHooks hooks = {});

    TrainSummary run();

    const TrainConfig& config() const { return config_; }
    const Agent& agent() const { return *agent_; }
    Agent& agent() { return *agent_; }
    const ReplayBuffer& buffer() const { return *buffer_; }
    std::uint64_t step() const { return step_; }

    diff::Checkpoint checkpoint() const;

private:
    void restore(const diff::Checkpoint& ckpt);
    void write_row(const MetricsRow& row);
    void save_checkpoint(const std::string& name) const;
    void dump_divergence(const critic::CriticBatch& batch, const std::string& what) const;
    void write_divergence(nlohmann::json record, const std::string& what) const;
    TrainSummary summarize() const;

    TrainConfig config_;
    std::filesystem::path run_dir_;
    TrainHooks hooks_;
    std::unique_ptr<envs::Environment> env_;
    std::unique_ptr<Agent> agent_;
    std::unique_ptr<ReplayBuffer> buffer_;

    Rng env_rng_, buffer_rng_, noise_rng_, probe_rng_, warmup_rng_;
    envs::Episode episode_;
    double episode_return_ = 0.0;
    std::uint64_t step_ = 0;
    std::uint64_t episodes_ = 0;

    // Interval accumulators, cleared at every metrics row.
    std::vector<double> finished_returns_;
    std::uint64_t updates_ = 0;
    double sum_actor_ = 0.0, sum_alpha_loss_ = 0.0, sum_entropy_ = 0.0, sum_q_ = 0.0;
    std::vector<double> sum_critic_;

    std::vector<MetricsRow> rows_;
};

}  // namespace fpdrl::train
