#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpdrl/critic/critic.hpp"
#include "fpdrl/flow/policy.hpp"

namespace fpdrl::train {

/// Invalid configuration value or unknown key. `key()` names the offender.
class ConfigError : public std::invalid_argument {
public:
    ConfigError(std::string key, const std::string& message)
        : std::invalid_argument(message), key_(std::move(key)) {}
    const std::string& key() const { return key_; }

private:
    std::string key_;
};

enum class TraceChoice { Auto, Exact, Hutchinson };

struct TrainConfig {
    std::string env = "pendulum_swingup";
    std::uint64_t steps = 100000;
    std::uint64_t seed = 0;

    double gamma = 0.99;
    double kappa = 1.0;
    std::size_t quantiles = 32;
    std::size_t flow_steps = 4;
    double alpha_init = 0.2;
    std::optional<double> target_entropy;  // unset: -action_dim
    double lr_actor = 3e-4;
    double lr_critic = 3e-4;
    double lr_alpha = 3e-4;
    std::size_t batch = 256;
    std::size_t buffer = 1000000;
    std::uint64_t warmup = 1000;
    double ema = 0.005;
    std::uint64_t eval_interval = 5000;
    std::size_t eval_episodes = 10;
    std::uint64_t checkpoint_interval = 0;  // 0: final checkpoint only

    flow::PolicyKind policy = flow::PolicyKind::Flow;
    critic::CriticKind critic = critic::CriticKind::Quantile;
    TraceChoice trace = TraceChoice::Auto;
    std::size_t probes = 1;
    bool twin = true;

    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t layers = 2;
    std::size_t critic_hidden = 256;
    std::size_t gaussian_hidden = 256;
    std::size_t eval_threads = 1;

    /// Throws ConfigError for the first invalid field.
    void validate() const;

    /// Sets one field from text. Throws ConfigError on unknown keys or bad values.
    void set(const std::string& key, const std::string& value);
    std::string get(const std::string& key) const;

    /// Sorted "key=value" lines; independent of how the config was built.
    std::string canonical_text() const;
    /// FNV-1a 64 of canonical_text(), as 16 hex digits.
    std::string hash() const;

    double resolved_target_entropy(std::size_t action_dim) const;
    flow::TraceMode resolved_trace(std::size_t action_dim) const;

    static std::vector<std::string> keys();
    /// Parses "key = value" lines; '#' starts a comment.
    static TrainConfig parse(const std::string& text);
};

}  // namespace fpdrl::train
