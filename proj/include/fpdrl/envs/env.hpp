#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fpdrl/util/rng.hpp"

namespace fpdrl::envs {

using State = std::vector<double>;

struct EnvSpec {
    std::string name;
    std::size_t state_dim = 0;
    std::size_t action_dim = 0;
    std::size_t horizon = 0;
};

struct Transition {
    State state;
    std::vector<double> action;
    double reward = 0.0;
    State next_state;
    bool terminal = false;
    bool truncated = false;
};

/// Raised for actions outside [-1, 1]^d or malformed states.
class EnvError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Pure state machine: reset() draws an initial state, step() is a
/// deterministic function of (state, action). Horizon truncation is tracked
/// by Episode, not here.
class Environment {
public:
    virtual ~Environment() = default;
    virtual const EnvSpec& spec() const = 0;
    virtual State reset(Rng& rng) const = 0;
    virtual Transition step(const State& state, std::span<const double> action) const = 0;

protected:
    void check(const State& state, std::span<const double> action) const;
};

/// r(a) = exp(-(a-0.6)^2/0.02) + exp(-(a+0.6)^2/0.02); one step, then terminal.
class BimodalBandit final : public Environment {
public:
    BimodalBandit();
    const EnvSpec& spec() const override { return spec_; }
    State reset(Rng& rng) const override;
    Transition step(const State& state, std::span<const double> action) const override;
    static double reward(double a);

private:
    EnvSpec spec_;
};

/// Point mass in the plane with goals at (+-0.5, 0.5). State (x, y, vx, vy).
class TwoGoalPointMass final : public Environment {
public:
    static constexpr double kDt = 0.05;
    static constexpr double kDrag = 0.5;
    static constexpr double kGoalRadius = 0.05;
    static constexpr double kActionCost = 0.01;
    static constexpr double kStartNoise = 0.05;

    TwoGoalPointMass();
    const EnvSpec& spec() const override { return spec_; }
    State reset(Rng& rng) const override;
    Transition step(const State& state, std::span<const double> action) const override;
    static double goal_distance(double x, double y);

private:
    EnvSpec spec_;
};

/// Rod pendulum, theta = 0 upright. State (cos theta, sin theta, theta_dot).
class PendulumSwingUp final : public Environment {
public:
    static constexpr double kGravity = 10.0;
    static constexpr double kMass = 1.0;
    static constexpr double kLength = 1.0;
    static constexpr double kDt = 0.05;
    static constexpr double kMaxSpeed = 8.0;
    static constexpr double kMaxTorque = 2.0;

    PendulumSwingUp();
    const EnvSpec& spec() const override { return spec_; }
    State reset(Rng& rng) const override;
    Transition step(const State& state, std::span<const double> action) const override;

    static State from_angle(double theta, double theta_dot);
    static double angle(const State& state);
    static double wrap(double theta);
    /// Mechanical energy (m l^2 / 6) theta_dot^2 + (m g l / 2) cos theta.
    static double energy(const State& state);

private:
    EnvSpec spec_;
};

/// Environment by canonical name (see env_names()) or the short aliases
/// "bandit", "pointmass", "pendulum".
std::unique_ptr<Environment> make_env(const std::string& name);
std::vector<std::string> env_names();

/// Tracks the step count of one episode and sets the truncation flag at the
/// horizon.
class Episode {
public:
    explicit Episode(const Environment& env) : env_(&env) {}

    const State& reset(Rng& rng);
    Transition step(std::span<const double> action);
    const State& state() const { return state_; }
    std::size_t steps() const { return steps_; }
    bool done() const { return done_; }

    /// Reinstates a saved episode position (for resuming runs).
    void restore(State state, std::size_t steps, bool done);

private:
    const Environment* env_;
    State state_;
    std::size_t steps_ = 0;
    bool done_ = true;
};

}  // namespace fpdrl::envs
