#include "fpdrl/envs/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace fpdrl::envs {

void Environment::check(const State& state, std::span<const double> action) const {
    const auto& s = spec();
    if (state.size() != s.state_dim) {
        throw EnvError(s.name + ": state has " + std::to_string(state.size()) + " entries, expected " +
                       std::to_string(s.state_dim));
    }
    if (action.size() != s.action_dim) {
        throw EnvError(s.name + ": action has " + std::to_string(action.size()) + " entries, expected " +
                       std::to_string(s.action_dim));
    }
    for (std::size_t i = 0; i < action.size(); ++i) {
        if (!(action[i] >= -1.0 && action[i] <= 1.0)) {
            throw EnvError(s.name + ": action[" + std::to_string(i) + "] = " + std::to_string(action[i]) +
                           " outside [-1, 1]");
        }
    }
}

// ---------------------------------------------------------------- bandit

BimodalBandit::BimodalBandit() : spec_{"bimodal_bandit", 1, 1, 1} {}

double BimodalBandit::reward(double a) {
    return std::exp(-(a - 0.6) * (a - 0.6) / 0.02) + std::exp(-(a + 0.6) * (a + 0.6) / 0.02);
}

State BimodalBandit::reset(Rng&) const { return State(spec_.state_dim, 0.0); }

Transition BimodalBandit::step(const State& state, std::span<const double> action) const {
    check(state, action);
    Transition t;
    t.state = state;
    t.action.assign(action.begin(), action.end());
    t.reward = reward(action[0]);
    t.next_state = State(spec_.state_dim, 0.0);
    t.terminal = true;
    return t;
}

// ---------------------------------------------------------------- point mass

TwoGoalPointMass::TwoGoalPointMass() : spec_{"two_goal_pointmass", 4, 2, 100} {}

double TwoGoalPointMass::goal_distance(double x, double y) {
    return std::min(std::hypot(x - 0.5, y - 0.5), std::hypot(x + 0.5, y - 0.5));
}

State TwoGoalPointMass::reset(Rng& rng) const {
    return {rng.uniform(-kStartNoise, kStartNoise), rng.uniform(-kStartNoise, kStartNoise), 0.0, 0.0};
}

Transition TwoGoalPointMass::step(const State& state, std::span<const double> action) const {
    check(state, action);
    Transition t;
    t.state = state;
    t.action.assign(action.begin(), action.end());
    // Semi-implicit Euler: velocity first, then position with the new velocity.
    const double vx = state[2] + kDt * (action[0] - kDrag * state[2]);
    const double vy = state[3] + kDt * (action[1] - kDrag * state[3]);
    const double x = state[0] + kDt * vx;
    const double y = state[1] + kDt * vy;
    t.next_state = {x, y, vx, vy};
    const double dist = goal_distance(x, y);
    t.reward = -dist - kActionCost * (action[0] * action[0] + action[1] * action[1]);
    t.terminal = dist <= kGoalRadius;
    return t;
}

// ---------------------------------------------------------------- pendulum

PendulumSwingUp::PendulumSwingUp() : spec_{"pendulum_swingup", 3, 1, 200} {}

State PendulumSwingUp::from_angle(double theta, double theta_dot) {
    return {std::cos(theta), std::sin(theta), theta_dot};
}

double PendulumSwingUp::angle(const State& state) { return std::atan2(state[1], state[0]); }

double PendulumSwingUp::wrap(double theta) {
    const double two_pi = 2.0 * std::numbers::pi;
    double w = std::fmod(theta + std::numbers::pi, two_pi);
    if (w < 0.0) w += two_pi;
    return w - std::numbers::pi;
}

double PendulumSwingUp::energy(const State& state) {
    return kMass * kLength * kLength / 6.0 * state[2] * state[2] +
           kMass * kGravity * kLength / 2.0 * state[0];
}

State PendulumSwingUp::reset(Rng& rng) const {
    const double theta = rng.uniform(-std::numbers::pi, std::numbers::pi);
    const double theta_dot = rng.uniform(-1.0, 1.0);
    return from_angle(theta, theta_dot);
}

Transition PendulumSwingUp::step(const State& state, std::span<const double> action) const {
    check(state, action);
    Transition t;
    t.state = state;
    t.action.assign(action.begin(), action.end());
    const double theta = angle(state);
    const double theta_dot = state[2];
    const double u = kMaxTorque * action[0];
    const double wrapped = wrap(theta);
    t.reward = -(wrapped * wrapped + 0.1 * theta_dot * theta_dot + 0.001 * u * u);

    const double acc = 3.0 * kGravity / (2.0 * kLength) * std::sin(theta) + 3.0 * u / (kMass * kLength * kLength);
    const double next_theta = theta + kDt * theta_dot;
    const double next_dot = std::clamp(theta_dot + kDt * acc, -kMaxSpeed, kMaxSpeed);
    t.next_state = from_angle(next_theta, next_dot);
    return t;
}

// ---------------------------------------------------------------- registry

std::unique_ptr<Environment> make_env(const std::string& name) {
    if (name == "bimodal_bandit" || name == "bandit") return std::make_unique<BimodalBandit>();
    if (name == "two_goal_pointmass" || name == "pointmass") return std::make_unique<TwoGoalPointMass>();
    if (name == "pendulum_swingup" || name == "pendulum") return std::make_unique<PendulumSwingUp>();
    throw EnvError("unknown environment '" + name +
                   "' (expected bimodal_bandit|two_goal_pointmass|pendulum_swingup)");
}

std::vector<std::string> env_names() { return {"bimodal_bandit", "two_goal_pointmass", "pendulum_swingup"}; }

const State& Episode::reset(Rng& rng) {
    state_ = env_->reset(rng);
    steps_ = 0;
    done_ = false;
    return state_;
}

void Episode::restore(State state, std::size_t steps, bool done) {
    if (!done && state.size() != env_->spec().state_dim) throw EnvError("episode restore: state has wrong size");
    state_ = std::move(state);
    steps_ = steps;
    done_ = done;
}

Transition Episode::step(std::span<const double> action) {
    if (done_) throw EnvError(env_->spec().name + ": step on a finished episode; call reset first");
    Transition t = env_->step(state_, action);
    ++steps_;
    if (!t.terminal && steps_ >= env_->spec().horizon) t.truncated = true;
    done_ = t.terminal || t.truncated;
    state_ = t.next_state;
    return t;
}

}  // namespace fpdrl::envs
