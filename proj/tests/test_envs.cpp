#include "doctest.h"

#include <cmath>
#include <numbers>

#include "fpdrl/envs/env.hpp"
#include "fpdrl/envs/tabular.hpp"

using namespace fpdrl;
using namespace fpdrl::envs;

TEST_CASE("registry") {
    for (const auto& name : env_names()) CHECK(make_env(name)->spec().name == name);
    CHECK_THROWS_AS(make_env("hopper"), EnvError);
    CHECK(make_env("bandit")->spec().name == "bimodal_bandit");
    CHECK(make_env("bandit")->spec().state_dim == 1);
    CHECK(make_env("pointmass")->spec().action_dim == 2);
    CHECK(make_env("pendulum")->spec().horizon == 200);
}

TEST_CASE("bimodal bandit") {
    BimodalBandit env;
    Rng rng(1);
    CHECK(env.reset(rng) == State{0.0});
    CHECK(BimodalBandit::reward(0.6) == doctest::Approx(1.0 + std::exp(-72.0)).epsilon(1e-15));
    CHECK(BimodalBandit::reward(0.6) <= 1.0 + std::exp(-72.0));
    for (double a = -1.0; a <= 1.0; a += 0.01) {
        CHECK(BimodalBandit::reward(a) == BimodalBandit::reward(-a));
        CHECK(BimodalBandit::reward(a) > 0.0);
    }
    const auto t = env.step({0.0}, std::vector<double>{-0.6});
    CHECK(t.terminal);
    CHECK_FALSE(t.truncated);
    CHECK_THROWS_AS(env.step({0.0}, std::vector<double>{1.5}), EnvError);
    CHECK_THROWS_AS(env.step({0.0}, std::vector<double>{std::nan("")}), EnvError);
    CHECK_THROWS_AS(env.step({0.0, 1.0}, std::vector<double>{0.0}), EnvError);
}

TEST_CASE("point mass") {
    TwoGoalPointMass env;
    Rng rng(2);
    const State s0 = env.reset(rng);
    CHECK(std::fabs(s0[0]) <= 0.05);
    CHECK(s0[2] == 0.0);

    SUBCASE("one step by hand") {
        const auto t = env.step({0.1, 0.2, 0.4, -0.2}, std::vector<double>{1.0, 0.5});
        const double vx = 0.4 + 0.05 * (1.0 - 0.2), vy = -0.2 + 0.05 * (0.5 + 0.1);
        CHECK(t.next_state[2] == doctest::Approx(vx).epsilon(1e-15));
        CHECK(t.next_state[3] == doctest::Approx(vy).epsilon(1e-15));
        CHECK(t.next_state[0] == doctest::Approx(0.1 + 0.05 * vx).epsilon(1e-15));
        const double d = std::hypot(t.next_state[0] - 0.5, t.next_state[1] - 0.5);
        CHECK(t.reward == doctest::Approx(-d - 0.01 * 1.25).epsilon(1e-14));
        CHECK_FALSE(t.terminal);
    }
    SUBCASE("goal is terminal") {
        const auto t = env.step({-0.5, 0.5, 0.0, 0.0}, std::vector<double>{0.0, 0.0});
        CHECK(t.terminal);
        CHECK(t.reward == 0.0);
    }
    SUBCASE("truncation exactly at the horizon") {
        Episode ep(env);
        ep.reset(rng);
        Transition t;
        for (std::size_t k = 0; k < 100; ++k) {
            CHECK_FALSE(ep.done());
            t = ep.step(std::vector<double>{0.0, -1.0});
            CHECK_FALSE(t.terminal);
            CHECK(t.truncated == (k == 99));
        }
        CHECK(ep.done());
        CHECK_THROWS_AS(ep.step(std::vector<double>{0.0, 0.0}), EnvError);
    }
}

TEST_CASE("pendulum") {
    PendulumSwingUp env;
    SUBCASE("upright fixed point") {
        const State up = PendulumSwingUp::from_angle(0.0, 0.0);
        const auto t = env.step(up, std::vector<double>{0.0});
        CHECK(t.reward == 0.0);
        CHECK(t.next_state == up);
    }
    SUBCASE("reset distribution and determinism") {
        Rng a(5), b(5);
        for (int k = 0; k < 100; ++k) {
            const State s = env.reset(a);
            CHECK(s == env.reset(b));
            CHECK(std::fabs(s[2]) <= 1.0);
            CHECK(s[0] * s[0] + s[1] * s[1] == doctest::Approx(1.0));
        }
    }
    SUBCASE("reward bounds and speed clamp") {
        Rng rng(6);
        const double floor = -(std::numbers::pi * std::numbers::pi + 0.1 * 64.0 + 0.001 * 4.0);
        for (int k = 0; k < 2000; ++k) {
            const State s = PendulumSwingUp::from_angle(rng.uniform(-4, 4), rng.uniform(-8, 8));
            const auto t = env.step(s, std::vector<double>{rng.uniform(-1, 1)});
            CHECK(t.reward <= 0.0);
            CHECK(t.reward >= floor);
            CHECK(std::fabs(t.next_state[2]) <= 8.0);
        }
    }
    SUBCASE("one explicit Euler step by hand") {
        const double th = 2.0, w = -1.5, a = 0.3;
        const auto t = env.step(PendulumSwingUp::from_angle(th, w), std::vector<double>{a});
        const double wrapped = PendulumSwingUp::wrap(th);
        CHECK(t.reward == doctest::Approx(-(wrapped * wrapped + 0.1 * w * w + 0.001 * 0.36)).epsilon(1e-14));
        CHECK(PendulumSwingUp::angle(t.next_state) == doctest::Approx(th + 0.05 * w).epsilon(1e-14));
        CHECK(t.next_state[2] == doctest::Approx(w + 0.05 * (15.0 * std::sin(th) + 3.0 * 0.6)).epsilon(1e-14));
    }
    SUBCASE("energy drift with zero torque") {
        // Explicit Euler gains energy every step. Averaged over reset-distribution
        // episodes the per-step change stays under 2% of m g l; single steps near
        // the bottom of a fast swing reach about 10%.
        Rng rng(7);
        double total = 0.0, worst = 0.0;
        std::size_t steps = 0;
        const double scale = PendulumSwingUp::kMass * PendulumSwingUp::kGravity * PendulumSwingUp::kLength;
        for (int ep = 0; ep < 200; ++ep) {
            State s = env.reset(rng);
            for (int k = 0; k < 200; ++k) {
                const State next = env.step(s, std::vector<double>{0.0}).next_state;
                const double d = std::fabs(PendulumSwingUp::energy(next) - PendulumSwingUp::energy(s)) / scale;
                total += d;
                worst = std::max(worst, d);
                ++steps;
                s = next;
            }
        }
        CHECK(total / static_cast<double>(steps) < 0.02);
        CHECK(worst < 0.15);
    }
    SUBCASE("wrap") {
        CHECK(PendulumSwingUp::wrap(0.0) == 0.0);
        CHECK(PendulumSwingUp::wrap(2.0 * std::numbers::pi + 0.5) == doctest::Approx(0.5));
        CHECK(PendulumSwingUp::wrap(-2.0 * std::numbers::pi - 0.5) == doctest::Approx(-0.5));
    }
}

TEST_CASE("tabular MDP") {
    SUBCASE("single-state self-loop") {
        TabularMdp m;
        m.states = 1;
        m.actions = 1;
        m.transition = {{{1.0}}};
        m.reward = {{1.0}};
        m.policy = {{1.0}};
        m.gamma = 0.9;
        CHECK(solve_q(m)[0][0] == doctest::Approx(10.0).epsilon(1e-14));
    }
    SUBCASE("rows are stochastic") {
        const auto m = tabular_mdp();
        CHECK_NOTHROW(m.validate());
        auto bad = m;
        bad.transition[0][1] = {0.5, 0.6};
        CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
    }
    SUBCASE("exact Q matches Monte-Carlo rollouts") {
        const auto m = tabular_mdp();
        const auto q = solve_q(m);
        Rng rng(11);
        const int samples = 250000;  // per (s, a); 10^6 in total
        const int horizon = 160;     // gamma^160 * max|r| < 1e-6
        auto draw = [&](const std::vector<double>& p) { return rng.uniform() < p[0] ? 0u : 1u; };
        for (std::size_t s0 = 0; s0 < 2; ++s0) {
            for (std::size_t a0 = 0; a0 < 2; ++a0) {
                double sum = 0.0, sq = 0.0;
                for (int n = 0; n < samples; ++n) {
                    std::size_t s = s0, a = a0;
                    double ret = 0.0, disc = 1.0;
                    for (int t = 0; t < horizon; ++t) {
                        ret += disc * m.reward[s][a];
                        disc *= m.gamma;
                        s = draw(m.transition[s][a]);
                        a = draw(m.policy[s]);
                    }
                    sum += ret;
                    sq += ret * ret;
                }
                const double mean = sum / samples;
                const double se = std::sqrt((sq / samples - mean * mean) / samples);
                INFO("s=" << s0 << " a=" << a0 << " mc=" << mean << " exact=" << q[s0][a0] << " se=" << se);
                CHECK(std::fabs(mean - q[s0][a0]) < 3.0 * se);
            }
        }
    }
}
