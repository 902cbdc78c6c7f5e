#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "fpdrl/oracles/finite_diff.hpp"
#include "fpdrl/train/losses.hpp"
#include "fpdrl/train/trainer.hpp"

using namespace fpdrl;
using namespace fpdrl::train;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("fpdrl_test_trainer_" + name);
    fs::remove_all(dir);
    return dir;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

TrainConfig tiny_config(const std::string& env = "bimodal_bandit") {
    TrainConfig c;
    c.env = env;
    c.steps = 300;
    c.warmup = 50;
    c.batch = 16;
    c.buffer = 1000;
    c.eval_interval = 100;
    c.eval_episodes = 2;
    c.d_model = 8;
    c.heads = 2;
    c.layers = 1;
    c.quantiles = 4;
    c.critic_hidden = 16;
    c.gaussian_hidden = 16;
    c.flow_steps = 2;
    return c;
}

critic::CriticBatch random_batch(const envs::EnvSpec& spec, std::size_t n, Rng& rng) {
    critic::CriticBatch b;
    b.states = DenseArray::matrix(n, spec.state_dim);
    b.actions = DenseArray::matrix(n, spec.action_dim);
    b.rewards = DenseArray::matrix(n, 1);
    b.next_states = DenseArray::matrix(n, spec.state_dim);
    b.terminals = DenseArray::matrix(n, 1);
    for (auto* a : {&b.states, &b.next_states}) {
        for (auto& v : a->values()) v = rng.normal();
    }
    for (auto& v : b.actions.values()) v = rng.uniform(-1.0, 1.0);
    for (auto& v : b.rewards.values()) v = rng.normal();
    return b;
}

bool all_zero(const diff::ParamSet& p) {
    for (const auto& e : p) {
        for (double g : e.grad.values()) {
            if (g != 0.0) return false;
        }
    }
    return true;
}

std::vector<std::vector<double>> snapshot(const diff::ParamSet& p) {
    std::vector<std::vector<double>> out;
    for (const auto& e : p) out.emplace_back(e.value.values().begin(), e.value.values().end());
    return out;
}

}  // namespace

TEST_CASE("config defaults and validation") {
    const TrainConfig c;
    CHECK(c.gamma == 0.99);
    CHECK(c.kappa == 1.0);
    CHECK(c.quantiles == 32);
    CHECK(c.flow_steps == 4);
    CHECK(c.alpha_init == 0.2);
    CHECK(c.lr_actor == 3e-4);
    CHECK(c.lr_critic == 3e-4);
    CHECK(c.lr_alpha == 3e-4);
    CHECK(c.batch == 256);
    CHECK(c.buffer == 1000000);
    CHECK(c.warmup == 1000);
    CHECK(c.ema == 0.005);
    CHECK(c.eval_episodes == 10);
    CHECK(c.resolved_target_entropy(2) == -2.0);
    CHECK(c.resolved_trace(8) == flow::TraceMode::Exact);
    CHECK(c.resolved_trace(9) == flow::TraceMode::Hutchinson);
    CHECK_NOTHROW(c.validate());

    TrainConfig bad;
    bad.set("gamma", "1.5");
    try {
        bad.validate();
        FAIL("gamma 1.5 accepted");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "gamma");
        CHECK(std::string(e.what()) == "gamma must lie in (0,1)");
    }

    auto expect_key = [](TrainConfig cfg, const std::string& key) {
        try {
            cfg.validate();
            FAIL("accepted invalid " << key);
        } catch (const ConfigError& e) {
            CHECK(e.key() == key);
        }
    };
    TrainConfig b = c;
    b.batch = 10;
    b.buffer = 5;
    expect_key(b, "batch");
    b = c;
    b.quantiles = 0;
    expect_key(b, "quantiles");
    b = c;
    b.flow_steps = 0;
    expect_key(b, "flow_steps");
    b = c;
    b.env = "cartpole";
    expect_key(b, "env");
    b = c;
    b.checkpoint_interval = 7500;
    expect_key(b, "checkpoint_interval");

    TrainConfig u;
    CHECK_THROWS_AS(u.set("learning_rate", "0.1"), ConfigError);
    CHECK_THROWS_AS(u.set("steps", "-3"), ConfigError);
    CHECK_THROWS_AS(u.set("policy", "beta"), ConfigError);
    CHECK_THROWS_AS(TrainConfig::parse("steps 100\n"), ConfigError);
}

TEST_CASE("config canonical form and hash") {
    TrainConfig a;
    a.set("seed", "3");
    a.set("env", "two_goal_pointmass");
    a.set("critic", "mean");
    TrainConfig b;
    b.set("critic", "mean");
    b.set("env", "two_goal_pointmass");
    b.set("seed", "3");
    CHECK(a.canonical_text() == b.canonical_text());
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);

    const TrainConfig round = TrainConfig::parse("# comment\n" + a.canonical_text());
    CHECK(round.hash() == a.hash());
    b.set("seed", "4");
    CHECK(a.hash() != b.hash());

    // Keys come out sorted.
    const auto keys = TrainConfig::keys();
    CHECK(std::is_sorted(keys.begin(), keys.end()));
    for (const auto& k : keys) CHECK(a.get(k) == round.get(k));
    CHECK(a.get("target_entropy") == "auto");
}

TEST_CASE("replay buffer ring semantics") {
    ReplayBuffer buf(3, 1, 1);
    auto tr = [](double x, bool terminal, bool truncated) {
        return envs::Transition{{x}, {x}, x, {x + 1}, terminal, truncated};
    };
    for (int i = 0; i < 5; ++i) buf.push(tr(i, i == 1, i == 4));
    CHECK(buf.size() == 3);
    CHECK(buf.capacity() == 3);
    CHECK(buf.cursor() == 2);

    // Slots hold 3, 4, 2: the two oldest (0, 1) were overwritten first.
    const auto b = buf.gather({0, 1, 2});
    CHECK(b.rewards[0] == 3.0);
    CHECK(b.rewards[1] == 4.0);
    CHECK(b.rewards[2] == 2.0);
    CHECK(b.next_states[1] == 5.0);
    // Truncation is stored as non-terminal.
    CHECK(b.terminals[1] == 0.0);

    Rng rng(1);
    CHECK(buf.sample(7, rng).states.rows() == 7);
    CHECK_THROWS(buf.gather({3}));
    ReplayBuffer empty(4, 1, 1);
    CHECK_THROWS(empty.sample(1, rng));
    CHECK_THROWS(buf.push(envs::Transition{{0.0, 1.0}, {0.0}, 0.0, {0.0}, false, false}));

    diff::Checkpoint ckpt;
    buf.save("buf", ckpt);
    ReplayBuffer restored(3, 1, 1);
    restored.load("buf", ckpt);
    CHECK(restored == buf);
}

TEST_CASE("replay sampling is uniform over the filled region") {
    const std::size_t cells = 100;
    ReplayBuffer buf(250, 1, 1);
    for (std::size_t i = 0; i < cells; ++i) buf.push(envs::Transition{{0.0}, {0.0}, 0.0, {0.0}, false, false});
    Rng rng(derive_seed(7, Stream::Buffer));
    const std::size_t draws = 100000;
    std::vector<double> counts(cells, 0.0);
    for (std::size_t idx : buf.sample_indices(draws, rng)) {
        REQUIRE(idx < cells);
        counts[idx] += 1.0;
    }
    const double expected = static_cast<double>(draws) / cells;
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - expected) * (c - expected) / expected;
    // Upper 0.001 quantile of chi-square with 99 degrees of freedom.
    CHECK(chi2 < 148.23035916510173);
}

TEST_CASE("policy objective") {
    CompGraph g;
    const Var logp = g.constant(DenseArray::scalar(-1.0));
    const Var q = g.constant(DenseArray::scalar(2.0));
    CHECK(g.value(policy_objective(g, logp, q, 0.2)).item() == doctest::Approx(-2.2).epsilon(1e-15));
}

TEST_CASE("policy loss with a constant critic") {
    Rng init(3);
    flow::VelocityNetConfig vc;
    vc.action_dim = 1;
    vc.state_dim = 2;
    vc.d_model = 8;
    vc.heads = 2;
    vc.layers = 1;
    vc.flow_steps = 2;
    flow::FlowPolicy policy(vc, flow::TraceMode::Exact, 1, init);
    for (auto& e : policy.params()) {
        for (auto& v : e.value.values()) v = init.uniform(-0.3, 0.3);
    }
    critic::CriticConfig cc;
    cc.state_dim = 2;
    cc.action_dim = 1;
    cc.hidden = 8;
    cc.quantiles = 4;
    critic::CriticEnsemble critics(cc, init);
    const double c = 1.75;
    for (std::size_t k = 0; k < critics.size(); ++k) {
        auto& b = critics.online(k).value(critics.online(k).index_of("critic.l2.b"));
        for (auto& v : b.values()) v = c;
    }
    DenseArray states = DenseArray::matrix(5, 2);
    for (auto& v : states.values()) v = init.normal();

    Rng noise(1), probe(2);
    policy.params().zero_grads();
    for (std::size_t k = 0; k < critics.size(); ++k) critics.online(k).zero_grads();
    CompGraph g;
    const PolicyLossNodes nodes = policy_loss(g, policy, critics, states, 0.0, noise, probe);
    CHECK(g.value(nodes.loss).item() == doctest::Approx(-c).epsilon(1e-14));
    g.backward(nodes.loss);
    // Q is flat in the action, so no gradient reaches the policy, and none
    // ever reaches the critics.
    CHECK(all_zero(policy.params()));
    for (std::size_t k = 0; k < critics.size(); ++k) {
        CHECK(all_zero(critics.online(k)));
        CHECK(all_zero(critics.target(k)));
    }
}

TEST_CASE("policy loss gradient matches finite differences (d=1, K=2)") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        CAPTURE(seed);
        Rng init(seed);
        flow::VelocityNetConfig vc;
        vc.action_dim = 1;
        vc.state_dim = 2;
        vc.d_model = 8;
        vc.heads = 2;
        vc.layers = 1;
        vc.flow_steps = 2;
        flow::FlowPolicy policy(vc, flow::TraceMode::Exact, 1, init);
        for (auto& e : policy.params()) {
            for (auto& v : e.value.values()) v = init.uniform(-0.4, 0.4);
        }
        critic::CriticConfig cc;
        cc.state_dim = 2;
        cc.action_dim = 1;
        cc.hidden = 8;
        cc.quantiles = 4;
        critic::CriticEnsemble critics(cc, init);
        for (std::size_t k = 0; k < critics.size(); ++k) {
            for (auto& e : critics.online(k)) {
                for (auto& v : e.value.values()) v = init.uniform(-0.5, 0.5);
            }
        }
        DenseArray states = DenseArray::matrix(3, 2);
        for (auto& v : states.values()) v = init.normal();

        const oracles::ParamLoss loss = [&](CompGraph& g, bool) {
            Rng noise(seed), probe(seed + 1);
            return policy_loss(g, policy, critics, states, 0.3, noise, probe).loss;
        };
        CHECK(oracles::max_param_gradient_error(policy.params(), loss, 1e-5, 1e-4) < 1e-3);
    }
}

TEST_CASE("temperature loss") {
    diff::ParamSet t;
    t.add("log_alpha", DenseArray::scalar(std::log(0.5)));
    const double target = -1.0;

    {
        // Matched entropy: log pi = -target.
        t.zero_grads();
        CompGraph g;
        const Var loss = temperature_loss(g, g.param(t, 0), DenseArray::matrix(4, 1, 1.0), target);
        CHECK(g.value(loss).item() == 0.0);
        g.backward(loss);
        CHECK(t[0].grad.item() == 0.0);
    }
    {
        // log pi + target = 1 with alpha = 0.5.
        CompGraph g;
        const Var loss = temperature_loss(g, g.param(t, 0), DenseArray::matrix(3, 1, 2.0), target);
        CHECK(g.value(loss).item() == doctest::Approx(-0.5).epsilon(1e-15));
    }
    {
        // Entropy below target (-log pi = -2 < -1): alpha must keep rising.
        auto adam = diff::AdamState::for_params(t, 3e-4);
        double prev = std::exp(t.value(0).item());
        bool monotone = true;
        for (int i = 0; i < 1000; ++i) {
            t.zero_grads();
            CompGraph g;
            g.backward(temperature_loss(g, g.param(t, 0), DenseArray::matrix(8, 1, 2.0), target));
            diff::adam_step(t, adam);
            const double a = std::exp(t.value(0).item());
            monotone = monotone && a > prev;
            prev = a;
        }
        CHECK(monotone);
        CHECK(prev > 0.5);
    }
}

TEST_CASE("update ordering and target isolation") {
    for (auto kind : {flow::PolicyKind::Flow, flow::PolicyKind::Gaussian}) {
        TrainConfig c = tiny_config("two_goal_pointmass");
        c.policy = kind;
        const auto env = envs::make_env(c.env);
        Agent agent(c, env->spec());
        Rng data(5), noise(6), probe(7);
        const auto batch = random_batch(env->spec(), 8, data);

        std::vector<Phase> order;
        for (std::size_t k = 0; k < agent.critics().size(); ++k) agent.critics().target(k).zero_grads();
        const auto before = snapshot(agent.critics().target(0));
        const double alpha0 = agent.alpha();
        const UpdateStats s = update(agent, batch, c, noise, probe, [&](Phase p) {
            order.push_back(p);
            if (p == Phase::Target) {
                // Targets are still untouched right before the EMA.
                CHECK(snapshot(agent.critics().target(0)) == before);
            }
        });
        CHECK(order == std::vector<Phase>{Phase::Critic, Phase::Actor, Phase::Temperature, Phase::Target});
        CHECK(s.critic_losses.size() == 2);
        CHECK(s.alpha == alpha0);
        CHECK(agent.alpha() != alpha0);
        CHECK(snapshot(agent.critics().target(0)) != before);
        for (std::size_t k = 0; k < agent.critics().size(); ++k) CHECK(all_zero(agent.critics().target(k)));
    }
}

TEST_CASE("non-finite batch aborts the update") {
    TrainConfig c = tiny_config();
    const auto env = envs::make_env(c.env);
    Agent agent(c, env->spec());
    Rng data(1), noise(2), probe(3);
    auto batch = random_batch(env->spec(), 4, data);
    batch.rewards[2] = std::nan("");
    CHECK_THROWS_AS(update(agent, batch, c, noise, probe), diff::NonFiniteError);
}

TEST_CASE("evaluation") {
    TrainConfig c = tiny_config();
    const auto env = envs::make_env(c.env);
    for (auto kind : {flow::PolicyKind::Flow, flow::PolicyKind::Gaussian}) {
        c.policy = kind;
        Agent agent(c, env->spec());
        const auto before = snapshot(agent.policy().params());
        const EvalResult r = evaluate(agent.policy(), *env, 3, 9);
        CHECK(r.returns.size() == 3);
        for (double x : r.returns) CHECK(x == doctest::Approx(3.045995948942526e-08).epsilon(1e-12));
        CHECK(snapshot(agent.policy().params()) == before);
        CHECK(evaluate(agent.policy(), *env, 1, 9).std == 0.0);
    }

    const auto s = summarize_returns({1.0, 3.0});
    CHECK(s.mean == 2.0);
    CHECK(s.std == 1.0);

    // Thread count does not change results.
    TrainConfig p = tiny_config("pendulum_swingup");
    const auto pend = envs::make_env(p.env);
    Agent agent(p, pend->spec());
    for (auto& e : agent.policy().params()) {
        for (auto& v : e.value.values()) v = 0.1 * std::sin(static_cast<double>(&v - e.value.data()) + 1.0);
    }
    const auto one = evaluate(agent.policy(), *pend, 3, 4, 1);
    const auto three = evaluate(agent.policy(), *pend, 3, 4, 3);
    CHECK(one.returns == three.returns);
}

TEST_CASE("bimodality score") {
    Rng rng(3);
    const auto plus = bimodality_score([](Rng&) { return 0.6; }, 1000, rng);
    CHECK(plus.first == 1.0);
    CHECK(plus.second == 0.0);

    const std::size_t n = 100000;
    const auto uniform = bimodality_score([](Rng& r) { return r.uniform(-1.0, 1.0); }, n, rng);
    const double sigma = std::sqrt(0.1 * 0.9 / n);
    CHECK(std::fabs(uniform.first - 0.1) < 3.0 * sigma);
    CHECK(std::fabs(uniform.second - 0.1) < 3.0 * sigma);

    const auto dirac = bimodality_score([](Rng& r) { return r.uniform() < 0.5 ? 0.6 : -0.6; }, n, rng);
    const double s2 = std::sqrt(0.25 / n);
    CHECK(dirac.first + dirac.second == 1.0);
    CHECK(std::fabs(dirac.first - 0.5) < 3.0 * s2);

    // The untrained flow policy is a squashed standard normal: P(|tanh z - 0.6| <= 0.1).
    TrainConfig c = tiny_config();
    const auto env = envs::make_env(c.env);
    Agent agent(c, env->spec());
    Rng noise(1), probe(2);
    const auto score = bimodality_score(agent.policy(), 20000, noise, probe);
    const double p = 0.5 * (std::erf(std::atanh(0.7) / std::sqrt(2.0)) - std::erf(std::atanh(0.5) / std::sqrt(2.0)));
    const double sp = std::sqrt(p * (1 - p) / 20000);
    CHECK(std::fabs(score.first - p) < 3.0 * sp);
    CHECK(std::fabs(score.second - p) < 3.0 * sp);
}

TEST_CASE("metrics rows round-trip") {
    MetricsRow r;
    r.step = 100;
    r.episodes = 7;
    r.train_return = -0.1;
    r.updates = 50;
    r.actor_loss = 1.0 / 3.0;
    r.critic_losses = {0.5, 0.25};
    r.alpha = 0.2;
    r.eval_mean = -123.456;
    r.eval_std = 1e-9;
    const MetricsRow back = MetricsRow::from_json_line(r.to_json_line());
    CHECK(back.to_json_line() == r.to_json_line());
    CHECK(*back.actor_loss == 1.0 / 3.0);
    CHECK(!back.entropy);

    std::vector<MetricsRow> rows(10);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        rows[i].step = (i + 1) * 100;
        rows[i].eval_mean = static_cast<double>(i % 4);
        rows[i].entropy = static_cast<double>(i);
    }
    // Rows past 900 of 1000 steps: only step 1000 (eval 1).
    CHECK(best_last_10pct(rows, 1000) == 1.0);
    CHECK(best_last_10pct(rows, 2000) == 1.0);
    CHECK(best_last_10pct(rows, 500) == 3.0);
    CHECK(*mean_entropy_last_10pct(rows, 1000) == 9.0);
}

TEST_CASE("schedule writes one row per eval interval") {
    const auto dir = scratch_dir("schedule");
    TrainConfig c = tiny_config();
    c.steps = 500;
    c.warmup = 100;
    c.eval_interval = 100;
    std::vector<std::uint64_t> seen;
    TrainHooks hooks;
    hooks.on_row = [&](const MetricsRow& r) { seen.push_back(r.step); };
    const TrainSummary s = Trainer(c, dir, hooks).run();
    CHECK(seen == std::vector<std::uint64_t>{100, 200, 300, 400, 500});
    CHECK(s.rows.size() == 5);
    CHECK(s.steps == 500);
    CHECK(s.episodes == 500);
    CHECK(s.bimodality.has_value());

    std::ifstream in(dir / "metrics.jsonl");
    std::string line;
    std::size_t rows = 0;
    while (std::getline(in, line)) {
        const auto r = MetricsRow::from_json_line(line);
        CHECK(r.step == 100 * (rows + 1));
        ++rows;
    }
    CHECK(rows == 5);
    CHECK(fs::exists(dir / "summary.json"));
    CHECK(fs::exists(dir / "checkpoints" / "final.ckpt"));
    CHECK(TrainConfig::parse(slurp(dir / "config.txt")).hash() == c.hash());

    // Warmup rows carry no losses; rows after learning starts do.
    CHECK(!s.rows[0].actor_loss.has_value());
    CHECK(s.rows[1].actor_loss.has_value());
    CHECK(s.rows[1].updates == 100);
    fs::remove_all(dir);
}

TEST_CASE("identical config and seed give bit-identical artifacts") {
    for (auto env : {"two_goal_pointmass", "bimodal_bandit"}) {
        CAPTURE(env);
        TrainConfig c = tiny_config(env);
        c.steps = 200;
        c.checkpoint_interval = 100;
        const auto a = scratch_dir("det_a");
        const auto b = scratch_dir("det_b");
        Trainer(c, a).run();
        Trainer(c, b).run();
        CHECK(slurp(a / "metrics.jsonl") == slurp(b / "metrics.jsonl"));
        CHECK(!slurp(a / "metrics.jsonl").empty());
        for (auto name : {"step_100.ckpt", "final.ckpt"}) {
            CHECK(slurp(a / "checkpoints" / name) == slurp(b / "checkpoints" / name));
        }
        CHECK(slurp(a / "summary.json") == slurp(b / "summary.json"));
        fs::remove_all(a);
        fs::remove_all(b);
    }
}

TEST_CASE("eval settings do not perturb training") {
    TrainConfig c = tiny_config("pendulum_swingup");
    c.steps = 200;
    Trainer a(c);
    a.run();
    c.eval_episodes = 5;
    c.eval_threads = 2;
    Trainer b(c);
    b.run();
    CHECK(snapshot(a.agent().policy().params()) == snapshot(b.agent().policy().params()));
    CHECK(snapshot(a.agent().critics().online(1)) == snapshot(b.agent().critics().online(1)));
    CHECK(a.buffer() == b.buffer());
}

TEST_CASE("resume reproduces an uninterrupted run") {
    TrainConfig c = tiny_config("pendulum_swingup");
    c.steps = 400;
    c.checkpoint_interval = 200;
    const auto full = scratch_dir("resume_full");
    const auto split = scratch_dir("resume_split");
    Trainer(c, full).run();

    TrainHooks stop;
    // Stop mid-interval so the log holds a row the checkpoint does not cover.
    stop.keep_going = [](std::uint64_t step) { return step < 300; };
    Trainer(c, split, stop).run();
    CHECK(slurp(split / "metrics.jsonl") != slurp(full / "metrics.jsonl"));

    auto resumed = Trainer::resume(split);
    CHECK(resumed->step() == 200);
    resumed->run();
    CHECK(slurp(split / "metrics.jsonl") == slurp(full / "metrics.jsonl"));
    CHECK(slurp(split / "checkpoints" / "final.ckpt") == slurp(full / "checkpoints" / "final.ckpt"));

    // A checkpoint from another configuration is refused.
    TrainConfig other = c;
    other.seed = 9;
    const auto wrong = scratch_dir("resume_wrong");
    fs::create_directories(wrong / "checkpoints");
    fs::copy_file(full / "checkpoints" / "latest.ckpt", wrong / "checkpoints" / "latest.ckpt");
    std::ofstream(wrong / "config.txt") << other.canonical_text();
    CHECK_THROWS_AS(Trainer::resume(wrong), diff::CheckpointError);
    for (const auto& d : {full, split, wrong}) fs::remove_all(d);
}

TEST_CASE("divergence aborts with a dump of the batch") {
    const auto dir = scratch_dir("diverge");
    TrainConfig c = tiny_config("pendulum_swingup");
    c.lr_actor = 1e250;
    CHECK_THROWS_AS(Trainer(c, dir).run(), TrainingDiverged);
    bool dumped = false;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (e.path().filename().string().rfind("divergence_step", 0) == 0) dumped = true;
    }
    CHECK(dumped);
    fs::remove_all(dir);
}
