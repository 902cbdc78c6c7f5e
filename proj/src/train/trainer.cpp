#include "fpdrl/train/trainer.hpp"

#include <cmath>
#include <fstream>
#include <sstream>


#include "fpdrl/train/losses.hpp"

namespace fpdrl::train {

using nlohmann::json;

namespace {

json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> optional_from(const json& j) {
    if (j.is_null()) return std::nullopt;
    return j.get<double>();
}

json array_json(const DenseArray& a) {
    json rows = json::array();
    for (std::size_t r = 0; r < a.rows(); ++r) {
        json row = json::array();
        for (std::size_t c = 0; c < a.cols(); ++c) row.push_back(a.at(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

}  // namespace

// ---------------------------------------------------------------- agent

Agent::Agent(const TrainConfig& config, const envs::EnvSpec& env) {
    config.validate();
    Rng init(derive_seed(config.seed, Stream::Init));
    if (config.policy == flow::PolicyKind::Flow) {
        flow::VelocityNetConfig vc;
        vc.action_dim = env.action_dim;
        vc.state_dim = env.state_dim;
        vc.d_model = config.d_model;
        vc.heads = config.heads;
        vc.layers = config.layers;
        vc.flow_steps = config.flow_steps;
        policy_ = std::make_unique<flow::FlowPolicy>(vc, config.resolved_trace(env.action_dim), config.probes, init);
    } else {
        policy_ = std::make_unique<flow::GaussianPolicy>(env.state_dim, env.action_dim, config.gaussian_hidden, init);
    }
    critic::CriticConfig cc;
    cc.state_dim = env.state_dim;
    cc.action_dim = env.action_dim;
    cc.hidden = config.critic_hidden;
    cc.quantiles = config.quantiles;
    cc.kappa = config.kappa;
    cc.kind = config.critic;
    cc.twin = config.twin;
    critics_ = std::make_unique<critic::CriticEnsemble>(cc, init);
    temperature_.add("log_alpha", DenseArray::scalar(std::log(config.alpha_init)));
    target_entropy_ = config.resolved_target_entropy(env.action_dim);

    actor_adam_ = diff::AdamState::for_params(policy_->params(), config.lr_actor);
    for (std::size_t k = 0; k < critics_->size(); ++k) {
        critic_adam_.push_back(diff::AdamState::for_params(critics_->online(k), config.lr_critic));
    }
    alpha_adam_ = diff::AdamState::for_params(temperature_, config.lr_alpha);
}

double Agent::alpha() const { return std::exp(temperature_.value(0).item()); }

void Agent::save(diff::Checkpoint& ckpt) const {
    ckpt.put_params("policy", policy_->params());
    ckpt.put_adam("adam.policy", actor_adam_);
    for (std::size_t k = 0; k < critics_->size(); ++k) {
        const std::string p = "critic" + std::to_string(k);
        ckpt.put_params(p, critics_->online(k));
        ckpt.put_params(p + "_target", critics_->target(k));
        ckpt.put_adam("adam." + p, critic_adam_[k]);
    }
    ckpt.put_params("temperature", temperature_);
    ckpt.put_adam("adam.temperature", alpha_adam_);
    ckpt.meta["agent.policy"] = flow::to_string(policy_->kind());
    ckpt.meta["agent.critics"] = std::to_string(critics_->size());
    ckpt.meta["agent.state_dim"] = std::to_string(policy_->state_dim());
    ckpt.meta["agent.action_dim"] = std::to_string(policy_->action_dim());
}

void Agent::load(const diff::Checkpoint& ckpt) {
    ckpt.load_params("policy", policy_->params());
    if (ckpt.contains("adam.policy/t")) ckpt.load_adam("adam.policy", actor_adam_);
    for (std::size_t k = 0; k < critics_->size(); ++k) {
        const std::string p = "critic" + std::to_string(k);
        ckpt.load_params(p, critics_->online(k));
        ckpt.load_params(p + "_target", critics_->target(k));
        if (ckpt.contains("adam." + p + "/t")) ckpt.load_adam("adam." + p, critic_adam_[k]);
    }
    ckpt.load_params("temperature", temperature_);
    if (ckpt.contains("adam.temperature/t")) ckpt.load_adam("adam.temperature", alpha_adam_);
}

// ---------------------------------------------------------------- update

UpdateStats update(Agent& agent, const critic::CriticBatch& batch, const TrainConfig& config, Rng& noise, Rng& probe,
                   const std::function<void(Phase)>& on_phase) {
    auto phase = [&](Phase p) {
        if (on_phase) on_phase(p);
    };
    UpdateStats stats;
    stats.alpha = agent.alpha();

    phase(Phase::Critic);
    const DenseArray targets =
        critic::compute_targets(agent.critics(), batch, agent.policy(), stats.alpha, config.gamma, noise, probe);
    if (!targets.all_finite()) throw diff::NonFiniteError("critic targets are not finite");
    stats.critic_losses = critic::critic_step(agent.critics(), agent.critic_adam(), batch.states, batch.actions, targets);

    phase(Phase::Actor);
    DenseArray log_prob;
    {
        agent.policy().params().zero_grads();
        CompGraph g;
        const PolicyLossNodes nodes =
            policy_loss(g, agent.policy(), agent.critics(), batch.states, stats.alpha, noise, probe);
        stats.actor_loss = g.value(nodes.loss).item();
        if (!std::isfinite(stats.actor_loss)) throw diff::NonFiniteError("actor loss is not finite");
        log_prob = g.value(nodes.log_prob);
        double lp = 0.0, q = 0.0;
        for (double v : log_prob.values()) lp += v;
        for (double v : g.value(nodes.q).values()) q += v;
        stats.entropy = -lp / static_cast<double>(log_prob.size());
        stats.mean_q = q / static_cast<double>(log_prob.size());
        g.backward(nodes.loss);
        diff::adam_step(agent.policy().params(), agent.actor_adam());
    }

    phase(Phase::Temperature);
    {
        agent.temperature().zero_grads();
        CompGraph g;
        const Var loss = temperature_loss(g, g.param(agent.temperature(), 0), log_prob, agent.target_entropy());
        stats.alpha_loss = g.value(loss).item();
        g.backward(loss);
        diff::adam_step(agent.temperature(), agent.alpha_adam());
    }

    phase(Phase::Target);
    agent.critics().update_targets(config.ema);
    return stats;
}

// ---------------------------------------------------------------- metrics

std::string MetricsRow::to_json_line() const {
    json j;
    j["step"] = step;
    j["episodes"] = episodes;
    j["train_return"] = optional_json(train_return);
    j["updates"] = updates;
    j["actor_loss"] = optional_json(actor_loss);
    j["critic_loss"] = critic_losses;
    j["alpha_loss"] = optional_json(alpha_loss);
    j["entropy"] = optional_json(entropy);
    j["mean_q"] = optional_json(mean_q);
    j["alpha"] = alpha;
    j["eval_mean"] = eval_mean;
    j["eval_std"] = eval_std;
    return j.dump();
}

MetricsRow MetricsRow::from_json_line(const std::string& line) {
    const json j = json::parse(line);
    MetricsRow r;
    r.step = j.at("step").get<std::uint64_t>();
    r.episodes = j.at("episodes").get<std::uint64_t>();
    r.train_return = optional_from(j.at("train_return"));
    r.updates = j.at("updates").get<std::uint64_t>();
    r.actor_loss = optional_from(j.at("actor_loss"));
    r.critic_losses = j.at("critic_loss").get<std::vector<double>>();
    r.alpha_loss = optional_from(j.at("alpha_loss"));
    r.entropy = optional_from(j.at("entropy"));
    r.mean_q = optional_from(j.at("mean_q"));
    r.alpha = j.at("alpha").get<double>();
    r.eval_mean = j.at("eval_mean").get<double>();
    r.eval_std = j.at("eval_std").get<double>();
    return r;
}

double best_last_10pct(const std::vector<MetricsRow>& rows, std::uint64_t total_steps) {
    if (rows.empty()) return std::nan("");
    bool any = false;
    double best = 0.0;
    for (const auto& r : rows) {
        if (10 * r.step > 9 * total_steps && (!any || r.eval_mean > best)) {
            best = r.eval_mean;
            any = true;
        }
    }
    return any ? best : rows.back().eval_mean;
}

std::optional<double> mean_entropy_last_10pct(const std::vector<MetricsRow>& rows, std::uint64_t total_steps) {
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& r : rows) {
        if (10 * r.step > 9 * total_steps && r.entropy) {
            sum += *r.entropy;
            ++n;
        }
    }
    if (n == 0) return std::nullopt;
    return sum / static_cast<double>(n);
}

std::string TrainSummary::to_json() const {
    json j;
    j["steps"] = steps;
    j["episodes"] = episodes;
    j["best_last_10pct"] = best_last_10pct;
    j["final_eval_mean"] = final_eval_mean;
    j["entropy_last_10pct"] = optional_json(entropy_last_10pct);
    j["target_entropy"] = target_entropy;
    j["bimodality"] = bimodality ? json::array({bimodality->first, bimodality->second}) : json(nullptr);
    j["eval_rows"] = rows.size();
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------- trainer

Trainer::Trainer(TrainConfig config, std::filesystem::path run_dir, TrainHooks hooks)
    : config_(std::move(config)),
      run_dir_(std::move(run_dir)),
      hooks_(std::move(hooks)),
      env_(envs::make_env(config_.env)),
      agent_(std::make_unique<Agent>(config_, env_->spec())),
      buffer_(std::make_unique<ReplayBuffer>(config_.buffer, env_->spec().state_dim, env_->spec().action_dim)),
      env_rng_(derive_seed(config_.seed, Stream::Env)),
      buffer_rng_(derive_seed(config_.seed, Stream::Buffer)),
      noise_rng_(derive_seed(config_.seed, Stream::PolicyNoise)),
      probe_rng_(derive_seed(config_.seed, Stream::Hutchinson)),
      warmup_rng_(derive_seed(config_.seed, Stream::Warmup)),
      episode_(*env_) {}

std::unique_ptr<Trainer> Trainer::resume(const std::filesystem::path& run_dir, TrainHooks hooks) {
    std::ifstream in(run_dir / "config.txt");
    if (!in) throw std::runtime_error("resume: no config.txt in " + run_dir.string());
    std::stringstream text;
    text << in.rdbuf();
    auto trainer = std::make_unique<Trainer>(TrainConfig::parse(text.str()), run_dir, std::move(hooks));
    trainer->restore(diff::Checkpoint::load(run_dir / "checkpoints" / "latest.ckpt"));
    return trainer;
}

diff::Checkpoint Trainer::checkpoint() const {
    diff::Checkpoint ckpt;
    agent_->save(ckpt);
    buffer_->save("buffer", ckpt);
    ckpt.meta["config"] = config_.canonical_text();
    ckpt.meta["config.hash"] = config_.hash();
    ckpt.meta["env"] = env_->spec().name;
    ckpt.meta["step"] = std::to_string(step_);
    ckpt.meta["episodes"] = std::to_string(episodes_);
    ckpt.meta["rng.env"] = env_rng_.serialize();
    ckpt.meta["rng.buffer"] = buffer_rng_.serialize();
    ckpt.meta["rng.noise"] = noise_rng_.serialize();
    ckpt.meta["rng.probe"] = probe_rng_.serialize();
    ckpt.meta["rng.warmup"] = warmup_rng_.serialize();
    ckpt.meta["episode.steps"] = std::to_string(episode_.steps());
    ckpt.meta["episode.done"] = episode_.done() ? "1" : "0";
    ckpt.put("episode/state", episode_.done() ? DenseArray::matrix(1, env_->spec().state_dim)
                                              : DenseArray::row(episode_.state()));
    ckpt.put("episode/return", DenseArray::scalar(episode_return_));
    std::string rows;
    for (const auto& r : rows_) rows += r.to_json_line() + "\n";
    ckpt.meta["metrics.rows"] = rows;
    return ckpt;
}

void Trainer::restore(const diff::Checkpoint& ckpt) {
    if (ckpt.meta_at("config.hash") != config_.hash()) {
        throw diff::CheckpointError("checkpoint was written by a different configuration");
    }
    agent_->load(ckpt);
    buffer_->load("buffer", ckpt);
    step_ = std::stoull(ckpt.meta_at("step"));
    episodes_ = std::stoull(ckpt.meta_at("episodes"));
    env_rng_.deserialize(ckpt.meta_at("rng.env"));
    buffer_rng_.deserialize(ckpt.meta_at("rng.buffer"));
    noise_rng_.deserialize(ckpt.meta_at("rng.noise"));
    probe_rng_.deserialize(ckpt.meta_at("rng.probe"));
    warmup_rng_.deserialize(ckpt.meta_at("rng.warmup"));
    const bool done = ckpt.meta_at("episode.done") == "1";
    const DenseArray& s = ckpt.get("episode/state");
    episode_.restore(done ? envs::State{} : envs::State(s.data(), s.data() + s.size()),
                     std::stoull(ckpt.meta_at("episode.steps")), done);
    episode_return_ = ckpt.get("episode/return").item();
    rows_.clear();
    std::istringstream lines(ckpt.meta_at("metrics.rows"));
    std::string line;
    while (std::getline(lines, line)) {
        if (!line.empty()) rows_.push_back(MetricsRow::from_json_line(line));
    }
}

void Trainer::write_row(const MetricsRow& row) {
    rows_.push_back(row);
    if (!run_dir_.empty()) {
        std::ofstream out(run_dir_ / "metrics.jsonl", std::ios::binary | std::ios::app);
        out << row.to_json_line() << "\n";
    }
    if (hooks_.on_row) hooks_.on_row(row);
}

void Trainer::save_checkpoint(const std::string& name) const {
    if (run_dir_.empty()) return;
    const auto ckpt = checkpoint();
    std::filesystem::create_directories(run_dir_ / "checkpoints");
    ckpt.save(run_dir_ / "checkpoints" / name);
    ckpt.save(run_dir_ / "checkpoints" / "latest.ckpt");
}

void Trainer::dump_divergence(const critic::CriticBatch& batch, const std::string& what) const {
    json j;
    j["states"] = array_json(batch.states);
    j["actions"] = array_json(batch.actions);
    j["rewards"] = array_json(batch.rewards);
    j["next_states"] = array_json(batch.next_states);
    j["terminals"] = array_json(batch.terminals);
    write_divergence(std::move(j), what);
}

void Trainer::write_divergence(nlohmann::json record, const std::string& what) const {
    if (run_dir_.empty()) return;
    record["step"] = step_;
    record["error"] = what;
    write_text(run_dir_ / ("divergence_step" + std::to_string(step_) + ".json"), record.dump(1) + "\n");
}

TrainSummary Trainer::summarize() const {
    TrainSummary s;
    s.steps = step_;
    s.episodes = episodes_;
    s.rows = rows_;
    s.best_last_10pct = best_last_10pct(rows_, config_.steps);
    s.final_eval_mean = rows_.empty() ? std::nan("") : rows_.back().eval_mean;
    s.entropy_last_10pct = mean_entropy_last_10pct(rows_, config_.steps);
    s.target_entropy = agent_->target_entropy();
    if (env_->spec().name == "bimodal_bandit") {
        Rng noise(derive_seed(config_.seed, Stream::Eval, 0xB1)), probe(derive_seed(config_.seed, Stream::Eval, 0xB2));
        s.bimodality = bimodality_score(agent_->policy(), 1000, noise, probe);
    }
    return s;
}

TrainSummary Trainer::run() {
    if (!run_dir_.empty()) {
        std::filesystem::create_directories(run_dir_);
        write_text(run_dir_ / "config.txt", config_.canonical_text());
        // A resumed run rewrites the log up to its checkpoint.
        std::string rows;
        for (const auto& r : rows_) rows += r.to_json_line() + "\n";
        write_text(run_dir_ / "metrics.jsonl", rows);
    }
    const auto& spec = env_->spec();
    const std::size_t d = spec.action_dim;
    std::vector<double> action(d);

    while (step_ < config_.steps) {
        if (episode_.done()) {
            episode_.reset(env_rng_);
            episode_return_ = 0.0;
        }
        ++step_;
        if (step_ <= config_.warmup) {
            for (auto& a : action) a = warmup_rng_.uniform(-1.0, 1.0);
        } else {
            try {
                action = agent_->policy().act(episode_.state(), noise_rng_);
            } catch (const flow::RolloutError& e) {
                json j;
                j["state"] = episode_.state();
                j["rollout"] = json::array();
                for (const auto& p : e.points()) j["rollout"].push_back(array_json(p));
                write_divergence(std::move(j), e.what());
                throw TrainingDiverged("step " + std::to_string(step_) + ": " + e.what());
            }
        }
        const envs::Transition t = episode_.step(action);
        episode_return_ += t.reward;
        buffer_->push(t);
        if (episode_.done()) {
            ++episodes_;
            finished_returns_.push_back(episode_return_);
        }

        if (step_ > config_.warmup && buffer_->size() >= config_.batch) {
            const critic::CriticBatch batch = buffer_->sample(config_.batch, buffer_rng_);
            UpdateStats u;
            try {
                u = update(*agent_, batch, config_, noise_rng_, probe_rng_, hooks_.on_phase);
            } catch (const diff::NonFiniteError& e) {
                dump_divergence(batch, e.what());
                throw TrainingDiverged("step " + std::to_string(step_) + ": " + e.what());
            } catch (const flow::RolloutError& e) {
                dump_divergence(batch, e.what());
                throw TrainingDiverged("step " + std::to_string(step_) + ": " + e.what());
            }
            ++updates_;
            sum_actor_ += u.actor_loss;
            sum_alpha_loss_ += u.alpha_loss;
            sum_entropy_ += u.entropy;
            sum_q_ += u.mean_q;
            sum_critic_.resize(u.critic_losses.size(), 0.0);
            for (std::size_t k = 0; k < u.critic_losses.size(); ++k) sum_critic_[k] += u.critic_losses[k];
        }

        if (step_ % config_.eval_interval == 0) {
            MetricsRow row;
            row.step = step_;
            row.episodes = episodes_;
            if (!finished_returns_.empty()) {
                double s = 0.0;
                for (double r : finished_returns_) s += r;
                row.train_return = s / static_cast<double>(finished_returns_.size());
            }
            row.updates = updates_;
            if (updates_ > 0) {
                const double n = static_cast<double>(updates_);
                row.actor_loss = sum_actor_ / n;
                row.alpha_loss = sum_alpha_loss_ / n;
                row.entropy = sum_entropy_ / n;
                row.mean_q = sum_q_ / n;
                for (double c : sum_critic_) row.critic_losses.push_back(c / n);
            }
            row.alpha = agent_->alpha();
            const EvalResult ev = evaluate(agent_->policy(), *env_, config_.eval_episodes,
                                           derive_seed(config_.seed, Stream::Eval, step_), config_.eval_threads);
            row.eval_mean = ev.mean;
            row.eval_std = ev.std;
            finished_returns_.clear();
            updates_ = 0;
            sum_actor_ = sum_alpha_loss_ = sum_entropy_ = sum_q_ = 0.0;
            sum_critic_.clear();
            write_row(row);
            if (config_.checkpoint_interval > 0 && step_ % config_.checkpoint_interval == 0) {
                save_checkpoint("step_" + std::to_string(step_) + ".ckpt");
            }
        }
        if (hooks_.keep_going && !hooks_.keep_going(step_)) return summarize();
    }

    save_checkpoint("final.ckpt");
    const TrainSummary summary = summarize();
    if (!run_dir_.empty()) write_text(run_dir_ / "summary.json", summary.to_json());
    return summary;
}

}  // namespace fpdrl::train
