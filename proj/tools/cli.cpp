#include "cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

#include "fpdrl/critic/critic.hpp"
#include "fpdrl/train/trainer.hpp"
#include "fpdrl/verify/registry.hpp"

#ifndef FPDRL_VERSION
#define FPDRL_VERSION "0.0.0"
#endif

namespace fpdrl::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- helpers

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + path.string());
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

void write_file(const fs::path& path, const std::string& text) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write " + path.string());
        out << text;
    }
    fs::rename(tmp, path);
}

std::string shortest(double v) {
    if (std::isnan(v)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(text);
    while (std::getline(in, item, ',')) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::pair<double, double> mean_std(const std::vector<double>& v) {
    if (v.empty()) return {std::nan(""), std::nan("")};
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return {m, std::sqrt(s / static_cast<double>(v.size()))};
}

/// "--key value" options for every config key; `--lr-actor` is accepted
/// as a spelling of `--lr_actor`.
struct ConfigFlags {
    std::string config_file;
    std::map<std::string, std::string> values;
    std::map<std::string, CLI::Option*> options;

    void attach(CLI::App& app) {
        app.add_option("--config", config_file, "Config file of key = value lines")->check(CLI::ExistingFile);
        for (const auto& key : train::TrainConfig::keys()) {
            std::string names = "--" + key;
            std::string dashed = key;
            std::replace(dashed.begin(), dashed.end(), '_', '-');
            if (dashed != key) names += ",--" + dashed;
            options[key] = app.add_option(names, values[key], "Config key " + key)->group("Config keys");
        }
    }

    bool any() const {
        for (const auto& [k, o] : options) {
            if (o->count() > 0) return true;
        }
        return false;
    }

    /// File values first, then flags in key order; validates the result.
    train::TrainConfig build() const {
        train::TrainConfig c;
        if (!config_file.empty()) c = train::TrainConfig::parse(read_file(config_file));
        for (const auto& [key, opt] : options) {
            if (opt->count() > 0) c.set(key, values.at(key));
        }
        c.validate();
        return c;
    }
};

std::string run_id_for(const train::TrainConfig& c) { return c.env + "-" + c.hash().substr(0, 12); }

void print_row(std::ostream& out, const train::MetricsRow& r) {
    out << "step " << r.step << "  eval " << std::fixed << std::setprecision(2) << r.eval_mean << " +- " << r.eval_std
        << "  alpha " << std::setprecision(4) << r.alpha;
    if (r.entropy) out << "  entropy " << std::setprecision(3) << *r.entropy;
    if (r.train_return) out << "  train " << std::setprecision(2) << *r.train_return;
    out << std::defaultfloat << "\n";
    out.flush();
}

// ---------------------------------------------------------------- train

struct TrainArgs {
    ConfigFlags flags;
    std::string run_dir;
    bool resume = false;
    bool quiet = false;
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    train::TrainConfig config;
    try {
        config = a.flags.build();
    } catch (const train::ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    const std::string run_id = a.run_dir.empty() ? run_id_for(config) : fs::path(a.run_dir).filename().string();
    const fs::path dir = a.run_dir.empty() ? run_root() / run_id : fs::path(a.run_dir);

    std::unique_ptr<train::Trainer> trainer;
    train::TrainHooks hooks;
    if (!a.quiet) hooks.on_row = [&out](const train::MetricsRow& r) { print_row(out, r); };

    RunManifest manifest;
    manifest.run_id = run_id;
    manifest.version = version();
    manifest.run_dir = dir;
    manifest.status = "running";
    try {
        if (a.resume) {
            if (!fs::exists(dir / "checkpoints" / "latest.ckpt")) {
                err << "error: nothing to resume in " << dir.string() << "\n";
                return kUsage;
            }
            trainer = train::Trainer::resume(dir, hooks);
            if (a.flags.any() && trainer->config().hash() != config.hash()) {
                err << "error: flags do not match the configuration of " << dir.string() << "\n";
                return kUsage;
            }
            manifest.resumed_from_step = trainer->step();
        } else {
            if (fs::exists(dir) && !fs::is_empty(dir)) {
                err << "error: run directory " << dir.string() << " already exists (use --resume to continue it)\n";
                return kUsage;
            }
            trainer = std::make_unique<train::Trainer>(config, dir, hooks);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }

    manifest.config_hash = trainer->config().hash();
    manifest.seeds = {trainer->config().seed};
    manifest.started_at = utc_timestamp();
    fs::create_directories(dir);
    manifest.write();

    const auto t0 = std::chrono::steady_clock::now();
    auto finish = [&](const std::string& status) {
        manifest.status = status;
        manifest.finished_at = utc_timestamp();
        manifest.wall_clock_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        manifest.write();
    };
    try {
        const train::TrainSummary summary = trainer->run();
        finish("completed");
        out << summary.to_json();
        out << "run directory: " << dir.string() << "\n";
        return kSuccess;
    } catch (const train::TrainingDiverged& e) {
        finish("diverged");
        err << "error: training diverged: " << e.what() << "\n";
        return kRuntime;
    } catch (const std::exception& e) {
        finish("failed");
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
    std::string checkpoint;
    std::string env;
    std::size_t episodes = 10;
    std::uint64_t seed = 0;
    std::size_t threads = 1;
    std::string output;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
    diff::Checkpoint ckpt;
    train::TrainConfig config;
    try {
        ckpt = diff::Checkpoint::load(a.checkpoint);
        config = train::TrainConfig::parse(ckpt.meta_at("config"));
    } catch (const std::exception& e) {
        err << "error: cannot load checkpoint " << a.checkpoint << ": " << e.what() << "\n";
        return kRuntime;
    }
    const std::string trained_on = config.env;
    std::unique_ptr<envs::Environment> env;
    try {
        env = envs::make_env(a.env.empty() ? config.env : a.env);
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    const auto& spec = env->spec();
    const auto trained_spec = envs::make_env(trained_on)->spec();
    if (spec.state_dim != trained_spec.state_dim || spec.action_dim != trained_spec.action_dim) {
        err << "error: checkpoint was trained on " << trained_on << " (state_dim " << trained_spec.state_dim
            << ", action_dim " << trained_spec.action_dim << ") but " << spec.name << " has state_dim "
            << spec.state_dim << ", action_dim " << spec.action_dim << "\n";
        return kRuntime;
    }
    if (a.episodes == 0) {
        err << "error: --episodes must be >= 1\n";
        return kUsage;
    }
    try {
        train::Agent agent(config, spec);
        agent.load(ckpt);
        const train::EvalResult r = train::evaluate(agent.policy(), *env, a.episodes, a.seed, a.threads);
        json record;
        record["checkpoint"] = a.checkpoint;
        record["env"] = spec.name;
        record["policy"] = flow::to_string(config.policy);
        record["episodes"] = a.episodes;
        record["seed"] = a.seed;
        record["mean"] = r.mean;
        record["std"] = r.std;
        record["returns"] = r.returns;
        out << "mean return " << r.mean << " +- " << r.std << " over " << a.episodes << " episodes\n";
        out << record.dump() << "\n";
        if (!a.output.empty()) write_file(a.output, record.dump(2) + "\n");
        return kSuccess;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
}

// ---------------------------------------------------------------- ablate

struct AblateArgs {
    ConfigFlags flags;
    std::string axis;
    std::string values;
    std::string seeds = "0,1,2";
    std::size_t jobs = 1;
    std::string out_dir;
    bool quiet = false;
};

int cmd_ablate(const AblateArgs& a, std::ostream& out, std::ostream& err) {
    const auto axes = ablation_axes();
    if (std::find(axes.begin(), axes.end(), a.axis) == axes.end()) {
        err << "error: unknown ablation axis '" << a.axis << "' (expected policy|critic|N|K)\n";
        return kUsage;
    }
    train::TrainConfig base;
    try {
        base = a.flags.build();
    } catch (const train::ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }
    const std::vector<std::string> values = a.values.empty() ? default_axis_values(a.axis) : split_list(a.values);
    std::vector<std::uint64_t> seeds;
    try {
        for (const auto& s : split_list(a.seeds)) {
            train::TrainConfig probe;
            probe.set("seed", s);
            seeds.push_back(probe.seed);
        }
    } catch (const train::ConfigError&) {
        err << "error: --seeds expects a comma-separated list of non-negative integers\n";
        return kUsage;
    }
    if (values.empty() || seeds.empty()) {
        err << "error: ablation needs at least one value and one seed\n";
        return kUsage;
    }
    if (a.jobs == 0) {
        err << "error: --jobs must be >= 1\n";
        return kUsage;
    }

    struct Task {
        std::size_t row, col;
        train::TrainConfig config;
        fs::path dir;
    };
    const std::string key = axis_config_key(a.axis);
    const fs::path root =
        a.out_dir.empty() ? run_root() / ("ablate-" + a.axis + "-" + base.hash().substr(0, 12)) : fs::path(a.out_dir);
    if (fs::exists(root) && !fs::is_empty(root)) {
        err << "error: ablation directory " << root.string() << " already exists\n";
        return kUsage;
    }
    std::vector<Task> tasks;
    for (std::size_t i = 0; i < values.size(); ++i) {
        for (std::size_t j = 0; j < seeds.size(); ++j) {
            train::TrainConfig c = base;
            try {
                c.set(key, values[i]);
                c.seed = seeds[j];
                c.validate();
            } catch (const train::ConfigError& e) {
                err << "error: axis value '" << values[i] << "': " << e.what() << "\n";
                return kUsage;
            }
            tasks.push_back({i, j, c, root / (a.axis + "=" + values[i]) / ("seed" + std::to_string(seeds[j]))});
        }
    }

    std::vector<std::vector<double>> best(values.size(), std::vector<double>(seeds.size(), std::nan("")));
    std::mutex io;
    std::vector<std::string> failures;
    std::size_t next = 0;
    auto worker = [&] {
        for (;;) {
            std::size_t t;
            {
                std::lock_guard lock(io);
                if (next == tasks.size()) return;
                t = next++;
            }
            const Task& task = tasks[t];
            try {
                const auto summary = train::Trainer(task.config, task.dir).run();
                std::lock_guard lock(io);
                best[task.row][task.col] = summary.best_last_10pct;
                if (!a.quiet) {
                    out << a.axis << "=" << values[task.row] << " seed " << seeds[task.col] << ": best-last-10% "
                        << summary.best_last_10pct << "\n";
                    out.flush();
                }
            } catch (const std::exception& e) {
                std::lock_guard lock(io);
                failures.push_back(task.dir.string() + ": " + e.what());
            }
        }
    };
    fs::create_directories(root);
    if (a.jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < std::min(a.jobs, tasks.size()); ++w) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    std::vector<AblationRow> rows;
    for (std::size_t i = 0; i < values.size(); ++i) {
        AblationRow r;
        r.value = values[i];
        r.per_seed = best[i];
        std::tie(r.mean, r.std) = mean_std(r.per_seed);
        rows.push_back(std::move(r));
    }
    const std::string table = format_ablation_table(a.axis, seeds, rows);
    write_file(root / "table.tsv", table);
    out << table;
    for (const auto& f : failures) err << "error: " << f << "\n";
    return failures.empty() ? kSuccess : kRuntime;
}

// ---------------------------------------------------------------- verify

struct VerifyArgs {
    std::vector<std::string> suites;
    std::string fault;
    std::string output;
    bool list = false;
};

int cmd_verify(const VerifyArgs& a, std::ostream& out, std::ostream& err) {
    if (a.list) {
        for (const auto& s : verify::suites()) out << s.name << "\t" << s.description << "\n";
        return kSuccess;
    }
    critic::Fault fault = critic::Fault::None;
    if (a.fault == "huber-sign") {
        fault = critic::Fault::HuberSign;
    } else if (!a.fault.empty() && a.fault != "none") {
        err << "error: unknown fault '" << a.fault << "'\n";
        return kUsage;
    }
    std::vector<const verify::Suite*> selected;
    try {
        if (a.suites.empty()) {
            for (const auto& s : verify::suites()) selected.push_back(&s);
        } else {
            for (const auto& name : a.suites) selected.push_back(&verify::find_suite(name));
        }
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    critic::set_fault(fault);
    json report;
    report["fault"] = a.fault.empty() ? "none" : a.fault;
    report["suites"] = json::array();
    bool all = true;
    for (const auto* s : selected) {
        std::vector<oracles::Check> checks;
        json suite;
        suite["name"] = s->name;
        try {
            checks = s->run();
        } catch (const std::exception& e) {
            checks.push_back(oracles::Check{s->name + "/exception", std::nan(""), 0.0, false, e.what()});
        }
        const bool passed = oracles::all_passed(checks) && !checks.empty();
        suite["passed"] = passed;
        suite["checks"] = json::array();
        for (const auto& c : checks) {
            suite["checks"].push_back(
                {{"name", c.name}, {"observed", c.observed}, {"tolerance", c.tolerance}, {"passed", c.passed},
                 {"detail", c.detail}});
        }
        err << (passed ? "PASS " : "FAIL ") << s->name << " (" << checks.size() << " checks)\n";
        all = all && passed;
        report["suites"].push_back(std::move(suite));
    }
    critic::set_fault(critic::Fault::None);
    report["passed"] = all;
    out << report.dump(2) << "\n";
    if (!a.output.empty()) write_file(a.output, report.dump(2) + "\n");
    return all ? kSuccess : kVerification;
}

// ---------------------------------------------------------------- plotdata

struct PlotArgs {
    std::vector<std::string> runs;
    std::string metric = "eval_mean";
    std::string output;
};

int cmd_plotdata(const PlotArgs& a, std::ostream& out, std::ostream& err) {
    const auto metrics = plot_metrics();
    if (std::find(metrics.begin(), metrics.end(), a.metric) == metrics.end()) {
        err << "error: unknown metric '" << a.metric << "'\n";
        return kUsage;
    }
    try {
        std::vector<fs::path> dirs(a.runs.begin(), a.runs.end());
        const std::string text = aligned_series(dirs, a.metric).to_text();
        if (a.output.empty()) {
            out << text;
        } else {
            write_file(a.output, text);
        }
        return kSuccess;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kRuntime;
    }
}

double row_metric(const train::MetricsRow& r, const std::string& metric) {
    auto opt = [](const std::optional<double>& v) { return v ? *v : std::nan(""); };
    if (metric == "eval_mean") return r.eval_mean;
    if (metric == "eval_std") return r.eval_std;
    if (metric == "train_return") return opt(r.train_return);
    if (metric == "actor_loss") return opt(r.actor_loss);
    if (metric == "alpha_loss") return opt(r.alpha_loss);
    if (metric == "entropy") return opt(r.entropy);
    if (metric == "mean_q") return opt(r.mean_q);
    if (metric == "alpha") return r.alpha;
    if (metric == "critic_loss") return r.critic_losses.empty() ? std::nan("") : mean_std(r.critic_losses).first;
    if (metric == "episodes") return static_cast<double>(r.episodes);
    if (metric == "updates") return static_cast<double>(r.updates);
    throw std::invalid_argument("unknown metric '" + metric + "'");
}

}  // namespace

// ---------------------------------------------------------------- public helpers

fs::path run_root() {
    const char* env = std::getenv(kRunRootEnv);
    return (env != nullptr && *env != '\0') ? fs::path(env) : fs::path(kDefaultRunRoot);
}

std::string version() { return FPDRL_VERSION; }

std::string utc_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

json RunManifest::to_json() const {
    json j;
    j["run_id"] = run_id;
    j["config_hash"] = config_hash;
    j["version"] = version;
    j["started_at"] = started_at;
    j["finished_at"] = finished_at ? json(*finished_at) : json(nullptr);
    j["status"] = status;
    j["seeds"] = seeds;
    j["resumed_from_step"] = resumed_from_step ? json(*resumed_from_step) : json(nullptr);
    j["wall_clock_seconds"] = wall_clock_seconds ? json(*wall_clock_seconds) : json(nullptr);
    j["artifacts"] = {{"run_dir", run_dir.string()},
                      {"config", "config.txt"},
                      {"metrics", "metrics.jsonl"},
                      {"checkpoints", "checkpoints"},
                      {"summary", "summary.json"}};
    return j;
}

void RunManifest::write() const { write_file(run_dir / "manifest.json", to_json().dump(2) + "\n"); }

std::vector<std::string> plot_metrics() {
    return {"eval_mean", "eval_std", "train_return", "actor_loss", "critic_loss", "alpha_loss",
            "entropy",   "mean_q",   "alpha",        "episodes",   "updates"};
}

SeriesTable aligned_series(const std::vector<fs::path>& run_dirs, const std::string& metric) {
    if (run_dirs.empty()) throw std::invalid_argument("plotdata needs at least one run directory");
    SeriesTable t;
    t.metric = metric;
    std::vector<std::vector<train::MetricsRow>> runs;
    for (const auto& d : run_dirs) {
        std::ifstream in(d / "metrics.jsonl");
        if (!in) throw std::runtime_error("no metrics.jsonl in " + d.string());
        std::vector<train::MetricsRow> rows;
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) rows.push_back(train::MetricsRow::from_json_line(line));
        }
        runs.push_back(std::move(rows));
        t.runs.push_back(d.filename().empty() ? d.parent_path().filename().string() : d.filename().string());
    }
    auto steps_of = [](const std::vector<train::MetricsRow>& rows) {
        std::vector<std::uint64_t> s;
        for (const auto& r : rows) s.push_back(r.step);
        return s;
    };
    t.steps = steps_of(runs[0]);
    std::vector<std::uint64_t> differing;
    for (std::size_t k = 1; k < runs.size(); ++k) {
        const auto other = steps_of(runs[k]);
        std::vector<std::uint64_t> a = t.steps, b = other, diff;
        std::set_symmetric_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(diff));
        differing.insert(differing.end(), diff.begin(), diff.end());
        if (diff.empty() && a != b) differing.insert(differing.end(), a.begin(), a.end());
    }
    if (!differing.empty()) {
        std::sort(differing.begin(), differing.end());
        differing.erase(std::unique(differing.begin(), differing.end()), differing.end());
        std::string list;
        for (auto s : differing) list += (list.empty() ? "" : ", ") + std::to_string(s);
        throw AlignmentError("runs do not share an eval schedule; steps not present in every run: " + list);
    }
    const double n = static_cast<double>(runs.size());
    for (std::size_t i = 0; i < t.steps.size(); ++i) {
        std::vector<double> v;
        for (const auto& r : runs) v.push_back(row_metric(r[i], metric));
        double m = 0.0;
        for (double x : v) m += x;
        m /= n;
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        t.mean.push_back(m);
        t.sem.push_back(runs.size() > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0);
        t.values.push_back(std::move(v));
    }
    return t;
}

std::string SeriesTable::to_text() const {
    std::string s = "step\tmean\tsem";
    for (const auto& r : runs) s += "\t" + r;
    s += "\n";
    for (std::size_t i = 0; i < steps.size(); ++i) {
        s += std::to_string(steps[i]) + "\t" + shortest(mean[i]) + "\t" + shortest(sem[i]);
        for (double v : values[i]) s += "\t" + shortest(v);
        s += "\n";
    }
    return s;
}

std::vector<std::string> ablation_axes() { return {"policy", "critic", "N", "K"}; }

std::string axis_config_key(const std::string& axis) {
    if (axis == "policy") return "policy";
    if (axis == "critic") return "critic";
    if (axis == "N") return "quantiles";
    if (axis == "K") return "flow_steps";
    throw std::invalid_argument("unknown ablation axis '" + axis + "'");
}

std::vector<std::string> default_axis_values(const std::string& axis) {
    if (axis == "policy") return {"flow", "gaussian"};
    if (axis == "critic") return {"quantile", "mean"};
    if (axis == "N") return {"16", "32", "64"};
    if (axis == "K") return {"4", "7", "10", "12"};
    throw std::invalid_argument("unknown ablation axis '" + axis + "'");
}

std::string format_ablation_table(const std::string& axis, const std::vector<std::uint64_t>& seeds,
                                  const std::vector<AblationRow>& rows) {
    std::string s = axis + "\tmean\tstd";
    for (auto seed : seeds) s += "\tseed" + std::to_string(seed);
    s += "\n";
    for (const auto& r : rows) {
        s += r.value + "\t" + shortest(r.mean) + "\t" + shortest(r.std);
        for (double v : r.per_seed) s += "\t" + shortest(v);
        s += "\n";
    }
    return s;
}

// ---------------------------------------------------------------- dispatch

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Flow-policy distributional soft actor-critic"};
    app.set_version_flag("--version", version());
    app.require_subcommand(1);

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Train an agent; writes a run directory");
    train_args.flags.attach(*train_cmd);
    train_cmd->add_option("--run-dir", train_args.run_dir, "Run directory (default: $FPDRL_RUN_ROOT/<env>-<hash>)");
    train_cmd->add_flag("--resume", train_args.resume, "Continue the run in --run-dir from its latest checkpoint");
    train_cmd->add_flag("--quiet", train_args.quiet, "Do not print eval rows");

    EvalArgs eval_args;
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint with the deterministic policy");
    eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "Checkpoint file")->required();
    eval_cmd->add_option("--env", eval_args.env, "Environment (default: the one it was trained on)");
    eval_cmd->add_option("--episodes", eval_args.episodes, "Episodes")->capture_default_str();
    eval_cmd->add_option("--seed", eval_args.seed, "Seed for episode resets")->capture_default_str();
    eval_cmd->add_option("--threads", eval_args.threads, "Worker threads")->capture_default_str();
    eval_cmd->add_option("--output", eval_args.output, "Also write the record to this file");

    AblateArgs ablate_args;
    auto* ablate_cmd = app.add_subcommand("ablate", "Sweep one axis over shared seeds and tabulate best-last-10% returns");
    ablate_args.flags.attach(*ablate_cmd);
    ablate_cmd->add_option("--axis", ablate_args.axis, "policy | critic | N | K")->required();
    ablate_cmd->add_option("--values", ablate_args.values, "Comma-separated values (default: the axis grid)");
    ablate_cmd->add_option("--seeds", ablate_args.seeds, "Comma-separated seeds")->capture_default_str();
    ablate_cmd->add_option("--jobs", ablate_args.jobs, "Runs in parallel")->capture_default_str();
    ablate_cmd->add_option("--out", ablate_args.out_dir, "Output directory");
    ablate_cmd->add_flag("--quiet", ablate_args.quiet, "Print only the table");

    VerifyArgs verify_args;
    auto* verify_cmd = app.add_subcommand("verify", "Run the oracle suites and print a JSON report");
    verify_cmd->add_option("--suite", verify_args.suites, "Run only these suites");
    verify_cmd->add_option("--output", verify_args.output, "Also write the report to this file");
    verify_cmd->add_flag("--list", verify_args.list, "List suites and exit");
    verify_cmd->add_option("--inject-fault", verify_args.fault)->group("");

    PlotArgs plot_args;
    auto* plot_cmd = app.add_subcommand("plotdata", "Per-step mean and SEM of a metric across runs");
    plot_cmd->add_option("runs", plot_args.runs, "Run directories")->required();
    plot_cmd->add_option("--metric", plot_args.metric, "Metric column")->capture_default_str();
    plot_cmd->add_option("--output", plot_args.output, "Write to this file instead of stdout");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kSuccess;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kSuccess;
    } catch (const CLI::CallForVersion&) {
        out << version() << "\n";
        return kSuccess;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kUsage;
    }

    if (train_cmd->parsed()) return cmd_train(train_args, out, err);
    if (eval_cmd->parsed()) return cmd_eval(eval_args, out, err);
    if (ablate_cmd->parsed()) return cmd_ablate(ablate_args, out, err);
    if (verify_cmd->parsed()) return cmd_verify(verify_args, out, err);
    if (plot_cmd->parsed()) return cmd_plotdata(plot_args, out, err);
    return kUsage;
}

}  // namespace fpdrl::cli
