#include "fpdrl/train/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>

#include "fpdrl/envs/env.hpp"

namespace fpdrl::train {

namespace {

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size() || !std::isfinite(v)) {
        throw ConfigError(key, key + ": expected a number, got '" + text + "'");
    }
    return v;
}

std::uint64_t parse_uint(const std::string& key, const std::string& text) {
    std::uint64_t v = 0;
    const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
    if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
        throw ConfigError(key, key + ": expected a non-negative integer, got '" + text + "'");
    }
    return v;
}

std::string trace_name(TraceChoice t) {
    switch (t) {
        case TraceChoice::Auto: return "auto";
        case TraceChoice::Exact: return "exact";
        case TraceChoice::Hutchinson: return "hutchinson";
    }
    return "auto";
}

struct Field {
    std::function<std::string(const TrainConfig&)> get;
    std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename T>
Field uint_field(T TrainConfig::*member) {
    return {[member](const TrainConfig& c) { return std::to_string(c.*member); },
            [member](TrainConfig& c, const std::string& v) { c.*member = static_cast<T>(parse_uint("", v)); }};
}

Field double_field(double TrainConfig::*member) {
    return {[member](const TrainConfig& c) { return format_double(c.*member); },
            [member](TrainConfig& c, const std::string& v) { c.*member = parse_double("", v); }};
}

const std::map<std::string, Field>& fields() {
    static const std::map<std::string, Field> table = {
        {"env", {[](const TrainConfig& c) { return c.env; }, [](TrainConfig& c, const std::string& v) { c.env = v; }}},
        {"steps", uint_field(&TrainConfig::steps)},
        {"seed", uint_field(&TrainConfig::seed)},
        {"gamma", double_field(&TrainConfig::gamma)},
        {"kappa", double_field(&TrainConfig::kappa)},
        {"quantiles", uint_field(&TrainConfig::quantiles)},
        {"flow_steps", uint_field(&TrainConfig::flow_steps)},
        {"alpha_init", double_field(&TrainConfig::alpha_init)},
        {"target_entropy",
         {[](const TrainConfig& c) { return c.target_entropy ? format_double(*c.target_entropy) : std::string("auto"); },
          [](TrainConfig& c, const std::string& v) {
              if (v == "auto") {
                  c.target_entropy.reset();
              } else {
                  c.target_entropy = parse_double("", v);
              }
          }}},
        {"lr_actor", double_field(&TrainConfig::lr_actor)},
        {"lr_critic", double_field(&TrainConfig::lr_critic)},
        {"lr_alpha", double_field(&TrainConfig::lr_alpha)},
        {"batch", uint_field(&TrainConfig::batch)},
        {"buffer", uint_field(&TrainConfig::buffer)},
        {"warmup", uint_field(&TrainConfig::warmup)},
        {"ema", double_field(&TrainConfig::ema)},
        {"eval_interval", uint_field(&TrainConfig::eval_interval)},
        {"eval_episodes", uint_field(&TrainConfig::eval_episodes)},
        {"checkpoint_interval", uint_field(&TrainConfig::checkpoint_interval)},
        {"policy",
         {[](const TrainConfig& c) { return flow::to_string(c.policy); },
          [](TrainConfig& c, const std::string& v) { c.policy = flow::parse_policy_kind(v); }}},
        {"critic",
         {[](const TrainConfig& c) { return critic::to_string(c.critic); },
          [](TrainConfig& c, const std::string& v) { c.critic = critic::parse_critic_kind(v); }}},
        {"trace",
         {[](const TrainConfig& c) { return trace_name(c.trace); },
          [](TrainConfig& c, const std::string& v) {
              if (v == "auto") c.trace = TraceChoice::Auto;
              else if (v == "exact") c.trace = TraceChoice::Exact;
              else if (v == "hutchinson") c.trace = TraceChoice::Hutchinson;
              else throw std::invalid_argument("expected auto|exact|hutchinson, got '" + v + "'");
          }}},
        {"probes", uint_field(&TrainConfig::probes)},
        {"critics",
         {[](const TrainConfig& c) { return std::string(c.twin ? "twin" : "single"); },
          [](TrainConfig& c, const std::string& v) {
              if (v == "twin") c.twin = true;
              else if (v == "single") c.twin = false;
              else throw std::invalid_argument("expected twin|single, got '" + v + "'");
          }}},
        {"d_model", uint_field(&TrainConfig::d_model)},
        {"heads", uint_field(&TrainConfig::heads)},
        {"layers", uint_field(&TrainConfig::layers)},
        {"critic_hidden", uint_field(&TrainConfig::critic_hidden)},
        {"gaussian_hidden", uint_field(&TrainConfig::gaussian_hidden)},
        {"eval_threads", uint_field(&TrainConfig::eval_threads)},
    };
    return table;
}

const Field& field(const std::string& key) {
    const auto& f = fields();
    const auto it = f.find(key);
    if (it == f.end()) throw ConfigError(key, "unknown config key '" + key + "'");
    return it->second;
}

void require(bool ok, const std::string& key, const std::string& message) {
    if (!ok) throw ConfigError(key, message);
}

}  // namespace

void TrainConfig::set(const std::string& key, const std::string& value) {
    const Field& f = field(key);
    try {
        f.set(*this, value);
    } catch (const ConfigError&) {
        throw ConfigError(key, key + ": invalid value '" + value + "'");
    } catch (const std::invalid_argument& e) {
        throw ConfigError(key, key + ": " + e.what());
    }
}

std::string TrainConfig::get(const std::string& key) const { return field(key).get(*this); }

std::vector<std::string> TrainConfig::keys() {
    std::vector<std::string> out;
    for (const auto& [k, f] : fields()) out.push_back(k);
    return out;
}

void TrainConfig::validate() const {
    try {
        envs::make_env(env);
    } catch (const std::exception& e) {
        throw ConfigError("env", e.what());
    }
    require(gamma > 0.0 && gamma < 1.0, "gamma", "gamma must lie in (0,1)");
    require(kappa > 0.0, "kappa", "kappa must be > 0");
    require(quantiles >= 1, "quantiles", "quantiles must be >= 1");
    require(flow_steps >= 1, "flow_steps", "flow_steps must be >= 1");
    require(alpha_init > 0.0, "alpha_init", "alpha_init must be > 0");
    require(lr_actor > 0.0, "lr_actor", "lr_actor must be > 0");
    require(lr_critic > 0.0, "lr_critic", "lr_critic must be > 0");
    require(lr_alpha > 0.0, "lr_alpha", "lr_alpha must be > 0");
    require(batch >= 1, "batch", "batch must be >= 1");
    require(buffer >= 1, "buffer", "buffer must be >= 1");
    require(batch <= buffer, "batch", "batch must not exceed the buffer capacity");
    require(ema >= 0.0 && ema <= 1.0, "ema", "ema must lie in [0,1]");
    require(steps >= 1, "steps", "steps must be >= 1");
    require(eval_interval >= 1, "eval_interval", "eval_interval must be >= 1");
    require(eval_episodes >= 1, "eval_episodes", "eval_episodes must be >= 1");
    require(checkpoint_interval % eval_interval == 0, "checkpoint_interval",
            "checkpoint_interval must be a multiple of eval_interval");
    require(probes >= 1, "probes", "probes must be >= 1");
    require(d_model >= 1 && heads >= 1 && d_model % heads == 0, "heads", "d_model must be divisible by heads");
    require(layers >= 1, "layers", "layers must be >= 1");
    require(critic_hidden >= 1, "critic_hidden", "critic_hidden must be >= 1");
    require(gaussian_hidden >= 1, "gaussian_hidden", "gaussian_hidden must be >= 1");
    require(eval_threads >= 1, "eval_threads", "eval_threads must be >= 1");
}

std::string TrainConfig::canonical_text() const {
    std::string out;
    for (const auto& [k, f] : fields()) out += k + "=" + f.get(*this) + "\n";
    return out;
}

std::string TrainConfig::hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : canonical_text()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

double TrainConfig::resolved_target_entropy(std::size_t action_dim) const {
    return target_entropy ? *target_entropy : -static_cast<double>(action_dim);
}

flow::TraceMode TrainConfig::resolved_trace(std::size_t action_dim) const {
    switch (trace) {
        case TraceChoice::Exact: return flow::TraceMode::Exact;
        case TraceChoice::Hutchinson: return flow::TraceMode::Hutchinson;
        case TraceChoice::Auto: break;
    }
    return action_dim <= flow::kExactTraceCutoff ? flow::TraceMode::Exact : flow::TraceMode::Hutchinson;
}

TrainConfig TrainConfig::parse(const std::string& text) {
    TrainConfig c;
    std::istringstream in(text);
    std::string line;
    int number = 0;
    auto trim = [](std::string s) {
        const auto b = s.find_first_not_of(" \t\r");
        if (b == std::string::npos) return std::string();
        const auto e = s.find_last_not_of(" \t\r");
        return s.substr(b, e - b + 1);
    };
    while (std::getline(in, line)) {
        ++number;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.resize(hash_pos);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("", "line " + std::to_string(number) + ": expected key = value");
        }
        c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    }
    return c;
}

}  // namespace fpdrl::train
