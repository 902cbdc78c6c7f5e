#include "fpdrl/flow/policy.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace fpdrl::flow {

namespace {

DenseArray row_of(std::span<const double> v) { return DenseArray::row(std::vector<double>(v.begin(), v.end())); }

DenseArray repeat_rows(std::span<const double> v, std::size_t rows) {
    DenseArray out = DenseArray::matrix(rows, v.size());
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t j = 0; j < v.size(); ++j) out.at(r, j) = v[j];
    }
    return out;
}

std::vector<double> first_row(const DenseArray& a) { return {a.data(), a.data() + a.cols()}; }

}  // namespace

std::string to_string(PolicyKind kind) { return kind == PolicyKind::Flow ? "flow" : "gaussian"; }

PolicyKind parse_policy_kind(const std::string& text) {
    if (text == "flow") return PolicyKind::Flow;
    if (text == "gaussian") return PolicyKind::Gaussian;
    throw std::invalid_argument("unknown policy kind '" + text + "' (expected flow|gaussian)");
}

DenseArray standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
    DenseArray a = DenseArray::matrix(rows, cols);
    for (auto& v : a.values()) v = rng.normal();
    return a;
}

std::vector<double> Policy::act(std::span<const double> state, Rng& noise) const {
    CompGraph g;
    Rng unused(0);
    const PolicyBatch b = sample(g, g.constant(row_of(state)), false, false, noise, unused);
    return first_row(g.value(b.action));
}

std::vector<double> Policy::act_deterministic(std::span<const double> state) const {
    CompGraph g;
    const PolicyBatch b = deterministic(g, g.constant(row_of(state)));
    return first_row(g.value(b.action));
}

// ---------------------------------------------------------------- flow

FlowPolicy::FlowPolicy(const VelocityNetConfig& config, TraceMode trace, std::size_t probes, Rng& init_rng)
    : net_(params_, config, init_rng), trace_(trace), probes_(probes) {
    if (trace_ == TraceMode::None) throw std::invalid_argument("flow policy needs a trace mode");
    if (probes_ == 0) throw std::invalid_argument("hutchinson probes must be >= 1");
}

RolloutNodes FlowPolicy::rollout(CompGraph& g, Var states, const DenseArray& a0, bool trainable, TraceMode trace,
                                 Rng* probe) const {
    const auto bind = trainable ? nn::Binding::trainable(const_cast<ParamSet&>(params_)) : nn::Binding::frozen(params_);
    auto session = net_.begin(g, states, bind);
    RolloutOptions opt;
    opt.steps = net_.config().flow_steps;
    opt.trace = trace;
    opt.probes = probes_;
    return euler_rollout(g, *session, a0, opt, probe);
}

PolicyBatch FlowPolicy::sample(CompGraph& g, Var states, bool trainable, bool with_log_prob, Rng& noise,
                               Rng& probe) const {
    const DenseArray a0 = standard_normal(g.value(states).rows(), action_dim(), noise);
    const RolloutNodes r = rollout(g, states, a0, trainable, with_log_prob ? trace_ : TraceMode::None, &probe);
    return PolicyBatch{r.action, r.pre_squash, r.log_prob};
}

PolicyBatch FlowPolicy::deterministic(CompGraph& g, Var states) const {
    const DenseArray a0 = DenseArray::matrix(g.value(states).rows(), action_dim(), 0.0);
    const RolloutNodes r = rollout(g, states, a0, false, TraceMode::None, nullptr);
    return PolicyBatch{r.action, r.pre_squash, Var{}};
}

std::pair<PolicySample, FlowRollout> FlowPolicy::sample_action(std::span<const double> state, Rng& noise,
                                                               Rng& probe) const {
    CompGraph g;
    const DenseArray a0 = standard_normal(1, action_dim(), noise);
    const RolloutNodes r = rollout(g, g.constant(row_of(state)), a0, false, trace_, &probe);
    PolicySample s;
    s.pre_squash = first_row(g.value(r.pre_squash));
    s.action = first_row(g.value(r.action));
    s.log_prob = g.value(r.log_prob).item();
    return {std::move(s), extract_rollout(g, r, 0)};
}

namespace {

// Pushes history[0 .. n-2] and returns (point, velocity) for the last entry.
std::pair<Var, Var> field_at_last(CompGraph& g, FieldSession& session, double t,
                                  const std::vector<std::vector<double>>& history, std::size_t rows, std::size_t K) {
    if (history.empty()) throw std::invalid_argument("velocity: history must be non-empty");
    if (history.size() > K) throw std::invalid_argument("velocity: history longer than the flow grid");
    const double expected = static_cast<double>(history.size() - 1) / static_cast<double>(K);
    if (std::fabs(t - expected) > 1e-12) {
        throw std::invalid_argument("velocity: t = " + std::to_string(t) + " is not the grid time " +
                                    std::to_string(expected) + " of the newest history point");
    }
    Var point, v;
    for (std::size_t i = 0; i < history.size(); ++i) {
        point = g.constant(repeat_rows(history[i], rows));
        v = session.push(point, static_cast<double>(i) / static_cast<double>(K));
    }
    return {point, v};
}

}  // namespace

std::vector<double> FlowPolicy::velocity(double t, const History& history, std::span<const double> state) const {
    CompGraph g;
    auto session = net_.begin(g, g.constant(row_of(state)), nn::Binding::frozen(params_));
    const auto [point, v] = field_at_last(g, *session, t, history, 1, net_.config().flow_steps);
    return first_row(g.value(v));
}

double FlowPolicy::exact_trace(double t, const History& history, std::span<const double> state) const {
    CompGraph g;
    auto session = net_.begin(g, g.constant(row_of(state)), nn::Binding::frozen(params_));
    const auto [point, v] = field_at_last(g, *session, t, history, 1, net_.config().flow_steps);
    return g.value(flow::exact_trace(g, point, v)).item();
}

double FlowPolicy::hutchinson_trace(double t, const History& history, std::span<const double> state,
                                    std::size_t probes, Rng& rng) const {
    if (probes == 0) throw std::invalid_argument("hutchinson_trace: probes must be >= 1");
    // One probe per row of a replicated batch.
    CompGraph g;
    auto session = net_.begin(g, g.constant(repeat_rows(state, probes)), nn::Binding::frozen(params_));
    const auto [point, v] = field_at_last(g, *session, t, history, probes, net_.config().flow_steps);
    const DenseArray per_row = g.value(flow::hutchinson_trace(g, point, v, 1, rng));
    double s = 0.0;
    for (double x : per_row.values()) s += x;
    return s / static_cast<double>(probes);
}

// ---------------------------------------------------------------- gaussian

GaussianPolicy::GaussianPolicy(std::size_t state_dim, std::size_t action_dim, std::size_t hidden, Rng& init_rng)
    : net_(params_, "gauss", state_dim, hidden, 2 * action_dim, init_rng, /*zero_output=*/true),
      state_dim_(state_dim),
      action_dim_(action_dim),
      hidden_(hidden) {}

std::pair<Var, Var> GaussianPolicy::mean_and_log_std(CompGraph& g, Var states, bool trainable) const {
    const auto bind = trainable ? nn::Binding::trainable(const_cast<ParamSet&>(params_)) : nn::Binding::frozen(params_);
    const Var out = net_.forward(g, states, bind);
    const std::size_t rows = g.value(states).rows();
    const Var mean = g.slice_cols(out, 0, action_dim_);
    const Var raw = g.slice_cols(out, action_dim_, 2 * action_dim_);
    const Var upper = g.minimum(raw, g.filled(rows, action_dim_, kLogStdMax));
    const Var log_std = g.neg(g.minimum(g.neg(upper), g.filled(rows, action_dim_, -kLogStdMin)));
    return {mean, log_std};
}

PolicyBatch GaussianPolicy::sample_with_noise(CompGraph& g, Var states, const DenseArray& noise, bool trainable,
                                              bool with_log_prob) const {
    const auto [mean, log_std] = mean_and_log_std(g, states, trainable);
    const Var eps = g.constant(noise);
    const Var pre = g.add(mean, g.mul(g.exp(log_std), eps));
    const Var action = g.tanh(pre);
    Var logp{};
    if (with_log_prob) {
        // log N(u; mu, sigma) = -eps^2/2 - log sigma - log(2 pi)/2, summed over dims.
        const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
        const Var gauss = g.neg(g.add(g.sum_last(g.scale(g.square(eps), 0.5)),
                                      g.offset(g.sum_last(log_std), half_log_2pi * static_cast<double>(action_dim_))));
        const Var squash = squash_log_det(g, pre);
        logp = g.sub(gauss, squash);
    }
    return PolicyBatch{action, pre, logp};
}

PolicyBatch GaussianPolicy::sample(CompGraph& g, Var states, bool trainable, bool with_log_prob, Rng& noise,
                                   Rng& /*probe*/) const {
    const DenseArray eps = standard_normal(g.value(states).rows(), action_dim_, noise);
    return sample_with_noise(g, states, eps, trainable, with_log_prob);
}

PolicyBatch GaussianPolicy::deterministic(CompGraph& g, Var states) const {
    const auto [mean, log_std] = mean_and_log_std(g, states, false);
    return PolicyBatch{g.tanh(mean), mean, Var{}};
}

}  // namespace fpdrl::flow
