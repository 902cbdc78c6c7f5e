#include "fpdrl/oracles/flow_suite.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "fpdrl/flow/policy.hpp"
#include "fpdrl/flow/rollout.hpp"
#include "fpdrl/oracles/finite_diff.hpp"
#include "fpdrl/util/rng.hpp"

namespace fpdrl::oracles {

using flow::FunctionField;
using flow::RolloutOptions;
using flow::TraceMode;

namespace {

double log_normal_pdf(double x) { return -0.5 * x * x - 0.5 * std::log(2.0 * std::numbers::pi); }

DenseArray single_row(const std::vector<double>& v) { return DenseArray::row(v); }

}  // namespace

std::vector<double> random_jacobian(std::size_t d, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> j(d * d);
    for (std::size_t r = 0; r < d; ++r) {
        for (std::size_t c = 0; c < d; ++c) j[r * d + c] = r == c ? rng.uniform(1.0, 2.0) : rng.uniform(-0.5, 0.5);
    }
    return j;
}

std::vector<Check> flow_logprob_gradient_checks(int seeds, double tolerance) {
    double worst = 0.0;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(derive_seed(static_cast<std::uint64_t>(s), Stream::Init, 0xF10));
        flow::VelocityNetConfig cfg;
        cfg.action_dim = 2;
        cfg.state_dim = 3;
        cfg.d_model = 8;
        cfg.heads = 2;
        cfg.layers = 1;
        cfg.flow_steps = 2;
        cfg.time_frequencies = 4;
        flow::FlowPolicy policy(cfg, TraceMode::Exact, 1, rng);
        // Give the zero-initialized head weight so every parameter is live.
        auto& head = policy.params().value(policy.params().index_of("head.w"));
        for (auto& v : head.values()) v = rng.uniform(-0.5, 0.5);

        DenseArray states = DenseArray::matrix(2, 3);
        for (auto& v : states.values()) v = rng.uniform(-1.0, 1.0);
        const DenseArray a0 = flow::standard_normal(2, 2, rng);
        const ParamLoss loss = [&](CompGraph& g, bool trainable) {
            const auto r = policy.rollout(g, g.constant(states), a0, trainable, TraceMode::Exact, nullptr);
            return g.sum(r.log_prob);
        };
        worst = std::max(worst, max_param_gradient_error(policy.params(), loss, 1e-5, 1e-4));
    }
    return {make_check("flow/logprob-gradient", worst, tolerance)};
}

std::vector<Check> flow_logprob_oracle_checks(std::uint64_t seed) {
    Rng rng(seed);
    std::vector<Check> out;

    // Zero field: log N(A0) - sum log(1 - tanh^2(A0)), dims 1..3, K in {1, 4, 9}.
    double worst_zero = 0.0;
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t d = 1 + static_cast<std::size_t>(trial % 3);
        std::vector<double> a0(d);
        for (auto& x : a0) x = trial == 0 ? 0.0 : rng.normal();
        double expected = 0.0;
        for (double x : a0) {
            const double a = std::tanh(x);
            expected += log_normal_pdf(x) - std::log(1.0 - a * a);
        }
        CompGraph g;
        FunctionField zero(g, [](CompGraph& gg, Var p, double) { return gg.scale(p, 0.0); });
        RolloutOptions opt;
        opt.steps = 1 + 4 * static_cast<std::size_t>(trial % 3);
        const auto r = flow::euler_rollout(g, zero, single_row(a0), opt);
        worst_zero = std::max(worst_zero, std::fabs(g.value(r.log_prob).item() - expected));
    }
    out.push_back(make_check("flow/zero-field-logprob", worst_zero, 1e-12));

    // Constant field: trace contribution must be exactly zero.
    double worst_trace = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const std::vector<double> c = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0)};
        CompGraph g;
        FunctionField field(g, [&](CompGraph& gg, Var p, double) {
            return gg.add(gg.scale(p, 0.0), gg.constant(single_row(c)));
        });
        RolloutOptions opt;
        opt.steps = 1 + static_cast<std::size_t>(trial);
        const auto r = flow::euler_rollout(g, field, single_row({rng.normal(), rng.normal()}), opt);
        worst_trace = std::max(worst_trace, std::fabs(g.value(r.trace_integral).item()));
    }
    out.push_back(make_check("flow/constant-field-trace", worst_trace, 0.0));

    // v = -z, d = 1, K = 100: pre-squash log-density = log p0(A0) + 1.
    double worst_linear = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const double x0 = trial == 0 ? 1.0 : rng.normal();
        CompGraph g;
        FunctionField field(g, [](CompGraph& gg, Var p, double) { return gg.neg(p); });
        RolloutOptions opt;
        opt.steps = 100;
        const auto r = flow::euler_rollout(g, field, single_row({x0}), opt);
        const double pre = g.value(r.log_p0).item() - g.value(r.trace_integral).item();
        worst_linear = std::max(worst_linear, std::fabs(pre - (log_normal_pdf(x0) + 1.0)));
    }
    out.push_back(make_check("flow/linear-field-shift", worst_linear, 0.02));
    return out;
}

std::vector<Check> hutchinson_checks(std::uint64_t seed, int matrices) {
    constexpr std::size_t d = 8;
    Rng probe_rng(derive_seed(seed, Stream::Hutchinson, 0));

    // Mean of per-row single-probe estimates, i.e. one P-probe estimate.
    auto estimate = [&](const DenseArray& m, std::size_t probes) {
        CompGraph g;
        const Var point = g.constant(DenseArray::matrix(probes, d, 0.25));
        const Var v = g.matmul(point, g.constant_ref(m));
        const DenseArray per = g.value(flow::hutchinson_trace(g, point, v, 1, probe_rng));
        double s = 0.0;
        for (double x : per.values()) s += x;
        return s / static_cast<double>(probes);
    };

    const std::vector<std::size_t> counts = {10, 100, 1000, 10000};
    constexpr int kRepeats = 10;
    std::vector<double> sq_err(counts.size(), 0.0);
    double worst_rel = 0.0;
    for (int k = 0; k < matrices; ++k) {
        const auto jv = random_jacobian(d, derive_seed(seed, Stream::Init, static_cast<std::uint64_t>(k)));
        DenseArray m = DenseArray::matrix(d, d);
        for (std::size_t i = 0; i < d * d; ++i) m[i] = jv[i];
        double exact = 0.0;
        {
            CompGraph g;
            const Var point = g.constant(DenseArray::matrix(1, d, 0.25));
            exact = g.value(flow::exact_trace(g, point, g.matmul(point, g.constant_ref(m)))).item();
        }
        worst_rel = std::max(worst_rel, std::fabs(estimate(m, 10000) - exact) / std::fabs(exact));
        for (std::size_t c = 0; c < counts.size(); ++c) {
            for (int r = 0; r < kRepeats; ++r) {
                const double e = estimate(m, counts[c]) - exact;
                sq_err[c] += e * e;
            }
        }
    }

    // Least-squares slope of log RMS error against log probe count.
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    const double n = static_cast<double>(counts.size());
    for (std::size_t c = 0; c < counts.size(); ++c) {
        const double x = std::log(static_cast<double>(counts[c]));
        const double y = 0.5 * std::log(sq_err[c] / (matrices * kRepeats));
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    return {make_check("hutchinson/relative-error-1e4", worst_rel, 0.01),
            make_check("hutchinson/loglog-slope", std::fabs(slope + 0.5), 0.1, "slope " + std::to_string(slope))};
}

}  // namespace fpdrl::oracles
