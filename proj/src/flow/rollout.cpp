#include "fpdrl/flow/rollout.hpp"

#include <cmath>
#include <numbers>

namespace fpdrl::flow {

namespace {

const double kHalfLog2Pi = 0.5 * std::log(2.0 * std::numbers::pi);

void check_finite(const CompGraph& g, const RolloutNodes& r, Var latest, const char* what) {
    if (g.value(latest).all_finite()) return;
    std::vector<DenseArray> pts;
    for (Var p : r.points) pts.push_back(g.value(p));
    throw RolloutError(std::string("non-finite ") + what + " in flow rollout at step " +
                           std::to_string(r.points.size() - 1),
                       std::move(pts));
}

}  // namespace

DenseArray standard_normal_log_density(const DenseArray& a0) {
    DenseArray out = DenseArray::matrix(a0.rows(), 1);
    const std::size_t d = a0.cols();
    for (std::size_t r = 0; r < a0.rows(); ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += a0.at(r, j) * a0.at(r, j);
        out[r] = -0.5 * s - static_cast<double>(d) * kHalfLog2Pi;
    }
    return out;
}

Var exact_trace(CompGraph& g, Var point, Var velocity) {
    const std::size_t d = g.value(point).cols();
    Var total{};
    for (std::size_t j = 0; j < d; ++j) {
        const Var diag = g.slice_cols(g.jacobian_column(velocity, point, j), j, j + 1);
        total = total.valid() ? g.add(total, diag) : diag;
    }
    return total;
}

Var hutchinson_trace(CompGraph& g, Var point, Var velocity, std::size_t probes, Rng& rng) {
    if (probes == 0) throw std::invalid_argument("hutchinson_trace: probes must be >= 1");
    const DenseArray& p = g.value(point);
    Var total{};
    for (std::size_t k = 0; k < probes; ++k) {
        DenseArray eps(p.shape());
        for (auto& e : eps.values()) e = rng.rademacher();
        const Var ve = g.constant(std::move(eps));
        const Var quad = g.sum_last(g.mul(ve, g.jvp(point, ve, velocity)));
        total = total.valid() ? g.add(total, quad) : quad;
    }
    return probes == 1 ? total : g.scale(total, 1.0 / static_cast<double>(probes));
}

RolloutNodes euler_rollout(CompGraph& g, FieldSession& field, const DenseArray& a0, const RolloutOptions& options,
                           Rng* probe_rng) {
    if (options.steps == 0) throw std::invalid_argument("euler_rollout: steps must be >= 1");
    if (options.trace == TraceMode::Hutchinson && probe_rng == nullptr) {
        throw std::invalid_argument("euler_rollout: Hutchinson trace needs a probe rng");
    }
    RolloutNodes r;
    const std::size_t K = options.steps;
    for (std::size_t i = 0; i <= K; ++i) r.times.push_back(static_cast<double>(i) / static_cast<double>(K));
    r.log_p0 = g.constant(standard_normal_log_density(a0));
    r.points.push_back(g.constant(a0));

    for (std::size_t i = 0; i < K; ++i) {
        const double dt = r.times[i + 1] - r.times[i];
        const Var point = r.points.back();
        const Var v = field.push(point, r.times[i]);
        r.velocities.push_back(v);
        if (options.trace != TraceMode::None) {
            const Var tr = options.trace == TraceMode::Exact
                               ? exact_trace(g, point, v)
                               : hutchinson_trace(g, point, v, options.probes, *probe_rng);
            const Var piece = g.scale(tr, dt);
            r.trace_integral = r.trace_integral.valid() ? g.add(r.trace_integral, piece) : piece;
        }
        r.points.push_back(g.add(point, g.scale(v, dt)));
        check_finite(g, r, r.points.back(), "point");
    }

    r.pre_squash = r.points.back();
    r.action = g.tanh(r.pre_squash);
    if (options.trace != TraceMode::None) {
        const Var squash = squash_log_det(g, r.pre_squash);
        r.log_prob = g.sub(g.sub(r.log_p0, r.trace_integral), squash);
        check_finite(g, r, r.log_prob, "log-probability");
    }
    return r;
}

double squash_log_det(double x) {
    const double ax = std::abs(x);
    return 2.0 * (std::numbers::ln2 - ax - std::log1p(std::exp(-2.0 * ax)));
}

Var squash_log_det(CompGraph& g, Var pre_squash) {
    const Var ax = g.abs(pre_squash);
    const Var soft = g.log(g.offset(g.exp(g.scale(ax, -2.0)), 1.0));
    return g.scale(g.sum_last(g.offset(g.neg(g.add(ax, soft)), std::numbers::ln2)), 2.0);
}

double log_prob(const FlowRollout& rollout) {
    double squash = 0.0;
    for (double x : rollout.points.back()) squash += squash_log_det(x);
    return rollout.log_p0 - rollout.trace_integral - squash;
}

FlowRollout extract_rollout(const CompGraph& g, const RolloutNodes& nodes, std::size_t row) {
    FlowRollout out;
    out.times = nodes.times;
    for (Var p : nodes.points) {
        const DenseArray& v = g.value(p);
        out.points.emplace_back(v.data() + row * v.cols(), v.data() + (row + 1) * v.cols());
    }
    for (std::size_t i = 0; i + 1 < out.times.size(); ++i) out.step_sizes.push_back(out.times[i + 1] - out.times[i]);
    out.log_p0 = g.value(nodes.log_p0)[row];
    out.trace_integral = nodes.trace_integral.valid() ? g.value(nodes.trace_integral)[row] : 0.0;
    return out;
}

}  // namespace fpdrl::flow
