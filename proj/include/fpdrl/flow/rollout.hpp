#pragma once

#include <cstddef>
#include <stdexcept>
#include <vector>

#include "fpdrl/flow/velocity.hpp"
#include "fpdrl/util/rng.hpp"

namespace fpdrl::flow {

enum class TraceMode { None, Exact, Hutchinson };

inline constexpr std::size_t kExactTraceCutoff = 8;

/// log(1 - tanh(x)^2) = 2 (log 2 - |x| - log(1 + exp(-2|x|))), exact for any |x|.
double squash_log_det(double x);
/// Row sums of the above, B x 1.
Var squash_log_det(CompGraph& g, Var pre_squash);

struct RolloutOptions {
    std::size_t steps = 4;
    TraceMode trace = TraceMode::Exact;
    std::size_t probes = 1;
};

/// Graph handles of one batched Euler rollout.
struct RolloutNodes {
    std::vector<Var> points;      // A_{t_0} .. A_{t_K}, each B x d
    std::vector<Var> velocities;  // v(t_i, A_{t_i}, s), i < K
    std::vector<double> times;    // t_0 = 0 .. t_K = 1
    Var log_p0;                   // B x 1, constant
    Var trace_integral;           // B x 1, sum_i dt_i * Tr(dv/dA) (invalid when trace is off)
    Var pre_squash;               // A_1
    Var action;                   // tanh(A_1)
    Var log_prob;                 // B x 1 (invalid when trace is off)
};

/// Thrown when a rollout produces NaN or inf; carries the rollout so far.
class RolloutError : public std::runtime_error {
public:
    RolloutError(const std::string& what, std::vector<DenseArray> points)
        : std::runtime_error(what), points_(std::move(points)) {}
    const std::vector<DenseArray>& points() const { return points_; }

private:
    std::vector<DenseArray> points_;
};

/// log N(a0; 0, I) per row.
DenseArray standard_normal_log_density(const DenseArray& a0);

/// Tr(d velocity / d point) per row, exactly via one tangent pass per action
/// dimension. `point` must be the node that `velocity` was computed from.
Var exact_trace(CompGraph& g, Var point, Var velocity);

/// Hutchinson estimate mean_p eps_p^T (dv/dA) eps_p with Rademacher probes.
Var hutchinson_trace(CompGraph& g, Var point, Var velocity, std::size_t probes, Rng& rng);

/// Euler rollout A_{i+1} = A_i + dt * v(t_i, A_i, s) on the uniform grid
/// t_i = i/K starting from `a0` (B x d), accumulating the left-endpoint trace
/// integral and assembling the tanh-squashed log-probability.
RolloutNodes euler_rollout(CompGraph& g, FieldSession& field, const DenseArray& a0, const RolloutOptions& options,
                           Rng* probe_rng = nullptr);

/// Value-level record of a single (unbatched) rollout.
struct FlowRollout {
    std::vector<double> times;
    std::vector<std::vector<double>> points;
    std::vector<double> step_sizes;
    double trace_integral = 0.0;
    double log_p0 = 0.0;
};

struct PolicySample {
    std::vector<double> pre_squash;
    std::vector<double> action;
    double log_prob = 0.0;
};

/// log p0(A_0) - trace_integral - sum_k log(1 - tanh^2(A_1k) + eps).
double log_prob(const FlowRollout& rollout);

/// Extracts row `row` of a batched rollout.
FlowRollout extract_rollout(const CompGraph& g, const RolloutNodes& nodes, std::size_t row);

}  // namespace fpdrl::flow
