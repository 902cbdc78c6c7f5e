#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "fpdrl/diff/graph.hpp"
#include "fpdrl/diff/nn.hpp"

namespace fpdrl::flow {

using diff::CompGraph;
using diff::DenseArray;
using diff::ParamSet;
using diff::Var;

/// Velocity evaluation along one rollout. Each push() appends the newest
/// flow point (with its time) to the causal history and returns the
/// velocity at that point, shaped like the point.
class FieldSession {
public:
    virtual ~FieldSession() = default;
    virtual Var push(Var point, double t) = 0;
};

/// History-free field given by a graph-building function of (point, t).
/// Used for analytic test fields.
class FunctionField final : public FieldSession {
public:
    using Fn = std::function<Var(CompGraph&, Var point, double t)>;
    FunctionField(CompGraph& g, Fn fn) : g_(g), fn_(std::move(fn)) {}
    Var push(Var point, double t) override { return fn_(g_, point, t); }

private:
    CompGraph& g_;
    Fn fn_;
};

struct VelocityNetConfig {
    std::size_t action_dim = 1;
    std::size_t state_dim = 1;
    std::size_t d_model = 64;
    std::size_t heads = 4;
    std::size_t layers = 2;
    std::size_t flow_steps = 4;  // K: Euler steps, and the number of point tokens
    std::size_t ffn_dim = 0;     // 0 -> 2 * d_model
    std::size_t time_frequencies = 16;

    /// Throws std::invalid_argument on inconsistent settings.
    void validate() const;
    std::size_t ffn() const { return ffn_dim == 0 ? 2 * d_model : ffn_dim; }
};

/// Sinusoidal features [sin(w_k t), cos(w_k t)] with w_k geometric in [1, 1000].
DenseArray time_embedding(double t, std::size_t frequencies);

/// Causal transformer velocity field v(t, A_t, s).
///
/// Tokens are [state] followed by one token per flow point (A_{t_j}, t_j);
/// the velocity is read from the newest token through a zero-initialized
/// linear head. Since attention is causal, a token's activations never depend
/// on later tokens, so a session keeps per-layer keys/values and processes each
/// new point once.
class TransformerVelocity {
public:
    TransformerVelocity() = default;
    TransformerVelocity(ParamSet& params, const VelocityNetConfig& config, Rng& init_rng);

    const VelocityNetConfig& config() const { return config_; }

    /// Starts a rollout for a batch of states (B x state_dim).
    std::unique_ptr<FieldSession> begin(CompGraph& g, Var states, nn::Binding bind) const;

private:
    friend class TransformerSession;

    struct Layer {
        std::size_t wq, wk, wv;
        nn::Dense out;
        nn::Dense ffn1;
        nn::Dense ffn2;
    };

    VelocityNetConfig config_;
    nn::Dense state_embed_;
    std::size_t point_w_ = 0;
    std::size_t time_w_ = 0;
    std::size_t point_b_ = 0;
    std::vector<Layer> layers_;
    nn::Dense head_;
};

}  // namespace fpdrl::flow
