#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "fpdrl/diff/graph.hpp"
#include "fpdrl/diff/params.hpp"
#include "fpdrl/util/rng.hpp"

namespace fpdrl::nn {

using diff::CompGraph;
using diff::DenseArray;
using diff::ParamSet;
using diff::Var;

/// How a network's parameters enter a graph: as trainable leaves, or as
/// constants (gradient-stopped; the set receives no gradient).
class Binding {
public:
    static Binding trainable(ParamSet& params) { return Binding(params, true); }
    static Binding frozen(const ParamSet& params) { return Binding(const_cast<ParamSet&>(params), false); }

    Var operator()(CompGraph& g, std::size_t index) const {
        return trainable_ ? g.param(*params_, index) : g.constant_ref(params_->value(index));
    }
    const ParamSet& params() const { return *params_; }
    bool is_trainable() const { return trainable_; }

private:
    Binding(ParamSet& p, bool t) : params_(&p), trainable_(t) {}
    ParamSet* params_;
    bool trainable_;
};

/// He-uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)).
DenseArray he_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng);

/// Dense layer parameters registered in a ParamSet as "<prefix>.w" / "<prefix>.b".
struct Dense {
    std::size_t w = 0;
    std::size_t b = 0;

    static Dense create(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                        bool zero_init = false);
    Var apply(CompGraph& g, Var x, const Binding& bind) const;
};

/// Three-layer ReLU MLP: in -> hidden -> hidden -> out.
class Mlp {
public:
    Mlp() = default;
    Mlp(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng,
        bool zero_output);

    Var forward(CompGraph& g, Var x, const Binding& bind) const;
    std::size_t in_dim() const { return in_; }
    std::size_t out_dim() const { return out_; }

private:
    std::vector<Dense> layers_;
    std::size_t in_ = 0;
    std::size_t out_ = 0;
};

}  // namespace fpdrl::nn
