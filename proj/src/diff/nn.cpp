#include "fpdrl/diff/nn.hpp"

#include <cmath>

namespace fpdrl::nn {

DenseArray he_uniform(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    DenseArray w = DenseArray::matrix(fan_in, fan_out);
    for (auto& v : w.values()) v = rng.uniform(-bound, bound);
    return w;
}

Dense Dense::create(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t out, Rng& rng,
                    bool zero_init) {
    Dense d;
    d.w = params.add(prefix + ".w", zero_init ? DenseArray::matrix(in, out) : he_uniform(in, out, rng));
    d.b = params.add(prefix + ".b", DenseArray::matrix(1, out));
    return d;
}

Var Dense::apply(CompGraph& g, Var x, const Binding& bind) const { return g.linear(x, bind(g, w), bind(g, b)); }

Mlp::Mlp(ParamSet& params, const std::string& prefix, std::size_t in, std::size_t hidden, std::size_t out, Rng& rng,
         bool zero_output)
    : in_(in), out_(out) {
    layers_.push_back(Dense::create(params, prefix + ".l0", in, hidden, rng));
    layers_.push_back(Dense::create(params, prefix + ".l1", hidden, hidden, rng));
    layers_.push_back(Dense::create(params, prefix + ".l2", hidden, out, rng, zero_output));
}

Var Mlp::forward(CompGraph& g, Var x, const Binding& bind) const {
    if (g.value(x).cols() != in_) {
        throw diff::ShapeError("mlp: input has " + std::to_string(g.value(x).cols()) + " features, expected " +
                               std::to_string(in_));
    }
    Var h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
        h = layers_[i].apply(g, h, bind);
        if (i + 1 < layers_.size()) h = g.relu(h);
    }
    return h;
}

}  // namespace fpdrl::nn
