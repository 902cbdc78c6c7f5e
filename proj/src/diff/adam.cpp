#include "fpdrl/diff/adam.hpp"

#include <cmath>

namespace fpdrl::diff {

AdamState AdamState::for_params(const ParamSet& params, double lr) {
    AdamState s;
    s.lr = lr;
    for (const auto& e : params) {
        s.m.emplace_back(e.value.shape(), 0.0);
        s.v.emplace_back(e.value.shape(), 0.0);
    }
    return s;
}

void adam_step(ParamSet& params, AdamState& state) {
    if (state.m.size() != params.size() || state.v.size() != params.size()) {
        throw std::invalid_argument("adam state does not match parameter set");
    }
    for (const auto& e : params) {
        if (!e.grad.all_finite()) throw NonFiniteError("non-finite gradient in parameter '" + e.name + "'");
    }
    state.t += 1;
    const double t = static_cast<double>(state.t);
    const double c1 = 1.0 - std::pow(state.beta1, t);
    const double c2 = 1.0 - std::pow(state.beta2, t);
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& e = params[k];
        DenseArray& m = state.m[k];
        DenseArray& v = state.v[k];
        for (std::size_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad[i];
            m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
            v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            e.value[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
        }
    }
}

}  // namespace fpdrl::diff
