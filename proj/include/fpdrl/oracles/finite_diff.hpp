#pragma once

// Central finite-difference oracle.
// It only evaluates forward values, so it stays independent of the
// reverse- and forward-mode code paths it checks.

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "fpdrl/diff/graph.hpp"
#include "fpdrl/diff/params.hpp"

namespace fpdrl::oracles {

using diff::CompGraph;
using diff::DenseArray;
using diff::Var;

using ScalarBuilder = std::function<Var(CompGraph&, const std::vector<Var>&)>;

inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), floor});
    return std::fabs(analytic - numeric) / denom;
}

inline double evaluate(const ScalarBuilder& f, const std::vector<DenseArray>& inputs) {
    CompGraph g;
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(g.input(x, false));
    return g.value(f(g, vars)).item();
}

/// Numeric gradient of a scalar builder w.r.t. every input element.
inline std::vector<DenseArray> numeric_gradients(const ScalarBuilder& f, std::vector<DenseArray> inputs,
                                                 double h = 1e-5) {
    std::vector<DenseArray> grads;
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        DenseArray gk(inputs[k].shape(), 0.0);
        for (std::size_t i = 0; i < inputs[k].size(); ++i) {
            const double orig = inputs[k][i];
            inputs[k][i] = orig + h;
            const double up = evaluate(f, inputs);
            inputs[k][i] = orig - h;
            const double down = evaluate(f, inputs);
            inputs[k][i] = orig;
            gk[i] = (up - down) / (2.0 * h);
        }
        grads.push_back(std::move(gk));
    }
    return grads;
}

inline std::vector<DenseArray> analytic_gradients(const ScalarBuilder& f, const std::vector<DenseArray>& inputs) {
    CompGraph g;
    std::vector<Var> vars;
    for (const auto& x : inputs) vars.push_back(g.input(x, true));
    g.backward(f(g, vars));
    std::vector<DenseArray> grads;
    for (Var v : vars) grads.push_back(g.grad(v));
    return grads;
}

/// Max relative error between reverse-mode and central-difference gradients.
inline double max_gradient_error(const ScalarBuilder& f, const std::vector<DenseArray>& inputs, double h = 1e-5,
                                 double floor = 1e-6) {
    const auto a = analytic_gradients(f, inputs);
    const auto n = numeric_gradients(f, inputs, h);
    double worst = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        for (std::size_t i = 0; i < a[k].size(); ++i) worst = std::max(worst, relative_error(a[k][i], n[k][i], floor));
    }
    return worst;
}

/// Graph-building loss over a ParamSet; `trainable` selects leaves vs constants.
using ParamLoss = std::function<Var(CompGraph&, bool trainable)>;

/// Max relative error between reverse-mode parameter gradients and central
/// differences over every parameter element. Leaves values unchanged.
inline double max_param_gradient_error(diff::ParamSet& params, const ParamLoss& f, double h = 1e-5,
                                       double floor = 1e-6) {
    params.zero_grads();
    {
        CompGraph g;
        g.backward(f(g, true));
    }
    auto value_of = [&] {
        CompGraph g;
        return g.value(f(g, false)).item();
    };
    double worst = 0.0;
    for (std::size_t k = 0; k < params.size(); ++k) {
        for (std::size_t i = 0; i < params.value(k).size(); ++i) {
            double& x = params.value(k)[i];
            const double orig = x;
            x = orig + h;
            const double up = value_of();
            x = orig - h;
            const double down = value_of();
            x = orig;
            worst = std::max(worst, relative_error(params[k].grad[i], (up - down) / (2.0 * h), floor));
        }
    }
    return worst;
}

}  // namespace fpdrl::oracles
