#include "fpdrl/oracles/gradient_suite.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "fpdrl/oracles/finite_diff.hpp"
#include "fpdrl/util/rng.hpp"

namespace fpdrl::oracles {

namespace {

using Shape2 = std::pair<std::size_t, std::size_t>;

DenseArray random_array(Rng& rng, Shape2 s, double lo, double hi) {
    DenseArray a = DenseArray::matrix(s.first, s.second);
    for (auto& v : a.values()) v = rng.uniform(lo, hi);
    return a;
}

// Values bounded away from zero (for relu/abs kinks).
DenseArray away_from_zero(Rng& rng, Shape2 s) {
    DenseArray a = DenseArray::matrix(s.first, s.second);
    for (auto& v : a.values()) {
        const double m = rng.uniform(0.05, 1.5);
        v = rng.rademacher() * m;
    }
    return a;
}

struct PrimitiveCase {
    std::string name;
    std::function<std::vector<DenseArray>(Rng&)> inputs;
    std::function<Var(CompGraph&, const std::vector<Var>&)> op;
};

// Weighted sum against a fixed random probe, so every output element's
// adjoint is exercised with a distinct seed value.
ScalarBuilder probe_loss(std::function<Var(CompGraph&, const std::vector<Var>&)> op, std::uint64_t probe_seed) {
    return [op = std::move(op), probe_seed](CompGraph& g, const std::vector<Var>& xs) {
        const Var y = op(g, xs);
        const DenseArray& v = g.value(y);
        Rng r(probe_seed);
        DenseArray w(v.shape());
        for (auto& e : w.values()) e = r.uniform(-1.0, 1.0);
        return g.sum(g.mul(y, g.constant(std::move(w))));
    };
}

std::vector<PrimitiveCase> primitive_cases() {
    const Shape2 s34{3, 4};
    auto two = [s34](double lo, double hi) {
        return [=](Rng& r) { return std::vector<DenseArray>{random_array(r, s34, lo, hi), random_array(r, s34, lo, hi)}; };
    };
    auto one = [s34](double lo, double hi) {
        return [=](Rng& r) { return std::vector<DenseArray>{random_array(r, s34, lo, hi)}; };
    };
    std::vector<PrimitiveCase> cases;
    cases.push_back({"add", two(-2, 2), [](CompGraph& g, const std::vector<Var>& x) { return g.add(x[0], x[1]); }});
    cases.push_back({"sub", two(-2, 2), [](CompGraph& g, const std::vector<Var>& x) { return g.sub(x[0], x[1]); }});
    cases.push_back({"mul", two(-2, 2), [](CompGraph& g, const std::vector<Var>& x) { return g.mul(x[0], x[1]); }});
    cases.push_back({"matmul",
                     [](Rng& r) {
                         return std::vector<DenseArray>{random_array(r, {3, 4}, -1, 1), random_array(r, {4, 2}, -1, 1)};
                     },
                     [](CompGraph& g, const std::vector<Var>& x) { return g.matmul(x[0], x[1]); }});
    cases.push_back({"relu", [s34](Rng& r) { return std::vector<DenseArray>{away_from_zero(r, s34)}; },
                     [](CompGraph& g, const std::vector<Var>& x) { return g.relu(x[0]); }});
    cases.push_back({"tanh", one(-2, 2), [](CompGraph& g, const std::vector<Var>& x) { return g.tanh(x[0]); }});
    cases.push_back({"exp", one(-2, 2), [](CompGraph& g, const std::vector<Var>& x) { return g.exp(x[0]); }});
    cases.push_back({"log", one(0.3, 3), [](CompGraph& g, const std::vector<Var>& x) { return g.log(x[0]); }});
    cases.push_back({"square", one(-2, 2), [](CompGraph& g, const std::vector<Var>& x) { return g.square(x[0]); }});
    cases.push_back({"sum", one(-2, 2), [](CompGraph& g, const std::vector<Var>& x) { return g.sum(x[0]); }});
    cases.push_back({"sum_last", one(-2, 2), [](CompGraph& g, const std::vector<Var>& x) { return g.sum_last(x[0]); }});
    cases.push_back({"sum_first", one(-2, 2), [](CompGraph& g, const std::vector<Var>& x) { return g.sum_first(x[0]); }});
    cases.push_back({"mean", one(-2, 2), [](CompGraph& g, const std::vector<Var>& x) { return g.mean(x[0]); }});
    cases.push_back({"broadcast",
                     [](Rng& r) {
                         return std::vector<DenseArray>{random_array(r, {1, 4}, -1, 1), random_array(r, {3, 1}, -1, 1),
                                                        random_array(r, {1, 1}, -1, 1)};
                     },
                     [](CompGraph& g, const std::vector<Var>& x) {
                         return g.add(g.add(g.broadcast(x[0], 3, 4), g.broadcast(x[1], 3, 4)), g.broadcast(x[2], 3, 4));
                     }});
    cases.push_back({"concat",
                     [](Rng& r) {
                         return std::vector<DenseArray>{random_array(r, {3, 2}, -1, 1), random_array(r, {3, 3}, -1, 1),
                                                        random_array(r, {2, 5}, -1, 1)};
                     },
                     [](CompGraph& g, const std::vector<Var>& x) {
                         const Var cols[2] = {x[0], x[1]};
                         const Var c = g.concat_cols(cols);
                         const Var rows[2] = {c, x[2]};
                         return g.concat_rows(rows);
                     }});
    cases.push_back({"slice",
                     [](Rng& r) { return std::vector<DenseArray>{random_array(r, {4, 5}, -1, 1)}; },
                     [](CompGraph& g, const std::vector<Var>& x) {
                         return g.slice_rows(g.slice_cols(x[0], 1, 4), 1, 3);
                     }});
    cases.push_back({"softmax", one(-3, 3), [](CompGraph& g, const std::vector<Var>& x) { return g.softmax(x[0]); }});
    cases.push_back({"scale", one(-2, 2), [](CompGraph& g, const std::vector<Var>& x) { return g.affine(x[0], -1.7, 0.3); }});
    cases.push_back({"min",
                     [s34](Rng& r) {
                         DenseArray a = random_array(r, s34, -2, 2);
                         DenseArray b = a;
                         for (auto& v : b.values()) v += r.rademacher() * r.uniform(0.05, 1.0);
                         return std::vector<DenseArray>{a, b};
                     },
                     [](CompGraph& g, const std::vector<Var>& x) { return g.minimum(x[0], x[1]); }});
    cases.push_back({"abs", [s34](Rng& r) { return std::vector<DenseArray>{away_from_zero(r, s34)}; },
                     [](CompGraph& g, const std::vector<Var>& x) { return g.abs(x[0]); }});
    cases.push_back({"reshape", one(-2, 2), [](CompGraph& g, const std::vector<Var>& x) { return g.reshape(x[0], 6, 2); }});
    return cases;
}

// A smooth vector field exercising most tangent rules.
Var test_field(CompGraph& g, Var x, Var w1, Var w2, Var w3) {
    const Var pre = g.matmul(x, w1);
    const Var h = g.mul(g.softmax(g.tanh(pre)), g.exp(g.scale(pre, 0.3)));
    const Var out = g.matmul(h, w2);
    return g.add(out, g.log(g.offset(g.square(g.matmul(x, w3)), 1.0)));
}

}  // namespace

std::vector<Check> primitive_gradient_checks(int seeds, double tolerance) {
    std::vector<Check> checks;
    for (const auto& c : primitive_cases()) {
        double worst = 0.0;
        for (int s = 0; s < seeds; ++s) {
            Rng rng(mix64(static_cast<std::uint64_t>(s) + 17));
            const auto inputs = c.inputs(rng);
            worst = std::max(worst, max_gradient_error(probe_loss(c.op, static_cast<std::uint64_t>(s) + 99), inputs));
        }
        checks.push_back(make_check("grad/" + c.name, worst, tolerance));
    }
    return checks;
}

std::vector<Check> jvp_checks(int seeds, double tolerance) {
    double worst_column = 0.0;
    double worst_second = 0.0;
    const std::size_t d = 3;
    for (int s = 0; s < seeds; ++s) {
        Rng rng(mix64(static_cast<std::uint64_t>(s) + 1234));
        const DenseArray x = random_array(rng, {2, d}, -1, 1);
        const DenseArray w1 = random_array(rng, {d, 4}, -0.8, 0.8);
        const DenseArray w2 = random_array(rng, {4, d}, -0.8, 0.8);
        const DenseArray w3 = random_array(rng, {d, d}, -0.8, 0.8);

        // Columns of dv/dx against central differences in x.
        for (std::size_t j = 0; j < d; ++j) {
            CompGraph g;
            const Var vx = g.input(x, false);
            const Var v = test_field(g, vx, g.constant(w1), g.constant(w2), g.constant(w3));
            const DenseArray col = g.value(g.jacobian_column(v, vx, j));
            const double h = 1e-5;
            for (std::size_t r = 0; r < x.rows(); ++r) {
                auto eval_at = [&](double delta) {
                    CompGraph ge;
                    DenseArray xp = x;
                    xp.at(r, j) += delta;
                    const Var y = test_field(ge, ge.constant(xp), ge.constant(w1), ge.constant(w2), ge.constant(w3));
                    return ge.value(y);
                };
                const DenseArray up = eval_at(h);
                const DenseArray down = eval_at(-h);
                for (std::size_t i = 0; i < d; ++i) {
                    const double fd = (up.at(r, i) - down.at(r, i)) / (2 * h);
                    worst_column = std::max(worst_column, relative_error(col.at(r, i), fd));
                }
            }
        }

        // Gradient of sum_j dv_j/dx_j (the divergence) w.r.t. w1, compared
        // against nested central differences that never call jvp.
        auto divergence_fd = [&](const DenseArray& w1p) {
            const double h = 1e-4;
            double total = 0.0;
            for (std::size_t r = 0; r < x.rows(); ++r) {
                for (std::size_t j = 0; j < d; ++j) {
                    auto eval_at = [&](double delta) {
                        CompGraph ge;
                        DenseArray xp = x;
                        xp.at(r, j) += delta;
                        return ge.value(test_field(ge, ge.constant(xp), ge.constant(w1p), ge.constant(w2),
                                                   ge.constant(w3)))
                            .at(r, j);
                    };
                    total += (eval_at(h) - eval_at(-h)) / (2 * h);
                }
            }
            return total;
        };
        CompGraph g;
        const Var vx = g.input(x, false);
        const Var vw1 = g.input(w1, true);
        const Var v = test_field(g, vx, vw1, g.constant(w2), g.constant(w3));
        Var div{};
        for (std::size_t j = 0; j < d; ++j) {
            const Var col = g.slice_cols(g.jacobian_column(v, vx, j), j, j + 1);
            div = div.valid() ? g.add(div, col) : col;
        }
        g.backward(g.sum(div));
        const DenseArray analytic = g.grad(vw1);
        const double h = 1e-4;
        for (std::size_t i = 0; i < w1.size(); ++i) {
            DenseArray wp = w1, wm = w1;
            wp[i] += h;
            wm[i] -= h;
            const double fd = (divergence_fd(wp) - divergence_fd(wm)) / (2 * h);
            worst_second = std::max(worst_second, relative_error(analytic[i], fd, 1e-4));
        }
    }
    return {make_check("jvp/column", worst_column, tolerance),
            make_check("jvp/divergence-gradient", worst_second, 1e-3)};
}

}  // namespace fpdrl::oracles
