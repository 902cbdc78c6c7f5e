#include "doctest.h"

#include <cmath>
#include <filesystem>

#include "fpdrl/diff/adam.hpp"
#include "fpdrl/diff/checkpoint.hpp"
#include "fpdrl/diff/graph.hpp"
#include "fpdrl/diff/nn.hpp"
#include "fpdrl/oracles/finite_diff.hpp"
#include "fpdrl/oracles/gradient_suite.hpp"

using namespace fpdrl;
using namespace fpdrl::diff;

namespace {

DenseArray random_matrix(Rng& rng, std::size_t r, std::size_t c) {
    DenseArray a = DenseArray::matrix(r, c);
    for (auto& v : a.values()) v = rng.uniform(-1.0, 1.0);
    return a;
}

}  // namespace

TEST_CASE("primitive values") {
    CompGraph g;
    CHECK(g.value(g.relu(g.constant(DenseArray::scalar(-1.0)))).item() == 0.0);

    const Var x = g.input(DenseArray::scalar(0.0));
    const Var y = g.tanh(x);
    CHECK(g.value(y).item() == 0.0);
    g.backward(y);
    CHECK(g.grad(x).item() == 1.0);
}

TEST_CASE("every primitive matches central differences on 100 seeds") {
    for (const auto& c : oracles::primitive_gradient_checks(100)) {
        INFO(c.name << " max rel err " << c.observed);
        CHECK(c.passed);
    }
}

TEST_CASE("matmul 3x4 by 4x2 gradient") {
    Rng rng(7);
    const auto a = random_matrix(rng, 3, 4);
    const auto b = random_matrix(rng, 4, 2);
    const oracles::ScalarBuilder f = [](CompGraph& g, const std::vector<Var>& x) {
        return g.sum(g.square(g.matmul(x[0], x[1])));
    };
    CHECK(oracles::max_gradient_error(f, {a, b}) < 1e-4);
}

TEST_CASE("backward examples") {
    SUBCASE("sum gives ones") {
        ParamSet ps;
        ps.add("p", DenseArray::matrix(2, 3, 0.5));
        CompGraph g;
        g.backward(g.sum(g.param(ps, 0)));
        for (double v : ps[0].grad.values()) CHECK(v == 1.0);
    }
    SUBCASE("mean of squares") {
        ParamSet ps;
        ps.add("p", DenseArray::row({1.0, 2.0}));
        CompGraph g;
        g.backward(g.mean(g.square(g.param(ps, 0))));
        CHECK(ps[0].grad[0] == doctest::Approx(1.0));
        CHECK(ps[0].grad[1] == doctest::Approx(2.0));
    }
    SUBCASE("disconnected parameter gets zeros") {
        ParamSet ps;
        ps.add("p", DenseArray::row({1.0, 2.0}));
        ps.add("q", DenseArray::row({3.0}));
        CompGraph g;
        g.param(ps, 0);
        g.backward(g.sum(g.param(ps, 1)));
        CHECK(ps[0].grad[0] == 0.0);
        CHECK(ps[0].grad[1] == 0.0);
    }
    SUBCASE("gradients accumulate until zeroed") {
        ParamSet ps;
        ps.add("p", DenseArray::row({1.0}));
        for (int i = 0; i < 2; ++i) {
            CompGraph g;
            g.backward(g.sum(g.param(ps, 0)));
        }
        CHECK(ps[0].grad[0] == 2.0);
        ps.zero_grads();
        CHECK(ps[0].grad[0] == 0.0);
    }
}

TEST_CASE("errors") {
    CompGraph g;
    const Var a = g.constant(DenseArray::matrix(2, 3));
    const Var b = g.constant(DenseArray::matrix(3, 2));
    try {
        g.add(a, b);
        FAIL("expected shape error");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[2, 3]") != std::string::npos);
        CHECK(msg.find("[3, 2]") != std::string::npos);
    }
    CHECK_THROWS_AS(g.matmul(a, a), ShapeError);
    CHECK_THROWS_AS(g.log(g.constant(DenseArray::row({1.0, 0.0}))), DomainError);
    CHECK_THROWS_AS(g.backward(a), ShapeError);
    CHECK_THROWS_AS(g.jacobian_column(a, a, 3), std::out_of_range);
}

TEST_CASE("backward and forward are bit-deterministic") {
    Rng rng(3);
    const auto x = random_matrix(rng, 4, 3);
    const auto w = random_matrix(rng, 3, 5);
    auto run = [&](DenseArray& value, DenseArray& grad) {
        CompGraph g;
        const Var vx = g.input(x);
        const Var vw = g.input(w);
        const Var y = g.softmax(g.tanh(g.matmul(vx, vw)));
        const Var loss = g.mean(g.mul(y, g.log(g.offset(y, 1.0))));
        value = g.value(y);
        g.backward(loss);
        grad = g.grad(vw);
    };
    DenseArray v1, g1, v2, g2;
    run(v1, g1);
    run(v2, g2);
    CHECK(v1 == v2);
    CHECK(g1 == g2);
}

TEST_CASE("jacobian columns") {
    SUBCASE("identity map") {
        CompGraph g;
        const Var x = g.input(DenseArray::row({0.3, -1.0, 2.0}));
        for (std::size_t j = 0; j < 3; ++j) {
            const DenseArray col = g.value(g.jacobian_column(x, x, j));
            for (std::size_t i = 0; i < 3; ++i) CHECK(col[i] == (i == j ? 1.0 : 0.0));
        }
    }
    SUBCASE("constant scale") {
        CompGraph g;
        const Var x = g.input(DenseArray::row({0.3, -1.0, 2.0}));
        const DenseArray col = g.value(g.jacobian_column(g.scale(x, 2.0), x, 1));
        CHECK(col[0] == 0.0);
        CHECK(col[1] == 2.0);
        CHECK(col[2] == 0.0);
    }
    SUBCASE("tanh(W x) against finite differences") {
        Rng rng(11);
        const auto w = random_matrix(rng, 3, 3);
        const auto x = random_matrix(rng, 1, 3);
        for (std::size_t j = 0; j < 3; ++j) {
            CompGraph g;
            const Var vx = g.input(x);
            const Var y = g.tanh(g.matmul(vx, g.constant(w)));
            const DenseArray col = g.value(g.jacobian_column(y, vx, j));
            const double h = 1e-5;
            DenseArray up = x, down = x;
            up[j] += h;
            down[j] -= h;
            CompGraph gu, gd;
            const auto yu = gu.value(gu.tanh(gu.matmul(gu.constant(up), gu.constant(w))));
            const auto yd = gd.value(gd.tanh(gd.matmul(gd.constant(down), gd.constant(w))));
            for (std::size_t i = 0; i < 3; ++i) {
                CHECK(oracles::relative_error(col[i], (yu[i] - yd[i]) / (2 * h)) < 1e-4);
            }
        }
    }
}

TEST_CASE("forward-mode results are differentiable") {
    for (const auto& c : oracles::jvp_checks(5)) {
        INFO(c.name << " max rel err " << c.observed);
        CHECK(c.passed);
    }
}

TEST_CASE("adam") {
    SUBCASE("zero gradients leave fresh parameters bit-identical") {
        ParamSet ps;
        ps.add("w", DenseArray::row({0.25, -3.5, 0.0}));
        const DenseArray before = ps[0].value;
        AdamState st = AdamState::for_params(ps, 0.1);
        adam_step(ps, st);
        CHECK(ps[0].value == before);
        CHECK(st.t == 1);
    }
    SUBCASE("single step from zero") {
        ParamSet ps;
        ps.add("p", DenseArray::scalar(0.0));
        ps[0].grad[0] = 1.0;
        AdamState st = AdamState::for_params(ps, 0.1);
        adam_step(ps, st);
        CHECK(ps[0].value[0] == doctest::Approx(-0.1).epsilon(1e-6));
    }
    SUBCASE("constant gradient moves monotonically") {
        ParamSet ps;
        ps.add("p", DenseArray::scalar(1.0));
        AdamState st = AdamState::for_params(ps, 0.01);
        double prev = 1.0;
        for (int i = 0; i < 2; ++i) {
            ps[0].grad[0] = 0.5;
            adam_step(ps, st);
            CHECK(ps[0].value[0] < prev);
            prev = ps[0].value[0];
        }
    }
    SUBCASE("non-finite gradient names the parameter") {
        ParamSet ps;
        ps.add("critic.l0.w", DenseArray::scalar(0.0));
        ps[0].grad[0] = std::nan("");
        AdamState st = AdamState::for_params(ps, 0.1);
        try {
            adam_step(ps, st);
            FAIL("expected NonFiniteError");
        } catch (const NonFiniteError& e) {
            CHECK(std::string(e.what()).find("critic.l0.w") != std::string::npos);
        }
    }
}

TEST_CASE("checkpoint container") {
    Rng rng(5);
    ParamSet ps;
    ps.add("a", random_matrix(rng, 2, 3));
    ps.add("b", DenseArray(Shape{4}, 1.5));
    Checkpoint ck;
    ck.meta["env"] = "pendulum";
    ck.put_params("actor", ps);

    const auto bytes = ck.serialize();
    CHECK(bytes == ck.serialize());
    CHECK(std::string(bytes.begin(), bytes.begin() + 8) == "FPDRLCKP");

    const Checkpoint back = Checkpoint::deserialize(bytes);
    CHECK(back.meta_at("env") == "pendulum");
    ParamSet loaded;
    loaded.add("a", DenseArray::matrix(2, 3));
    loaded.add("b", DenseArray(Shape{4}));
    back.load_params("actor", loaded);
    CHECK(loaded[0].value == ps[0].value);
    CHECK(loaded[1].value == ps[1].value);
    CHECK(back.serialize() == bytes);

    auto corrupt = bytes;
    corrupt[corrupt.size() / 2] ^= 0x5a;
    CHECK_THROWS_AS(Checkpoint::deserialize(corrupt), CheckpointError);
    auto truncated = bytes;
    truncated.resize(bytes.size() - 20);
    CHECK_THROWS_AS(Checkpoint::deserialize(truncated), CheckpointError);

    ParamSet wrong;
    wrong.add("a", DenseArray::matrix(3, 2));
    wrong.add("b", DenseArray(Shape{4}));
    CHECK_THROWS_AS(back.load_params("actor", wrong), CheckpointError);

    const auto path = std::filesystem::temp_directory_path() / "fpdrl_ck_test.bin";
    ck.save(path);
    CHECK(Checkpoint::load(path).serialize() == bytes);
    std::filesystem::remove(path);
}

TEST_CASE("mlp shapes and zero-init head") {
    Rng rng(1);
    ParamSet ps;
    nn::Mlp mlp(ps, "q", 3, 8, 5, rng, true);
    CompGraph g;
    const Var out = mlp.forward(g, g.constant(random_matrix(rng, 4, 3)), nn::Binding::trainable(ps));
    CHECK(g.value(out).rows() == 4);
    CHECK(g.value(out).cols() == 5);
    for (double v : g.value(out).values()) CHECK(v == 0.0);
    CHECK_THROWS_AS(mlp.forward(g, g.constant(DenseArray::matrix(4, 2)), nn::Binding::trainable(ps)), ShapeError);
}
