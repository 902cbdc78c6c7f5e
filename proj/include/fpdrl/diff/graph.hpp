#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <limits>
#include <span>
#include <vector>

#include "fpdrl/diff/dense_array.hpp"
#include "fpdrl/diff/params.hpp"

namespace fpdrl::diff {

/// Handle to a node of a CompGraph.
struct Var {
    static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();
    std::uint32_t id = kNone;

    bool valid() const { return id != kNone; }
    friend bool operator==(Var a, Var b) { return a.id == b.id; }
};

enum class OpKind : std::uint8_t {
    Constant,
    Input,
    Param,
    Add,
    Sub,
    Mul,
    MatMul,
    Relu,
    Tanh,
    Exp,
    Log,
    Square,
    Sum,       // all elements -> 1 x 1
    SumLast,   // r x c -> r x 1
    SumFirst,  // r x c -> 1 x c
    Mean,      // all elements -> 1 x 1
    Broadcast,
    ConcatCols,
    ConcatRows,
    SliceCols,
    SliceRows,
    Softmax,  // over the last axis
    Affine,   // scale * x + offset, both constants
    Min,
    Abs,
    Reshape,
};

const char* op_name(OpKind op);

/// Append-only tape of rank-2 fp64 operations with reverse-mode and
/// forward-mode differentiation.
///
/// Nodes are created in topological order, so backward is a single reverse
/// sweep. The forward-mode pass (jvp) emits its tangent computation as new
/// nodes of the same graph; backpropagating through those nodes yields
/// gradients of Jacobian-vector products, which is how the flow policy
/// differentiates its trace term.
///
/// Parameters are bound by reference: a ParamSet must outlive every graph
/// that binds it, and must not be mutated while the graph is alive.
class CompGraph {
public:
    CompGraph() = default;
    CompGraph(const CompGraph&) = delete;
    CompGraph& operator=(const CompGraph&) = delete;

    // Leaves.
    Var constant(DenseArray value);
    /// Constant that refers to external storage instead of copying it.
    Var constant_ref(const DenseArray& value);
    Var filled(std::size_t rows, std::size_t cols, double v);
    /// Leaf whose adjoint is kept after backward when requires_grad is set.
    Var input(DenseArray value, bool requires_grad = true);
    Var param(ParamSet& params, std::size_t index);
    /// Copies the current value into a new constant (no gradient path).
    Var stop_gradient(Var x);

    // Primitives.
    Var add(Var a, Var b);
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);
    Var matmul(Var a, Var b);
    Var relu(Var x);
    Var tanh(Var x);
    Var exp(Var x);
    Var log(Var x);
    Var square(Var x);
    Var sum(Var x);
    Var sum_last(Var x);
    Var sum_first(Var x);
    Var mean(Var x);
    Var broadcast(Var x, std::size_t rows, std::size_t cols);
    Var concat_cols(std::span<const Var> parts);
    Var concat_rows(std::span<const Var> parts);
    Var slice_cols(Var x, std::size_t begin, std::size_t end);
    Var slice_rows(Var x, std::size_t begin, std::size_t end);
    Var softmax(Var x);
    Var scale(Var x, double factor);
    Var offset(Var x, double shift);
    Var affine(Var x, double factor, double shift);
    Var minimum(Var a, Var b);
    Var abs(Var x);
    Var reshape(Var x, std::size_t rows, std::size_t cols);

    // Convenience composites.
    Var neg(Var x) { return scale(x, -1.0); }
    /// x (r x c) + row vector b (1 x c).
    Var add_row(Var x, Var row);
    /// x @ w + b with b a 1 x n row vector.
    Var linear(Var x, Var w, Var b);

    const DenseArray& value(Var v) const;
    const Shape& shape(Var v) const { return value(v).shape(); }
    bool needs_grad(Var v) const { return node(v).needs_grad; }
    OpKind kind(Var v) const { return node(v).op; }
    std::size_t size() const { return nodes_.size(); }

    /// Reverse sweep from a scalar loss. Parameter gradients accumulate into
    /// their ParamSet; adjoints of Input leaves are retrievable via grad().
    void backward(Var loss);
    /// Reverse sweep with an explicit output seed (vector-Jacobian product).
    void backward(Var output, const DenseArray& seed);
    /// Adjoint of a node from the latest backward call (zeros if none reached it).
    DenseArray grad(Var v) const;

    /// Forward-mode derivative of `output` along `tangent` placed on `input`.
    /// The result is itself a differentiable node.
    Var jvp(Var input, Var tangent, Var output);

    /// Column j of d(output)/d(input) for every row, via one tangent pass
    /// seeded with the unit vector e_j.
    Var jacobian_column(Var output, Var input, std::size_t j);

private:
    struct Node {
        OpKind op = OpKind::Constant;
        bool needs_grad = false;
        std::uint32_t edge_begin = 0;
        std::uint32_t edge_count = 0;
        std::size_t p0 = 0;
        std::size_t p1 = 0;
        double s0 = 0.0;
        double s1 = 0.0;
        DenseArray owned;
        const DenseArray* ref = nullptr;
        ParamSet* params = nullptr;
        std::size_t param_index = 0;

        const DenseArray& val() const { return ref ? *ref : owned; }
    };

    const Node& node(Var v) const;
    Var push(Node n, std::span<const Var> inputs);
    Var input_of(const Node& n, std::size_t k) const { return Var{edges_[n.edge_begin + k]}; }
    void run_backward(Var output, DenseArray seed);
    Var tangent_rule(Var out, std::span<const Var> tangents);

    std::deque<Node> nodes_;
    std::vector<std::uint32_t> edges_;
    std::vector<DenseArray> adjoints_;
};

/// out = a @ b for row-major dense blocks.
void matmul_into(const DenseArray& a, const DenseArray& b, DenseArray& out);

}  // namespace fpdrl::diff
