#include "fpdrl/diff/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <cblas.h>

namespace fpdrl::diff {

namespace {

std::string shape_pair(const DenseArray& a, const DenseArray& b) {
    return a.shape().str() + " and " + b.shape().str();
}

void require_same_shape(const char* op, const DenseArray& a, const DenseArray& b) {
    if (!(a.shape() == b.shape())) {
        throw ShapeError(std::string(op) + ": shape mismatch " + shape_pair(a, b));
    }
}

DenseArray like(const DenseArray& a) { return DenseArray(a.shape(), 0.0); }

// Small products stay in plain loops; BLAS call overhead dominates there.
constexpr std::size_t kBlasMinWork = 2048;

// C (m x n) = beta * C + op(A) op(B), row-major, with op(A) m x k.
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double beta,
          double* c) {
    if (m * n * k >= kBlasMinWork) {
        cblas_dgemm(CblasRowMajor, ta ? CblasTrans : CblasNoTrans, tb ? CblasTrans : CblasNoTrans,
                    static_cast<int>(m), static_cast<int>(n), static_cast<int>(k), 1.0, a, ta ? static_cast<int>(m)
                    : static_cast<int>(k), b, tb ? static_cast<int>(k) : static_cast<int>(n), beta, c,
                    static_cast<int>(n));
        return;
    }
    if (beta == 0.0) std::fill(c, c + m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = ta ? a[p * m + i] : a[i * k + p];
            if (aip == 0.0) continue;
            if (tb) {
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * b[j * k + p];
            } else {
                const double* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
            }
        }
    }
}

void accumulate(DenseArray& dst, const DenseArray& src) {
    double* d = dst.data();
    const double* s = src.data();
    for (std::size_t i = 0, n = src.size(); i < n; ++i) d[i] += s[i];
}

}  // namespace

const char* op_name(OpKind op) {
    switch (op) {
        case OpKind::Constant: return "constant";
        case OpKind::Input: return "input";
        case OpKind::Param: return "param";
        case OpKind::Add: return "add";
        case OpKind::Sub: return "sub";
        case OpKind::Mul: return "mul";
        case OpKind::MatMul: return "matmul";
        case OpKind::Relu: return "relu";
        case OpKind::Tanh: return "tanh";
        case OpKind::Exp: return "exp";
        case OpKind::Log: return "log";
        case OpKind::Square: return "square";
        case OpKind::Sum: return "sum";
        case OpKind::SumLast: return "sum_last";
        case OpKind::SumFirst: return "sum_first";
        case OpKind::Mean: return "mean";
        case OpKind::Broadcast: return "broadcast";
        case OpKind::ConcatCols: return "concat_cols";
        case OpKind::ConcatRows: return "concat_rows";
        case OpKind::SliceCols: return "slice_cols";
        case OpKind::SliceRows: return "slice_rows";
        case OpKind::Softmax: return "softmax";
        case OpKind::Affine: return "affine";
        case OpKind::Min: return "min";
        case OpKind::Abs: return "abs";
        case OpKind::Reshape: return "reshape";
    }
    return "?";
}

void matmul_into(const DenseArray& a, const DenseArray& b, DenseArray& out) {
    gemm(false, false, a.rows(), b.cols(), a.cols(), a.data(), b.data(), 0.0, out.data());
}

const CompGraph::Node& CompGraph::node(Var v) const {
    if (v.id >= nodes_.size()) throw std::out_of_range("invalid graph variable");
    return nodes_[v.id];
}

const DenseArray& CompGraph::value(Var v) const { return node(v).val(); }

Var CompGraph::push(Node n, std::span<const Var> inputs) {
    n.edge_begin = static_cast<std::uint32_t>(edges_.size());
    n.edge_count = static_cast<std::uint32_t>(inputs.size());
    for (Var in : inputs) {
        edges_.push_back(in.id);
        if (nodes_[in.id].needs_grad) n.needs_grad = true;
    }
    nodes_.push_back(std::move(n));
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
}

// ---------------------------------------------------------------- leaves

Var CompGraph::constant(DenseArray value) {
    Node n;
    n.op = OpKind::Constant;
    n.owned = std::move(value);
    return push(std::move(n), {});
}

Var CompGraph::constant_ref(const DenseArray& value) {
    Node n;
    n.op = OpKind::Constant;
    n.ref = &value;
    return push(std::move(n), {});
}

Var CompGraph::filled(std::size_t rows, std::size_t cols, double v) {
    return constant(DenseArray::matrix(rows, cols, v));
}

Var CompGraph::input(DenseArray value, bool requires_grad) {
    Node n;
    n.op = OpKind::Input;
    n.owned = std::move(value);
    n.needs_grad = requires_grad;
    return push(std::move(n), {});
}

Var CompGraph::param(ParamSet& params, std::size_t index) {
    if (index >= params.size()) throw std::out_of_range("parameter index out of range");
    Node n;
    n.op = OpKind::Param;
    n.ref = &params.value(index);
    n.params = &params;
    n.param_index = index;
    n.needs_grad = true;
    return push(std::move(n), {});
}

Var CompGraph::stop_gradient(Var x) { return constant(value(x)); }

// ---------------------------------------------------------------- primitives

namespace {

template <class F>
DenseArray zip(const DenseArray& a, const DenseArray& b, F f) {
    DenseArray out(a.shape());
    const double* pa = a.data();
    const double* pb = b.data();
    double* po = out.data();
    for (std::size_t i = 0, n = a.size(); i < n; ++i) po[i] = f(pa[i], pb[i]);
    return out;
}

template <class F>
DenseArray map(const DenseArray& a, F f) {
    DenseArray out(a.shape());
    const double* pa = a.data();
    double* po = out.data();
    for (std::size_t i = 0, n = a.size(); i < n; ++i) po[i] = f(pa[i]);
    return out;
}

}  // namespace

#define FPDRL_BINARY(name, kind, expr)                                   \
    Var CompGraph::name(Var a, Var b) {                                  \
        const DenseArray& va = value(a);                                 \
        const DenseArray& vb = value(b);                                 \
        require_same_shape(#name, va, vb);                               \
        Node n;                                                          \
        n.op = OpKind::kind;                                             \
        n.owned = zip(va, vb, [](double x, double y) { return expr; }); \
        const Var ins[2] = {a, b};                                       \
        return push(std::move(n), ins);                                  \
    }

FPDRL_BINARY(add, Add, x + y)
FPDRL_BINARY(sub, Sub, x - y)
FPDRL_BINARY(mul, Mul, x * y)
FPDRL_BINARY(minimum, Min, (x <= y ? x : y))

#undef FPDRL_BINARY

#define FPDRL_UNARY(name, kind, expr)                                    \
    Var CompGraph::name(Var x) {                                         \
        Node n;                                                          \
        n.op = OpKind::kind;                                             \
        n.owned = map(value(x), [](double v) { return expr; });         \
        const Var ins[1] = {x};                                          \
        return push(std::move(n), ins);                                  \
    }

FPDRL_UNARY(relu, Relu, (v > 0.0 ? v : 0.0))
FPDRL_UNARY(tanh, Tanh, std::tanh(v))
FPDRL_UNARY(exp, Exp, std::exp(v))
FPDRL_UNARY(square, Square, v* v)
FPDRL_UNARY(abs, Abs, std::fabs(v))

#undef FPDRL_UNARY

Var CompGraph::log(Var x) {
    const DenseArray& vx = value(x);
    for (std::size_t i = 0; i < vx.size(); ++i) {
        if (!(vx[i] > 0.0)) {
            throw DomainError("log of non-positive value " + std::to_string(vx[i]) + " at flat index " +
                              std::to_string(i));
        }
    }
    Node n;
    n.op = OpKind::Log;
    n.owned = map(vx, [](double v) { return std::log(v); });
    const Var ins[1] = {x};
    return push(std::move(n), ins);
}

Var CompGraph::matmul(Var a, Var b) {
    const DenseArray& va = value(a);
    const DenseArray& vb = value(b);
    if (va.cols() != vb.rows()) throw ShapeError("matmul: shape mismatch " + shape_pair(va, vb));
    Node n;
    n.op = OpKind::MatMul;
    n.owned = DenseArray::matrix(va.rows(), vb.cols());
    matmul_into(va, vb, n.owned);
    const Var ins[2] = {a, b};
    return push(std::move(n), ins);
}

Var CompGraph::sum(Var x) {
    const DenseArray& vx = value(x);
    double s = 0.0;
    for (double v : vx.values()) s += v;
    Node n;
    n.op = OpKind::Sum;
    n.owned = DenseArray::scalar(s);
    const Var ins[1] = {x};
    return push(std::move(n), ins);
}

Var CompGraph::mean(Var x) {
    const DenseArray& vx = value(x);
    double s = 0.0;
    for (double v : vx.values()) s += v;
    Node n;
    n.op = OpKind::Mean;
    n.owned = DenseArray::scalar(s / static_cast<double>(vx.size()));
    const Var ins[1] = {x};
    return push(std::move(n), ins);
}

Var CompGraph::sum_last(Var x) {
    const DenseArray& vx = value(x);
    const std::size_t r = vx.rows(), c = vx.cols();
    Node n;
    n.op = OpKind::SumLast;
    n.owned = DenseArray::matrix(r, 1);
    for (std::size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < c; ++j) s += vx[i * c + j];
        n.owned[i] = s;
    }
    const Var ins[1] = {x};
    return push(std::move(n), ins);
}

Var CompGraph::sum_first(Var x) {
    const DenseArray& vx = value(x);
    const std::size_t r = vx.rows(), c = vx.cols();
    Node n;
    n.op = OpKind::SumFirst;
    n.owned = DenseArray::matrix(1, c);
    for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) n.owned[j] += vx[i * c + j];
    }
    const Var ins[1] = {x};
    return push(std::move(n), ins);
}

Var CompGraph::broadcast(Var x, std::size_t rows, std::size_t cols) {
    const DenseArray& vx = value(x);
    const std::size_t r = vx.rows(), c = vx.cols();
    if (!((r == rows || r == 1) && (c == cols || c == 1))) {
        throw ShapeError("broadcast: cannot expand " + vx.shape().str() + " to [" + std::to_string(rows) + ", " +
                         std::to_string(cols) + "]");
    }
    Node n;
    n.op = OpKind::Broadcast;
    n.owned = DenseArray::matrix(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        const std::size_t si = r == 1 ? 0 : i;
        for (std::size_t j = 0; j < cols; ++j) n.owned[i * cols + j] = vx[si * c + (c == 1 ? 0 : j)];
    }
    const Var ins[1] = {x};
    return push(std::move(n), ins);
}

Var CompGraph::concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no inputs");
    const std::size_t r = value(parts[0]).rows();
    std::size_t total = 0;
    for (Var p : parts) {
        if (value(p).rows() != r) throw ShapeError("concat_cols: shape mismatch " + shape_pair(value(parts[0]), value(p)));
        total += value(p).cols();
    }
    Node n;
    n.op = OpKind::ConcatCols;
    n.owned = DenseArray::matrix(r, total);
    std::size_t off = 0;
    for (Var p : parts) {
        const DenseArray& vp = value(p);
        const std::size_t c = vp.cols();
        for (std::size_t i = 0; i < r; ++i) {
            std::copy_n(vp.data() + i * c, c, n.owned.data() + i * total + off);
        }
        off += c;
    }
    return push(std::move(n), parts);
}

Var CompGraph::concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no inputs");
    const std::size_t c = value(parts[0]).cols();
    std::size_t total = 0;
    for (Var p : parts) {
        if (value(p).cols() != c) throw ShapeError("concat_rows: shape mismatch " + shape_pair(value(parts[0]), value(p)));
        total += value(p).rows();
    }
    Node n;
    n.op = OpKind::ConcatRows;
    n.owned = DenseArray::matrix(total, c);
    std::size_t off = 0;
    for (Var p : parts) {
        const DenseArray& vp = value(p);
        std::copy_n(vp.data(), vp.size(), n.owned.data() + off);
        off += vp.size();
    }
    return push(std::move(n), parts);
}

Var CompGraph::slice_cols(Var x, std::size_t begin, std::size_t end) {
    const DenseArray& vx = value(x);
    if (!(begin < end && end <= vx.cols())) {
        throw ShapeError("slice_cols: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for shape " + vx.shape().str());
    }
    const std::size_t r = vx.rows(), c = vx.cols(), w = end - begin;
    Node n;
    n.op = OpKind::SliceCols;
    n.p0 = begin;
    n.p1 = end;
    n.owned = DenseArray::matrix(r, w);
    for (std::size_t i = 0; i < r; ++i) std::copy_n(vx.data() + i * c + begin, w, n.owned.data() + i * w);
    const Var ins[1] = {x};
    return push(std::move(n), ins);
}

Var CompGraph::slice_rows(Var x, std::size_t begin, std::size_t end) {
    const DenseArray& vx = value(x);
    if (!(begin < end && end <= vx.rows())) {
        throw ShapeError("slice_rows: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") invalid for shape " + vx.shape().str());
    }
    const std::size_t c = vx.cols();
    Node n;
    n.op = OpKind::SliceRows;
    n.p0 = begin;
    n.p1 = end;
    n.owned = DenseArray::matrix(end - begin, c);
    std::copy_n(vx.data() + begin * c, (end - begin) * c, n.owned.data());
    const Var ins[1] = {x};
    return push(std::move(n), ins);
}

Var CompGraph::softmax(Var x) {
    const DenseArray& vx = value(x);
    const std::size_t r = vx.rows(), c = vx.cols();
    Node n;
    n.op = OpKind::Softmax;
    n.owned = DenseArray(vx.shape());
    for (std::size_t i = 0; i < r; ++i) {
        const double* in = vx.data() + i * c;
        double* out = n.owned.data() + i * c;
        const double mx = *std::max_element(in, in + c);
        double z = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
            out[j] = std::exp(in[j] - mx);
            z += out[j];
        }
        for (std::size_t j = 0; j < c; ++j) out[j] /= z;
    }
    const Var ins[1] = {x};
    return push(std::move(n), ins);
}

Var CompGraph::affine(Var x, double factor, double shift) {
    Node n;
    n.op = OpKind::Affine;
    n.s0 = factor;
    n.s1 = shift;
    n.owned = map(value(x), [factor, shift](double v) { return factor * v + shift; });
    const Var ins[1] = {x};
    return push(std::move(n), ins);
}

Var CompGraph::scale(Var x, double factor) { return affine(x, factor, 0.0); }
Var CompGraph::offset(Var x, double shift) { return affine(x, 1.0, shift); }

Var CompGraph::reshape(Var x, std::size_t rows, std::size_t cols) {
    const DenseArray& vx = value(x);
    if (rows * cols != vx.size()) {
        throw ShapeError("reshape: cannot view " + vx.shape().str() + " as [" + std::to_string(rows) + ", " +
                         std::to_string(cols) + "]");
    }
    Node n;
    n.op = OpKind::Reshape;
    n.owned = DenseArray(Shape{rows, cols}, std::vector<double>(vx.values().begin(), vx.values().end()));
    const Var ins[1] = {x};
    return push(std::move(n), ins);
}

Var CompGraph::add_row(Var x, Var row) {
    const DenseArray& vx = value(x);
    return add(x, broadcast(row, vx.rows(), vx.cols()));
}

Var CompGraph::linear(Var x, Var w, Var b) { return add_row(matmul(x, w), b); }

// ---------------------------------------------------------------- reverse mode

void CompGraph::backward(Var loss) {
    const DenseArray& v = value(loss);
    if (v.size() != 1) throw ShapeError("backward: loss must be scalar, got shape " + v.shape().str());
    run_backward(loss, DenseArray(v.shape(), 1.0));
}

void CompGraph::backward(Var output, const DenseArray& seed) {
    require_same_shape("backward seed", value(output), seed);
    run_backward(output, seed);
}

DenseArray CompGraph::grad(Var v) const {
    if (v.id < adjoints_.size() && adjoints_[v.id].size() != 0) return adjoints_[v.id];
    return like(value(v));
}

void CompGraph::run_backward(Var output, DenseArray seed) {
    adjoints_.assign(nodes_.size(), DenseArray{});
    adjoints_[output.id] = std::move(seed);

    auto adj = [this](Var in) -> DenseArray* {
        if (!nodes_[in.id].needs_grad) return nullptr;
        DenseArray& a = adjoints_[in.id];
        if (a.size() == 0) a = like(nodes_[in.id].val());
        return &a;
    };

    for (std::size_t id = output.id + 1; id-- > 0;) {
        const Node& n = nodes_[id];
        if (!n.needs_grad) continue;
        const DenseArray& g = adjoints_[id];
        if (g.size() == 0) continue;
        const DenseArray& y = n.val();

        switch (n.op) {
            case OpKind::Constant:
            case OpKind::Input:
                break;
            case OpKind::Param: {
                DenseArray& pg = n.params->operator[](n.param_index).grad;
                accumulate(pg, g);
                break;
            }
            case OpKind::Add: {
                if (auto* ga = adj(input_of(n, 0))) accumulate(*ga, g);
                if (auto* gb = adj(input_of(n, 1))) accumulate(*gb, g);
                break;
            }
            case OpKind::Sub: {
                if (auto* ga = adj(input_of(n, 0))) accumulate(*ga, g);
                if (auto* gb = adj(input_of(n, 1))) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] -= g[i];
                }
                break;
            }
            case OpKind::Mul: {
                const DenseArray& a = value(input_of(n, 0));
                const DenseArray& b = value(input_of(n, 1));
                if (auto* ga = adj(input_of(n, 0))) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * b[i];
                }
                if (auto* gb = adj(input_of(n, 1))) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*gb)[i] += g[i] * a[i];
                }
                break;
            }
            case OpKind::MatMul: {
                const DenseArray& a = value(input_of(n, 0));
                const DenseArray& b = value(input_of(n, 1));
                const std::size_t m = a.rows(), k = a.cols(), nn = b.cols();
                // dA += G B^T, dB += A^T G
                if (auto* ga = adj(input_of(n, 0))) gemm(false, true, m, k, nn, g.data(), b.data(), 1.0, ga->data());
                if (auto* gb = adj(input_of(n, 1))) gemm(true, false, k, nn, m, a.data(), g.data(), 1.0, gb->data());
                break;
            }
            case OpKind::Relu: {
                const DenseArray& x = value(input_of(n, 0));
                if (auto* ga = adj(input_of(n, 0))) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += x[i] > 0.0 ? g[i] : 0.0;
                }
                break;
            }
            case OpKind::Tanh: {
                if (auto* ga = adj(input_of(n, 0))) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * (1.0 - y[i] * y[i]);
                }
                break;
            }
            case OpKind::Exp: {
                if (auto* ga = adj(input_of(n, 0))) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] * y[i];
                }
                break;
            }
            case OpKind::Log: {
                const DenseArray& x = value(input_of(n, 0));
                if (auto* ga = adj(input_of(n, 0))) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += g[i] / x[i];
                }
                break;
            }
            case OpKind::Square: {
                const DenseArray& x = value(input_of(n, 0));
                if (auto* ga = adj(input_of(n, 0))) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += 2.0 * x[i] * g[i];
                }
                break;
            }
            case OpKind::Sum:
            case OpKind::Mean: {
                if (auto* ga = adj(input_of(n, 0))) {
                    const double s = n.op == OpKind::Sum ? g[0] : g[0] / static_cast<double>(ga->size());
                    for (std::size_t i = 0; i < ga->size(); ++i) (*ga)[i] += s;
                }
                break;
            }
            case OpKind::SumLast: {
                if (auto* ga = adj(input_of(n, 0))) {
                    const std::size_t r = ga->rows(), c = ga->cols();
                    for (std::size_t i = 0; i < r; ++i) {
                        for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += g[i];
                    }
                }
                break;
            }
            case OpKind::SumFirst: {
                if (auto* ga = adj(input_of(n, 0))) {
                    const std::size_t r = ga->rows(), c = ga->cols();
                    for (std::size_t i = 0; i < r; ++i) {
                        for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += g[j];
                    }
                }
                break;
            }
            case OpKind::Broadcast: {
                if (auto* ga = adj(input_of(n, 0))) {
                    const std::size_t r = ga->rows(), c = ga->cols();
                    const std::size_t rows = y.rows(), cols = y.cols();
                    for (std::size_t i = 0; i < rows; ++i) {
                        const std::size_t si = r == 1 ? 0 : i;
                        for (std::size_t j = 0; j < cols; ++j) (*ga)[si * c + (c == 1 ? 0 : j)] += g[i * cols + j];
                    }
                }
                break;
            }
            case OpKind::ConcatCols: {
                const std::size_t r = y.rows(), total = y.cols();
                std::size_t off = 0;
                for (std::size_t k = 0; k < n.edge_count; ++k) {
                    const Var in = input_of(n, k);
                    const std::size_t c = value(in).cols();
                    if (auto* ga = adj(in)) {
                        for (std::size_t i = 0; i < r; ++i) {
                            for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += g[i * total + off + j];
                        }
                    }
                    off += c;
                }
                break;
            }
            case OpKind::ConcatRows: {
                std::size_t off = 0;
                for (std::size_t k = 0; k < n.edge_count; ++k) {
                    const Var in = input_of(n, k);
                    const std::size_t sz = value(in).size();
                    if (auto* ga = adj(in)) {
                        for (std::size_t i = 0; i < sz; ++i) (*ga)[i] += g[off + i];
                    }
                    off += sz;
                }
                break;
            }
            case OpKind::SliceCols: {
                if (auto* ga = adj(input_of(n, 0))) {
                    const std::size_t r = ga->rows(), c = ga->cols(), w = n.p1 - n.p0;
                    for (std::size_t i = 0; i < r; ++i) {
                        for (std::size_t j = 0; j < w; ++j) (*ga)[i * c + n.p0 + j] += g[i * w + j];
                    }
                }
                break;
            }
            case OpKind::SliceRows: {
                if (auto* ga = adj(input_of(n, 0))) {
                    const std::size_t c = ga->cols();
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[n.p0 * c + i] += g[i];
                }
                break;
            }
            case OpKind::Softmax: {
                if (auto* ga = adj(input_of(n, 0))) {
                    const std::size_t r = y.rows(), c = y.cols();
                    for (std::size_t i = 0; i < r; ++i) {
                        double dot = 0.0;
                        for (std::size_t j = 0; j < c; ++j) dot += g[i * c + j] * y[i * c + j];
                        for (std::size_t j = 0; j < c; ++j) (*ga)[i * c + j] += y[i * c + j] * (g[i * c + j] - dot);
                    }
                }
                break;
            }
            case OpKind::Affine: {
                if (auto* ga = adj(input_of(n, 0))) {
                    for (std::size_t i = 0; i < g.size(); ++i) (*ga)[i] += n.s0 * g[i];
                }
                break;
            }
            case OpKind::Min: {
                const DenseArray& a = value(input_of(n, 0));
                const DenseArray& b = value(input_of(n, 1));
                auto* ga = adj(input_of(n, 0));
                auto* gb = adj(input_of(n, 1));
                for (std::size_t i = 0; i < g.size(); ++i) {
                    if (a[i] <= b[i]) {
                        if (ga) (*ga)[i] += g[i];
                    } else if (gb) {
                        (*gb)[i] += g[i];
                    }
                }
                break;
            }
            case OpKind::Abs: {
                const DenseArray& x = value(input_of(n, 0));
                if (auto* ga = adj(input_of(n, 0))) {
                    for (std::size_t i = 0; i < g.size(); ++i) {
                        const double s = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
                        (*ga)[i] += s * g[i];
                    }
                }
                break;
            }
            case OpKind::Reshape: {
                if (auto* ga = adj(input_of(n, 0))) accumulate(*ga, g);
                break;
            }
        }
    }
}

// ---------------------------------------------------------------- forward mode

Var CompGraph::tangent_rule(Var out, std::span<const Var> t) {
    // Copy what we need: creating nodes below appends to the tape.
    const Node& n = nodes_[out.id];
    const OpKind op = n.op;
    const std::size_t p0 = n.p0, p1 = n.p1;
    const double s0 = n.s0;
    const std::uint32_t count = n.edge_count;
    std::vector<Var> in(count);
    for (std::uint32_t k = 0; k < count; ++k) in[k] = input_of(n, k);

    auto mask = [this](Var x, auto pred) {
        const DenseArray& v = value(x);
        DenseArray m(v.shape());
        for (std::size_t i = 0; i < v.size(); ++i) m[i] = pred(v[i]);
        return constant(std::move(m));
    };
    const Var ta = count > 0 ? t[0] : Var{};
    const Var tb = count > 1 ? t[1] : Var{};

    switch (op) {
        case OpKind::Constant:
        case OpKind::Input:
        case OpKind::Param:
            return Var{};
        case OpKind::Add:
            if (ta.valid() && tb.valid()) return add(ta, tb);
            return ta.valid() ? ta : tb;
        case OpKind::Sub:
            if (ta.valid() && tb.valid()) return sub(ta, tb);
            return ta.valid() ? ta : neg(tb);
        case OpKind::Mul: {
            Var r{};
            if (ta.valid()) r = mul(ta, in[1]);
            if (tb.valid()) {
                const Var rb = mul(in[0], tb);
                r = r.valid() ? add(r, rb) : rb;
            }
            return r;
        }
        case OpKind::MatMul: {
            Var r{};
            if (ta.valid()) r = matmul(ta, in[1]);
            if (tb.valid()) {
                const Var rb = matmul(in[0], tb);
                r = r.valid() ? add(r, rb) : rb;
            }
            return r;
        }
        case OpKind::Relu:
            return mul(ta, mask(in[0], [](double v) { return v > 0.0 ? 1.0 : 0.0; }));
        case OpKind::Tanh:
            return mul(ta, affine(square(out), -1.0, 1.0));
        case OpKind::Exp:
            return mul(ta, out);
        case OpKind::Log:
            // d log x = dx / x, with 1/x written as exp(-log x).
            return mul(ta, exp(neg(out)));
        case OpKind::Square:
            return scale(mul(in[0], ta), 2.0);
        case OpKind::Sum: return sum(ta);
        case OpKind::SumLast: return sum_last(ta);
        case OpKind::SumFirst: return sum_first(ta);
        case OpKind::Mean: return mean(ta);
        case OpKind::Broadcast: {
            const DenseArray& y = value(out);
            return broadcast(ta, y.rows(), y.cols());
        }
        case OpKind::ConcatCols:
        case OpKind::ConcatRows: {
            std::vector<Var> parts(count);
            for (std::uint32_t k = 0; k < count; ++k) {
                if (t[k].valid()) {
                    parts[k] = t[k];
                } else {
                    const DenseArray& v = value(in[k]);
                    parts[k] = filled(v.rows(), v.cols(), 0.0);
                }
            }
            return op == OpKind::ConcatCols ? concat_cols(parts) : concat_rows(parts);
        }
        case OpKind::SliceCols: return slice_cols(ta, p0, p1);
        case OpKind::SliceRows: return slice_rows(ta, p0, p1);
        case OpKind::Softmax: {
            const DenseArray& y = value(out);
            const Var weighted = sum_last(mul(out, ta));
            return mul(out, sub(ta, broadcast(weighted, y.rows(), y.cols())));
        }
        case OpKind::Affine:
            return scale(ta, s0);
        case OpKind::Min: {
            const DenseArray& a = value(in[0]);
            const DenseArray& b = value(in[1]);
            DenseArray ma(a.shape()), mb(a.shape());
            for (std::size_t i = 0; i < a.size(); ++i) {
                ma[i] = a[i] <= b[i] ? 1.0 : 0.0;
                mb[i] = 1.0 - ma[i];
            }
            Var r{};
            if (ta.valid()) r = mul(ta, constant(std::move(ma)));
            if (tb.valid()) {
                const Var rb = mul(tb, constant(std::move(mb)));
                r = r.valid() ? add(r, rb) : rb;
            }
            return r;
        }
        case OpKind::Abs:
            return mul(ta, mask(in[0], [](double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }));
        case OpKind::Reshape: {
            const DenseArray& y = value(out);
            return reshape(ta, y.rows(), y.cols());
        }
    }
    return Var{};
}

Var CompGraph::jvp(Var input, Var tangent, Var output) {
    require_same_shape("jvp tangent", value(input), value(tangent));
    if (output.id < input.id) {
        const DenseArray& y = value(output);
        return filled(y.rows(), y.cols(), 0.0);
    }
    const std::uint32_t first = input.id;
    const std::uint32_t last = output.id;
    std::vector<Var> tangent_of(last - first + 1);
    tangent_of[0] = tangent;

    std::vector<Var> in_t;
    for (std::uint32_t id = first + 1; id <= last; ++id) {
        const Node& n = nodes_[id];
        in_t.assign(n.edge_count, Var{});
        bool any = false;
        for (std::uint32_t k = 0; k < n.edge_count; ++k) {
            const std::uint32_t src = edges_[n.edge_begin + k];
            if (src >= first && tangent_of[src - first].valid()) {
                in_t[k] = tangent_of[src - first];
                any = true;
            }
        }
        if (any) tangent_of[id - first] = tangent_rule(Var{id}, in_t);
    }
    const Var result = tangent_of[last - first];
    if (result.valid()) return result;
    const DenseArray& y = value(output);
    return filled(y.rows(), y.cols(), 0.0);
}

Var CompGraph::jacobian_column(Var output, Var input, std::size_t j) {
    const DenseArray& x = value(input);
    if (j >= x.cols()) {
        throw std::out_of_range("jacobian_column: index " + std::to_string(j) + " out of range for input shape " +
                                x.shape().str());
    }
    DenseArray seed(x.shape(), 0.0);
    for (std::size_t r = 0; r < x.rows(); ++r) seed[r * x.cols() + j] = 1.0;
    return jvp(input, constant(std::move(seed)), output);
}

}  // namespace fpdrl::diff
