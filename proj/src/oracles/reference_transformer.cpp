#include "fpdrl/oracles/reference_transformer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fpdrl::oracles {

namespace {

using Vec = std::vector<double>;

// y = x W (+ b), W stored row-major in x W orientation.
Vec affine(const Vec& x, const diff::DenseArray& w, const diff::DenseArray* b) {
    Vec y(w.cols(), 0.0);
    for (std::size_t i = 0; i < w.rows(); ++i) {
        for (std::size_t j = 0; j < w.cols(); ++j) y[j] += x[i] * w.at(i, j);
    }
    if (b != nullptr) {
        for (std::size_t j = 0; j < y.size(); ++j) y[j] += (*b)[j];
    }
    return y;
}

}  // namespace

std::vector<double> reference_velocity(const diff::ParamSet& params, const flow::VelocityNetConfig& config,
                                       const std::vector<double>& state,
                                       const std::vector<std::vector<double>>& points,
                                       const std::vector<double>& times, std::size_t query) {
    if (points.size() != times.size() || query >= points.size()) {
        throw std::invalid_argument("reference_velocity: bad token layout");
    }
    auto P = [&](const std::string& name) -> const diff::DenseArray& { return params.value(params.index_of(name)); };

    std::vector<Vec> x;
    x.push_back(affine(state, P("embed.state.w"), &P("embed.state.b")));
    for (std::size_t n = 0; n < points.size(); ++n) {
        Vec tok = affine(points[n], P("embed.point.w"), &P("embed.point.b"));
        const diff::DenseArray emb = flow::time_embedding(times[n], config.time_frequencies);
        const Vec te = affine(Vec(emb.values().begin(), emb.values().end()), P("embed.time.w"), nullptr);
        for (std::size_t j = 0; j < tok.size(); ++j) tok[j] += te[j];
        x.push_back(std::move(tok));
    }

    const std::size_t T = x.size();
    const std::size_t D = config.d_model;
    const std::size_t H = config.heads;
    const std::size_t dh = D / H;
    for (std::size_t l = 0; l < config.layers; ++l) {
        const std::string p = "layer" + std::to_string(l);
        std::vector<Vec> q(T), k(T), v(T);
        for (std::size_t n = 0; n < T; ++n) {
            q[n] = affine(x[n], P(p + ".q.w"), nullptr);
            k[n] = affine(x[n], P(p + ".k.w"), nullptr);
            v[n] = affine(x[n], P(p + ".v.w"), nullptr);
        }
        std::vector<Vec> next(T);
        for (std::size_t n = 0; n < T; ++n) {
            Vec attn(D, 0.0);
            for (std::size_t h = 0; h < H; ++h) {
                Vec score(T, -std::numeric_limits<double>::infinity());
                for (std::size_t m = 0; m <= n; ++m) {
                    double s = 0.0;
                    for (std::size_t c = 0; c < dh; ++c) s += q[n][h * dh + c] * k[m][h * dh + c];
                    score[m] = s / std::sqrt(static_cast<double>(dh));
                }
                const double mx = *std::max_element(score.begin(), score.end());
                double z = 0.0;
                for (auto& s : score) z += (s = std::exp(s - mx));
                for (std::size_t m = 0; m < T; ++m) {
                    for (std::size_t c = 0; c < dh; ++c) attn[h * dh + c] += score[m] / z * v[m][h * dh + c];
                }
            }
            Vec y = x[n];
            const Vec o = affine(attn, P(p + ".o.w"), &P(p + ".o.b"));
            for (std::size_t j = 0; j < D; ++j) y[j] += o[j];
            Vec hid = affine(y, P(p + ".ffn1.w"), &P(p + ".ffn1.b"));
            for (auto& e : hid) e = std::max(e, 0.0);
            const Vec f = affine(hid, P(p + ".ffn2.w"), &P(p + ".ffn2.b"));
            for (std::size_t j = 0; j < D; ++j) y[j] += f[j];
            next[n] = std::move(y);
        }
        x = std::move(next);
    }
    return affine(x[query + 1], P("head.w"), &P("head.b"));
}

}  // namespace fpdrl::oracles
