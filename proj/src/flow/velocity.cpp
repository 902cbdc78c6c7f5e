#include "fpdrl/flow/velocity.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fpdrl::flow {

void VelocityNetConfig::validate() const {
    auto positive = [](std::size_t v, const char* name) {
        if (v == 0) throw std::invalid_argument(std::string(name) + " must be positive");
    };
    positive(action_dim, "action_dim");
    positive(state_dim, "state_dim");
    positive(d_model, "d_model");
    positive(heads, "heads");
    positive(layers, "layers");
    positive(flow_steps, "flow_steps");
    positive(time_frequencies, "time_frequencies");
    if (d_model % heads != 0) {
        throw std::invalid_argument("d_model (" + std::to_string(d_model) + ") must be divisible by heads (" +
                                    std::to_string(heads) + ")");
    }
}

DenseArray time_embedding(double t, std::size_t frequencies) {
    DenseArray e = DenseArray::matrix(1, 2 * frequencies);
    const double span = std::log(1000.0);
    for (std::size_t k = 0; k < frequencies; ++k) {
        const double w = frequencies == 1 ? 1.0 : std::exp(span * static_cast<double>(k) / (frequencies - 1));
        e[k] = std::sin(w * t);
        e[frequencies + k] = std::cos(w * t);
    }
    return e;
}

TransformerVelocity::TransformerVelocity(ParamSet& params, const VelocityNetConfig& config, Rng& init_rng)
    : config_(config) {
    config_.validate();
    const std::size_t D = config_.d_model;
    const std::size_t F = config_.ffn();
    state_embed_ = nn::Dense::create(params, "embed.state", config_.state_dim, D, init_rng);
    point_w_ = params.add("embed.point.w", nn::he_uniform(config_.action_dim, D, init_rng));
    time_w_ = params.add("embed.time.w", nn::he_uniform(2 * config_.time_frequencies, D, init_rng));
    point_b_ = params.add("embed.point.b", DenseArray::matrix(1, D));
    for (std::size_t l = 0; l < config_.layers; ++l) {
        const std::string p = "layer" + std::to_string(l);
        Layer layer;
        layer.wq = params.add(p + ".q.w", nn::he_uniform(D, D, init_rng));
        layer.wk = params.add(p + ".k.w", nn::he_uniform(D, D, init_rng));
        layer.wv = params.add(p + ".v.w", nn::he_uniform(D, D, init_rng));
        layer.out = nn::Dense::create(params, p + ".o", D, D, init_rng);
        layer.ffn1 = nn::Dense::create(params, p + ".ffn1", D, F, init_rng);
        layer.ffn2 = nn::Dense::create(params, p + ".ffn2", F, D, init_rng);
        layers_.push_back(layer);
    }
    head_ = nn::Dense::create(params, "head", D, config_.action_dim, init_rng, /*zero_init=*/true);
}

class TransformerSession final : public FieldSession {
public:
    TransformerSession(const TransformerVelocity& net, CompGraph& g, Var states, nn::Binding bind)
        : net_(net), g_(g), bind_(bind) {
        const auto& cfg = net_.config_;
        const DenseArray& s = g_.value(states);
        if (s.cols() != cfg.state_dim) {
            throw diff::ShapeError("velocity: state has " + std::to_string(s.cols()) + " features, expected " +
                                   std::to_string(cfg.state_dim));
        }
        batch_ = s.rows();
        const std::size_t D = cfg.d_model;
        head_dim_ = D / cfg.heads;
        head_sum_scale_ = 1.0 / std::sqrt(static_cast<double>(head_dim_));
        // Parameters are bound once per session and shared by all tokens.
        for (const auto& layer : net_.layers_) {
            BoundLayer b;
            b.wq = bind_(g_, layer.wq);
            b.wk = bind_(g_, layer.wk);
            b.wv = bind_(g_, layer.wv);
            b.wo = bind_(g_, layer.out.w);
            b.bo = g_.broadcast(bind_(g_, layer.out.b), batch_, D);
            b.w1 = bind_(g_, layer.ffn1.w);
            b.b1 = g_.broadcast(bind_(g_, layer.ffn1.b), batch_, cfg.ffn());
            b.w2 = bind_(g_, layer.ffn2.w);
            b.b2 = g_.broadcast(bind_(g_, layer.ffn2.b), batch_, D);
            bound_.push_back(b);
        }
        point_w_ = bind_(g_, net_.point_w_);
        time_w_ = bind_(g_, net_.time_w_);
        point_b_ = bind_(g_, net_.point_b_);
        head_w_ = bind_(g_, net_.head_.w);
        head_b_ = g_.broadcast(bind_(g_, net_.head_.b), batch_, cfg.action_dim);
        keys_.resize(cfg.layers);
        values_.resize(cfg.layers);

        advance(net_.state_embed_.apply(g_, states, bind_));
    }

    Var push(Var point, double t) override {
        const auto& cfg = net_.config_;
        const DenseArray& p = g_.value(point);
        if (p.cols() != cfg.action_dim || p.rows() != batch_) {
            throw diff::ShapeError("velocity: point has shape " + p.shape().str() + ", expected [" +
                                   std::to_string(batch_) + ", " + std::to_string(cfg.action_dim) + "]");
        }
        const Var time_row = g_.matmul(g_.constant(time_embedding(t, cfg.time_frequencies)), time_w_);
        const Var token =
            g_.add(g_.matmul(point, point_w_), g_.broadcast(g_.add(time_row, point_b_), batch_, cfg.d_model));
        const Var h = advance(token);
        return g_.add(g_.matmul(h, head_w_), head_b_);
    }

private:
    struct BoundLayer {
        Var wq, wk, wv, wo, bo, w1, b1, w2, b2;
    };

    // Runs one new token through every layer, appending its keys/values.
    Var advance(Var x) {
        const auto& cfg = net_.config_;
        const std::size_t rows = batch_ * cfg.heads;
        for (std::size_t l = 0; l < bound_.size(); ++l) {
            const BoundLayer& b = bound_[l];
            keys_[l].push_back(g_.reshape(g_.matmul(x, b.wk), rows, head_dim_));
            values_[l].push_back(g_.reshape(g_.matmul(x, b.wv), rows, head_dim_));
            const Var q = g_.reshape(g_.matmul(x, b.wq), rows, head_dim_);

            std::vector<Var> scores;
            scores.reserve(keys_[l].size());
            for (Var k : keys_[l]) scores.push_back(g_.scale(g_.sum_last(g_.mul(q, k)), head_sum_scale_));
            const Var weights = g_.softmax(g_.concat_cols(scores));
            Var mixed{};
            for (std::size_t j = 0; j < values_[l].size(); ++j) {
                const Var w = g_.broadcast(g_.slice_cols(weights, j, j + 1), rows, head_dim_);
                const Var term = g_.mul(w, values_[l][j]);
                mixed = mixed.valid() ? g_.add(mixed, term) : term;
            }
            const Var attn = g_.reshape(mixed, batch_, cfg.d_model);
            x = g_.add(x, g_.add(g_.matmul(attn, b.wo), b.bo));
            const Var hidden = g_.relu(g_.add(g_.matmul(x, b.w1), b.b1));
            x = g_.add(x, g_.add(g_.matmul(hidden, b.w2), b.b2));
        }
        return x;
    }

    const TransformerVelocity& net_;
    CompGraph& g_;
    nn::Binding bind_;
    std::size_t batch_ = 0;
    std::size_t head_dim_ = 0;
    double head_sum_scale_ = 1.0;
    std::vector<BoundLayer> bound_;
    Var point_w_, time_w_, point_b_, head_w_, head_b_;
    std::vector<std::vector<Var>> keys_;
    std::vector<std::vector<Var>> values_;
};

std::unique_ptr<FieldSession> TransformerVelocity::begin(CompGraph& g, Var states, nn::Binding bind) const {
    return std::make_unique<TransformerSession>(*this, g, states, bind);
}

}  // namespace fpdrl::flow
