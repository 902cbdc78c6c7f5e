#include "fpdrl/diff/params.hpp"

#include <stdexcept>

namespace fpdrl::diff {

std::size_t ParamSet::add(std::string name, DenseArray value) {
    if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name: " + name);
    const std::size_t idx = entries_.size();
    index_.emplace(name, idx);
    DenseArray grad(value.shape(), 0.0);
    entries_.push_back(Entry{std::move(name), std::move(value), std::move(grad)});
    return idx;
}

bool ParamSet::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParamSet::index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) throw std::out_of_range("no parameter named " + std::string(name));
    return it->second;
}

void ParamSet::zero_grads() {
    for (auto& e : entries_) e.grad.fill(0.0);
}

std::size_t ParamSet::parameter_count() const {
    std::size_t n = 0;
    for (const auto& e : entries_) n += e.value.size();
    return n;
}

void ParamSet::copy_values_from(const ParamSet& other) {
    if (other.size() != size()) throw std::invalid_argument("parameter set size mismatch");
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        if (entries_[i].name != other[i].name || !(entries_[i].value.shape() == other[i].value.shape())) {
            throw ShapeError("parameter mismatch at " + entries_[i].name + " vs " + other[i].name);
        }
        entries_[i].value = other[i].value;
    }
}

void ema_update(const ParamSet& online, ParamSet& target, double rate) {
    if (!(rate >= 0.0 && rate <= 1.0)) throw std::invalid_argument("ema rate must lie in [0, 1]");
    if (online.size() != target.size()) throw std::invalid_argument("ema: parameter set size mismatch");
    const double keep = 1.0 - rate;
    for (std::size_t i = 0; i < online.size(); ++i) {
        const auto& src = online[i].value;
        auto& dst = target[i].value;
        if (!(src.shape() == dst.shape())) {
            throw ShapeError("ema: shape " + src.shape().str() + " vs " + dst.shape().str() + " for " +
                             online[i].name);
        }
        for (std::size_t k = 0; k < src.size(); ++k) dst[k] = keep * dst[k] + rate * src[k];
    }
}

}  // namespace fpdrl::diff
