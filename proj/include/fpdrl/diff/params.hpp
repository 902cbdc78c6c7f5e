#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "fpdrl/diff/dense_array.hpp"

namespace fpdrl::diff {

/// Named, ordered collection of trainable arrays with matched gradient storage.
class ParamSet {
public:
    struct Entry {
        std::string name;
        DenseArray value;
        DenseArray grad;
    };

    /// Adds an entry and returns its index. Names must be unique.
    std::size_t add(std::string name, DenseArray value);

    std::size_t size() const { return entries_.size(); }
    bool contains(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;

    Entry& operator[](std::size_t i) { return entries_[i]; }
    const Entry& operator[](std::size_t i) const { return entries_[i]; }
    DenseArray& value(std::size_t i) { return entries_[i].value; }
    const DenseArray& value(std::size_t i) const { return entries_[i].value; }

    auto begin() { return entries_.begin(); }
    auto end() { return entries_.end(); }
    auto begin() const { return entries_.begin(); }
    auto end() const { return entries_.end(); }

    void zero_grads();
    std::size_t parameter_count() const;

    /// Copies values from a set with identical names and shapes.
    void copy_values_from(const ParamSet& other);

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// target <- (1 - rate) * target + rate * online, entry by entry.
void ema_update(const ParamSet& online, ParamSet& target, double rate);

}  // namespace fpdrl::diff
