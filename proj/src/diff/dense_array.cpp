#include "fpdrl/diff/dense_array.hpp"

#include <algorithm>
#include <cmath>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fpdrl::diff {

namespace {

#if defined(__GLIBC__)
// Graph temporaries of a few MB are allocated and freed many times per
// update. Keeping them on the heap instead of fresh mmaps avoids refaulting
// every page on each allocation.
const bool kHeapTuned = [] {
    mallopt(M_MMAP_THRESHOLD, 256 << 20);
    mallopt(M_TRIM_THRESHOLD, 512 << 20);
    return true;
}();
#endif

void check_extents(std::span<const std::size_t> extents) {
    if (extents.empty() || extents.size() > Shape::kMaxRank) {
        throw ShapeError("shape rank must be in [1, 4], got " + std::to_string(extents.size()));
    }
    for (std::size_t e : extents) {
        if (e == 0) throw ShapeError("shape extents must be positive");
    }
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> extents)
    : Shape(std::span<const std::size_t>(extents.begin(), extents.size())) {}

Shape::Shape(std::span<const std::size_t> extents) {
    check_extents(extents);
    rank_ = extents.size();
    std::copy(extents.begin(), extents.end(), ext_.begin());
}

std::size_t Shape::numel() const {
    if (rank_ == 0) return 0;
    std::size_t n = 1;
    for (std::size_t i = 0; i < rank_; ++i) n *= ext_[i];
    return n;
}

std::size_t Shape::rows() const {
    if (rank_ <= 1) return rank_;
    std::size_t n = 1;
    for (std::size_t i = 0; i + 1 < rank_; ++i) n *= ext_[i];
    return n;
}

std::size_t Shape::cols() const { return rank_ == 0 ? 0 : ext_[rank_ - 1]; }

std::string Shape::str() const {
    std::string s = "[";
    for (std::size_t i = 0; i < rank_; ++i) {
        if (i) s += ", ";
        s += std::to_string(ext_[i]);
    }
    return s + "]";
}

bool operator==(const Shape& a, const Shape& b) {
    if (a.rank_ != b.rank_) return false;
    for (std::size_t i = 0; i < a.rank_; ++i) {
        if (a.ext_[i] != b.ext_[i]) return false;
    }
    return true;
}

DenseArray::DenseArray(Shape shape, double fill) : shape_(shape), values_(shape.numel(), fill) {}

DenseArray::DenseArray(Shape shape, std::vector<double> values) : shape_(shape), values_(std::move(values)) {
    if (values_.size() != shape_.numel()) {
        throw ShapeError("value count " + std::to_string(values_.size()) + " does not match shape " +
                         shape_.str());
    }
}

DenseArray DenseArray::row(std::vector<double> values) {
    const std::size_t n = values.size();
    return DenseArray(Shape{1, n}, std::move(values));
}

double DenseArray::item() const {
    if (values_.size() != 1) throw ShapeError("item() on array of shape " + shape_.str());
    return values_[0];
}

void DenseArray::fill(double v) { std::fill(values_.begin(), values_.end(), v); }

bool DenseArray::all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace fpdrl::diff
