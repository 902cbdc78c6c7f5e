#pragma once

#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace fpdrl::diff {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// List of positive extents, stored inline (rank <= 4).
class Shape {
public:
    static constexpr std::size_t kMaxRank = 4;

    Shape() = default;
    Shape(std::initializer_list<std::size_t> extents);
    explicit Shape(std::span<const std::size_t> extents);

    std::size_t rank() const { return rank_; }
    std::size_t operator[](std::size_t i) const { return ext_[i]; }
    std::size_t numel() const;

    /// Rank-2 view: a rank-1 shape {n} is read as 1 x n.
    std::size_t rows() const;
    std::size_t cols() const;

    std::string str() const;

    friend bool operator==(const Shape& a, const Shape& b);

private:
    std::array<std::size_t, kMaxRank> ext_{};
    std::size_t rank_ = 0;
};

/// Dense row-major fp64 array.
class DenseArray {
public:
    DenseArray() = default;
    explicit DenseArray(Shape shape, double fill = 0.0);
    DenseArray(Shape shape, std::vector<double> values);

    static DenseArray matrix(std::size_t rows, std::size_t cols, double fill = 0.0) {
        return DenseArray(Shape{rows, cols}, fill);
    }
    static DenseArray scalar(double v) { return DenseArray(Shape{1, 1}, v); }
    /// 1 x n row vector.
    static DenseArray row(std::vector<double> values);

    const Shape& shape() const { return shape_; }
    std::size_t size() const { return values_.size(); }
    std::size_t rows() const { return shape_.rows(); }
    std::size_t cols() const { return shape_.cols(); }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }
    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    /// The single value of a one-element array.
    double item() const;

    void fill(double v);
    bool all_finite() const;

    friend bool operator==(const DenseArray& a, const DenseArray& b) {
        return a.shape_ == b.shape_ && a.values_ == b.values_;
    }

private:
    Shape shape_;
    std::vector<double> values_;
};

}  // namespace fpdrl::diff
