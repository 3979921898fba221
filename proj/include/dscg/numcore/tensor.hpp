#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "dscg/error.hpp"

namespace dscg {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

/// Dense row-major float64 tensor. Scalars have shape {1}.
///
/// Every constructor that takes data checks that all entries are finite, so a
/// NaN produced anywhere in a computation surfaces as a NumericError at the
/// op that produced it.
class Tensor {
public:
    Tensor() : shape_{1}, data_(1, 0.0) {}

    explicit Tensor(Shape shape) : shape_(std::move(shape)) {
        check_shape();
        data_.assign(shape_size(shape_), 0.0);
    }

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        check_shape();
        if (shape_size(shape_) != data_.size())
            throw DimensionError("tensor: shape " + shape_str(shape_) + " does not match " +
                                 std::to_string(data_.size()) + " values");
        check_finite();
    }

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor vector(std::vector<double> v) {
        const std::size_t n = v.size();
        return Tensor({n}, std::move(v));
    }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return Tensor({rows, cols}, std::move(v));
    }
    static Tensor identity(std::size_t n) {
        Tensor t({n, n});
        for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
        return t;
    }

    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t size() const { return data_.size(); }
    std::size_t rows() const { return shape_.size() == 2 ? shape_[0] : 1; }
    std::size_t cols() const { return shape_.back(); }
    bool is_scalar() const { return data_.size() == 1; }

    std::span<const double> data() const { return data_; }
    /// Mutable view for optimisers and tests; callers are responsible for finiteness.
    std::span<double> mutable_data() { return data_; }
    const std::vector<double>& values() const { return data_; }

    double operator[](std::size_t i) const { return data_[i]; }
    double at(std::size_t r, std::size_t c) const { return data_[r * shape_.back() + c]; }
    double item() const {
        if (data_.size() != 1) throw ContractError("tensor: item() on non-scalar " + shape_str(shape_));
        return data_[0];
    }

    Tensor reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

    bool operator==(const Tensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

private:
    void check_shape() const {
        if (shape_.empty()) throw DimensionError("tensor: empty shape");
        for (auto d : shape_)
            if (d == 0) throw DimensionError("tensor: zero-sized dimension in " + shape_str(shape_));
    }
    void check_finite() const {
        for (std::size_t i = 0; i < data_.size(); ++i)
            if (!std::isfinite(data_[i]))
                throw NumericError("tensor: non-finite value at flat index " + std::to_string(i));
    }

    Shape shape_;
    std::vector<double> data_;
};

} // namespace dscg
