#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace allnc {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles.
///
/// Rank 0 holds a scalar, rank 1 a vector, rank 2 a matrix. Matrix helpers
/// treat a vector of length n as a single 1 x n row.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    Tensor(Shape shape, std::vector<double> values);

    static Tensor scalar(double v);
    static Tensor vector(std::vector<double> values);
    static Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
    static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
    static Tensor identity(std::size_t n);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return values_.size(); }
    bool is_scalar() const noexcept { return values_.size() == 1 && rank() <= 1; }

    std::size_t rows() const noexcept;
    std::size_t cols() const noexcept;

    std::span<double> data() noexcept { return values_; }
    std::span<const double> data() const noexcept { return values_; }
    const std::vector<double>& values() const noexcept { return values_; }

    double& operator[](std::size_t i) { return values_[i]; }
    double operator[](std::size_t i) const { return values_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
    double operator()(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }

    std::span<double> row(std::size_t r) { return {values_.data() + r * cols(), cols()}; }
    std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols(), cols()}; }

    double item() const;
    bool all_finite() const noexcept;
    bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

    // Same values under a new shape with the same element count.
    Tensor reshaped(Shape shape) const;

    friend bool operator==(const Tensor&, const Tensor&) = default;

private:
    Shape shape_{};
    std::vector<double> values_{0.0};
};

// Plain (non-differentiable) dense helpers used by metrics and data code.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor rows_subset(const Tensor& a, std::span<const std::size_t> rows);
double frobenius_norm(const Tensor& a);
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace allnc
