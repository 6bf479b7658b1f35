#include "allnc/tensor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "allnc/errors.hpp"
#include "allnc/kernels.hpp"

namespace allnc {

std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), values_(shape_size(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (shape_size(shape_) != values_.size()) {
        throw DimensionError("tensor shape " + shape_string(shape_) + " does not match " +
                             std::to_string(values_.size()) + " values");
    }
}

Tensor Tensor::scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }

Tensor Tensor::vector(std::vector<double> values) {
    const std::size_t n = values.size();
    return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, double fill) { return Tensor(Shape{rows, cols}, fill); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
        if (row.size() != c) throw DimensionError("ragged matrix literal");
        v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(v));
}

Tensor Tensor::identity(std::size_t n) {
    Tensor t = matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
}

std::size_t Tensor::rows() const noexcept {
    if (rank() == 2) return shape_[0];
    return 1;
}

std::size_t Tensor::cols() const noexcept {
    if (rank() == 2) return shape_[1];
    if (rank() == 1) return shape_[0];
    return 1;
}

double Tensor::item() const {
    if (values_.size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape_));
    return values_[0];
}

bool Tensor::all_finite() const noexcept {
    for (double v : values_)
        if (!std::isfinite(v)) return false;
    return true;
}

Tensor Tensor::reshaped(Shape shape) const { return Tensor(std::move(shape), values_); }

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) {
        throw DimensionError("matmul: " + shape_string(a.shape()) + " x " + shape_string(b.shape()));
    }
    Tensor out = Tensor::matrix(a.rows(), b.cols());
    kernels::gemm_nn(a.data().data(), b.data().data(), out.data().data(), a.rows(), a.cols(), b.cols());
    return out;
}

Tensor transpose(const Tensor& a) {
    Tensor out = Tensor::matrix(a.cols(), a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
    return out;
}

Tensor rows_subset(const Tensor& a, std::span<const std::size_t> rows) {
    Tensor out = Tensor::matrix(rows.size(), a.cols());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        auto src = a.row(rows[r]);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

double frobenius_norm(const Tensor& a) {
    const auto d = a.data();
    return std::sqrt(kernels::active().dot(d.data(), d.data(), d.size()));
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (a.size() != b.size()) throw DimensionError("max_abs_diff: size mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace allnc
