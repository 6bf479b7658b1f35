#include "allnc/etf.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "allnc/errors.hpp"
#include "allnc/kernels.hpp"

namespace allnc::etf {

double rho(std::size_t i, std::size_t j, std::size_t classes) {
    if (classes < 2) throw DomainError("rho: need at least 2 classes, got " + std::to_string(classes));
    if (i >= classes || j >= classes) throw ContractError("rho: class index out of range");
    const double c = static_cast<double>(classes);
    return (i == j ? c / (c - 1.0) : 0.0) - 1.0 / (c - 1.0);
}

Tensor target_gram(std::size_t classes) {
    Tensor g = Tensor::matrix(classes, classes);
    for (std::size_t i = 0; i < classes; ++i)
        for (std::size_t j = 0; j < classes; ++j) g(i, j) = rho(i, j, classes);
    return g;
}

double optimal_icpa_degrees(std::size_t classes) {
    return std::acos(rho(0, 1, classes)) * 180.0 / std::numbers::pi;
}

Tensor orthonormalize_columns(const Tensor& m) {
    const std::size_t q = m.rows(), c = m.cols();
    // Work on columns as contiguous rows of the transpose.
    Tensor cols = transpose(m);
    const auto& k = kernels::active();
    for (std::size_t j = 0; j < c; ++j) {
        double* vj = cols.row(j).data();
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t p = 0; p < j; ++p) {
                const double* vp = cols.row(p).data();
                k.axpy(-k.dot(vp, vj, q), vp, vj, q);
            }
        }
        const double nrm = std::sqrt(k.dot(vj, vj, q));
        if (!(nrm > 1e-12)) throw DegenerateInputError("orthonormalize_columns: column " + std::to_string(j) + " is dependent");
        k.scal(1.0 / nrm, vj, q);
    }
    return transpose(cols);
}

EtfFrame make_etf(std::size_t dim, std::size_t classes, std::uint64_t rotation_seed) {
    if (classes < 2) throw DomainError("make_etf: need at least 2 classes");
    if (dim < classes) {
        throw DimensionError("make_etf: dimension " + std::to_string(dim) + " is smaller than class count " +
                             std::to_string(classes));
    }
    std::mt19937_64 rng(rotation_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Tensor gaussian = Tensor::matrix(dim, classes);
    for (double& v : gaussian.data()) v = normal(rng);

    EtfFrame frame;
    frame.classes = classes;
    frame.dim = dim;
    frame.rotation = orthonormalize_columns(gaussian);

    // V = sqrt(C/(C-1)) * U (I - 11^T / C): subtract each row's mean, then scale.
    const double c = static_cast<double>(classes);
    const double s = std::sqrt(c / (c - 1.0));
    frame.vertices = frame.rotation;
    for (std::size_t r = 0; r < dim; ++r) {
        auto row = frame.vertices.row(r);
        double mean = 0.0;
        for (double v : row) mean += v;
        mean /= c;
        for (double& v : row) v = s * (v - mean);
    }
    return frame;
}

double etf_deviation(const Tensor& vertices) {
    const std::size_t c = vertices.cols();
    Tensor cols = transpose(vertices);
    const auto& k = kernels::active();
    for (std::size_t j = 0; j < c; ++j) {
        const double nrm = std::sqrt(k.dot(cols.row(j).data(), cols.row(j).data(), cols.cols()));
        if (nrm == 0.0) throw DegenerateInputError("etf_deviation: column " + std::to_string(j) + " is zero");
        k.scal(1.0 / nrm, cols.row(j).data(), cols.cols());
    }
    double worst = 0.0;
    for (std::size_t i = 0; i < c; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
            const double g = k.dot(cols.row(i).data(), cols.row(j).data(), cols.cols());
            worst = std::max(worst, std::abs(g - rho(i, j, c)));
        }
    }
    return worst;
}

}  // namespace allnc::etf
