#pragma once

#include <cstddef>
#include <cstdint>

#include "allnc/tensor.hpp"

namespace allnc::etf {

/// Simplex equiangular tight frame in R^q with C vertices.
///
/// vertices holds v_c as columns (q x C); rotation is the q x C factor with
/// orthonormal columns that the frame was built from. Columns of vertices
/// are unit-norm and pairwise inner products equal -1/(C-1).
struct EtfFrame {
    Tensor vertices;
    Tensor rotation;
    std::size_t classes = 0;
    std::size_t dim = 0;
};

// Target Gram entry for 0-based class indices: C/(C-1)*[i==j] - 1/(C-1).
// Throws DomainError for C < 2 and ContractError for an index >= C.
double rho(std::size_t i, std::size_t j, std::size_t classes);

// C x C matrix of rho values.
Tensor target_gram(std::size_t classes);

// arccos(-1/(C-1)) in degrees; 96.379... for C = 10.
double optimal_icpa_degrees(std::size_t classes);

// Throws DimensionError if dim < classes and DomainError if classes < 2.
EtfFrame make_etf(std::size_t dim, std::size_t classes, std::uint64_t rotation_seed);

// Largest |<v_i, v_j> - rho(i, j)| over column-normalized columns of a q x C
// matrix. Throws DegenerateInputError on a zero column.
double etf_deviation(const Tensor& vertices);

// Orthonormal columns from a tall matrix by twice-applied modified
// Gram-Schmidt. Throws DegenerateInputError on rank deficiency.
Tensor orthonormalize_columns(const Tensor& m);

}  // namespace allnc::etf
