#pragma once

// Dense double-precision inner loops shared by the tensor and metric code.
// Each kernel has a scalar reference and, where the CPU supports it, an
// AVX2+FMA variant. The active table is picked once at first use and can be
// pinned with ALLNC_ISA=scalar|avx2.

#include <cstddef>
#include <string_view>

namespace allnc::kernels {

enum class Isa { scalar, avx2 };

struct KernelTable {
    Isa isa;
    // sum_i x[i] * y[i]
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y[i] += a * x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // x[i] *= a
    void (*scal)(double a, double* x, std::size_t n);
    // sum_i (x[i] - y[i])^2
    double (*sq_dist)(const double* x, const double* y, std::size_t n);
};

const KernelTable& scalar_table();

// Throws std::runtime_error if the variant was not compiled in or the CPU
// lacks the instructions.
const KernelTable& table_for(Isa isa);

bool available(Isa isa);

const KernelTable& active();

// Replaces the process-wide table. Intended for tests and benchmarks.
void set_active(Isa isa);

std::string_view name(Isa isa);

// Row-major GEMM built on the active table. All accumulate into c.
// c(m x n) += a(m x k) * b(k x n)
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// c(m x n) += a(m x k) * b(n x k)^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);
// c(m x n) += a(k x m)^T * b(k x n)
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n);

namespace detail {
double dot_scalar(const double* x, const double* y, std::size_t n);
void axpy_scalar(double a, const double* x, double* y, std::size_t n);
void scal_scalar(double a, double* x, std::size_t n);
double sq_dist_scalar(const double* x, const double* y, std::size_t n);

#if defined(ALLNC_HAVE_AVX2)
double dot_avx2(const double* x, const double* y, std::size_t n);
void axpy_avx2(double a, const double* x, double* y, std::size_t n);
void scal_avx2(double a, double* x, std::size_t n);
double sq_dist_avx2(const double* x, const double* y, std::size_t n);
#endif
}  // namespace detail

}  // namespace allnc::kernels
