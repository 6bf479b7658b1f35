#include "allnc/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace allnc::kernels {

namespace {

constexpr KernelTable kScalar{Isa::scalar, detail::dot_scalar, detail::axpy_scalar, detail::scal_scalar,
                              detail::sq_dist_scalar};

#if defined(ALLNC_HAVE_AVX2)
constexpr KernelTable kAvx2{Isa::avx2, detail::dot_avx2, detail::axpy_avx2, detail::scal_avx2,
                            detail::sq_dist_avx2};
#endif

bool cpu_has_avx2() {
#if defined(ALLNC_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

const KernelTable* pick_default() {
    if (const char* env = std::getenv("ALLNC_ISA")) {
        const std::string want(env);
        if (want == "scalar") return &kScalar;
        if (want == "avx2") return &table_for(Isa::avx2);
        throw std::runtime_error("ALLNC_ISA must be 'scalar' or 'avx2', got '" + want + "'");
    }
    return available(Isa::avx2) ? &table_for(Isa::avx2) : &kScalar;
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> current{pick_default()};
    return current;
}

}  // namespace

const KernelTable& scalar_table() { return kScalar; }

bool available(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return true;
        case Isa::avx2:
            return cpu_has_avx2();
    }
    return false;
}

const KernelTable& table_for(Isa isa) {
    if (!available(isa)) {
        throw std::runtime_error("kernel variant '" + std::string(name(isa)) + "' is not available on this CPU");
    }
#if defined(ALLNC_HAVE_AVX2)
    if (isa == Isa::avx2) return kAvx2;
#endif
    return kScalar;
}

const KernelTable& active() { return *slot().load(std::memory_order_acquire); }

void set_active(Isa isa) { slot().store(&table_for(isa), std::memory_order_release); }

std::string_view name(Isa isa) {
    switch (isa) {
        case Isa::scalar:
            return "scalar";
        case Isa::avx2:
            return "avx2";
    }
    return "unknown";
}

void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const auto& t = active();
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        const double* arow = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double s = arow[p];
            if (s != 0.0) t.axpy(s, b + p * n, crow, n);
        }
    }
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const auto& t = active();
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += t.dot(arow, b + j * k, k);
    }
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    const auto& t = active();
    for (std::size_t p = 0; p < k; ++p) {
        const double* arow = a + p * m;
        const double* brow = b + p * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double s = arow[i];
            if (s != 0.0) t.axpy(s, brow, c + i * n, n);
        }
    }
}

}  // namespace allnc::kernels
