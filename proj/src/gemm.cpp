#include "gemm.hpp"

#include <cstdlib>

#ifdef SPIGAN_USE_OPENBLAS
#include <cblas.h>
#endif

namespace spigan::detail {

#ifdef SPIGAN_USE_OPENBLAS

namespace {

// OpenBLAS picks its kernels from CPUID. Some virtualized CPUs report an
// unknown model and OpenBLAS falls back to the pre-SSE3 "Prescott" kernels,
// several times slower than the hardware allows. When the caller has not
// pinned a core type, select one from the feature flags. This must run before
// OpenBLAS's own initializer, hence the priority constructor and the static
// link against libopenblas.a.
__attribute__((constructor(101))) void pick_blas_core_type() {
#if defined(__x86_64__)
    if (std::getenv("OPENBLAS_CORETYPE") == nullptr) {
        __builtin_cpu_init();
        if (__builtin_cpu_supports("avx512f")) {
            setenv("OPENBLAS_CORETYPE", "SKYLAKEX", 0);
        } else if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
            setenv("OPENBLAS_CORETYPE", "HASWELL", 0);
        }
    }
#endif
}

// Math stays single-threaded: training is sequential per run and ablation
// parallelism is process-level.
struct BlasThreadInit {
    BlasThreadInit() { openblas_set_num_threads(1); }
};

const BlasThreadInit blas_thread_init_once{};

} // namespace

void dgemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
           double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
           double beta, double* c, std::size_t ldc) {
    cblas_dgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans,
                trans_b ? CblasTrans : CblasNoTrans, static_cast<int>(m), static_cast<int>(n),
                static_cast<int>(k), alpha, a, static_cast<int>(lda), b, static_cast<int>(ldb),
                beta, c, static_cast<int>(ldc));
}

#else // portable fallback

void dgemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k,
           double alpha, const double* a, std::size_t lda, const double* b, std::size_t ldb,
           double beta, double* c, std::size_t ldc) {
    auto at = [&](std::size_t i, std::size_t p) { return trans_a ? a[p * lda + i] : a[i * lda + p]; };
    auto bt = [&](std::size_t p, std::size_t j) { return trans_b ? b[j * ldb + p] : b[p * ldb + j]; };
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            double acc = 0.0;
            for (std::size_t p = 0; p < k; ++p) acc += at(i, p) * bt(p, j);
            c[i * ldc + j] = alpha * acc + (beta == 0.0 ? 0.0 : beta * c[i * ldc + j]);
        }
    }
}

#endif

} // namespace spigan::detail
