#pragma once

// Data-parallel inner loops shared by the autodiff ops and the ground-truth
// simulators. Each kernel has a portable scalar reference and, on x86-64, an
// AVX2+FMA variant. The active table is picked once at startup from CPUID and
// can be pinned with LEADS_SIMD=scalar|avx2.

#include <cstddef>
#include <span>
#include <string_view>

namespace leads::simd {

struct KernelTable {
    std::string_view name;

    // y += a * x
    void (*axpy)(std::size_t n, double a, const double* x, double* y);
    // sum_i x[i] * y[i]
    double (*dot)(std::size_t n, const double* x, const double* y);
    // y += a[i] * b[i]
    void (*mul_acc)(std::size_t n, const double* a, const double* b, double* y);
    // sum_i x[i]^2
    double (*sumsq)(std::size_t n, const double* x);
    // Row-major products accumulated into C.
    // C[m,n] += A[m,k] B[k,n]
    void (*gemm_nn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
    // C[m,k] += A[m,n] B[k,n]^T
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c);
    // C[k,n] += A[m,k]^T B[m,n]
    void (*gemm_tn)(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c);
    // out += coef * (periodic 5-point Laplacian of an n x n field, unit spacing)
    void (*laplacian_acc)(std::size_t n, double coef, const double* in, double* out);
};

const KernelTable& scalar_kernels();

// nullptr when the build or the host CPU lacks AVX2/FMA.
const KernelTable* avx2_kernels();

// The table selected for this process.
const KernelTable& active();

// Overrides the selection (tests and benchmarks). Returns the previous table.
const KernelTable& set_active(const KernelTable& table);

// Thin wrappers over active() so call sites read like ordinary functions.
inline void axpy(double a, std::span<const double> x, std::span<double> y)
{
    active().axpy(x.size(), a, x.data(), y.data());
}

inline double dot(std::span<const double> x, std::span<const double> y)
{
    return active().dot(x.size(), x.data(), y.data());
}

inline double sumsq(std::span<const double> x) { return active().sumsq(x.size(), x.data()); }

} // namespace leads::simd
