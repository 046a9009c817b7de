#include "leads/simd/kernels.hpp"

namespace leads::simd {
namespace {

void axpy_scalar(std::size_t n, double a, const double* x, double* y)
{
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += a * x[i];
    }
}

double dot_scalar(std::size_t n, const double* x, const double* y)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += x[i] * y[i];
    }
    return s;
}

void mul_acc_scalar(std::size_t n, const double* a, const double* b, double* y)
{
    for (std::size_t i = 0; i < n; ++i) {
        y[i] += a[i] * b[i];
    }
}

double sumsq_scalar(std::size_t n, const double* x)
{
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        s += x[i] * x[i];
    }
    return s;
}

void gemm_nn_scalar(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            axpy_scalar(n, a[i * k + p], b + p * n, c + i * n);
        }
    }
}

void gemm_nt_scalar(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t q = 0; q < k; ++q) {
            c[i * k + q] += dot_scalar(n, a + i * n, b + q * n);
        }
    }
}

void gemm_tn_scalar(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            axpy_scalar(n, a[i * k + p], b + i * n, c + p * n);
        }
    }
}

void laplacian_acc_scalar(std::size_t n, double coef, const double* in, double* out)
{
    for (std::size_t r = 0; r < n; ++r) {
        const double* up = in + ((r + n - 1) % n) * n;
        const double* mid = in + r * n;
        const double* down = in + ((r + 1) % n) * n;
        double* o = out + r * n;
        for (std::size_t c = 0; c < n; ++c) {
            const std::size_t left = (c + n - 1) % n;
            const std::size_t right = (c + 1) % n;
            o[c] += coef * (up[c] + down[c] + mid[left] + mid[right] - 4.0 * mid[c]);
        }
    }
}

} // namespace

const KernelTable& scalar_kernels()
{
    static const KernelTable table{
        "scalar", axpy_scalar, dot_scalar, mul_acc_scalar, sumsq_scalar,
        gemm_nn_scalar, gemm_nt_scalar, gemm_tn_scalar, laplacian_acc_scalar,
    };
    return table;
}

} // namespace leads::simd
