#include "leads/simd/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#include <immintrin.h>
#define LEADS_HAVE_AVX2_TU 1
#define LEADS_AVX2 __attribute__((target("avx2,fma")))
#endif

namespace leads::simd {

#ifdef LEADS_HAVE_AVX2_TU
namespace {

LEADS_AVX2 inline double hsum(__m256d v)
{
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

LEADS_AVX2 void axpy_avx2(std::size_t n, double a, const double* x, double* y)
{
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256d y0 = _mm256_loadu_pd(y + i);
        __m256d y1 = _mm256_loadu_pd(y + i + 4);
        y0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), y0);
        y1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i + 4), y1);
        _mm256_storeu_pd(y + i, y0);
        _mm256_storeu_pd(y + i + 4, y1);
    }
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) {
        y[i] += a * x[i];
    }
}

LEADS_AVX2 double dot_avx2(std::size_t n, const double* x, const double* y)
{
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) {
        s += x[i] * y[i];
    }
    return s;
}

LEADS_AVX2 void mul_acc_avx2(std::size_t n, const double* a, const double* b, double* y)
{
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d r = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, r);
    }
    for (; i < n; ++i) {
        y[i] += a[i] * b[i];
    }
}

LEADS_AVX2 double sumsq_avx2(std::size_t n, const double* x)
{
    return dot_avx2(n, x, x);
}

// c[0..n) += sum_p alpha[p * astride] * rows[p * n + .], columns in blocks of 16
LEADS_AVX2 void row_combination(std::size_t k, std::size_t n, const double* alpha, std::size_t astride,
                                const double* rows, double* c)
{
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) {
        __m256d c0 = _mm256_loadu_pd(c + j);
        __m256d c1 = _mm256_loadu_pd(c + j + 4);
        __m256d c2 = _mm256_loadu_pd(c + j + 8);
        __m256d c3 = _mm256_loadu_pd(c + j + 12);
        for (std::size_t p = 0; p < k; ++p) {
            const __m256d va = _mm256_set1_pd(alpha[p * astride]);
            const double* r = rows + p * n + j;
            c0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(r), c0);
            c1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(r + 4), c1);
            c2 = _mm256_fmadd_pd(va, _mm256_loadu_pd(r + 8), c2);
            c3 = _mm256_fmadd_pd(va, _mm256_loadu_pd(r + 12), c3);
        }
        _mm256_storeu_pd(c + j, c0);
        _mm256_storeu_pd(c + j + 4, c1);
        _mm256_storeu_pd(c + j + 8, c2);
        _mm256_storeu_pd(c + j + 12, c3);
    }
    for (; j + 4 <= n; j += 4) {
        __m256d c0 = _mm256_loadu_pd(c + j);
        for (std::size_t p = 0; p < k; ++p) {
            c0 = _mm256_fmadd_pd(_mm256_set1_pd(alpha[p * astride]), _mm256_loadu_pd(rows + p * n + j), c0);
        }
        _mm256_storeu_pd(c + j, c0);
    }
    for (; j < n; ++j) {
        double s = c[j];
        for (std::size_t p = 0; p < k; ++p) {
            s += alpha[p * astride] * rows[p * n + j];
        }
        c[j] = s;
    }
}

LEADS_AVX2 void gemm_nn_avx2(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i) {
        row_combination(k, n, a + i * k, 1, b, c + i * n);
    }
}

LEADS_AVX2 void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a, const double* b, double* c)
{
    for (std::size_t i = 0; i < m; ++i) {
        const double* x = a + i * n;
        std::size_t q = 0;
        for (; q + 4 <= k; q += 4) {
            const double* b0 = b + q * n;
            const double* b1 = b0 + n;
            const double* b2 = b1 + n;
            const double* b3 = b2 + n;
            __m256d s0 = _mm256_setzero_pd();
            __m256d s1 = _mm256_setzero_pd();
            __m256d s2 = _mm256_setzero_pd();
            __m256d s3 = _mm256_setzero_pd();
            std::size_t j = 0;
            for (; j + 4 <= n; j += 4) {
                const __m256d vx = _mm256_loadu_pd(x + j);
                s0 = _mm256_fmadd_pd(vx, _mm256_loadu_pd(b0 + j), s0);
                s1 = _mm256_fmadd_pd(vx, _mm256_loadu_pd(b1 + j), s1);
                s2 = _mm256_fmadd_pd(vx, _mm256_loadu_pd(b2 + j), s2);
                s3 = _mm256_fmadd_pd(vx, _mm256_loadu_pd(b3 + j), s3);
            }
            double t0 = hsum(s0), t1 = hsum(s1), t2 = hsum(s2), t3 = hsum(s3);
            for (; j < n; ++j) {
                t0 += x[j] * b0[j];
                t1 += x[j] * b1[j];
                t2 += x[j] * b2[j];
                t3 += x[j] * b3[j];
            }
            c[i * k + q] += t0;
            c[i * k + q + 1] += t1;
            c[i * k + q + 2] += t2;
            c[i * k + q + 3] += t3;
        }
        for (; q < k; ++q) {
            c[i * k + q] += dot_avx2(n, x, b + q * n);
        }
    }
}

LEADS_AVX2 void gemm_tn_avx2(std::size_t m, std::size_t k, std::size_t n, const double* a, const double* b, double* c)
{
    for (std::size_t p = 0; p < k; ++p) {
        row_combination(m, n, a + p, k, b, c + p * n);
    }
}

LEADS_AVX2 void laplacian_acc_avx2(std::size_t n, double coef, const double* in, double* out)
{
    const __m256d vc = _mm256_set1_pd(coef);
    const __m256d four = _mm256_set1_pd(4.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double* up = in + ((r + n - 1) % n) * n;
        const double* mid = in + r * n;
        const double* down = in + ((r + 1) % n) * n;
        double* o = out + r * n;

        auto edge = [&](std::size_t c) {
            const std::size_t left = (c + n - 1) % n;
            const std::size_t right = (c + 1) % n;
            o[c] += coef * (up[c] + down[c] + mid[left] + mid[right] - 4.0 * mid[c]);
        };

        edge(0);
        std::size_t c = 1;
        // interior columns: left/right neighbours are contiguous loads
        for (; c + 4 < n; c += 4) {
            __m256d s = _mm256_add_pd(_mm256_loadu_pd(up + c), _mm256_loadu_pd(down + c));
            s = _mm256_add_pd(s, _mm256_loadu_pd(mid + c - 1));
            s = _mm256_add_pd(s, _mm256_loadu_pd(mid + c + 1));
            s = _mm256_fnmadd_pd(four, _mm256_loadu_pd(mid + c), s);
            _mm256_storeu_pd(o + c, _mm256_fmadd_pd(vc, s, _mm256_loadu_pd(o + c)));
        }
        for (; c < n; ++c) {
            edge(c);
        }
    }
}

bool host_supports_avx2()
{
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
}

} // namespace

const KernelTable* avx2_kernels()
{
    static const KernelTable table{
        "avx2", axpy_avx2, dot_avx2, mul_acc_avx2, sumsq_avx2,
        gemm_nn_avx2, gemm_nt_avx2, gemm_tn_avx2, laplacian_acc_avx2,
    };
    static const bool supported = host_supports_avx2();
    return supported ? &table : nullptr;
}

#else

const KernelTable* avx2_kernels() { return nullptr; }

#endif

} // namespace leads::simd
