#pragma once

// Independent reference computations used by the unit and acceptance tests.

#include "leads/autodiff/tensor.hpp"
#include "leads/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace leads::oracle {

// Eigenvalues of a symmetric n x n matrix by cyclic Jacobi rotations.
inline std::vector<double> jacobi_eigenvalues(std::vector<double> a, std::size_t n)
{
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if (off < 1e-30) {
            break;
        }
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) {
                    continue;
                }
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p];
                    const double akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k];
                    const double aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(n);
    for (std::size_t i = 0; i < n; ++i) {
        ev[i] = a[i * n + i];
    }
    std::sort(ev.begin(), ev.end());
    return ev;
}

// Largest singular value of a rows x cols matrix: sqrt of the top eigenvalue of W^T W.
inline double spectral_norm(const std::vector<double>& w, std::size_t rows, std::size_t cols)
{
    std::vector<double> wtw(cols * cols, 0.0);
    for (std::size_t i = 0; i < cols; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            double s = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                s += w[r * cols + i] * w[r * cols + j];
            }
            wtw[i * cols + j] = s;
        }
    }
    const auto ev = jacobi_eigenvalues(wtw, cols);
    return std::sqrt(std::max(ev.back(), 0.0));
}

// exp(A) for a small dense matrix by scaling and squaring with a Taylor core.
inline std::vector<double> expm(std::vector<double> a, std::size_t n)
{
    double norm = 0.0;
    for (double v : a) {
        norm = std::max(norm, std::abs(v));
    }
    int squarings = 0;
    while (norm * static_cast<double>(n) > 0.5) {
        norm *= 0.5;
        ++squarings;
    }
    const double scale = std::ldexp(1.0, -squarings);
    for (double& v : a) {
        v *= scale;
    }
    auto mul = [n](const std::vector<double>& x, const std::vector<double>& y) {
        std::vector<double> z(n * n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t k = 0; k < n; ++k) {
                for (std::size_t j = 0; j < n; ++j) {
                    z[i * n + j] += x[i * n + k] * y[k * n + j];
                }
            }
        }
        return z;
    };
    std::vector<double> result(n * n, 0.0), term(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        result[i * n + i] = 1.0;
        term[i * n + i] = 1.0;
    }
    for (int k = 1; k <= 20; ++k) {
        term = mul(term, a);
        for (double& v : term) {
            v /= k;
        }
        for (std::size_t i = 0; i < n * n; ++i) {
            result[i] += term[i];
        }
    }
    for (int s = 0; s < squarings; ++s) {
        result = mul(result, result);
    }
    return result;
}

inline std::vector<double> matvec(const std::vector<double>& a, const std::vector<double>& x)
{
    const std::size_t n = x.size();
    std::vector<double> y(a.size() / n, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            y[i] += a[i * n + j] * x[j];
        }
    }
    return y;
}

// Central finite difference of a scalar function w.r.t. every entry of x.
inline std::vector<double> fd_gradient(const std::function<double()>& f, std::span<double> x, double h = 1e-6)
{
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double up = f();
        x[i] = keep - h;
        const double down = f();
        x[i] = keep;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

// max_i |a_i - b_i| / max(max_i |b_i|, floor)
inline double rel_err(std::span<const double> a, std::span<const double> b, double floor = 1e-12)
{
    double num = 0.0, den = floor;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num = std::max(num, std::abs(a[i] - b[i]));
        den = std::max(den, std::abs(b[i]));
    }
    return num / den;
}

inline std::vector<double> random_vector(std::size_t n, Rng& rng, double scale = 1.0)
{
    std::vector<double> v(n);
    for (double& e : v) {
        e = scale * rng.normal();
    }
    return v;
}

// Least-squares projection of the stacked (F_1, ..., F_m) onto the subspace
// {(F, ..., F)}, via modified Gram-Schmidt on the columns of the design matrix.
inline std::vector<double> shared_projection(const std::vector<std::vector<double>>& F)
{
    const std::size_t m = F.size();
    const std::size_t p = F[0].size();
    const std::size_t rows = m * p;
    std::vector<std::vector<double>> q(p, std::vector<double>(rows, 0.0));
    for (std::size_t j = 0; j < p; ++j) {
        for (std::size_t e = 0; e < m; ++e) {
            q[j][e * p + j] = 1.0;
        }
        for (std::size_t i = 0; i < j; ++i) {
            double dot = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                dot += q[i][r] * q[j][r];
            }
            for (std::size_t r = 0; r < rows; ++r) {
                q[j][r] -= dot * q[i][r];
            }
        }
        double nrm = 0.0;
        for (double v : q[j]) {
            nrm += v * v;
        }
        for (double& v : q[j]) {
            v /= std::sqrt(nrm);
        }
    }
    std::vector<double> y(rows);
    for (std::size_t e = 0; e < m; ++e) {
        std::copy(F[e].begin(), F[e].end(), y.begin() + static_cast<std::ptrdiff_t>(e * p));
    }
    std::vector<double> proj(rows, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
        double dot = 0.0;
        for (std::size_t r = 0; r < rows; ++r) {
            dot += q[j][r] * y[r];
        }
        for (std::size_t r = 0; r < rows; ++r) {
            proj[r] += dot * q[j][r];
        }
    }
    return {proj.begin(), proj.begin() + static_cast<std::ptrdiff_t>(p)};
}

} // namespace leads::oracle
