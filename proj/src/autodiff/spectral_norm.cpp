#include "leads/autodiff/spectral_norm.hpp"

#include "leads/error.hpp"
#include "leads/rng.hpp"
#include "leads/simd/kernels.hpp"

#include <cmath>

namespace leads::ad {

PowerIterState PowerIterState::random(std::size_t rows, std::uint64_t seed)
{
    Rng rng = Rng::derive(seed, {0x5eed});
    PowerIterState s;
    s.u.resize(rows);
    double norm2 = 0.0;
    while (norm2 == 0.0) {
        for (auto& x : s.u) {
            x = rng.normal();
        }
        norm2 = simd::sumsq(s.u);
    }
    const double inv = 1.0 / std::sqrt(norm2);
    for (auto& x : s.u) {
        x *= inv;
    }
    return s;
}

std::size_t matrix_rows(const Tensor& w)
{
    if (w.rank() < 2) {
        throw DimensionError("spectral_norm: expected a matrix or kernel, got shape " + shape_str(w.shape()));
    }
    return w.dim(0);
}

std::size_t matrix_cols(const Tensor& w) { return w.size() / matrix_rows(w); }

namespace {

// out[c] = sum_r W[r, c] u[r]
void mul_transposed(const double* w, std::size_t rows, std::size_t cols, const double* u, double* out)
{
    std::fill(out, out + cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        simd::active().axpy(cols, u[r], w + r * cols, out);
    }
}

// out[r] = sum_c W[r, c] v[c]
void mul(const double* w, std::size_t rows, std::size_t cols, const double* v, double* out)
{
    for (std::size_t r = 0; r < rows; ++r) {
        out[r] = simd::active().dot(cols, w + r * cols, v);
    }
}

bool normalize(std::vector<double>& x)
{
    const double n2 = simd::sumsq(x);
    if (n2 == 0.0 || !std::isfinite(n2)) {
        return false;
    }
    const double inv = 1.0 / std::sqrt(n2);
    for (auto& e : x) {
        e *= inv;
    }
    return true;
}

} // namespace

PowerIterResult power_iterate(const Tensor& w, PowerIterState& state, int iters)
{
    if (iters < 1) {
        throw ContractError("spectral_norm: iters must be >= 1");
    }
    const std::size_t rows = matrix_rows(w);
    const std::size_t cols = matrix_cols(w);
    if (state.u.size() != rows) {
        throw DimensionError("spectral_norm: state vector has length " + std::to_string(state.u.size()) +
                             ", matrix has " + std::to_string(rows) + " rows");
    }

    PowerIterResult res;
    res.u = state.u;
    res.v.assign(cols, 0.0);

    const double* W = w.data().data();
    bool zero_matrix = true;
    for (double x : w.data()) {
        if (x != 0.0) {
            zero_matrix = false;
            break;
        }
    }
    if (zero_matrix) {
        res.sigma = 0.0;
        return res;
    }

    std::vector<double> wu(rows);
    for (int it = 0; it < iters; ++it) {
        mul_transposed(W, rows, cols, res.u.data(), res.v.data());
        if (!normalize(res.v)) {
            // u is orthogonal to the row space: restart from W * 1.
            std::fill(res.v.begin(), res.v.end(), 1.0 / std::sqrt(static_cast<double>(cols)));
        }
        mul(W, rows, cols, res.v.data(), wu.data());
        res.u = wu;
        if (!normalize(res.u)) {
            res.sigma = 0.0;
            return res;
        }
    }
    mul(W, rows, cols, res.v.data(), wu.data());
    res.sigma = simd::dot(res.u, wu);
    state.u = res.u;
    return res;
}

} // namespace leads::ad
