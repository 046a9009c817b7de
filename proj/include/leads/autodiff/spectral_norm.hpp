#pragma once

#include "leads/autodiff/tensor.hpp"

#include <cstdint>
#include <vector>

namespace leads::ad {

// Persistent left singular vector estimate for one weight matrix.
struct PowerIterState {
    std::vector<double> u;

    // Random unit vector of length rows, deterministic in seed.
    static PowerIterState random(std::size_t rows, std::uint64_t seed);
};

struct PowerIterResult {
    double sigma = 0.0;
    std::vector<double> u; // unit, length rows
    std::vector<double> v; // unit, length cols
};

// Rows are the leading axis of w; the remaining axes are flattened into
// columns (conv kernels [out, in, kh, kw] become [out, in*kh*kw]).
std::size_t matrix_rows(const Tensor& w);
std::size_t matrix_cols(const Tensor& w);

// Runs `iters` rounds of v = W^T u / |W^T u|, u = W v / |W v| and returns
// sigma = u^T W v. On a zero matrix returns sigma = 0 and leaves state.u.
PowerIterResult power_iterate(const Tensor& w, PowerIterState& state, int iters);

} // namespace leads::ad
