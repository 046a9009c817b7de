#pragma once

#include "leads/autodiff/tensor.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace leads::ad {

struct AdamState {
    std::uint64_t step = 0;
    std::vector<double> m;
    std::vector<double> v;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// One bias-corrected Adam update over the concatenation of params. Moments
// are sized on the first call; every param must carry a gradient.
void adam_step(std::span<Tensor* const> params, AdamState& state);

} // namespace leads::ad
