#include "leads/autodiff/adam.hpp"

#include "leads/error.hpp"

#include <cmath>

namespace leads::ad {

void adam_step(std::span<Tensor* const> params, AdamState& state)
{
    std::size_t total = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i]->has_grad()) {
            throw ContractError("adam_step: parameter " + std::to_string(i) + " has no gradient");
        }
        total += params[i]->size();
    }
    if (state.m.empty() && state.v.empty()) {
        state.m.assign(total, 0.0);
        state.v.assign(total, 0.0);
    }
    if (state.m.size() != total || state.v.size() != total) {
        throw ContractError("adam_step: optimizer state sized for " + std::to_string(state.m.size()) +
                            " parameters, got " + std::to_string(total));
    }

    ++state.step;
    const double t = static_cast<double>(state.step);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);

    std::size_t offset = 0;
    for (Tensor* p : params) {
        auto data = p->data();
        auto grad = p->grad();
        for (std::size_t i = 0; i < data.size(); ++i) {
            double& m = state.m[offset + i];
            double& v = state.v[offset + i];
            const double g = grad[i];
            m = state.beta1 * m + (1.0 - state.beta1) * g;
            v = state.beta2 * v + (1.0 - state.beta2) * g * g;
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            const double denom = std::sqrt(v_hat) + state.eps;
            if (denom > 0.0) {
                data[i] -= state.lr * m_hat / denom;
            }
        }
        offset += data.size();
    }
}

} // namespace leads::ad
