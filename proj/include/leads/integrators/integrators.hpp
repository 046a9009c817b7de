#pragma once

// Fixed-step (Euler, RK4) and adaptive (Dormand-Prince 5(4)) integration.
// The fixed-step schemes are written once over a generic state so the same
// code steps plain vectors and autodiff variables; rollouts on a tape are
// therefore differentiable through every stage.

#include "leads/autodiff/tape.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace leads::integrators {

enum class Method { Euler, RK4, Dopri5 };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

using State = std::vector<double>;
using Deriv = std::function<State(const State&)>;
using VarDeriv = std::function<ad::Var(ad::Var)>;

struct SolverConfig {
    Method method = Method::Dopri5;
    double rtol = 1e-7;
    double atol = 1e-9;
    std::size_t max_steps = 1'000'000;
    // <= 0 means one tenth of the first output interval.
    double h_init = 0.0;
};

void validate(const SolverConfig& cfg);

// x + c * y for both state representations.
inline State add_scaled(const State& x, double c, const State& y)
{
    State out = x;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] += c * y[i];
    }
    return out;
}
using ad::add_scaled;

template <class S, class F>
S euler_step(F&& f, const S& x, double h)
{
    return add_scaled(x, h, f(x));
}

template <class S, class F>
S rk4_step(F&& f, const S& x, double h)
{
    const S k1 = f(x);
    const S k2 = f(add_scaled(x, 0.5 * h, k1));
    const S k3 = f(add_scaled(x, 0.5 * h, k2));
    const S k4 = f(add_scaled(x, h, k3));
    S out = add_scaled(x, h / 6.0, k1);
    out = add_scaled(out, h / 3.0, k2);
    out = add_scaled(out, h / 3.0, k3);
    return add_scaled(out, h / 6.0, k4);
}

// One step of Euler or RK4. Throws IntegrationError on non-finite output.
State step_fixed(const Deriv& f, const State& x, double h, Method method);
ad::Var step_fixed(const VarDeriv& f, ad::Var x, double h, Method method);

// n_steps fixed steps of size h; returns all states including x0.
std::vector<State> integrate_fixed(const Deriv& f, const State& x0, double h, std::size_t n_steps, Method method);

// Adaptive DOPRI5 from t0 with dense output at the strictly increasing
// `times` (all > t0). Local error is accepted when
// max_i |err_i| / (atol + rtol * max(|x_i|, |x_new_i|)) <= 1.
std::vector<State> integrate_adaptive(const Deriv& f, const State& x0, double t0, std::span<const double> times,
                                      const SolverConfig& cfg);

// K successive predictions x(dt), ..., x(K dt) from x0; each dt interval is
// covered with `substeps` fixed steps. Throws IntegrationError naming the step
// when a state becomes non-finite.
std::vector<ad::Var> rollout(const VarDeriv& model, ad::Var x0, int K, double dt, Method method, int substeps = 1);

} // namespace leads::integrators
