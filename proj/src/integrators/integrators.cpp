#include "leads/integrators/integrators.hpp"

#include "leads/error.hpp"

#include <algorithm>
#include <cmath>

namespace leads::integrators {

std::string to_string(Method m)
{
    switch (m) {
    case Method::Euler:
        return "euler";
    case Method::RK4:
        return "rk4";
    case Method::Dopri5:
        return "dopri5";
    }
    return "?";
}

Method method_from_string(const std::string& name)
{
    if (name == "euler") {
        return Method::Euler;
    }
    if (name == "rk4") {
        return Method::RK4;
    }
    if (name == "dopri5") {
        return Method::Dopri5;
    }
    throw ConfigError("unknown integrator '" + name + "' (expected euler, rk4 or dopri5)");
}

void validate(const SolverConfig& cfg)
{
    if (!(cfg.rtol > 0.0) || !(cfg.atol > 0.0)) {
        throw ContractError("solver config: rtol and atol must be positive");
    }
    if (cfg.max_steps < 1) {
        throw ContractError("solver config: max_steps must be >= 1");
    }
}

namespace {

bool finite(const State& x)
{
    return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

} // namespace

State step_fixed(const Deriv& f, const State& x, double h, Method method)
{
    if (!(h > 0.0)) {
        throw ContractError("step_fixed: step size must be positive");
    }
    State out;
    switch (method) {
    case Method::Euler:
        out = euler_step(f, x, h);
        break;
    case Method::RK4:
        out = rk4_step(f, x, h);
        break;
    case Method::Dopri5:
        throw ContractError("step_fixed: dopri5 is adaptive, use integrate_adaptive");
    }
    if (!finite(out)) {
        throw IntegrationError("step_fixed: non-finite state after " + to_string(method) + " step");
    }
    return out;
}

ad::Var step_fixed(const VarDeriv& f, ad::Var x, double h, Method method)
{
    if (!(h > 0.0)) {
        throw ContractError("step_fixed: step size must be positive");
    }
    switch (method) {
    case Method::Euler:
        return euler_step(f, x, h);
    case Method::RK4:
        return rk4_step(f, x, h);
    case Method::Dopri5:
        break;
    }
    throw ContractError("step_fixed: dopri5 cannot be used for differentiable rollouts");
}

std::vector<State> integrate_fixed(const Deriv& f, const State& x0, double h, std::size_t n_steps, Method method)
{
    std::vector<State> out;
    out.reserve(n_steps + 1);
    out.push_back(x0);
    for (std::size_t i = 0; i < n_steps; ++i) {
        out.push_back(step_fixed(f, out.back(), h, method));
    }
    return out;
}

namespace {

// Dormand-Prince 5(4) tableau (autonomous systems, so the c_i nodes are not needed).
constexpr double a21 = 1.0 / 5.0;
constexpr double a31 = 3.0 / 40.0, a32 = 9.0 / 40.0;
constexpr double a41 = 44.0 / 45.0, a42 = -56.0 / 15.0, a43 = 32.0 / 9.0;
constexpr double a51 = 19372.0 / 6561.0, a52 = -25360.0 / 2187.0, a53 = 64448.0 / 6561.0, a54 = -212.0 / 729.0;
constexpr double a61 = 9017.0 / 3168.0, a62 = -355.0 / 33.0, a63 = 46732.0 / 5247.0, a64 = 49.0 / 176.0,
                 a65 = -5103.0 / 18656.0;
constexpr double a71 = 35.0 / 384.0, a73 = 500.0 / 1113.0, a74 = 125.0 / 192.0, a75 = -2187.0 / 6784.0,
                 a76 = 11.0 / 84.0;
// difference between 5th and embedded 4th order weights
constexpr double e1 = 71.0 / 57600.0, e3 = -71.0 / 16695.0, e4 = 71.0 / 1920.0, e5 = -17253.0 / 339200.0,
                 e6 = 22.0 / 525.0, e7 = -1.0 / 40.0;
// continuous extension (4th order)
constexpr double d1 = -12715105075.0 / 11282082432.0, d3 = 87487479700.0 / 32700410799.0,
                 d4 = -10690763975.0 / 1880347072.0, d5 = 701980252875.0 / 199316789632.0,
                 d6 = -1453857185.0 / 822651844.0, d7 = 69997945.0 / 29380423.0;

} // namespace

std::vector<State> integrate_adaptive(const Deriv& f, const State& x0, double t0, std::span<const double> times,
                                      const SolverConfig& cfg)
{
    validate(cfg);
    std::vector<State> out;
    if (times.empty()) {
        return out;
    }
    for (std::size_t i = 0; i < times.size(); ++i) {
        const double prev = i == 0 ? t0 : times[i - 1];
        if (!(times[i] > prev)) {
            throw ContractError("integrate_adaptive: output times must be strictly increasing and after t0");
        }
    }
    out.reserve(times.size());

    const std::size_t n = x0.size();
    const double t_end = times.back();
    const double span = t_end - t0;
    double h = cfg.h_init > 0.0 ? cfg.h_init : (times.front() - t0) / 10.0;
    const double h_min = 1e-12 * span;

    State x = x0;
    State k1 = f(x), k2, k3, k4, k5, k6, k7;
    State tmp(n), x_new(n);
    double t = t0;
    std::size_t next = 0;
    std::size_t steps = 0;

    auto stage = [&](std::initializer_list<std::pair<double, const State*>> terms) {
        for (std::size_t i = 0; i < n; ++i) {
            double s = x[i];
            for (const auto& [coef, k] : terms) {
                s += h * coef * (*k)[i];
            }
            tmp[i] = s;
        }
        return f(tmp);
    };

    while (next < times.size()) {
        if (steps++ >= cfg.max_steps) {
            throw IntegrationError("integrate_adaptive: exceeded " + std::to_string(cfg.max_steps) + " steps at t=" +
                                   std::to_string(t));
        }
        if (t + h > t_end) {
            h = t_end - t;
        }
        k2 = stage({{a21, &k1}});
        k3 = stage({{a31, &k1}, {a32, &k2}});
        k4 = stage({{a41, &k1}, {a42, &k2}, {a43, &k3}});
        k5 = stage({{a51, &k1}, {a52, &k2}, {a53, &k3}, {a54, &k4}});
        k6 = stage({{a61, &k1}, {a62, &k2}, {a63, &k3}, {a64, &k4}, {a65, &k5}});
        for (std::size_t i = 0; i < n; ++i) {
            x_new[i] = x[i] + h * (a71 * k1[i] + a73 * k3[i] + a74 * k4[i] + a75 * k5[i] + a76 * k6[i]);
        }
        k7 = f(x_new);

        double err = 0.0;
        bool ok = true;
        for (std::size_t i = 0; i < n; ++i) {
            const double e = h * (e1 * k1[i] + e3 * k3[i] + e4 * k4[i] + e5 * k5[i] + e6 * k6[i] + e7 * k7[i]);
            const double sc = cfg.atol + cfg.rtol * std::max(std::abs(x[i]), std::abs(x_new[i]));
            const double r = std::abs(e) / sc;
            if (!std::isfinite(r) || !std::isfinite(x_new[i])) {
                ok = false;
            }
            err = std::max(err, r);
        }
        if (!ok) {
            err = 1e10;
        }

        double factor = err == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err, -0.2), 0.2, 5.0);
        if (err <= 1.0) {
            const double t_new = t + h;
            while (next < times.size() && times[next] <= t_new * (1.0 + 1e-15) + 1e-300) {
                const double theta = std::min(1.0, (times[next] - t) / h);
                const double theta1 = 1.0 - theta;
                State xo(n);
                for (std::size_t i = 0; i < n; ++i) {
                    const double ydiff = x_new[i] - x[i];
                    const double bspl = h * k1[i] - ydiff;
                    const double r4 = ydiff - h * k7[i] - bspl;
                    const double r5 =
                        h * (d1 * k1[i] + d3 * k3[i] + d4 * k4[i] + d5 * k5[i] + d6 * k6[i] + d7 * k7[i]);
                    xo[i] = x[i] + theta * (ydiff + theta1 * (bspl + theta * (r4 + theta1 * r5)));
                }
                out.push_back(std::move(xo));
                ++next;
            }
            t = t_new;
            x.swap(x_new);
            k1.swap(k7);
        } else {
            factor = std::min(factor, 1.0);
        }
        h *= factor;
        if (next < times.size() && h < h_min) {
            throw IntegrationError("integrate_adaptive: step size underflow at t=" + std::to_string(t));
        }
    }
    return out;
}

std::vector<ad::Var> rollout(const VarDeriv& model, ad::Var x0, int K, double dt, Method method, int substeps)
{
    if (method != Method::Euler && method != Method::RK4) {
        throw ContractError("rollout: method must be euler or rk4");
    }
    if (K < 1 || substeps < 1 || !(dt > 0.0)) {
        throw ContractError("rollout: K, substeps and dt must be positive");
    }
    const double h = dt / substeps;
    std::vector<ad::Var> out;
    out.reserve(static_cast<std::size_t>(K));
    ad::Var x = x0;
    for (int k = 0; k < K; ++k) {
        for (int s = 0; s < substeps; ++s) {
            x = step_fixed(model, x, h, method);
        }
        if (!x.value().all_finite()) {
            throw IntegrationError("rollout: non-finite state at step " + std::to_string(k + 1));
        }
        out.push_back(x);
    }
    return out;
}

} // namespace leads::integrators
