#include "leads/error.hpp"
#include "leads/integrators/integrators.hpp"
#include "leads/systems/systems.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <cmath>

using namespace leads;
using namespace leads::integrators;

namespace {

const Deriv decay = [](const State& x) { return State{-x[0]}; };

Deriv lv(double a, double b, double g, double d)
{
    systems::LvParams p{a, b, g, d};
    return [p](const State& x) {
        const auto r = systems::lv_derivative(x, p);
        return State{r[0], r[1]};
    };
}

double max_err(const State& a, const State& b)
{
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

State endpoint(const Deriv& f, const State& x0, double T, std::size_t steps, Method m)
{
    return integrate_fixed(f, x0, T / static_cast<double>(steps), steps, m).back();
}

} // namespace

TEST_CASE("zero derivative leaves the state unchanged")
{
    const Deriv zero = [](const State& x) { return State(x.size(), 0.0); };
    for (Method m : {Method::Euler, Method::RK4}) {
        CHECK(step_fixed(zero, State{1.5, -2.0}, 0.3, m) == State{1.5, -2.0});
    }
    const double times[] = {0.5, 1.0, 7.0};
    for (const auto& x : integrate_adaptive(zero, State{3.0}, 0.0, times, SolverConfig{})) {
        CHECK(x[0] == 3.0);
    }
}

TEST_CASE("rk4 step on dx/dt = -x matches the 4th-order Taylor polynomial")
{
    const double h = 0.1;
    const double taylor = 1.0 - h + h * h / 2 - h * h * h / 6 + h * h * h * h / 24;
    const State x = step_fixed(decay, State{1.0}, h, Method::RK4);
    CHECK(x[0] == doctest::Approx(taylor).epsilon(1e-15));
    CHECK(x[0] == doctest::Approx(0.9048375).epsilon(1e-7));
}

TEST_CASE("euler and rk4 convergence orders under step halving")
{
    SUBCASE("exponential decay")
    {
        const double exact = std::exp(-1.0);
        const double e1 = std::abs(endpoint(decay, {1.0}, 1.0, 20, Method::Euler)[0] - exact);
        const double e2 = std::abs(endpoint(decay, {1.0}, 1.0, 40, Method::Euler)[0] - exact);
        CHECK(e1 / e2 >= 1.5);
        CHECK(e1 / e2 <= 2.5);
        const double r1 = std::abs(endpoint(decay, {1.0}, 1.0, 10, Method::RK4)[0] - exact);
        const double r2 = std::abs(endpoint(decay, {1.0}, 1.0, 20, Method::RK4)[0] - exact);
        CHECK(r1 / r2 >= 10.0);
        CHECK(r1 / r2 <= 24.0);
    }
    SUBCASE("Lotka-Volterra over T = 10 against an h/64 reference")
    {
        const auto f = lv(1.5, 1.0, 1.0, 1.0);
        const State x0{1.2, 1.7};
        const std::size_t n = 200;
        const State ref = endpoint(f, x0, 10.0, n * 64, Method::RK4);
        const double r1 = max_err(endpoint(f, x0, 10.0, n, Method::RK4), ref);
        const double r2 = max_err(endpoint(f, x0, 10.0, 2 * n, Method::RK4), ref);
        CHECK(r1 / r2 >= 10.0);
        CHECK(r1 / r2 <= 24.0);
        const State eref = endpoint(f, x0, 10.0, 2000 * 64, Method::RK4);
        const double e1 = max_err(endpoint(f, x0, 10.0, 2000, Method::Euler), eref);
        const double e2 = max_err(endpoint(f, x0, 10.0, 4000, Method::Euler), eref);
        CHECK(e1 / e2 >= 1.5);
        CHECK(e1 / e2 <= 2.5);
    }
}

TEST_CASE("dopri5 matches the matrix exponential of a linear system")
{
    Rng rng(1);
    const std::size_t d = 4;
    auto a = oracle::random_vector(d * d, rng, 0.5);
    const Deriv f = [&](const State& x) { return oracle::matvec(a, x); };
    const State x0 = oracle::random_vector(d, rng);
    std::vector<double> times{0.3, 1.0, 2.5, 4.0};
    SolverConfig cfg;
    cfg.rtol = 1e-7;
    cfg.atol = 1e-10;
    const auto xs = integrate_adaptive(f, x0, 0.0, times, cfg);
    for (std::size_t i = 0; i < times.size(); ++i) {
        auto at = a;
        for (double& v : at) {
            v *= times[i];
        }
        const State expect = oracle::matvec(oracle::expm(at, d), x0);
        CHECK(max_err(xs[i], expect) < 1e-6);
    }
}

TEST_CASE("dopri5 dense output agrees with direct integration to each time")
{
    const auto f = lv(1.0, 1.0, 1.86, 1.0);
    const State x0{1.3, 1.1};
    std::vector<double> times;
    for (int k = 1; k <= 20; ++k) {
        times.push_back(0.5 * k);
    }
    SolverConfig cfg;
    cfg.rtol = 1e-9;
    cfg.atol = 1e-12;
    const auto dense = integrate_adaptive(f, x0, 0.0, times, cfg);
    for (std::size_t k = 0; k < times.size(); ++k) {
        const State ref = endpoint(f, x0, times[k], static_cast<std::size_t>(times[k] * 2000), Method::RK4);
        CHECK(max_err(dense[k], ref) < 1e-7);
    }
}

TEST_CASE("dopri5 rejects bad requests")
{
    const double backwards[] = {1.0, 0.5};
    CHECK_THROWS_AS(integrate_adaptive(decay, {1.0}, 0.0, backwards, SolverConfig{}), ContractError);
    SolverConfig bad;
    bad.rtol = 0.0;
    CHECK_THROWS_AS(validate(bad), ContractError);
}

TEST_CASE("dopri5 raises on blow-up and on an exhausted step budget")
{
    const Deriv blowup = [](const State& x) { return State{x[0] * x[0]}; };
    const double times[] = {2.0};
    CHECK_THROWS_AS(integrate_adaptive(blowup, {1.0}, 0.0, times, SolverConfig{}), IntegrationError);
    SolverConfig tight;
    tight.max_steps = 3;
    const double far[] = {50.0};
    CHECK_THROWS_AS(integrate_adaptive(lv(1, 1, 1, 1), {1.5, 1.2}, 0.0, far, tight), IntegrationError);
}

TEST_CASE("fixed step on a non-finite result raises")
{
    const Deriv nan = [](const State&) { return State{std::nan("")}; };
    CHECK_THROWS_AS(step_fixed(nan, {1.0}, 0.1, Method::Euler), IntegrationError);
}

TEST_CASE("rollout of a zero model stays at x0")
{
    ad::Tape t;
    ad::Var x0 = t.constant(ad::Tensor::matrix(1, 2, {0.4, -1.0}));
    const VarDeriv zero = [](ad::Var x) { return 0.0 * x; };
    const auto xs = rollout(zero, x0, 5, 0.5, Method::RK4);
    REQUIRE(xs.size() == 5);
    for (const auto& x : xs) {
        CHECK(x.value()[0] == 0.4);
        CHECK(x.value()[1] == -1.0);
    }
}

TEST_CASE("rollout is deterministic and matches the plain integrator")
{
    ad::Tensor a = ad::Tensor::matrix(2, 2, {-0.3, 0.8, -0.5, 0.1});
    a.set_requires_grad(true);
    auto run = [&](std::vector<double>& grad) {
        ad::Tape t;
        ad::Var A = t.param(a);
        ad::Var x0 = t.constant(ad::Tensor::matrix(1, 2, {1.0, 0.5}));
        const auto xs = rollout([&](ad::Var x) { return ad::matmul(x, A); }, x0, 4, 0.25, Method::RK4, 2);
        ad::Var loss = ad::sumsq(xs.back());
        t.backward(loss);
        grad.assign(a.grad().begin(), a.grad().end());
        return std::vector<double>(xs.back().value().data().begin(), xs.back().value().data().end());
    };
    std::vector<double> g1, g2;
    const auto y1 = run(g1);
    const auto y2 = run(g2);
    CHECK(y1 == y2);
    CHECK(g1 == g2);
    const Deriv f = [&](const State& x) {
        return State{x[0] * a[0] + x[1] * a[2], x[0] * a[1] + x[1] * a[3]};
    };
    const State ref = endpoint(f, {1.0, 0.5}, 1.0, 8, Method::RK4);
    CHECK(max_err(y1, ref) < 1e-14);
}

TEST_CASE("method names round-trip")
{
    for (Method m : {Method::Euler, Method::RK4, Method::Dopri5}) {
        CHECK(method_from_string(to_string(m)) == m);
    }
    CHECK_THROWS_AS(method_from_string("leapfrog"), ConfigError);
}
