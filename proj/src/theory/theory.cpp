#include "leads/theory/theory.hpp"

#include "leads/error.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace leads::theory {

double Matrix::frob_sq() const
{
    double s = 0.0;
    for (double v : a) {
        s += v * v;
    }
    return s;
}

LinearOptimum linear_optimum(const std::vector<Matrix>& F)
{
    if (F.empty()) {
        throw ContractError("linear_optimum: empty list of matrices");
    }
    const std::size_t n = F.front().n;
    LinearOptimum out;
    out.F_star.n = n;
    out.F_star.a.assign(n * n, 0.0);
    for (const auto& Fe : F) {
        if (Fe.n != n || Fe.a.size() != n * n) {
            throw DimensionError("linear_optimum: matrices must all be " + std::to_string(n) + "x" +
                                 std::to_string(n));
        }
        for (std::size_t i = 0; i < n * n; ++i) {
            out.F_star.a[i] += Fe.a[i];
        }
    }
    for (auto& v : out.F_star.a) {
        v /= static_cast<double>(F.size());
    }
    for (const auto& Fe : F) {
        Matrix G{n, Fe.a};
        for (std::size_t i = 0; i < n * n; ++i) {
            G.a[i] -= out.F_star.a[i];
        }
        out.G.push_back(std::move(G));
    }
    return out;
}

double linear_capacity_bound(double r, double c, double d, double b, double epsilon)
{
    if (epsilon == 0.0) {
        throw DomainError("linear_capacity_bound: epsilon must be non-zero");
    }
    if (!(r > 0 && c > 0 && d > 0 && b > 0 && epsilon > 0)) {
        throw DomainError("linear_capacity_bound: inputs must be positive");
    }
    const double cells = std::ceil(r * c * d * (2.0 * b) * (2.0 * b) / (epsilon * epsilon));
    return std::max(cells, 1.0) * std::log(2.0 * d * d);
}

void validate(const BoundInputs& in)
{
    if (!(in.z > 0.0 && in.z < 1.0)) {
        throw DomainError("bound: z must lie in (0, 1)");
    }
    if (!(in.delta > 0.0 && in.delta < 1.0)) {
        throw DomainError("bound: delta must lie in (0, 1)");
    }
    if (!(in.r >= 0 && in.r_prime >= 0 && in.r + in.r_prime > 0)) {
        throw DomainError("bound: r and r' must be non-negative and not both zero");
    }
    if (!(in.b > 0 && in.c > 0 && in.d > 0 && in.m > 0 && in.n > 0)) {
        throw DomainError("bound: b, c, d, m, n must be positive");
    }
}

double linear_generalization_bound(const BoundInputs& in)
{
    validate(in);
    const double p = 64.0 / (in.m * in.n) * std::log(4.0 / in.delta);
    const double mix = in.r_prime / (in.m * in.z * in.z) + in.r / ((1.0 - in.z) * (1.0 - in.z));
    const double cells = std::ceil(mix * in.c * in.d * std::pow(32.0 * in.b, 2));
    const double q = 64.0 / in.n * cells * std::log(2.0 * in.d * in.d);
    const double first = std::sqrt((p + std::sqrt(p * p + 4.0 * q)) / 2.0);
    return std::max(first, std::sqrt(16.0 / in.n));
}

namespace {

NnCapacity nn_constants(double W, double D, double c)
{
    if (!(W > 0 && D > 0 && c > 0)) {
        throw DomainError("nn_capacity_bound: W, D and c must be positive");
    }
    NnCapacity out;
    out.c1 = 2.0 * W;
    out.c2 = 2.0 * W * std::log(8.0 * std::numbers::e * std::sqrt(c) * D);
    return out;
}

} // namespace

NnCapacity nn_capacity_bound(double W, double D, double c, double R, double L, double epsilon)
{
    if (!(epsilon > 0.0)) {
        throw DomainError("nn_capacity_bound: epsilon must be positive");
    }
    if (!(R * L > 0.0)) {
        throw DomainError("nn_capacity_bound: R * L must be positive");
    }
    NnCapacity out = nn_constants(W, D, c);
    out.value = out.c1 * std::log(R * L / epsilon) + out.c2;
    return out;
}

NnCapacity nn_capacity_bound_r(double W, double D, double c, double r, double alpha, double epsilon)
{
    if (!(epsilon > 0.0)) {
        throw DomainError("nn_capacity_bound: epsilon must be positive");
    }
    if (!(r > 0.0 && alpha > 0.0)) {
        throw DomainError("nn_capacity_bound: r and alpha must be positive");
    }
    NnCapacity out = nn_constants(W, D, c);
    out.value = out.c1 * std::log(r / (epsilon * std::sqrt(alpha))) + out.c2;
    return out;
}

double kappa(const systems::Dataset& data)
{
    double total = 0.0;
    for (const auto& env : data.envs) {
        for (const auto& tr : env.trajectories) {
            const std::size_t n = tr.states.size();
            if (n < 3) {
                throw ContractError("kappa: trajectories need K >= 2");
            }
            const double dt = data.dt;
            const std::size_t dim = tr.x0.size();
            for (std::size_t k = 0; k < n; ++k) {
                double sq = 0.0;
                for (std::size_t j = 0; j < dim; ++j) {
                    double d;
                    if (k == 0) {
                        d = (-3.0 * tr.states[0][j] + 4.0 * tr.states[1][j] - tr.states[2][j]) / (2.0 * dt);
                    } else if (k == n - 1) {
                        d = (3.0 * tr.states[k][j] - 4.0 * tr.states[k - 1][j] + tr.states[k - 2][j]) / (2.0 * dt);
                    } else {
                        d = (tr.states[k + 1][j] - tr.states[k - 1][j]) / (2.0 * dt);
                    }
                    sq += d * d;
                }
                const double w = (k == 0 || k == n - 1) ? 0.5 : 1.0;
                total += w * sq * dt;
            }
        }
    }
    return total;
}

std::vector<BoundRow> linear_bound_curve(const LinearCurveParams& params)
{
    if (params.ms.empty() || params.ns.empty()) {
        throw ContractError("linear_bound_curve: empty m or n grid");
    }
    int m_max = 0;
    for (int m : params.ms) {
        if (m < 1 || static_cast<std::size_t>(m) > params.d) {
            throw DomainError("linear_bound_curve: m must lie in [1, d]");
        }
        m_max = std::max(m_max, m);
    }
    Rng qrng = Rng::derive(params.seed, {2});
    const auto Q = systems::random_orthogonal(params.d, qrng);
    std::vector<systems::EnvSpec> envs;
    std::vector<Matrix> F;
    for (int i = 0; i < m_max; ++i) {
        systems::LinearParams lp;
        lp.dim = params.d;
        lp.Q = Q;
        lp.lambda = systems::linear_eigenvalues(params.d, static_cast<std::size_t>(i));
        F.push_back({params.d, lp.matrix()});
        systems::EnvSpec spec;
        spec.system = systems::System::Linear;
        spec.params = lp;
        spec.env_id = "env" + std::to_string(i);
        envs.push_back(std::move(spec));
    }

    // b and c measured once on the largest environment set.
    systems::GenerateOptions g;
    g.system = systems::System::Linear;
    g.m_envs = m_max;
    g.n_traj = params.traj;
    g.K = params.K;
    g.dt = params.dt;
    g.seed = params.seed;
    g.linear_dim = params.d;
    g.envs = envs;
    const auto data = systems::generate_dataset(g);
    double b = 0.0;
    double c = 0.0;
    for (const auto& env : data.envs) {
        for (const auto& tr : env.trajectories) {
            for (const auto& x : tr.states) {
                double xx = 0.0;
                for (double v : x) {
                    xx += v * v;
                }
                b = std::max(b, std::sqrt(xx));
                const auto dx = systems::linear_derivative(x, env.spec.linear());
                double dd = 0.0;
                for (double v : dx) {
                    dd += v * v;
                }
                c = std::max(c, dd);
            }
        }
    }

    std::vector<BoundRow> rows;
    for (int m : params.ms) {
        const std::vector<Matrix> Fm(F.begin(), F.begin() + m);
        const auto opt = linear_optimum(Fm);
        double r_pen = 0.0;
        double r_prime = 0.0;
        for (int e = 0; e < m; ++e) {
            r_pen = std::max(r_pen, opt.G[static_cast<std::size_t>(e)].frob_sq());
            r_prime = std::max(r_prime, Fm[static_cast<std::size_t>(e)].frob_sq());
        }
        for (int n : params.ns) {
            BoundInputs in;
            in.r_prime = r_prime;
            in.b = b;
            in.c = c;
            in.d = static_cast<double>(params.d);
            in.m = m;
            in.n = n;
            in.delta = params.delta;
            in.z = params.z;
            in.r = r_pen;
            const double with = linear_generalization_bound(in);
            in.r = r_prime;
            const double without = linear_generalization_bound(in);
            rows.push_back({m, n, with, without});
        }
    }
    return rows;
}

double nn_generalization_bound(const NnCurveParams& P, double r, int m, int n)
{
    BoundInputs check;
    check.m = m;
    check.n = n;
    check.delta = P.delta;
    check.z = P.z;
    validate(check);
    const double p = 64.0 / (static_cast<double>(m) * n) * std::log(4.0 / P.delta);
    auto capacity = [&](double eps) {
        const double wf = nn_capacity_bound(P.W, P.D, P.c, P.R, P.L, P.z * eps).value;
        const double wg = nn_capacity_bound_r(P.W, P.D, P.c, r, P.alpha, (1.0 - P.z) * eps).value;
        return std::max(wf / m + wg, 0.0);
    };
    auto excess = [&](double eps) {
        const double e2 = eps * eps;
        return e2 * e2 - p * e2 - 64.0 / n * capacity(eps);
    };
    double lo = 1e-12;
    double hi = 1.0;
    while (excess(hi) < 0.0) {
        hi *= 2.0;
        if (hi > 1e12) {
            throw DomainError("nn_generalization_bound: no solution below 1e12");
        }
    }
    for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (excess(mid) < 0.0 ? lo : hi) = mid;
    }
    return std::max(hi, std::sqrt(16.0 / n));
}

std::vector<BoundRow> nn_bound_curve(const NnCurveParams& params)
{
    std::vector<BoundRow> rows;
    for (int m : params.ms) {
        for (int n : params.ns) {
            rows.push_back({m, n, nn_generalization_bound(params, params.r_penalty, m, n),
                            nn_generalization_bound(params, params.r_no_penalty, m, n)});
        }
    }
    return rows;
}

} // namespace leads::theory
