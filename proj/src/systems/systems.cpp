#include "leads/systems/systems.hpp"

#include "leads/error.hpp"
#include "leads/simd/kernels.hpp"

#include <cmath>

namespace leads::systems {

std::string to_string(System s)
{
    switch (s) {
    case System::LV:
        return "lv";
    case System::GS:
        return "gs";
    case System::Linear:
        return "linear";
    }
    return "?";
}

System system_from_string(const std::string& name)
{
    if (name == "lv") {
        return System::LV;
    }
    if (name == "gs") {
        return System::GS;
    }
    if (name == "linear") {
        return System::Linear;
    }
    throw ConfigError("unknown system '" + name + "' (expected lv, gs or linear)");
}

std::vector<double> LinearParams::matrix() const
{
    std::vector<double> F(dim * dim, 0.0);
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                s += Q[i * dim + k] * lambda[k] * Q[j * dim + k];
            }
            F[i * dim + j] = s;
        }
    }
    return F;
}

void validate(const EnvSpec& spec)
{
    switch (spec.system) {
    case System::LV: {
        const auto& p = spec.lv();
        if (!(p.alpha > 0 && p.beta > 0 && p.gamma > 0 && p.delta > 0)) {
            throw ContractError("env " + spec.env_id + ": Lotka-Volterra rates must be positive");
        }
        break;
    }
    case System::GS: {
        const auto& p = spec.gs();
        if (p.grid < 3) {
            throw ContractError("env " + spec.env_id + ": Gray-Scott grid must be at least 3x3");
        }
        break;
    }
    case System::Linear: {
        const auto& p = spec.linear();
        if (p.Q.size() != p.dim * p.dim || p.lambda.size() != p.dim) {
            throw ContractError("env " + spec.env_id + ": linear Q/lambda sizes do not match dim");
        }
        double worst = 0.0;
        for (std::size_t i = 0; i < p.dim; ++i) {
            for (std::size_t j = 0; j < p.dim; ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < p.dim; ++k) {
                    s += p.Q[i * p.dim + k] * p.Q[j * p.dim + k];
                }
                worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
            }
        }
        if (worst >= 1e-10) {
            throw ContractError("env " + spec.env_id + ": Q is not orthogonal (max deviation " +
                                std::to_string(worst) + ")");
        }
        break;
    }
    }
}

std::size_t state_dim(const EnvSpec& spec)
{
    switch (spec.system) {
    case System::LV:
        return 2;
    case System::GS:
        return 2 * spec.gs().grid * spec.gs().grid;
    case System::Linear:
        return spec.linear().dim;
    }
    return 0;
}

const EnvData& Dataset::env(const std::string& env_id) const
{
    for (const auto& e : envs) {
        if (e.spec.env_id == env_id) {
            return e;
        }
    }
    throw LookupError("dataset: unknown environment '" + env_id + "'");
}

std::array<double, 2> lv_derivative(std::span<const double> state, const LvParams& p)
{
    const double u = state[0];
    const double v = state[1];
    return {p.alpha * u - p.beta * u * v, p.delta * u * v - p.gamma * v};
}

std::vector<double> gs_derivative(std::span<const double> state, const GsParams& p)
{
    const std::size_t n = p.grid;
    const std::size_t cells = n * n;
    if (state.size() != 2 * cells) {
        throw DimensionError("gs_derivative: state has " + std::to_string(state.size()) + " entries, expected " +
                             std::to_string(2 * cells));
    }
    const double* u = state.data();
    const double* v = state.data() + cells;
    std::vector<double> out(2 * cells);
    double* du = out.data();
    double* dv = out.data() + cells;
    for (std::size_t i = 0; i < cells; ++i) {
        const double uvv = u[i] * v[i] * v[i];
        du[i] = -uvv + p.F * (1.0 - u[i]);
        dv[i] = uvv - (p.F + p.k) * v[i];
    }
    const auto& kern = simd::active();
    kern.laplacian_acc(n, p.Du, u, du);
    kern.laplacian_acc(n, p.Dv, v, dv);
    return out;
}

std::vector<double> linear_derivative(std::span<const double> state, const LinearParams& p)
{
    if (state.size() != p.dim) {
        throw DimensionError("linear_derivative: state has " + std::to_string(state.size()) + " entries, expected " +
                             std::to_string(p.dim));
    }
    // Q (Lambda (Q^T x))
    std::vector<double> y(p.dim, 0.0);
    for (std::size_t k = 0; k < p.dim; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < p.dim; ++i) {
            s += p.Q[i * p.dim + k] * state[i];
        }
        y[k] = p.lambda[k] * s;
    }
    std::vector<double> out(p.dim, 0.0);
    for (std::size_t i = 0; i < p.dim; ++i) {
        out[i] = simd::active().dot(p.dim, p.Q.data() + i * p.dim, y.data());
    }
    return out;
}

integrators::Deriv evolution_term(const EnvSpec& spec)
{
    switch (spec.system) {
    case System::LV:
        return [p = spec.lv()](const integrators::State& x) {
            const auto d = lv_derivative(x, p);
            return integrators::State{d[0], d[1]};
        };
    case System::GS:
        return [p = spec.gs()](const integrators::State& x) { return gs_derivative(x, p); };
    case System::Linear:
        return [p = spec.linear()](const integrators::State& x) { return linear_derivative(x, p); };
    }
    throw ContractError("evolution_term: unknown system");
}

std::vector<double> random_orthogonal(std::size_t dim, Rng& rng)
{
    // Modified Gram-Schmidt on the columns of a Gaussian matrix, then a sign
    // fix so the factorization is unique.
    std::vector<double> A(dim * dim);
    for (auto& a : A) {
        a = rng.normal();
    }
    std::vector<double> Q(dim * dim, 0.0);
    std::vector<double> col(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        for (std::size_t i = 0; i < dim; ++i) {
            col[i] = A[i * dim + j];
        }
        for (int pass = 0; pass < 2; ++pass) {
            for (std::size_t k = 0; k < j; ++k) {
                double d = 0.0;
                for (std::size_t i = 0; i < dim; ++i) {
                    d += Q[i * dim + k] * col[i];
                }
                for (std::size_t i = 0; i < dim; ++i) {
                    col[i] -= d * Q[i * dim + k];
                }
            }
        }
        double norm = 0.0;
        for (double c : col) {
            norm += c * c;
        }
        norm = std::sqrt(norm);
        if (norm < 1e-12) {
            throw GenerationError("random_orthogonal: degenerate Gaussian draw");
        }
        for (std::size_t i = 0; i < dim; ++i) {
            Q[i * dim + j] = col[i] / norm;
        }
    }
    return Q;
}

std::vector<double> linear_eigenvalues(std::size_t dim, std::size_t zero_index)
{
    std::vector<double> lambda(dim, kLinearDecay);
    lambda.at(zero_index) = 0.0;
    return lambda;
}

EnvSpec sample_env(System system, Rng& rng, const std::string& env_id, const SamplingContext& ctx)
{
    EnvSpec spec;
    spec.system = system;
    spec.env_id = env_id;
    switch (system) {
    case System::LV: {
        // Only the ratios alpha/beta and gamma/delta are specified; beta = delta = 1.
        LvParams p;
        p.alpha = kLvRatioGrid[rng.index(kLvRatioGrid.size())];
        p.gamma = kLvRatioGrid[rng.index(kLvRatioGrid.size())];
        p.beta = 1.0;
        p.delta = 1.0;
        spec.params = p;
        break;
    }
    case System::GS: {
        const auto& theta = kGsParamGrid[rng.index(kGsParamGrid.size())];
        GsParams p;
        p.F = theta[0];
        p.k = theta[1];
        p.grid = ctx.gs_grid;
        spec.params = p;
        break;
    }
    case System::Linear: {
        LinearParams p;
        p.dim = ctx.linear_dim;
        if (ctx.linear_q.size() != p.dim * p.dim) {
            throw ContractError("sample_env: linear environments need a shared orthogonal Q");
        }
        p.Q = ctx.linear_q;
        p.lambda = linear_eigenvalues(p.dim, rng.index(p.dim));
        spec.params = p;
        break;
    }
    }
    return spec;
}

namespace {

StateLayout layout_of(const EnvSpec& spec)
{
    StateLayout l;
    l.system = spec.system;
    if (spec.system == System::GS) {
        l.grid = spec.gs().grid;
    } else if (spec.system == System::Linear) {
        l.dim = spec.linear().dim;
    }
    return l;
}

} // namespace

std::vector<EnvSpec> sample_envs(const GenerateOptions& opts)
{
    if (!opts.envs.empty()) {
        return opts.envs;
    }
    SamplingContext ctx;
    ctx.gs_grid = opts.gs_grid;
    ctx.linear_dim = opts.linear_dim;
    if (opts.system == System::Linear) {
        Rng qrng = Rng::derive(opts.seed, {2});
        ctx.linear_q = random_orthogonal(opts.linear_dim, qrng);
    }
    Rng env_rng = Rng::derive(opts.seed, {1});
    std::vector<EnvSpec> specs;
    for (int e = 0; e < opts.m_envs; ++e) {
        specs.push_back(sample_env(opts.system, env_rng, "env" + std::to_string(e), ctx));
    }
    return specs;
}

Dataset generate_dataset(const GenerateOptions& opts)
{
    if (opts.m_envs < 1 || opts.n_traj < 1 || opts.K < 1 || !(opts.dt > 0.0)) {
        throw ContractError("generate_dataset: m_envs, n_traj, K and dt must be positive");
    }
    Dataset data;
    data.system = opts.system;
    data.dt = opts.dt;
    data.K = opts.K;
    data.seed = opts.seed;

    const std::vector<EnvSpec> specs = sample_envs(opts);
    for (const auto& s : specs) {
        validate(s);
    }

    // Shared initial conditions: trajectory i starts from the same state in every env.
    const StateLayout layout = layout_of(specs.front());
    std::vector<std::vector<double>> x0s;
    for (int i = 0; i < opts.n_traj; ++i) {
        Rng ic = Rng::derive(opts.seed, {3, opts.ic_stream, static_cast<std::uint64_t>(i)});
        x0s.push_back(sample_initial(layout, ic));
    }

    std::vector<double> times(static_cast<std::size_t>(opts.K));
    for (int k = 0; k < opts.K; ++k) {
        times[static_cast<std::size_t>(k)] = (k + 1) * opts.dt;
    }
    integrators::SolverConfig cfg;
    cfg.method = integrators::Method::Dopri5;
    cfg.h_init = opts.dt / 10.0;

    for (const auto& spec : specs) {
        EnvData env;
        env.spec = spec;
        const auto f = evolution_term(spec);
        for (int i = 0; i < opts.n_traj; ++i) {
            Trajectory tr;
            tr.env_id = spec.env_id;
            tr.x0 = x0s[static_cast<std::size_t>(i)];
            tr.dt = opts.dt;
            tr.states.push_back(tr.x0);
            try {
                if (opts.solver == GroundTruthSolver::Dopri5) {
                    auto out = integrators::integrate_adaptive(f, tr.x0, 0.0, times, cfg);
                    for (auto& s : out) {
                        tr.states.push_back(std::move(s));
                    }
                } else {
                    const double h = opts.dt / opts.rk4_substeps;
                    integrators::State x = tr.x0;
                    for (int k = 0; k < opts.K; ++k) {
                        for (int s = 0; s < opts.rk4_substeps; ++s) {
                            x = integrators::step_fixed(f, x, h, integrators::Method::RK4);
                        }
                        tr.states.push_back(x);
                    }
                }
            } catch (const IntegrationError& err) {
                throw GenerationError("generate_dataset: env " + spec.env_id + ", trajectory " + std::to_string(i) +
                                      ": " + err.what());
            }
            env.trajectories.push_back(std::move(tr));
        }
        data.envs.push_back(std::move(env));
    }
    return data;
}

bool initial_conditions_shared(const Dataset& data)
{
    if (data.envs.empty()) {
        return true;
    }
    const auto& ref = data.envs.front().trajectories;
    for (const auto& env : data.envs) {
        if (env.trajectories.size() != ref.size()) {
            return false;
        }
        for (std::size_t i = 0; i < ref.size(); ++i) {
            if (env.trajectories[i].x0 != ref[i].x0) {
                return false;
            }
        }
    }
    return true;
}

} // namespace leads::systems
