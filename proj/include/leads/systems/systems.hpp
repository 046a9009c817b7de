#pragma once

// Ground-truth environment dynamics, environment sampling, initial-condition
// sampling, and dataset generation for Lotka-Volterra, Gray-Scott and the
// linear ODE dx/dt = Q diag(lambda) Q^T x.

#include "leads/integrators/integrators.hpp"
#include "leads/rng.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace leads::systems {

enum class System { LV, GS, Linear };

std::string to_string(System s);
System system_from_string(const std::string& name);

struct LvParams {
    double alpha = 1.0;
    double beta = 1.0;
    double gamma = 1.0;
    double delta = 1.0;
};

inline constexpr double kGsDu = 0.2097;
inline constexpr double kGsDv = 0.105;
inline constexpr double kGsSeedEpsilon = 0.05;
inline constexpr std::size_t kGsDefaultGrid = 32;

struct GsParams {
    double F = 0.037;
    double k = 0.060;
    double Du = kGsDu;
    double Dv = kGsDv;
    std::size_t grid = kGsDefaultGrid;
};

inline constexpr std::size_t kLinearDim = 8;
inline constexpr double kLinearDecay = -0.5;

struct LinearParams {
    std::size_t dim = kLinearDim;
    std::vector<double> Q;      // dim x dim, row-major, orthogonal
    std::vector<double> lambda; // eigenvalues

    // Q diag(lambda) Q^T, row-major
    std::vector<double> matrix() const;
};

struct EnvSpec {
    System system = System::LV;
    std::variant<LvParams, GsParams, LinearParams> params;
    std::string env_id;

    const LvParams& lv() const { return std::get<LvParams>(params); }
    const GsParams& gs() const { return std::get<GsParams>(params); }
    const LinearParams& linear() const { return std::get<LinearParams>(params); }
};

// Checks the per-system invariants; throws ContractError.
void validate(const EnvSpec& spec);

std::size_t state_dim(const EnvSpec& spec);

struct Trajectory {
    std::string env_id;
    std::vector<double> x0;
    std::vector<std::vector<double>> states; // [K+1][state_dim], states[0] == x0
    double dt = 0.0;
};

struct EnvData {
    EnvSpec spec;
    std::vector<Trajectory> trajectories;
};

struct Dataset {
    System system = System::LV;
    double dt = 0.0;
    int K = 0;
    std::uint64_t seed = 0;
    std::vector<EnvData> envs;

    const EnvData& env(const std::string& env_id) const;
    std::size_t traj_per_env() const { return envs.empty() ? 0 : envs.front().trajectories.size(); }
};

// ---- evolution terms -------------------------------------------------------

std::array<double, 2> lv_derivative(std::span<const double> state, const LvParams& p);

// state and result are [2, N, N] flattened channel-major (u block, then v block).
std::vector<double> gs_derivative(std::span<const double> state, const GsParams& p);

std::vector<double> linear_derivative(std::span<const double> state, const LinearParams& p);

integrators::Deriv evolution_term(const EnvSpec& spec);

// ---- sampling --------------------------------------------------------------

// Published parameter grids.
inline constexpr std::array<double, 6> kLvRatioGrid{0.5, 1.0, 1.44, 1.5, 1.86, 2.0};
inline constexpr std::array<std::array<double, 2>, 3> kGsParamGrid{{{0.037, 0.060}, {0.030, 0.062}, {0.039, 0.058}}};

// Haar-ish random orthogonal matrix from the QR factorization of a Gaussian matrix.
std::vector<double> random_orthogonal(std::size_t dim, Rng& rng);

struct SamplingContext {
    std::size_t gs_grid = kGsDefaultGrid;
    std::vector<double> linear_q; // shared across linear environments
    std::size_t linear_dim = kLinearDim;
};

// Lambda_i of the linear construction: -0.5 everywhere except 0 at position i.
std::vector<double> linear_eigenvalues(std::size_t dim, std::size_t zero_index);

EnvSpec sample_env(System system, Rng& rng, const std::string& env_id, const SamplingContext& ctx);

struct StateLayout {
    System system = System::LV;
    std::size_t dim = 2;  // linear
    std::size_t grid = 0; // GS
};

// Source needs uniform(lo, hi), normal() and index(n).
template <class Source>
std::vector<double> sample_initial(const StateLayout& layout, Source& rng)
{
    switch (layout.system) {
    case System::LV: {
        const double u = rng.uniform(1.0, 2.0);
        const double v = rng.uniform(1.0, 2.0);
        return {u, v};
    }
    case System::GS: {
        const std::size_t n = layout.grid;
        std::vector<double> x(2 * n * n);
        std::fill(x.begin(), x.begin() + n * n, 0.0);
        std::fill(x.begin() + n * n, x.end(), 1.0);
        for (int sq = 0; sq < 3; ++sq) {
            const std::size_t r0 = rng.index(n);
            const std::size_t c0 = rng.index(n);
            for (std::size_t dr = 0; dr < 2; ++dr) {
                for (std::size_t dc = 0; dc < 2; ++dc) {
                    const std::size_t cell = ((r0 + dr) % n) * n + (c0 + dc) % n;
                    x[cell] = 1.0 - kGsSeedEpsilon;
                    x[n * n + cell] = kGsSeedEpsilon;
                }
            }
        }
        return x;
    }
    case System::Linear: {
        std::vector<double> x(layout.dim);
        for (auto& e : x) {
            e = rng.normal();
        }
        return x;
    }
    }
    return {};
}

// ---- dataset generation -------------------------------------------------------

enum class GroundTruthSolver { Dopri5, Rk4Fine };

struct GenerateOptions {
    System system = System::LV;
    int m_envs = 1;
    int n_traj = 1;
    int K = 20;
    double dt = 0.5;
    std::uint64_t seed = 0;
    GroundTruthSolver solver = GroundTruthSolver::Dopri5;
    // Initial conditions come from an independent stream per split, so train
    // and test files share environments but not initial states.
    std::uint64_t ic_stream = 0;
    std::size_t gs_grid = kGsDefaultGrid;
    std::size_t linear_dim = kLinearDim;
    int rk4_substeps = 1000;
    // Explicit environments (skip sampling) when non-empty.
    std::vector<EnvSpec> envs;
};

inline constexpr std::uint64_t kNovelSeedOffset = 1'000'000;

// Environments only (same draws generate_dataset would make).
std::vector<EnvSpec> sample_envs(const GenerateOptions& opts);

Dataset generate_dataset(const GenerateOptions& opts);

// Shared-initial-condition check: x0 of trajectory i identical across envs.
bool initial_conditions_shared(const Dataset& data);

} // namespace leads::systems
