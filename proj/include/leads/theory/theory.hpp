#pragma once

// Closed-form quantities from the analysis: the linear optimum, linear
// capacity and generalization bounds, the NN capacity formula, and kappa.

#include "leads/systems/systems.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace leads::theory {

// Row-major square matrix.
struct Matrix {
    std::size_t n = 0;
    std::vector<double> a;

    double frob_sq() const;
};

struct LinearOptimum {
    Matrix F_star;
    std::vector<Matrix> G;
};

// F* = mean of the F_e, G_e = F_e - F*. Throws ContractError on an empty or
// ragged list.
LinearOptimum linear_optimum(const std::vector<Matrix>& F);

// log C <= ceil(r c d (2b)^2 / eps^2) * log(2 d^2)
double linear_capacity_bound(double r, double c, double d, double b, double epsilon);

struct BoundInputs {
    double r = 1.0;       // sup of |G_e|_F^2 (0 for a single environment)
    double r_prime = 1.0; // sup of |F|_F^2
    double b = 1.0;       // |x|_2 <= b
    double c = 1.0;       // loss bound
    double d = 1.0;       // state dimension
    double m = 1.0;       // environments
    double n = 1.0;       // samples per environment
    double delta = 0.05;
    double z = 0.5;
};

void validate(const BoundInputs& in);

// eps = max{ sqrt((p + sqrt(p^2 + 4q)) / 2), sqrt(16/n) } with
// p = 64/(mn) log(4/delta),
// q = 64/n ceil((r'/(m z^2) + r/(1-z)^2) c d (32b)^2) log(2d^2).
double linear_generalization_bound(const BoundInputs& in);

struct NnCapacity {
    double c1 = 0.0;
    double c2 = 0.0;
    double value = 0.0;
};

// omega(R, L, eps) = c1 log(RL/eps) + c2, c1 = 2W, c2 = 2W log(8 e sqrt(c) D).
NnCapacity nn_capacity_bound(double W, double D, double c, double R, double L, double epsilon);
// omega(r, eps) = c1 log(r / (eps sqrt(alpha))) + c2.
NnCapacity nn_capacity_bound_r(double W, double D, double c, double r, double alpha, double epsilon);

// Sum over environments and trajectories of the integral of |dx/dt|^2,
// with finite-difference derivatives (central inside, one-sided at the ends)
// and trapezoid quadrature. Needs K >= 2.
double kappa(const systems::Dataset& data);

// ---- bound curves ----------------------------------------------------------

struct BoundRow {
    int m = 0;
    int n = 0;
    double eps_penalty = 0.0;
    double eps_no_penalty = 0.0;
};

struct LinearCurveParams {
    std::size_t d = systems::kLinearDim;
    std::vector<int> ms{1, 2, 4, 8};
    std::vector<int> ns{40, 80};
    double delta = 0.05;
    double z = 0.5;
    std::uint64_t seed = 0;
    // Data used to measure b and c.
    int traj = 4;
    int K = 50;
    double dt = 0.1;
};

// Environments use distinct Lambda_1..Lambda_m around a shared Q. With the
// penalty, r = max |F_e - mean F|_F^2; without it the shared part is not
// pulled toward the mean and r = max |F_e|_F^2. r' = max |F_e|_F^2 in both.
std::vector<BoundRow> linear_bound_curve(const LinearCurveParams& params);

struct NnCurveParams {
    double W = 1.0;    // parameters per network
    double D = 4.0;    // depth
    double c = 1.0;    // loss bound
    double R = 1.0;    // output bound of f
    double L = 1.0;    // Lipschitz bound of f
    double alpha = 1e-3;
    double r_penalty = 1.0;
    double r_no_penalty = 1.0;
    double delta = 0.05;
    double z = 0.5;
    std::vector<int> ms{1, 2, 4, 8};
    std::vector<int> ns{40, 80};
};

// Smallest eps with eps^2 >= p + (64/n) (omega(R, L, z eps)/m + omega(r, (1-z) eps)) / eps^2,
// floored at sqrt(16/n); found by bisection.
double nn_generalization_bound(const NnCurveParams& params, double r, int m, int n);
std::vector<BoundRow> nn_bound_curve(const NnCurveParams& params);

} // namespace leads::theory
