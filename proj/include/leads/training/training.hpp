#pragma once

// Training procedures: the penalized multi-environment objective, the
// baselines, novel-environment adaptation, and evaluation.

#include "leads/integrators/integrators.hpp"
#include "leads/models/models.hpp"
#include "leads/systems/systems.hpp"

#include <array>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace leads::training {

enum class Method { LEADS, OneForAll, OnePerEnv, LeadsNoMin, GBML };

std::string to_string(Method m);
Method method_from_string(const std::string& name);

enum class AdaptScheme { FOnly, FromScratch, FPlusG };

std::string to_string(AdaptScheme s);
AdaptScheme adapt_scheme_from_string(const std::string& name);

struct TrainConfig {
    Method method = Method::LEADS;
    // Penalty weight enters as (1/lambda) * Omega; +inf disables the penalty.
    double lambda = 5e3;
    double alpha = 1e-3;
    double lr = 1e-3;
    std::array<double, 2> betas{0.9, 0.999};
    int epochs = 20000;
    double ss_exponent = 0.99;
    integrators::Method integrator = integrators::Method::RK4;
    std::uint64_t seed = 0;
    models::InitScheme g_init = models::InitScheme::Standard;

    // Integration steps per observation interval.
    int substeps = 1;
    // Power iterations per training step for the spectral term.
    int power_iters = 1;
    // Per-epoch train rows every log_every epochs (0: first and last only).
    int log_every = 100;
    // Test rows every eval_every epochs when a test set is supplied (0: final only).
    int eval_every = 0;
    // GBML fine-tuning budget as a fraction of `epochs`.
    double finetune_fraction = 0.25;
    // Architecture overrides; empty arch picks mlp for lv/linear and conv for gs.
    std::string arch;
    int hidden_width = 64;
    int channels = 16;
};

void validate(const TrainConfig& cfg);

// Reference (lambda, alpha) per system with desk-scale epoch counts.
TrainConfig default_config(systems::System system);

models::ArchSpec arch_for(const systems::Dataset& data, const TrainConfig& cfg);

struct MetricRow {
    std::string method;
    std::string system;
    std::string env_id;
    std::string split; // train | test
    int epoch = 0;     // -1 for the final summary
    double mse = 0.0;
    double penalty = 0.0;
};

struct EvalResult {
    std::map<std::string, double> per_env;
    double mean = 0.0;
    double std = 0.0; // sample standard deviation across envs
};

struct Metrics {
    std::vector<MetricRow> rows;
    EvalResult train;
    std::optional<EvalResult> test;
    // Mean training objective per epoch (all methods).
    std::vector<double> loss_history;

    void write_csv(std::ostream& os) const;
};

inline constexpr const char* kMetricsHeader = "method,system,env_id,split,epoch,mse,penalty";

// Stacked training states of one environment as an [n, dim] tensor, and the
// per-row weights of the normalized empirical norm: 1/(n |x|^2), or 1/n when
// |x| < 1e-8.
struct PenaltyData {
    ad::Tensor states;
    std::vector<double> weights;
};

PenaltyData penalty_data(const systems::EnvData& env);

// Omega(g_e): normalized empirical L2 term plus alpha times the sum of
// squared spectral norms of g_e's weights. LINEAR_MAP uses |G|_F^2.
ad::Var omega_penalty(models::BoundModel& bound, const std::string& env_id, const PenaltyData& data, double alpha,
                      int power_iters);

// Evaluation-mode Omega (100 power iterations on copies of the persistent vectors).
double omega_value(const models::DecomposedModel& model, const std::string& env_id, const PenaltyData& data,
                   double alpha);

// Empirical L^p ratio estimator ((1/n) sum (|g(x)| / |x|)^p)^(2/p) of the
// output-norm term alone, for comparing norm choices.
double empirical_norm_term(const models::ArchSpec& arch, const models::Params& g, const PenaltyData& data, double p);

// Rollout loss on all trajectories of one environment: mean over steps,
// trajectories and entries of the squared state error. Before step k >= 1 a
// coin with probability teacher_prob restarts from the true state.
ad::Var trajectory_loss(models::BoundModel& bound, const systems::EnvData& env, double dt, double teacher_prob,
                        Rng& coins, integrators::Method method = integrators::Method::RK4, int substeps = 1);

struct TrainResult {
    models::DecomposedModel model;
    Metrics metrics;
};

// Full-batch training. When `test` is given, test rows are logged every
// cfg.eval_every epochs and in the final summary.
TrainResult train(const systems::Dataset& data, const TrainConfig& cfg, const systems::Dataset* test = nullptr);

struct AdaptOptions {
    AdaptScheme scheme = AdaptScheme::FPlusG;
    // Initial g per novel environment (FPlusG); fresh init when absent.
    std::map<std::string, models::Params> initial_g;
};

TrainResult adapt_novel(const models::DecomposedModel& pretrained, const systems::Dataset& novel,
                        const TrainConfig& cfg, const AdaptOptions& opts, const systems::Dataset* test = nullptr);

// Free-running rollouts from every test initial condition; MSE over steps
// 1..K, trajectories and entries.
EvalResult evaluate(const models::DecomposedModel& model, const systems::Dataset& data, int substeps = 1,
                    integrators::Method method = integrators::Method::RK4);

// Summary rows (epoch -1) for an evaluation.
void append_summary(Metrics& metrics, const std::string& method, const systems::Dataset& data,
                    const std::string& split, const EvalResult& result);

} // namespace leads::training
