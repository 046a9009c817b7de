#pragma once

// Environment-grouping sweep: M environments split into b disjoint groups of
// m = M / b, each group trained independently, every cell scored as the mean
// of the per-group test MSEs.

#include "leads/harness/io.hpp"
#include "leads/training/training.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace leads::harness {

struct SweepSpec {
    systems::System system = systems::System::LV;
    int total_envs = 8;
    std::vector<int> group_counts{1, 2, 4, 8};
    std::vector<int> traj_per_env{1};
    std::vector<std::uint64_t> seeds{0};
    std::vector<training::Method> methods{training::Method::LEADS, training::Method::OneForAll,
                                          training::Method::OnePerEnv};
    int K = 20;
    double dt = 0.5;
    int test_traj = 8;
    std::size_t gs_grid = systems::kGsDefaultGrid;
    training::TrainConfig config;
};

// Throws ConfigError when a group count does not divide total_envs.
void validate(const SweepSpec& spec);
SweepSpec sweep_spec_from_json(const Json& j);

struct SweepCell {
    training::Method method = training::Method::LEADS;
    int b = 1;
    int m = 1;
    int n = 1;
    std::uint64_t seed = 0;
    double test_mse = 0.0;
    std::vector<double> group_mse;
    training::Metrics metrics;
};

// Environments [g*m, (g+1)*m) of `data` as their own dataset.
systems::Dataset group_slice(const systems::Dataset& data, int group, int m);

// Runs every (method, b, n, seed) cell, in parallel up to LEADS_THREADS
// (default: hardware concurrency). Cells are returned in a fixed order.
std::vector<SweepCell> run_sweep(const SweepSpec& spec);

// Writes one metrics CSV per cell and aggregate.csv
// (method,b,m,n,seed,test_mse) into dir.
void write_sweep(const std::filesystem::path& dir, const std::vector<SweepCell>& cells);

} // namespace leads::harness
