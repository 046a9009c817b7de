#pragma once

// Fixed architectures for the evolution-term estimators and the decomposed
// model f + g_e built from them.

#include "leads/autodiff/spectral_norm.hpp"
#include "leads/autodiff/tape.hpp"

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace leads::models {

enum class ArchKind { MLP, Conv, LinearMap };

std::string to_string(ArchKind k);
ArchKind arch_kind_from_string(const std::string& name);

struct ArchSpec {
    ArchKind kind = ArchKind::MLP;
    // MLP / LINEAR_MAP: state dimension. CONV: number of field channels.
    std::size_t in_dim = 2;
    std::size_t out_dim = 2;
    std::size_t hidden_width = 64;
    // CONV hidden channels, kernel side and grid side.
    std::size_t channels = 16;
    std::size_t kernel_size = 3;
    std::size_t grid = 0;
    std::size_t depth = 4;

    // Flat state dimension the architecture maps from and to.
    std::size_t state_dim() const;
};

ArchSpec mlp_arch(std::size_t dim, std::size_t hidden_width = 64);
ArchSpec conv_arch(std::size_t field_channels, std::size_t grid, std::size_t hidden_channels = 16,
                   std::size_t kernel_size = 3);
ArchSpec linear_map_arch(std::size_t dim);

// Throws ContractError on an inconsistent spec.
void validate(const ArchSpec& arch);

using Params = std::vector<ad::Tensor>;

enum class InitScheme { Standard, Zero };

std::string to_string(InitScheme s);
InitScheme init_scheme_from_string(const std::string& name);

// [W1, b1, W2, b2, W3, b3, W4, b4] for MLP (W as [in, out]) and CONV
// (kernels as [out, in, k, k]); a single [d, d] matrix for LINEAR_MAP.
std::vector<ad::Shape> param_shapes(const ArchSpec& arch);
std::size_t param_count(const ArchSpec& arch);
std::size_t param_count(const Params& params);
// Positions of the weight tensors (the ones entering the spectral term).
std::vector<std::size_t> weight_indices(const ArchSpec& arch);

Params init_params(const ArchSpec& arch, std::uint64_t seed, InitScheme scheme);

// Checks count and shapes against the architecture.
void check_params(const ArchSpec& arch, const Params& params);

// x: [B, state_dim]; returns [B, state_dim]. CONV reshapes each row to
// [channels, grid, grid] internally.
ad::Var forward(const ArchSpec& arch, std::span<const ad::Var> params, ad::Var x);

// Plain evaluation of a single state without a caller-visible tape.
std::vector<double> evaluate(const ArchSpec& arch, const Params& params, std::span<const double> x);

// LINEAR_MAP stores W with y = x W, so the matrix acting on column states is W^T.
std::vector<double> linear_matrix(const Params& params);

// Key under which a single environment-agnostic g is stored (One-For-All).
inline const std::string kSharedKey = "*";

struct DecomposedModel {
    ArchSpec arch;
    Params f;
    // Per-environment replacement of f (One-Per-Env and fine-tuned copies).
    std::map<std::string, Params> f_env;
    std::map<std::string, Params> g;
    std::map<std::string, std::vector<ad::PowerIterState>> power;
    std::uint64_t seed = 0;
    std::string method;

    bool has_env(const std::string& env_id) const;
    const Params& f_for(const std::string& env_id) const;
    Params& f_for(const std::string& env_id);
    // Throws LookupError for an unregistered environment.
    const Params& g_for(const std::string& env_id) const;
    Params& g_for(const std::string& env_id);
    std::vector<ad::PowerIterState>& power_for(const std::string& env_id);
    std::vector<std::string> env_ids() const;
};

// Registers g_e (and its power-iteration state) for env_id.
void add_env(DecomposedModel& model, const std::string& env_id, Params g, std::uint64_t seed);

// Binds the parameters of a model to one tape, each tensor at most once.
class BoundModel {
public:
    BoundModel(ad::Tape& tape, DecomposedModel& model) : tape_(tape), model_(model) {}

    ad::Var f(const std::string& env_id, ad::Var x);
    ad::Var g(const std::string& env_id, ad::Var x);
    // f(x) + g_e(x)
    ad::Var forward(const std::string& env_id, ad::Var x);

    std::span<const ad::Var> g_vars(const std::string& env_id);

    ad::Tape& tape() { return tape_; }
    DecomposedModel& model() { return model_; }

private:
    std::span<const ad::Var> bind(Params& params);

    ad::Tape& tape_;
    DecomposedModel& model_;
    std::map<const Params*, std::vector<ad::Var>> bound_;
};

// f_e(x) for a single state, for ground-truth style use.
std::vector<double> predict(const DecomposedModel& model, const std::string& env_id, std::span<const double> x);

} // namespace leads::models
