#include "leads/models/models.hpp"

#include "leads/error.hpp"
#include "leads/rng.hpp"

#include <cmath>

namespace leads::models {

std::string to_string(ArchKind k)
{
    switch (k) {
    case ArchKind::MLP:
        return "mlp";
    case ArchKind::Conv:
        return "conv";
    case ArchKind::LinearMap:
        return "linear_map";
    }
    return "?";
}

ArchKind arch_kind_from_string(const std::string& name)
{
    if (name == "mlp") {
        return ArchKind::MLP;
    }
    if (name == "conv") {
        return ArchKind::Conv;
    }
    if (name == "linear_map") {
        return ArchKind::LinearMap;
    }
    throw ConfigError("unknown architecture '" + name + "'");
}

std::string to_string(InitScheme s)
{
    return s == InitScheme::Zero ? "zero" : "standard";
}

InitScheme init_scheme_from_string(const std::string& name)
{
    if (name == "standard") {
        return InitScheme::Standard;
    }
    if (name == "zero") {
        return InitScheme::Zero;
    }
    throw ConfigError("unknown init scheme '" + name + "' (expected standard or zero)");
}

std::size_t ArchSpec::state_dim() const
{
    return kind == ArchKind::Conv ? in_dim * grid * grid : in_dim;
}

ArchSpec mlp_arch(std::size_t dim, std::size_t hidden_width)
{
    ArchSpec a;
    a.kind = ArchKind::MLP;
    a.in_dim = a.out_dim = dim;
    a.hidden_width = hidden_width;
    a.depth = 4;
    return a;
}

ArchSpec conv_arch(std::size_t field_channels, std::size_t grid, std::size_t hidden_channels, std::size_t kernel_size)
{
    ArchSpec a;
    a.kind = ArchKind::Conv;
    a.in_dim = a.out_dim = field_channels;
    a.channels = hidden_channels;
    a.kernel_size = kernel_size;
    a.grid = grid;
    a.depth = 4;
    return a;
}

ArchSpec linear_map_arch(std::size_t dim)
{
    ArchSpec a;
    a.kind = ArchKind::LinearMap;
    a.in_dim = a.out_dim = dim;
    a.depth = 1;
    return a;
}

void validate(const ArchSpec& arch)
{
    if (arch.in_dim == 0 || arch.out_dim == 0) {
        throw ContractError("arch: in_dim and out_dim must be positive");
    }
    if (arch.in_dim != arch.out_dim) {
        throw ContractError("arch: an evolution term maps the state space to itself (in_dim == out_dim)");
    }
    switch (arch.kind) {
    case ArchKind::MLP:
        if (arch.depth != 4 || arch.hidden_width == 0) {
            throw ContractError("arch: MLP needs depth 4 and a positive hidden width");
        }
        break;
    case ArchKind::Conv:
        if (arch.depth != 4 || arch.channels == 0 || arch.kernel_size % 2 == 0 || arch.grid == 0) {
            throw ContractError("arch: CONV needs depth 4, positive channels and grid, odd kernel size");
        }
        break;
    case ArchKind::LinearMap:
        if (arch.depth != 1) {
            throw ContractError("arch: LINEAR_MAP has depth 1");
        }
        break;
    }
}

std::vector<ad::Shape> param_shapes(const ArchSpec& arch)
{
    validate(arch);
    std::vector<ad::Shape> shapes;
    switch (arch.kind) {
    case ArchKind::MLP: {
        const std::size_t h = arch.hidden_width;
        const std::size_t widths[5] = {arch.in_dim, h, h, h, arch.out_dim};
        for (int l = 0; l < 4; ++l) {
            shapes.push_back({widths[l], widths[l + 1]});
            shapes.push_back({widths[l + 1]});
        }
        break;
    }
    case ArchKind::Conv: {
        const std::size_t c = arch.channels;
        const std::size_t k = arch.kernel_size;
        const std::size_t chans[5] = {arch.in_dim, c, c, c, arch.out_dim};
        for (int l = 0; l < 4; ++l) {
            shapes.push_back({chans[l + 1], chans[l], k, k});
            shapes.push_back({chans[l + 1]});
        }
        break;
    }
    case ArchKind::LinearMap:
        shapes.push_back({arch.in_dim, arch.out_dim});
        break;
    }
    return shapes;
}

std::size_t param_count(const ArchSpec& arch)
{
    std::size_t n = 0;
    for (const auto& s : param_shapes(arch)) {
        n += ad::shape_size(s);
    }
    return n;
}

std::size_t param_count(const Params& params)
{
    std::size_t n = 0;
    for (const auto& p : params) {
        n += p.size();
    }
    return n;
}

std::vector<std::size_t> weight_indices(const ArchSpec& arch)
{
    if (arch.kind == ArchKind::LinearMap) {
        return {0};
    }
    return {0, 2, 4, 6};
}

Params init_params(const ArchSpec& arch, std::uint64_t seed, InitScheme scheme)
{
    const auto shapes = param_shapes(arch);
    Params params;
    Rng rng = Rng::derive(seed, {0x1417});
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        ad::Tensor t = ad::Tensor::zeros(shapes[i], true);
        const bool is_weight = shapes[i].size() >= 2;
        if (scheme == InitScheme::Standard && is_weight) {
            // [in, out] for dense layers, [out, in, k, k] for kernels
            const std::size_t fan_in =
                arch.kind == ArchKind::Conv ? shapes[i][1] * shapes[i][2] * shapes[i][3] : shapes[i][0];
            const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
            for (auto& w : t.data()) {
                w = rng.uniform(-bound, bound);
            }
        }
        params.push_back(std::move(t));
    }
    return params;
}

void check_params(const ArchSpec& arch, const Params& params)
{
    const auto shapes = param_shapes(arch);
    if (shapes.size() != params.size()) {
        throw DimensionError("model: expected " + std::to_string(shapes.size()) + " parameter tensors, got " +
                             std::to_string(params.size()));
    }
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (params[i].shape() != shapes[i]) {
            throw DimensionError("model: parameter " + std::to_string(i) + " has shape " +
                                 ad::shape_str(params[i].shape()) + ", expected " + ad::shape_str(shapes[i]));
        }
    }
}

ad::Var forward(const ArchSpec& arch, std::span<const ad::Var> p, ad::Var x)
{
    const std::size_t dim = arch.state_dim();
    if (x.shape().size() != 2 || x.shape()[1] != dim) {
        throw DimensionError("model forward: input " + ad::shape_str(x.shape()) + ", expected [B, " +
                             std::to_string(dim) + "]");
    }
    const std::size_t batch = x.shape()[0];
    switch (arch.kind) {
    case ArchKind::MLP: {
        ad::Var h = x;
        for (int l = 0; l < 4; ++l) {
            h = ad::affine(h, p[2 * l], p[2 * l + 1]);
            if (l < 3) {
                h = ad::swish(h);
            }
        }
        return h;
    }
    case ArchKind::Conv: {
        ad::Var h = ad::reshape(x, {batch, arch.in_dim, arch.grid, arch.grid});
        for (int l = 0; l < 4; ++l) {
            h = ad::conv2d_circular(h, p[2 * l], p[2 * l + 1]);
            if (l < 3) {
                h = ad::swish(h);
            }
        }
        return ad::reshape(h, {batch, dim});
    }
    case ArchKind::LinearMap:
        return ad::matmul(x, p[0]);
    }
    throw ContractError("model forward: unknown architecture");
}

std::vector<double> evaluate(const ArchSpec& arch, const Params& params, std::span<const double> x)
{
    ad::Tape tape;
    std::vector<ad::Var> vars;
    for (const auto& t : params) {
        vars.push_back(tape.constant(t));
    }
    ad::Var in = tape.constant(ad::Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end())));
    const auto out = forward(arch, vars, in).value().data();
    return {out.begin(), out.end()};
}

std::vector<double> linear_matrix(const Params& params)
{
    if (params.size() != 1 || params[0].rank() != 2 || params[0].dim(0) != params[0].dim(1)) {
        throw DimensionError("linear_matrix: expected a single square LINEAR_MAP weight");
    }
    const std::size_t d = params[0].dim(0);
    std::vector<double> out(d * d);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            out[i * d + j] = params[0][j * d + i];
        }
    }
    return out;
}

bool DecomposedModel::has_env(const std::string& env_id) const
{
    return g.count(env_id) > 0 || g.count(kSharedKey) > 0;
}

const Params& DecomposedModel::f_for(const std::string& env_id) const
{
    auto it = f_env.find(env_id);
    return it != f_env.end() ? it->second : f;
}

Params& DecomposedModel::f_for(const std::string& env_id)
{
    auto it = f_env.find(env_id);
    return it != f_env.end() ? it->second : f;
}

const Params& DecomposedModel::g_for(const std::string& env_id) const
{
    auto it = g.find(env_id);
    if (it == g.end()) {
        it = g.find(kSharedKey);
    }
    if (it == g.end()) {
        throw LookupError("model: unknown environment '" + env_id + "'");
    }
    return it->second;
}

Params& DecomposedModel::g_for(const std::string& env_id)
{
    return const_cast<Params&>(static_cast<const DecomposedModel&>(*this).g_for(env_id));
}

std::vector<ad::PowerIterState>& DecomposedModel::power_for(const std::string& env_id)
{
    auto it = power.find(env_id);
    if (it == power.end()) {
        it = power.find(kSharedKey);
    }
    if (it == power.end()) {
        throw LookupError("model: no power-iteration state for environment '" + env_id + "'");
    }
    return it->second;
}

std::vector<std::string> DecomposedModel::env_ids() const
{
    std::vector<std::string> ids;
    for (const auto& [id, params] : g) {
        ids.push_back(id);
    }
    return ids;
}

void add_env(DecomposedModel& model, const std::string& env_id, Params g, std::uint64_t seed)
{
    check_params(model.arch, g);
    std::vector<ad::PowerIterState> states;
    const auto idx = weight_indices(model.arch);
    for (std::size_t j = 0; j < idx.size(); ++j) {
        states.push_back(ad::PowerIterState::random(ad::matrix_rows(g[idx[j]]), seed + 7919 * j));
    }
    model.g[env_id] = std::move(g);
    model.power[env_id] = std::move(states);
}

std::span<const ad::Var> BoundModel::bind(Params& params)
{
    auto it = bound_.find(&params);
    if (it == bound_.end()) {
        std::vector<ad::Var> vars;
        vars.reserve(params.size());
        for (auto& t : params) {
            vars.push_back(tape_.param(t));
        }
        it = bound_.emplace(&params, std::move(vars)).first;
    }
    return it->second;
}

ad::Var BoundModel::f(const std::string& env_id, ad::Var x)
{
    return models::forward(model_.arch, bind(model_.f_for(env_id)), x);
}

ad::Var BoundModel::g(const std::string& env_id, ad::Var x)
{
    return models::forward(model_.arch, bind(model_.g_for(env_id)), x);
}

ad::Var BoundModel::forward(const std::string& env_id, ad::Var x)
{
    // Resolve g first so an unknown environment fails before any node is added.
    Params& gp = model_.g_for(env_id);
    ad::Var fx = models::forward(model_.arch, bind(model_.f_for(env_id)), x);
    ad::Var gx = models::forward(model_.arch, bind(gp), x);
    return fx + gx;
}

std::span<const ad::Var> BoundModel::g_vars(const std::string& env_id)
{
    return bind(model_.g_for(env_id));
}

std::vector<double> predict(const DecomposedModel& model, const std::string& env_id, std::span<const double> x)
{
    auto gx = evaluate(model.arch, model.g_for(env_id), x);
    const auto fx = evaluate(model.arch, model.f_for(env_id), x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
        gx[i] += fx[i];
    }
    return gx;
}

} // namespace leads::models
