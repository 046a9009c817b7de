#include "leads/training/training.hpp"

#include "leads/autodiff/adam.hpp"
#include "leads/error.hpp"

#include <cmath>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace leads::training {

using models::BoundModel;
using models::DecomposedModel;
using models::Params;
using systems::Dataset;
using systems::EnvData;

std::string to_string(Method m)
{
    switch (m) {
    case Method::LEADS:
        return "leads";
    case Method::OneForAll:
        return "one-for-all";
    case Method::OnePerEnv:
        return "one-per-env";
    case Method::LeadsNoMin:
        return "leads-no-min";
    case Method::GBML:
        return "gbml";
    }
    return "?";
}

Method method_from_string(const std::string& name)
{
    for (Method m : {Method::LEADS, Method::OneForAll, Method::OnePerEnv, Method::LeadsNoMin, Method::GBML}) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw ConfigError("unknown method '" + name + "'");
}

std::string to_string(AdaptScheme s)
{
    switch (s) {
    case AdaptScheme::FOnly:
        return "f-only";
    case AdaptScheme::FromScratch:
        return "from-scratch";
    case AdaptScheme::FPlusG:
        return "f-plus-g";
    }
    return "?";
}

AdaptScheme adapt_scheme_from_string(const std::string& name)
{
    for (AdaptScheme s : {AdaptScheme::FOnly, AdaptScheme::FromScratch, AdaptScheme::FPlusG}) {
        if (to_string(s) == name) {
            return s;
        }
    }
    throw ConfigError("unknown adaptation scheme '" + name + "'");
}

void validate(const TrainConfig& cfg)
{
    const bool penalized = cfg.method == Method::LEADS;
    if (penalized && (!(cfg.lambda > 0.0) || !(cfg.alpha >= 0.0))) {
        throw ConfigError("config: LEADS needs lambda > 0 and alpha >= 0");
    }
    if (!(cfg.lr > 0.0)) {
        throw ConfigError("config: lr must be positive");
    }
    if (!(cfg.betas[0] >= 0.0 && cfg.betas[0] < 1.0 && cfg.betas[1] >= 0.0 && cfg.betas[1] < 1.0)) {
        throw ConfigError("config: betas must lie in [0, 1)");
    }
    if (cfg.epochs < 0) {
        throw ConfigError("config: epochs must be non-negative");
    }
    if (!(cfg.ss_exponent > 0.0 && cfg.ss_exponent <= 1.0)) {
        throw ConfigError("config: ss_exponent must lie in (0, 1]");
    }
    if (cfg.integrator == integrators::Method::Dopri5) {
        throw ConfigError("config: training integrator must be euler or rk4");
    }
    if (cfg.substeps < 1 || cfg.power_iters < 1) {
        throw ConfigError("config: substeps and power_iters must be >= 1");
    }
    if (cfg.log_every < 0 || cfg.eval_every < 0) {
        throw ConfigError("config: log_every and eval_every must be >= 0");
    }
    if (!(cfg.finetune_fraction >= 0.0)) {
        throw ConfigError("config: finetune_fraction must be >= 0");
    }
    if (cfg.hidden_width < 1 || cfg.channels < 1) {
        throw ConfigError("config: hidden_width and channels must be positive");
    }
}

TrainConfig default_config(systems::System system)
{
    TrainConfig cfg;
    switch (system) {
    case systems::System::LV:
        cfg.lambda = 5e3;
        cfg.alpha = 1e-3;
        cfg.epochs = 20000;
        break;
    case systems::System::GS:
        cfg.lambda = 1e2;
        cfg.alpha = 1e-2;
        cfg.epochs = 5000;
        break;
    case systems::System::Linear:
        cfg.lambda = 1e2;
        cfg.alpha = 0.0;
        cfg.epochs = 5000;
        break;
    }
    return cfg;
}

models::ArchSpec arch_for(const Dataset& data, const TrainConfig& cfg)
{
    if (data.envs.empty()) {
        throw ContractError("dataset has no environments");
    }
    const auto& spec = data.envs.front().spec;
    std::string kind = cfg.arch;
    if (kind.empty()) {
        kind = data.system == systems::System::GS ? "conv" : "mlp";
    }
    switch (models::arch_kind_from_string(kind)) {
    case models::ArchKind::MLP:
        return models::mlp_arch(systems::state_dim(spec), static_cast<std::size_t>(cfg.hidden_width));
    case models::ArchKind::Conv:
        if (data.system != systems::System::GS) {
            throw ConfigError("conv architecture needs Gray-Scott fields");
        }
        return models::conv_arch(2, spec.gs().grid, static_cast<std::size_t>(cfg.channels));
    case models::ArchKind::LinearMap:
        return models::linear_map_arch(systems::state_dim(spec));
    }
    throw ConfigError("unknown architecture");
}

// ---- metrics ---------------------------------------------------------------

namespace {

std::string fmt_double(double v)
{
    std::ostringstream os;
    os << std::setprecision(17) << v;
    return os.str();
}

} // namespace

void Metrics::write_csv(std::ostream& os) const
{
    os << kMetricsHeader << '\n';
    for (const auto& r : rows) {
        os << r.method << ',' << r.system << ',' << r.env_id << ',' << r.split << ',' << r.epoch << ','
           << fmt_double(r.mse) << ',' << fmt_double(r.penalty) << '\n';
    }
}

void append_summary(Metrics& metrics, const std::string& method, const Dataset& data, const std::string& split,
                    const EvalResult& result)
{
    for (const auto& [env_id, mse] : result.per_env) {
        metrics.rows.push_back({method, systems::to_string(data.system), env_id, split, -1, mse, 0.0});
    }
    metrics.rows.push_back({method, systems::to_string(data.system), "mean", split, -1, result.mean, result.std});
}

// ---- penalty ---------------------------------------------------------------

PenaltyData penalty_data(const EnvData& env)
{
    std::size_t n = 0;
    std::size_t dim = 0;
    for (const auto& tr : env.trajectories) {
        n += tr.states.size();
        dim = tr.x0.size();
    }
    if (n == 0) {
        throw ContractError("penalty: environment " + env.spec.env_id + " has no states");
    }
    PenaltyData pd;
    pd.states = ad::Tensor::zeros({n, dim});
    pd.weights.resize(n);
    std::size_t row = 0;
    for (const auto& tr : env.trajectories) {
        for (const auto& s : tr.states) {
            double sq = 0.0;
            for (std::size_t j = 0; j < dim; ++j) {
                pd.states[row * dim + j] = s[j];
                sq += s[j] * s[j];
            }
            const double nrm = std::sqrt(sq);
            pd.weights[row] = nrm < 1e-8 ? 1.0 / static_cast<double>(n) : 1.0 / (static_cast<double>(n) * sq);
            ++row;
        }
    }
    return pd;
}

ad::Var omega_penalty(BoundModel& bound, const std::string& env_id, const PenaltyData& data, double alpha,
                      int power_iters)
{
    auto& model = bound.model();
    const auto g = bound.g_vars(env_id);
    if (model.arch.kind == models::ArchKind::LinearMap) {
        return ad::sumsq(g[0]);
    }
    ad::Tape& tape = bound.tape();
    ad::Var X = tape.constant(data.states);
    ad::Var y = bound.g(env_id, X);
    ad::Var omega = ad::weighted_row_sumsq(y, data.weights);
    if (alpha > 0.0) {
        auto& states = model.power_for(env_id);
        const auto idx = models::weight_indices(model.arch);
        ad::Var spec;
        for (std::size_t j = 0; j < idx.size(); ++j) {
            ad::Var s = ad::spectral_norm(g[idx[j]], states[j], power_iters);
            ad::Var s2 = ad::mul(s, s);
            spec = j == 0 ? s2 : spec + s2;
        }
        omega = ad::add_scaled(omega, alpha, spec);
    }
    return omega;
}

double omega_value(const DecomposedModel& model, const std::string& env_id, const PenaltyData& data, double alpha)
{
    DecomposedModel copy = model;
    for (auto& p : copy.f) {
        p.set_requires_grad(false);
    }
    ad::Tape tape;
    BoundModel bound(tape, copy);
    return omega_penalty(bound, env_id, data, alpha, 100).value().item();
}

double empirical_norm_term(const models::ArchSpec& arch, const Params& g, const PenaltyData& data, double p)
{
    if (!(p >= 1.0)) {
        throw DomainError("empirical_norm_term: p must be >= 1");
    }
    const std::size_t n = data.weights.size();
    const std::size_t dim = data.states.size() / n;
    double acc = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
        std::span<const double> x(data.states.data().data() + r * dim, dim);
        const auto y = models::evaluate(arch, g, x);
        double yy = 0.0;
        double xx = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            yy += y[j] * y[j];
            xx += x[j] * x[j];
        }
        const double ratio = std::sqrt(xx) < 1e-8 ? std::sqrt(yy) : std::sqrt(yy / xx);
        acc += std::pow(ratio, p);
    }
    return std::pow(acc / static_cast<double>(n), 2.0 / p);
}

// ---- losses ----------------------------------------------------------------

namespace {

// Row-stacked states of all trajectories at step k: [B, dim].
ad::Tensor states_at(const EnvData& env, std::size_t k)
{
    const std::size_t B = env.trajectories.size();
    const std::size_t dim = env.trajectories.front().x0.size();
    ad::Tensor t = ad::Tensor::zeros({B, dim});
    for (std::size_t b = 0; b < B; ++b) {
        const auto& s = env.trajectories[b].states.at(k);
        std::copy(s.begin(), s.end(), t.data().begin() + static_cast<std::ptrdiff_t>(b * dim));
    }
    return t;
}

std::size_t steps_of(const EnvData& env)
{
    if (env.trajectories.empty()) {
        throw ContractError("environment " + env.spec.env_id + " has no trajectories");
    }
    const std::size_t n = env.trajectories.front().states.size();
    for (const auto& tr : env.trajectories) {
        if (tr.states.size() != n) {
            throw ContractError("environment " + env.spec.env_id + ": trajectories differ in length");
        }
    }
    if (n < 2) {
        throw ContractError("environment " + env.spec.env_id + ": trajectories need at least two states");
    }
    return n - 1;
}

} // namespace

ad::Var trajectory_loss(BoundModel& bound, const EnvData& env, double dt, double teacher_prob, Rng& coins,
                        integrators::Method method, int substeps)
{
    if (!(teacher_prob >= 0.0 && teacher_prob <= 1.0)) {
        throw ContractError("trajectory_loss: teacher_prob must lie in [0, 1]");
    }
    const std::size_t K = steps_of(env);
    ad::Tape& tape = bound.tape();
    const std::string& env_id = env.spec.env_id;
    integrators::VarDeriv deriv = [&](ad::Var x) { return bound.forward(env_id, x); };
    const double h = dt / substeps;

    ad::Var x = tape.constant(states_at(env, 0));
    ad::Var acc;
    for (std::size_t k = 0; k < K; ++k) {
        if (k > 0 && coins.bernoulli(teacher_prob)) {
            x = tape.constant(states_at(env, k));
        }
        for (int s = 0; s < substeps; ++s) {
            x = integrators::step_fixed(deriv, x, h, method);
        }
        if (!x.value().all_finite()) {
            throw IntegrationError("rollout: non-finite state at step " + std::to_string(k + 1));
        }
        ad::Var err = ad::sumsq(x - tape.constant(states_at(env, k + 1)));
        acc = k == 0 ? err : acc + err;
    }
    const double count = static_cast<double>(K * x.size());
    return (1.0 / count) * acc;
}

EvalResult evaluate(const DecomposedModel& model, const Dataset& data, int substeps, integrators::Method method)
{
    EvalResult res;
    if (data.envs.empty()) {
        throw ContractError("evaluate: empty dataset");
    }
    DecomposedModel copy = model;
    std::vector<double> values;
    for (const auto& env : data.envs) {
        if (!copy.has_env(env.spec.env_id)) {
            throw LookupError("evaluate: model has no environment '" + env.spec.env_id + "'");
        }
        ad::Tape tape;
        BoundModel bound(tape, copy);
        Rng never(0);
        double mse = 0.0;
        try {
            mse = trajectory_loss(bound, env, data.dt, 0.0, never, method, substeps).value().item();
        } catch (const IntegrationError&) {
            mse = std::numeric_limits<double>::infinity();
        }
        res.per_env[env.spec.env_id] = mse;
        values.push_back(mse);
    }
    const double n = static_cast<double>(values.size());
    res.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) {
        ss += (v - res.mean) * (v - res.mean);
    }
    res.std = values.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
    return res;
}

// ---- training loop ---------------------------------------------------------

namespace {

std::vector<ad::Tensor*> trainable(DecomposedModel& model)
{
    std::vector<ad::Tensor*> out;
    auto add = [&](Params& ps) {
        for (auto& p : ps) {
            if (p.requires_grad()) {
                out.push_back(&p);
            }
        }
    };
    add(model.f);
    for (auto& [id, ps] : model.f_env) {
        add(ps);
    }
    for (auto& [id, ps] : model.g) {
        add(ps);
    }
    return out;
}

struct Loop {
    const Dataset& data;
    const TrainConfig& cfg;
    const Dataset* test;
    std::string method_name;
    bool penalized;
    std::vector<PenaltyData> pen;
    Metrics* metrics;
};

ad::AdamState fresh_adam(const TrainConfig& cfg)
{
    ad::AdamState opt;
    opt.lr = cfg.lr;
    opt.beta1 = cfg.betas[0];
    opt.beta2 = cfg.betas[1];
    return opt;
}

void log_test(Loop& L, DecomposedModel& model, int epoch)
{
    if (L.test == nullptr) {
        return;
    }
    const EvalResult r = evaluate(model, *L.test, L.cfg.substeps, L.cfg.integrator);
    for (const auto& [env_id, mse] : r.per_env) {
        L.metrics->rows.push_back({L.method_name, systems::to_string(L.data.system), env_id, "test", epoch, mse, 0.0});
    }
}

// Runs `epochs` full-batch Adam steps starting at epoch index `first`.
// Optimizer state is taken from and written back to `opt`.
void run_epochs(Loop& L, DecomposedModel& model, int first, int epochs, Rng& coins, ad::AdamState& opt)
{
    auto params = trainable(model);
    const double inv_lambda = std::isinf(L.cfg.lambda) ? 0.0 : 1.0 / L.cfg.lambda;
    const int last = first + epochs - 1;

    for (int epoch = first; epoch <= last; ++epoch) {
        const double teacher = std::pow(L.cfg.ss_exponent, epoch);
        ad::Tape tape;
        BoundModel bound(tape, model);
        ad::Var total;
        std::vector<double> env_mse;
        std::vector<double> env_pen;
        try {
            for (std::size_t e = 0; e < L.data.envs.size(); ++e) {
                const auto& env = L.data.envs[e];
                ad::Var loss =
                    trajectory_loss(bound, env, L.data.dt, teacher, coins, L.cfg.integrator, L.cfg.substeps);
                env_mse.push_back(loss.value().item());
                double pen_value = 0.0;
                if (L.penalized && inv_lambda > 0.0) {
                    ad::Var om = omega_penalty(bound, env.spec.env_id, L.pen[e], L.cfg.alpha, L.cfg.power_iters);
                    pen_value = om.value().item();
                    loss = ad::add_scaled(loss, inv_lambda, om);
                }
                env_pen.push_back(pen_value);
                total = e == 0 ? loss : total + loss;
            }
        } catch (const IntegrationError& err) {
            throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": " + err.what());
        }
        const double value = total.value().item();
        if (!std::isfinite(value)) {
            throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ": non-finite loss");
        }
        L.metrics->loss_history.push_back(value);
        tape.backward(total);
        ad::adam_step(params, opt);

        const bool log_now = epoch == first || epoch == last || (L.cfg.log_every > 0 && epoch % L.cfg.log_every == 0);
        if (log_now) {
            for (std::size_t e = 0; e < L.data.envs.size(); ++e) {
                L.metrics->rows.push_back({L.method_name, systems::to_string(L.data.system),
                                           L.data.envs[e].spec.env_id, "train", epoch, env_mse[e], env_pen[e]});
            }
        }
        // Test error after epoch + 1 optimizer steps.
        if (L.cfg.eval_every > 0 && (epoch + 1) % L.cfg.eval_every == 0) {
            log_test(L, model, epoch + 1);
        }
    }
}

std::uint64_t env_stream(std::size_t e)
{
    return static_cast<std::uint64_t>(e);
}

DecomposedModel init_model(const Dataset& data, const TrainConfig& cfg, const models::ArchSpec& arch)
{
    DecomposedModel model;
    model.arch = arch;
    model.seed = cfg.seed;
    model.method = to_string(cfg.method);
    const auto f_seed = [&](std::size_t e) { return Rng::derive(cfg.seed, {10, env_stream(e)}).engine()(); };
    const auto g_seed = [&](std::size_t e) { return Rng::derive(cfg.seed, {11, env_stream(e)}).engine()(); };
    const auto p_seed = [&](std::size_t e) { return Rng::derive(cfg.seed, {12, env_stream(e)}).engine()(); };
    model.f = models::init_params(arch, f_seed(0), models::InitScheme::Standard);

    switch (cfg.method) {
    case Method::LEADS:
    case Method::LeadsNoMin:
        for (std::size_t e = 0; e < data.envs.size(); ++e) {
            models::add_env(model, data.envs[e].spec.env_id, models::init_params(arch, g_seed(e), cfg.g_init),
                            p_seed(e));
        }
        break;
    case Method::OneForAll:
    case Method::GBML:
        models::add_env(model, models::kSharedKey, models::init_params(arch, g_seed(0), cfg.g_init), p_seed(0));
        break;
    case Method::OnePerEnv:
        for (std::size_t e = 0; e < data.envs.size(); ++e) {
            const auto& id = data.envs[e].spec.env_id;
            model.f_env[id] = models::init_params(arch, f_seed(e + 1), models::InitScheme::Standard);
            models::add_env(model, id, models::init_params(arch, g_seed(e), cfg.g_init), p_seed(e));
        }
        model.f.clear();
        break;
    }
    return model;
}

void check_dataset(const Dataset& data)
{
    if (data.envs.empty()) {
        throw ContractError("train: dataset has no environments");
    }
    for (const auto& env : data.envs) {
        steps_of(env);
    }
}

void finish(Loop& L, TrainResult& out)
{
    out.metrics.train = evaluate(out.model, L.data, L.cfg.substeps, L.cfg.integrator);
    append_summary(out.metrics, L.method_name, L.data, "train", out.metrics.train);
    if (L.test != nullptr) {
        out.metrics.test = evaluate(out.model, *L.test, L.cfg.substeps, L.cfg.integrator);
        append_summary(out.metrics, L.method_name, *L.test, "test", *out.metrics.test);
    }
}

} // namespace

TrainResult train(const Dataset& data, const TrainConfig& cfg, const Dataset* test)
{
    validate(cfg);
    check_dataset(data);
    const models::ArchSpec arch = arch_for(data, cfg);

    TrainResult out;
    out.model = init_model(data, cfg, arch);
    Loop L{data, cfg, test, to_string(cfg.method), cfg.method == Method::LEADS, {}, &out.metrics};
    if (L.penalized) {
        for (const auto& env : data.envs) {
            L.pen.push_back(penalty_data(env));
        }
    }
    Rng coins = Rng::derive(cfg.seed, {20});
    if (cfg.eval_every > 0) {
        log_test(L, out.model, 0);
    }
    ad::AdamState opt = fresh_adam(cfg);
    run_epochs(L, out.model, 0, cfg.epochs, coins, opt);

    if (cfg.method == Method::GBML) {
        // Fine-tune a copy of the pooled model on each environment.
        DecomposedModel& m = out.model;
        const Params f = m.f;
        const Params g = m.g.at(models::kSharedKey);
        const auto power = m.power.at(models::kSharedKey);
        m.g.clear();
        m.power.clear();
        for (const auto& env : data.envs) {
            m.f_env[env.spec.env_id] = f;
            m.g[env.spec.env_id] = g;
            m.power[env.spec.env_id] = power;
        }
        m.f.clear();
        // each copy inherits the pooled Adam moments
        std::size_t f_count = 0;
        for (const auto& p : f) {
            f_count += p.requires_grad() ? p.size() : 0;
        }
        const std::size_t E = data.envs.size();
        for (std::vector<double>* mom : {&opt.m, &opt.v}) {
            const std::vector<double> pooled = *mom;
            mom->clear();
            for (std::size_t e = 0; e < E; ++e) {
                mom->insert(mom->end(), pooled.begin(), pooled.begin() + static_cast<std::ptrdiff_t>(f_count));
            }
            for (std::size_t e = 0; e < E; ++e) {
                mom->insert(mom->end(), pooled.begin() + static_cast<std::ptrdiff_t>(f_count), pooled.end());
            }
        }
        const int ft = static_cast<int>(std::lround(cfg.finetune_fraction * cfg.epochs));
        if (ft > 0) {
            run_epochs(L, m, cfg.epochs, ft, coins, opt);
        }
    }
    finish(L, out);
    return out;
}

TrainResult adapt_novel(const DecomposedModel& pretrained, const Dataset& novel, const TrainConfig& cfg,
                        const AdaptOptions& opts, const Dataset* test)
{
    validate(cfg);
    check_dataset(novel);
    if (pretrained.f.empty()) {
        throw ContractError("adapt: pretrained model has no shared f (trained per environment?)");
    }
    if (pretrained.arch.state_dim() != systems::state_dim(novel.envs.front().spec)) {
        throw DimensionError("adapt: model state dimension " + std::to_string(pretrained.arch.state_dim()) +
                             " does not match the novel dataset");
    }

    if (opts.scheme == AdaptScheme::FromScratch) {
        TrainConfig c = cfg;
        c.method = Method::OnePerEnv;
        c.arch = models::to_string(pretrained.arch.kind);
        c.hidden_width = static_cast<int>(pretrained.arch.hidden_width);
        c.channels = static_cast<int>(pretrained.arch.channels);
        TrainResult r = train(novel, c, test);
        for (auto& row : r.metrics.rows) {
            row.method = to_string(opts.scheme);
        }
        r.model.method = to_string(opts.scheme);
        return r;
    }

    TrainResult out;
    DecomposedModel& m = out.model;
    m.arch = pretrained.arch;
    m.f = pretrained.f;
    m.seed = cfg.seed;
    m.method = to_string(opts.scheme);
    for (auto& p : m.f) {
        p.set_requires_grad(false);
        p.clear_grad();
    }
    const auto init = opts.scheme == AdaptScheme::FOnly ? models::InitScheme::Zero : cfg.g_init;
    for (std::size_t e = 0; e < novel.envs.size(); ++e) {
        const auto& id = novel.envs[e].spec.env_id;
        Params g;
        auto it = opts.initial_g.find(id);
        if (opts.scheme == AdaptScheme::FPlusG && it != opts.initial_g.end()) {
            g = it->second;
            for (auto& p : g) {
                p.set_requires_grad(true);
                p.clear_grad();
            }
        } else {
            g = models::init_params(m.arch, Rng::derive(cfg.seed, {11, env_stream(e)}).engine()(), init);
        }
        models::add_env(m, id, std::move(g), Rng::derive(cfg.seed, {12, env_stream(e)}).engine()());
    }

    Loop L{novel, cfg, test, to_string(opts.scheme), true, {}, &out.metrics};
    if (opts.scheme == AdaptScheme::FPlusG) {
        for (const auto& env : novel.envs) {
            L.pen.push_back(penalty_data(env));
        }
        Rng coins = Rng::derive(cfg.seed, {20});
        if (cfg.eval_every > 0) {
            log_test(L, m, 0);
        }
        ad::AdamState opt = fresh_adam(cfg);
        run_epochs(L, m, 0, cfg.epochs, coins, opt);
    }
    finish(L, out);
    return out;
}

} // namespace leads::training
