#include "leads/error.hpp"
#include "leads/training/training.hpp"

#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

using namespace leads;
using namespace leads::training;
using models::DecomposedModel;
using models::InitScheme;
using models::Params;

namespace {

systems::Dataset lv_data(int envs, int traj, int K, std::uint64_t seed, std::uint64_t ic_stream = 0)
{
    systems::GenerateOptions o;
    o.m_envs = envs;
    o.n_traj = traj;
    o.K = K;
    o.dt = 0.5;
    o.seed = seed;
    o.ic_stream = ic_stream;
    return systems::generate_dataset(o);
}

systems::Dataset linear_data(int envs, int traj, int K, double dt, std::uint64_t seed)
{
    systems::GenerateOptions o;
    o.system = systems::System::Linear;
    o.m_envs = envs;
    o.n_traj = traj;
    o.K = K;
    o.dt = dt;
    o.seed = seed;
    return systems::generate_dataset(o);
}

TrainConfig small_config(Method m, int epochs, std::uint64_t seed = 0)
{
    TrainConfig c = default_config(systems::System::LV);
    c.method = m;
    c.epochs = epochs;
    c.seed = seed;
    c.hidden_width = 16;
    c.log_every = 0;
    return c;
}

// A LINEAR_MAP model whose f + g_e equals the true operator of each env.
DecomposedModel exact_linear_model(const systems::Dataset& data)
{
    DecomposedModel m;
    m.arch = models::linear_map_arch(systems::kLinearDim);
    m.f = models::init_params(m.arch, 0, InitScheme::Zero);
    for (const auto& env : data.envs) {
        const auto a = env.spec.linear().matrix();
        Params g = models::init_params(m.arch, 0, InitScheme::Zero);
        const std::size_t d = systems::kLinearDim;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                g[0][i * d + j] = a[j * d + i]; // y = x W, so W = A^T
            }
        }
        models::add_env(m, env.spec.env_id, std::move(g), 0);
    }
    return m;
}

DecomposedModel random_mlp_model(const std::vector<std::string>& envs, std::size_t width, std::uint64_t seed)
{
    DecomposedModel m;
    m.arch = models::mlp_arch(2, width);
    m.f = models::init_params(m.arch, seed, InitScheme::Standard);
    for (std::size_t e = 0; e < envs.size(); ++e) {
        models::add_env(m, envs[e], models::init_params(m.arch, seed + 1 + e, InitScheme::Standard), seed + e);
    }
    return m;
}

} // namespace

TEST_CASE("method and scheme names round-trip")
{
    for (Method m : {Method::LEADS, Method::OneForAll, Method::OnePerEnv, Method::LeadsNoMin, Method::GBML}) {
        CHECK(method_from_string(to_string(m)) == m);
    }
    for (AdaptScheme s : {AdaptScheme::FOnly, AdaptScheme::FromScratch, AdaptScheme::FPlusG}) {
        CHECK(adapt_scheme_from_string(to_string(s)) == s);
    }
    CHECK_THROWS_AS(method_from_string("maml"), ConfigError);
}

TEST_CASE("config validation")
{
    TrainConfig c;
    CHECK_NOTHROW(validate(c));
    c.lambda = -1.0;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = TrainConfig{};
    c.ss_exponent = 1.5;
    CHECK_THROWS_AS(validate(c), ConfigError);
    c = TrainConfig{};
    c.lambda = std::numeric_limits<double>::infinity();
    CHECK_NOTHROW(validate(c));
    CHECK(default_config(systems::System::GS).lambda == 1e2);
    CHECK(default_config(systems::System::GS).alpha == 1e-2);
    CHECK(default_config(systems::System::LV).lambda == 5e3);
    CHECK(default_config(systems::System::LV).alpha == 1e-3);
}

TEST_CASE("trajectory loss of the exact linear model is tiny")
{
    const auto data = linear_data(2, 2, 10, 0.5, 3);
    auto model = exact_linear_model(data);
    for (const auto& env : data.envs) {
        ad::Tape t;
        models::BoundModel bm(t, model);
        Rng coins(0);
        const double loss =
            trajectory_loss(bm, env, data.dt, 0.0, coins, integrators::Method::RK4, 50).value().item();
        CHECK(loss < 1e-8);
    }
    CHECK(evaluate(model, data, 50).mean < 1e-8);
}

TEST_CASE("zero model on fixed-point trajectories has zero loss")
{
    systems::GenerateOptions o;
    o.m_envs = 1;
    o.K = 6;
    o.envs = {systems::EnvSpec{systems::System::LV, systems::LvParams{1, 1, 1, 1}, "fp"}};
    auto data = systems::generate_dataset(o);
    for (auto& tr : data.envs[0].trajectories) {
        tr.x0 = {1.0, 1.0};
        for (auto& s : tr.states) {
            s = {1.0, 1.0};
        }
    }
    DecomposedModel m;
    m.arch = models::mlp_arch(2, 4);
    m.f = models::init_params(m.arch, 0, InitScheme::Zero);
    models::add_env(m, "fp", models::init_params(m.arch, 0, InitScheme::Zero), 0);
    ad::Tape t;
    models::BoundModel bm(t, m);
    Rng coins(1);
    CHECK(trajectory_loss(bm, data.envs[0], data.dt, 0.5, coins).value().item() == 0.0);
    CHECK(evaluate(m, data).mean == 0.0);
}

TEST_CASE("teacher forcing with probability 1 restarts every step from the data")
{
    const auto data = lv_data(1, 1, 5, 2);
    auto m = random_mlp_model({"env0"}, 8, 4);
    const auto& env = data.envs[0];
    ad::Tape t;
    models::BoundModel bm(t, m);
    Rng coins(0);
    const double forced = trajectory_loss(bm, env, data.dt, 1.0, coins).value().item();
    double expect = 0.0;
    const auto& s = env.trajectories[0].states;
    for (std::size_t k = 0; k + 1 < s.size(); ++k) {
        const integrators::Deriv f = [&](const integrators::State& x) { return models::predict(m, "env0", x); };
        const auto next = integrators::step_fixed(f, s[k], data.dt, integrators::Method::RK4);
        expect += (next[0] - s[k + 1][0]) * (next[0] - s[k + 1][0]) + (next[1] - s[k + 1][1]) * (next[1] - s[k + 1][1]);
    }
    expect /= static_cast<double>(2 * (s.size() - 1));
    CHECK(forced == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("penalty of a zero g is zero")
{
    const auto data = lv_data(1, 2, 5, 1);
    DecomposedModel m = random_mlp_model({}, 8, 0);
    models::add_env(m, "env0", models::init_params(m.arch, 0, InitScheme::Zero), 3);
    const auto pd = penalty_data(data.envs[0]);
    CHECK(omega_value(m, "env0", pd, 0.0) == 0.0);
    CHECK(omega_value(m, "env0", pd, 1e-3) == 0.0);
}

TEST_CASE("identity g has unit normalized norm")
{
    const auto data = linear_data(1, 3, 5, 0.5, 2);
    const auto arch = models::linear_map_arch(8);
    Params g = models::init_params(arch, 0, InitScheme::Zero);
    for (std::size_t i = 0; i < 8; ++i) {
        g[0][i * 8 + i] = 1.0;
    }
    const auto pd = penalty_data(data.envs[0]);
    CHECK(empirical_norm_term(arch, g, pd, 2.0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(empirical_norm_term(arch, g, pd, 1.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("penalty matches a direct computation")
{
    const auto data = lv_data(1, 2, 6, 5);
    auto m = random_mlp_model({"env0"}, 6, 7);
    const auto pd = penalty_data(data.envs[0]);
    const double alpha = 0.05;
    double norm = 0.0;
    std::size_t n = 0;
    for (const auto& tr : data.envs[0].trajectories) {
        for (const auto& x : tr.states) {
            const auto y = models::evaluate(m.arch, m.g_for("env0"), x);
            norm += (y[0] * y[0] + y[1] * y[1]) / (x[0] * x[0] + x[1] * x[1]);
            ++n;
        }
    }
    norm /= static_cast<double>(n);
    double spec = 0.0;
    for (std::size_t idx : models::weight_indices(m.arch)) {
        const auto& w = m.g_for("env0")[idx];
        // [in, out] layout: the spectral norm is the same for W and W^T
        const double s = oracle::spectral_norm(std::vector<double>(w.data().begin(), w.data().end()), w.dim(0),
                                               w.dim(1));
        spec += s * s;
    }
    CHECK(omega_value(m, "env0", pd, alpha) == doctest::Approx(norm + alpha * spec).epsilon(1e-9));
    CHECK(empirical_norm_term(m.arch, m.g_for("env0"), pd, 2.0) == doctest::Approx(norm).epsilon(1e-12));
}

TEST_CASE("penalty grows when the last layer of g is scaled up")
{
    const auto data = lv_data(1, 1, 5, 8);
    auto m = random_mlp_model({"env0"}, 8, 9);
    const auto pd = penalty_data(data.envs[0]);
    double last = omega_value(m, "env0", pd, 1e-3);
    for (double c : {1.5, 2.0, 3.0}) {
        auto scaled = m;
        for (double& w : scaled.g_for("env0")[6].data()) {
            w *= c;
        }
        for (double& b : scaled.g_for("env0")[7].data()) {
            b *= c;
        }
        const double v = omega_value(scaled, "env0", pd, 1e-3);
        CHECK(v > last);
        last = v;
        CHECK(empirical_norm_term(m.arch, scaled.g_for("env0"), pd, 2.0) ==
              doctest::Approx(empirical_norm_term(m.arch, m.g_for("env0"), pd, 2.0) * c * c).epsilon(1e-12));
    }
}

TEST_CASE("near-zero states fall back to the plain squared norm")
{
    systems::EnvData env;
    env.spec.env_id = "z";
    systems::Trajectory tr;
    tr.x0 = {0.0, 0.0};
    tr.states = {{0.0, 0.0}, {3.0, 4.0}};
    env.trajectories = {tr};
    const auto pd = penalty_data(env);
    CHECK(pd.weights[0] == 0.5);
    CHECK(pd.weights[1] == doctest::Approx(1.0 / 50.0));
}

TEST_CASE("gradient isolation between environments")
{
    const auto data = lv_data(3, 1, 4, 6);
    auto m = random_mlp_model({"env0", "env1", "env2"}, 8, 1);
    auto pd = penalty_data(data.envs[1]);
    ad::Tape t;
    models::BoundModel bm(t, m);
    for (const auto& env : data.envs) {
        bm.forward(env.spec.env_id, t.constant(ad::Tensor::matrix(1, 2, {1.0, 1.0})));
    }
    Rng coins(0);
    ad::Var loss = trajectory_loss(bm, data.envs[1], data.dt, 0.3, coins);
    loss = ad::add_scaled(loss, 0.1, omega_penalty(bm, "env1", pd, 1e-3, 1));
    t.backward(loss);
    for (const char* other : {"env0", "env2"}) {
        for (const auto& p : m.g_for(other)) {
            for (double g : p.grad()) {
                CHECK(g == 0.0);
            }
        }
    }
    double own = 0.0, shared = 0.0;
    for (const auto& p : m.g_for("env1")) {
        for (double g : p.grad()) {
            own += std::abs(g);
        }
    }
    for (const auto& p : m.f) {
        for (double g : p.grad()) {
            shared += std::abs(g);
        }
    }
    CHECK(own > 0.0);
    CHECK(shared > 0.0);
}

TEST_CASE("training loss gradient matches finite differences")
{
    const auto data = lv_data(2, 1, 3, 12);
    auto m = random_mlp_model({"env0", "env1"}, 8, 2);
    std::vector<PenaltyData> pds{penalty_data(data.envs[0]), penalty_data(data.envs[1])};
    auto taped = [&](bool backward) {
        ad::Tape t;
        models::BoundModel bm(t, m);
        ad::Var total;
        for (std::size_t e = 0; e < 2; ++e) {
            Rng coins(e);
            ad::Var l = trajectory_loss(bm, data.envs[e], data.dt, 0.5, coins);
            l = ad::add_scaled(l, 0.2, omega_penalty(bm, data.envs[e].spec.env_id, pds[e], 1e-2, 200));
            total = e == 0 ? l : total + l;
        }
        if (backward) {
            t.backward(total);
        }
        return total.value().item();
    };
    // restart the power iteration from the same vectors at every evaluation
    auto objective = [&](bool backward) {
        const auto saved = m.power;
        const double v = taped(backward);
        m.power = saved;
        return v;
    };
    objective(true);
    std::vector<ad::Tensor*> params{&m.f[0], &m.f[5], &m.g_for("env0")[2], &m.g_for("env1")[6]};
    for (ad::Tensor* p : params) {
        const std::vector<double> analytic(p->grad().begin(), p->grad().end());
        const auto numeric = oracle::fd_gradient([&] { return objective(false); }, p->data());
        CHECK(oracle::rel_err(analytic, numeric, 1e-6) < 1e-5);
    }
}

TEST_CASE("every method lowers its free-running training error and training is reproducible")
{
    // the raw objective is not comparable across epochs while teacher forcing decays
    const auto data = lv_data(2, 1, 8, 3);
    for (Method method : {Method::LEADS, Method::OneForAll, Method::OnePerEnv, Method::LeadsNoMin, Method::GBML}) {
        for (std::uint64_t seed : {0u, 1u, 2u}) {
            const auto first = train(data, small_config(method, 1, seed));
            const auto r = train(data, small_config(method, 200, seed));
            REQUIRE(r.metrics.loss_history.size() >= 200);
            CHECK(r.metrics.train.mean < first.metrics.train.mean);
            if (seed == 0) {
                const auto again = train(data, small_config(method, 200, seed));
                CHECK(again.metrics.loss_history == r.metrics.loss_history);
                CHECK(again.metrics.train.mean == r.metrics.train.mean);
            }
        }
    }
}

TEST_CASE("infinite lambda reproduces the unpenalized objective path")
{
    const auto data = lv_data(2, 1, 6, 4);
    auto a = small_config(Method::LEADS, 60);
    a.lambda = std::numeric_limits<double>::infinity();
    const auto b = small_config(Method::LeadsNoMin, 60);
    const auto ra = train(data, a);
    const auto rb = train(data, b);
    CHECK(ra.metrics.loss_history == rb.metrics.loss_history);
    CHECK(ra.metrics.train.mean == rb.metrics.train.mean);
}

TEST_CASE("model layout per method")
{
    const auto data = lv_data(3, 1, 4, 1);
    const auto leads = train(data, small_config(Method::LEADS, 2)).model;
    CHECK(leads.g.size() == 3);
    CHECK(!leads.f.empty());
    const auto ofa = train(data, small_config(Method::OneForAll, 2)).model;
    CHECK(ofa.g.size() == 1);
    CHECK(ofa.g.count(models::kSharedKey) == 1);
    const auto ope = train(data, small_config(Method::OnePerEnv, 2)).model;
    CHECK(ope.f.empty());
    CHECK(ope.f_env.size() == 3);
    const auto gbml = train(data, small_config(Method::GBML, 4)).model;
    CHECK(gbml.f_env.size() == 3);
    CHECK(gbml.g.size() == 3);
}

TEST_CASE("unpenalized LINEAR_MAP training recovers each environment operator")
{
    const auto data = linear_data(2, 8, 20, 0.1, 5);
    TrainConfig c = default_config(systems::System::Linear);
    c.arch = "linear_map";
    c.epochs = 6000;
    c.lr = 1e-2;
    c.lambda = std::numeric_limits<double>::infinity();
    c.log_every = 0;
    const auto r = train(data, c);
    for (const auto& env : data.envs) {
        const auto a = env.spec.linear().matrix();
        const auto f = models::linear_matrix(r.model.f);
        const auto g = models::linear_matrix(r.model.g_for(env.spec.env_id));
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            num += (f[i] + g[i] - a[i]) * (f[i] + g[i] - a[i]);
            den += a[i] * a[i];
        }
        CHECK(std::sqrt(num / den) < 1e-3);
    }
}

TEST_CASE("evaluation")
{
    const auto data = lv_data(2, 3, 5, 9);
    auto m = random_mlp_model({"env0", "env1"}, 8, 3);
    const auto r = evaluate(m, data);
    CHECK(r.per_env.size() == 2);
    CHECK(r.mean == doctest::Approx((r.per_env.at("env0") + r.per_env.at("env1")) / 2));
    const double d = r.per_env.at("env0") - r.per_env.at("env1");
    CHECK(r.std == doctest::Approx(std::sqrt(d * d / 2)));

    auto shuffled = data;
    for (auto& env : shuffled.envs) {
        std::reverse(env.trajectories.begin(), env.trajectories.end());
    }
    CHECK(evaluate(m, shuffled).mean == doctest::Approx(r.mean).epsilon(1e-14));

    auto missing = random_mlp_model({"env0"}, 8, 3);
    CHECK_THROWS_AS(evaluate(missing, data), LookupError);
}

TEST_CASE("metrics CSV layout")
{
    const auto data = lv_data(2, 1, 4, 2);
    const auto test = lv_data(2, 1, 4, 2, 1);
    auto c = small_config(Method::LEADS, 5);
    c.log_every = 2;
    c.eval_every = 5;
    const auto r = train(data, c, &test);
    std::ostringstream os;
    r.metrics.write_csv(os);
    const std::string csv = os.str();
    CHECK(csv.rfind(std::string(kMetricsHeader) + "\n", 0) == 0);
    CHECK(csv.find("leads,lv,env0,train,0,") != std::string::npos);
    CHECK(csv.find("leads,lv,env1,test,5,") != std::string::npos);
    CHECK(csv.find("leads,lv,mean,test,-1,") != std::string::npos);
    CHECK(r.metrics.test.has_value());
}

TEST_CASE("adaptation schemes")
{
    const auto data = lv_data(2, 1, 6, 7);
    const auto test = lv_data(2, 2, 6, 7, 1);
    auto c = small_config(Method::LEADS, 30);
    const auto pre = train(data, c, &test);

    SUBCASE("f-only on a training env equals the error of f alone")
    {
        const auto r = adapt_novel(pre.model, test, c, AdaptOptions{AdaptScheme::FOnly, {}});
        DecomposedModel f_only = pre.model;
        for (auto& [id, g] : f_only.g) {
            g = models::init_params(f_only.arch, 0, InitScheme::Zero);
        }
        CHECK(r.metrics.train.mean == doctest::Approx(evaluate(f_only, test).mean).epsilon(1e-14));
    }
    SUBCASE("f-plus-g keeps f frozen")
    {
        auto ac = c;
        ac.epochs = 10;
        const auto r = adapt_novel(pre.model, data, ac, AdaptOptions{AdaptScheme::FPlusG, {}});
        for (std::size_t i = 0; i < pre.model.f.size(); ++i) {
            CHECK(std::equal(r.model.f[i].data().begin(), r.model.f[i].data().end(),
                             pre.model.f[i].data().begin()));
        }
    }
    SUBCASE("f-plus-g with copied g and no steps reproduces the training-time error")
    {
        auto ac = c;
        ac.epochs = 0;
        const auto r = adapt_novel(pre.model, data, ac, AdaptOptions{AdaptScheme::FPlusG, pre.model.g}, &test);
        CHECK(r.metrics.test->mean == doctest::Approx(pre.metrics.test->mean).epsilon(1e-14));
    }
    SUBCASE("from-scratch needs no pretrained g and rejects per-env models")
    {
        auto ope = train(data, small_config(Method::OnePerEnv, 2)).model;
        CHECK_THROWS_AS(adapt_novel(ope, data, c, AdaptOptions{AdaptScheme::FPlusG, {}}), ContractError);
    }
}
