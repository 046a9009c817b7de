#include "leads/harness/cli.hpp"

#include "leads/error.hpp"
#include "leads/harness/io.hpp"
#include "leads/harness/sweep.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <sstream>

namespace leads::harness {

namespace {

training::TrainConfig load_config(const std::string& path, training::TrainConfig base)
{
    if (path.empty()) {
        return base;
    }
    return config_from_json(read_json_file(path), base);
}

theory::LinearCurveParams linear_params(const Json& j)
{
    theory::LinearCurveParams p;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const Json& v = it.value();
        if (k == "d") {
            p.d = v.get<std::size_t>();
        } else if (k == "ms") {
            p.ms = v.get<std::vector<int>>();
        } else if (k == "ns") {
            p.ns = v.get<std::vector<int>>();
        } else if (k == "delta") {
            p.delta = v.get<double>();
        } else if (k == "z") {
            p.z = v.get<double>();
        } else if (k == "seed") {
            p.seed = v.get<std::uint64_t>();
        } else if (k == "traj") {
            p.traj = v.get<int>();
        } else if (k == "K") {
            p.K = v.get<int>();
        } else if (k == "dt") {
            p.dt = v.get<double>();
        } else {
            throw ConfigError("bound params: unknown key '" + k + "'");
        }
    }
    return p;
}

theory::NnCurveParams nn_params(const Json& j)
{
    theory::NnCurveParams p;
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string& k = it.key();
        const Json& v = it.value();
        if (k == "W") {
            p.W = v.get<double>();
        } else if (k == "D") {
            p.D = v.get<double>();
        } else if (k == "c") {
            p.c = v.get<double>();
        } else if (k == "R") {
            p.R = v.get<double>();
        } else if (k == "L") {
            p.L = v.get<double>();
        } else if (k == "alpha") {
            p.alpha = v.get<double>();
        } else if (k == "r_penalty") {
            p.r_penalty = v.get<double>();
        } else if (k == "r_no_penalty") {
            p.r_no_penalty = v.get<double>();
        } else if (k == "delta") {
            p.delta = v.get<double>();
        } else if (k == "z") {
            p.z = v.get<double>();
        } else if (k == "ms") {
            p.ms = v.get<std::vector<int>>();
        } else if (k == "ns") {
            p.ns = v.get<std::vector<int>>();
        } else {
            throw ConfigError("bound params: unknown key '" + k + "'");
        }
    }
    return p;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"Multi-environment dynamics learning with a shared and per-environment decomposition", "leads"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "Simulate a dataset");
    std::string g_system, g_out, g_split = "train", g_solver = "dopri5";
    int g_envs = 1, g_traj = 1, g_k = 20;
    double g_dt = 0.5;
    std::uint64_t g_seed = 0;
    std::size_t g_grid = systems::kGsDefaultGrid;
    bool g_novel = false;
    gen->add_option("--system", g_system, "lv | gs | linear")->required();
    gen->add_option("--envs", g_envs, "Number of environments")->required();
    gen->add_option("--traj", g_traj, "Trajectories per environment")->required();
    gen->add_option("--k", g_k, "Steps per trajectory")->required();
    gen->add_option("--dt", g_dt, "Observation interval")->required();
    gen->add_option("--seed", g_seed, "Seed")->required();
    gen->add_option("--out", g_out, "Output dataset JSON")->required();
    gen->add_option("--split", g_split, "train | test (independent initial conditions)");
    gen->add_option("--grid", g_grid, "Gray-Scott grid side");
    gen->add_option("--solver", g_solver, "dopri5 | rk4");
    gen->add_flag("--novel", g_novel, "Draw novel environments (seed offset 1e6)");

    // train
    auto* tr = app.add_subcommand("train", "Train a method on a dataset");
    std::string t_method, t_data, t_config, t_out, t_metrics, t_test;
    tr->add_option("--method", t_method, "leads | one-for-all | one-per-env | leads-no-min | gbml")->required();
    tr->add_option("--data", t_data, "Training dataset")->required();
    tr->add_option("--config", t_config, "Train config JSON");
    tr->add_option("--out", t_out, "Output model JSON")->required();
    tr->add_option("--metrics", t_metrics, "Metrics CSV")->required();
    tr->add_option("--test", t_test, "Held-out dataset scored in the metrics");

    // adapt
    auto* ad = app.add_subcommand("adapt", "Adapt a pretrained model to novel environments");
    std::string a_model, a_data, a_scheme, a_metrics, a_config, a_test, a_out;
    ad->add_option("--model", a_model, "Pretrained model")->required();
    ad->add_option("--data", a_data, "Novel-environment dataset")->required();
    ad->add_option("--scheme", a_scheme, "f-only | from-scratch | f-plus-g")->required();
    ad->add_option("--metrics", a_metrics, "Metrics CSV")->required();
    ad->add_option("--config", a_config, "Train config JSON");
    ad->add_option("--test", a_test, "Held-out dataset of the novel environments");
    ad->add_option("--out", a_out, "Output adapted model JSON");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a model");
    std::string e_model, e_data, e_metrics;
    ev->add_option("--model", e_model, "Model JSON")->required();
    ev->add_option("--data", e_data, "Dataset")->required();
    ev->add_option("--metrics", e_metrics, "Metrics CSV")->required();

    // bound
    auto* bd = app.add_subcommand("bound", "Generalization bound curves");
    std::string b_case, b_params, b_out;
    bd->add_option("--case", b_case, "linear | nn")->required()->check(CLI::IsMember({"linear", "nn"}));
    bd->add_option("--params", b_params, "Parameter JSON (defaults when omitted)");
    bd->add_option("--out", b_out, "Output CSV")->required();

    // sweep
    auto* sw = app.add_subcommand("sweep", "Environment-grouping sweep");
    std::string s_spec, s_out;
    sw->add_option("--spec", s_spec, "Sweep spec JSON")->required();
    sw->add_option("--out", s_out, "Output directory")->required();

    try {
        std::vector<std::string> rev(args.rbegin(), args.rend());
        app.parse(rev);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return 0;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*gen) {
            systems::GenerateOptions g;
            g.system = systems::system_from_string(g_system);
            g.m_envs = g_envs;
            g.n_traj = g_traj;
            g.K = g_k;
            g.dt = g_dt;
            g.seed = g_novel ? g_seed + systems::kNovelSeedOffset : g_seed;
            g.gs_grid = g_grid;
            if (g_split == "train") {
                g.ic_stream = 0;
            } else if (g_split == "test") {
                g.ic_stream = 1;
            } else {
                throw ConfigError("--split must be train or test");
            }
            if (g_solver == "dopri5") {
                g.solver = systems::GroundTruthSolver::Dopri5;
            } else if (g_solver == "rk4") {
                g.solver = systems::GroundTruthSolver::Rk4Fine;
            } else {
                throw ConfigError("--solver must be dopri5 or rk4");
            }
            save_dataset(g_out, systems::generate_dataset(g));
        } else if (*tr) {
            const auto data = load_dataset(t_data);
            auto cfg = load_config(t_config, training::default_config(data.system));
            cfg.method = training::method_from_string(t_method);
            training::validate(cfg);
            std::optional<systems::Dataset> test;
            if (!t_test.empty()) {
                test = load_dataset(t_test);
            }
            auto res = training::train(data, cfg, test ? &*test : nullptr);
            save_model(t_out, res.model);
            save_metrics(t_metrics, res.metrics);
        } else if (*ad) {
            const auto model = load_model(a_model);
            const auto data = load_dataset(a_data);
            auto cfg = load_config(a_config, training::default_config(data.system));
            cfg.method = training::Method::LEADS;
            training::AdaptOptions opts;
            opts.scheme = training::adapt_scheme_from_string(a_scheme);
            std::optional<systems::Dataset> test;
            if (!a_test.empty()) {
                test = load_dataset(a_test);
            }
            auto res = training::adapt_novel(model, data, cfg, opts, test ? &*test : nullptr);
            if (!a_out.empty()) {
                save_model(a_out, res.model);
            }
            save_metrics(a_metrics, res.metrics);
        } else if (*ev) {
            const auto model = load_model(e_model);
            const auto data = load_dataset(e_data);
            training::Metrics m;
            m.train = training::evaluate(model, data);
            training::append_summary(m, model.method, data, "test", m.train);
            save_metrics(e_metrics, m);
        } else if (*bd) {
            const Json params = b_params.empty() ? Json::object() : read_json_file(b_params);
            std::vector<theory::BoundRow> rows;
            try {
                rows = b_case == "linear" ? theory::linear_bound_curve(linear_params(params))
                                          : theory::nn_bound_curve(nn_params(params));
            } catch (const Json::exception& e) {
                throw ConfigError(std::string("bound params: wrong value type: ") + e.what());
            }
            std::ostringstream os;
            write_bound_csv(os, rows);
            write_text_file(b_out, os.str());
        } else if (*sw) {
            const auto spec = sweep_spec_from_json(read_json_file(s_spec));
            write_sweep(s_out, run_sweep(spec));
        }
    } catch (const IoError& e) {
        err << "io error: " << e.what() << '\n';
        return 2;
    } catch (const Error& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

int run_cli(int argc, char** argv)
{
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) {
        args.emplace_back(argv[i]);
    }
    return run_cli(args, std::cout, std::cerr);
}

} // namespace leads::harness
