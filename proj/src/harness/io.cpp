#include "leads/harness/io.hpp"

#include "leads/error.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace leads::harness {

using systems::System;

namespace {

void write_string(std::ostream& os, const std::string& s)
{
    // Reuse nlohmann's escaping for strings.
    os << Json(s).dump();
}

void write_value(std::ostream& os, const Json& j)
{
    switch (j.type()) {
    case Json::value_t::null:
        os << "null";
        break;
    case Json::value_t::boolean:
        os << (j.get<bool>() ? "true" : "false");
        break;
    case Json::value_t::number_integer:
        os << j.get<std::int64_t>();
        break;
    case Json::value_t::number_unsigned:
        os << j.get<std::uint64_t>();
        break;
    case Json::value_t::number_float: {
        const double v = j.get<double>();
        if (!std::isfinite(v)) {
            throw ContractError("json: cannot serialize non-finite number");
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", v);
        os << buf;
        break;
    }
    case Json::value_t::string:
        write_string(os, j.get_ref<const std::string&>());
        break;
    case Json::value_t::array: {
        os << '[';
        bool first = true;
        for (const auto& e : j) {
            if (!first) {
                os << ',';
            }
            first = false;
            write_value(os, e);
        }
        os << ']';
        break;
    }
    case Json::value_t::object: {
        os << '{';
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) {
                os << ',';
            }
            first = false;
            write_string(os, it.key());
            os << ':';
            write_value(os, it.value());
        }
        os << '}';
        break;
    }
    default:
        throw ContractError("json: unsupported value type");
    }
}

Json floats(std::span<const double> v)
{
    Json a = Json::array();
    for (double x : v) {
        a.push_back(x);
    }
    return a;
}

std::vector<double> doubles(const Json& j, const std::string& what)
{
    if (!j.is_array()) {
        throw ContractError(what + ": expected an array of numbers");
    }
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& e : j) {
        if (!e.is_number()) {
            throw ContractError(what + ": expected an array of numbers");
        }
        out.push_back(e.get<double>());
    }
    return out;
}

const Json& field(const Json& j, const char* key, const std::string& what)
{
    if (!j.is_object() || !j.contains(key)) {
        throw ContractError(what + ": missing key '" + key + "'");
    }
    return j.at(key);
}

Json params_json(const systems::EnvSpec& spec)
{
    Json p = Json::object();
    switch (spec.system) {
    case System::LV: {
        const auto& lv = spec.lv();
        p["alpha"] = lv.alpha;
        p["beta"] = lv.beta;
        p["gamma"] = lv.gamma;
        p["delta"] = lv.delta;
        break;
    }
    case System::GS: {
        const auto& gs = spec.gs();
        p["F"] = gs.F;
        p["k"] = gs.k;
        p["Du"] = gs.Du;
        p["Dv"] = gs.Dv;
        p["grid"] = gs.grid;
        break;
    }
    case System::Linear: {
        const auto& li = spec.linear();
        p["dim"] = li.dim;
        p["Q"] = floats(li.Q);
        p["lambda"] = floats(li.lambda);
        break;
    }
    }
    return p;
}

systems::EnvSpec env_from_json(System system, const Json& j)
{
    const std::string what = "dataset env";
    systems::EnvSpec spec;
    spec.system = system;
    spec.env_id = field(j, "env_id", what).get<std::string>();
    const Json& p = field(j, "params", what);
    switch (system) {
    case System::LV: {
        systems::LvParams lv;
        lv.alpha = field(p, "alpha", what).get<double>();
        lv.beta = field(p, "beta", what).get<double>();
        lv.gamma = field(p, "gamma", what).get<double>();
        lv.delta = field(p, "delta", what).get<double>();
        spec.params = lv;
        break;
    }
    case System::GS: {
        systems::GsParams gs;
        gs.F = field(p, "F", what).get<double>();
        gs.k = field(p, "k", what).get<double>();
        gs.Du = field(p, "Du", what).get<double>();
        gs.Dv = field(p, "Dv", what).get<double>();
        gs.grid = field(p, "grid", what).get<std::size_t>();
        spec.params = gs;
        break;
    }
    case System::Linear: {
        systems::LinearParams li;
        li.dim = field(p, "dim", what).get<std::size_t>();
        li.Q = doubles(field(p, "Q", what), what + " Q");
        li.lambda = doubles(field(p, "lambda", what), what + " lambda");
        spec.params = li;
        break;
    }
    }
    systems::validate(spec);
    return spec;
}

} // namespace

void write_json(std::ostream& os, const Json& j)
{
    write_value(os, j);
}

std::string dump_json(const Json& j)
{
    std::ostringstream os;
    write_value(os, j);
    os << '\n';
    return os.str();
}

// ---- dataset ---------------------------------------------------------------

Json to_json(const systems::Dataset& data)
{
    Json j = Json::object();
    j["system"] = systems::to_string(data.system);
    j["dt"] = data.dt;
    j["K"] = data.K;
    j["seed"] = data.seed;
    Json envs = Json::array();
    for (const auto& env : data.envs) {
        Json e = Json::object();
        e["env_id"] = env.spec.env_id;
        e["params"] = params_json(env.spec);
        Json trajs = Json::array();
        for (const auto& tr : env.trajectories) {
            Json t = Json::object();
            t["x0"] = floats(tr.x0);
            Json states = Json::array();
            for (const auto& s : tr.states) {
                states.push_back(floats(s));
            }
            t["states"] = std::move(states);
            trajs.push_back(std::move(t));
        }
        e["trajectories"] = std::move(trajs);
        envs.push_back(std::move(e));
    }
    j["envs"] = std::move(envs);
    return j;
}

systems::Dataset dataset_from_json(const Json& j)
{
    const std::string what = "dataset";
    systems::Dataset data;
    data.system = systems::system_from_string(field(j, "system", what).get<std::string>());
    data.dt = field(j, "dt", what).get<double>();
    data.K = field(j, "K", what).get<int>();
    data.seed = field(j, "seed", what).get<std::uint64_t>();
    for (const auto& e : field(j, "envs", what)) {
        systems::EnvData env;
        env.spec = env_from_json(data.system, e);
        const std::size_t dim = systems::state_dim(env.spec);
        for (const auto& t : field(e, "trajectories", what)) {
            systems::Trajectory tr;
            tr.env_id = env.spec.env_id;
            tr.dt = data.dt;
            tr.x0 = doubles(field(t, "x0", what), "trajectory x0");
            for (const auto& s : field(t, "states", what)) {
                tr.states.push_back(doubles(s, "trajectory state"));
                if (tr.states.back().size() != dim) {
                    throw DimensionError("dataset: env " + env.spec.env_id + " has a state of size " +
                                         std::to_string(tr.states.back().size()) + ", expected " +
                                         std::to_string(dim));
                }
            }
            if (tr.states.size() != static_cast<std::size_t>(data.K) + 1 || tr.states.front() != tr.x0) {
                throw ContractError("dataset: env " + env.spec.env_id +
                                    " trajectory must hold K+1 states starting at x0");
            }
            env.trajectories.push_back(std::move(tr));
        }
        data.envs.push_back(std::move(env));
    }
    return data;
}

// ---- model -----------------------------------------------------------------

namespace {

Json params_to_json(const models::Params& ps)
{
    Json a = Json::array();
    for (const auto& t : ps) {
        a.push_back(floats(t.data()));
    }
    return a;
}

models::Params params_from_json(const models::ArchSpec& arch, const Json& j, const std::string& what)
{
    const auto shapes = models::param_shapes(arch);
    if (!j.is_array() || j.size() != shapes.size()) {
        throw DimensionError(what + ": expected " + std::to_string(shapes.size()) + " parameter tensors");
    }
    models::Params ps;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        ps.emplace_back(shapes[i], doubles(j[i], what), true);
    }
    return ps;
}

} // namespace

Json to_json(const models::DecomposedModel& model)
{
    Json j = Json::object();
    Json arch = Json::object();
    arch["kind"] = models::to_string(model.arch.kind);
    arch["in_dim"] = model.arch.in_dim;
    arch["out_dim"] = model.arch.out_dim;
    arch["hidden_width"] = model.arch.hidden_width;
    arch["channels"] = model.arch.channels;
    arch["kernel_size"] = model.arch.kernel_size;
    arch["grid"] = model.arch.grid;
    arch["depth"] = model.arch.depth;
    j["arch"] = std::move(arch);
    j["f"] = params_to_json(model.f);
    Json g = Json::object();
    for (const auto& [id, ps] : model.g) {
        g[id] = params_to_json(ps);
    }
    j["g"] = std::move(g);
    if (!model.f_env.empty()) {
        Json fe = Json::object();
        for (const auto& [id, ps] : model.f_env) {
            fe[id] = params_to_json(ps);
        }
        j["f_env"] = std::move(fe);
    }
    Json meta = Json::object();
    meta["seed"] = model.seed;
    meta["method"] = model.method;
    j["meta"] = std::move(meta);
    return j;
}

models::DecomposedModel model_from_json(const Json& j)
{
    const std::string what = "model";
    models::DecomposedModel m;
    const Json& a = field(j, "arch", what);
    m.arch.kind = models::arch_kind_from_string(field(a, "kind", what).get<std::string>());
    m.arch.in_dim = field(a, "in_dim", what).get<std::size_t>();
    m.arch.out_dim = field(a, "out_dim", what).get<std::size_t>();
    m.arch.hidden_width = field(a, "hidden_width", what).get<std::size_t>();
    m.arch.channels = field(a, "channels", what).get<std::size_t>();
    m.arch.kernel_size = field(a, "kernel_size", what).get<std::size_t>();
    m.arch.grid = field(a, "grid", what).get<std::size_t>();
    m.arch.depth = field(a, "depth", what).get<std::size_t>();
    models::validate(m.arch);
    const Json& meta = field(j, "meta", what);
    m.seed = field(meta, "seed", what).get<std::uint64_t>();
    m.method = field(meta, "method", what).get<std::string>();

    const Json& f = field(j, "f", what);
    if (!(f.is_array() && f.empty())) {
        m.f = params_from_json(m.arch, f, "model f");
    }
    if (j.contains("f_env")) {
        for (auto it = j["f_env"].begin(); it != j["f_env"].end(); ++it) {
            m.f_env[it.key()] = params_from_json(m.arch, it.value(), "model f_env " + it.key());
        }
    }
    std::uint64_t k = 0;
    for (auto it = j.at("g").begin(); it != j.at("g").end(); ++it) {
        models::add_env(m, it.key(), params_from_json(m.arch, it.value(), "model g " + it.key()),
                        Rng::derive(m.seed, {12, k++}).engine()());
    }
    return m;
}

// ---- config ----------------------------------------------------------------

Json to_json(const training::TrainConfig& cfg)
{
    Json j = Json::object();
    j["method"] = training::to_string(cfg.method);
    if (std::isinf(cfg.lambda)) {
        j["lambda"] = "inf";
    } else {
        j["lambda"] = cfg.lambda;
    }
    j["alpha"] = cfg.alpha;
    j["lr"] = cfg.lr;
    j["betas"] = {cfg.betas[0], cfg.betas[1]};
    j["epochs"] = cfg.epochs;
    j["ss_exponent"] = cfg.ss_exponent;
    j["integrator"] = integrators::to_string(cfg.integrator);
    j["seed"] = cfg.seed;
    j["g_init"] = models::to_string(cfg.g_init);
    j["substeps"] = cfg.substeps;
    j["power_iters"] = cfg.power_iters;
    j["log_every"] = cfg.log_every;
    j["eval_every"] = cfg.eval_every;
    j["finetune_fraction"] = cfg.finetune_fraction;
    j["arch"] = cfg.arch;
    j["hidden_width"] = cfg.hidden_width;
    j["channels"] = cfg.channels;
    return j;
}

training::TrainConfig config_from_json(const Json& j, training::TrainConfig cfg)
{
    if (!j.is_object()) {
        throw ConfigError("config: expected a JSON object");
    }
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            const Json& v = it.value();
            if (key == "method") {
                cfg.method = training::method_from_string(v.get<std::string>());
            } else if (key == "lambda") {
                if (v.is_string()) {
                    if (v.get<std::string>() != "inf") {
                        throw ConfigError("config: lambda must be a number or \"inf\"");
                    }
                    cfg.lambda = std::numeric_limits<double>::infinity();
                } else {
                    cfg.lambda = v.get<double>();
                }
            } else if (key == "alpha") {
                cfg.alpha = v.get<double>();
            } else if (key == "lr") {
                cfg.lr = v.get<double>();
            } else if (key == "betas") {
                if (!v.is_array() || v.size() != 2) {
                    throw ConfigError("config: betas must be a pair");
                }
                cfg.betas = {v[0].get<double>(), v[1].get<double>()};
            } else if (key == "epochs") {
                cfg.epochs = v.get<int>();
            } else if (key == "ss_exponent") {
                cfg.ss_exponent = v.get<double>();
            } else if (key == "integrator") {
                cfg.integrator = integrators::method_from_string(v.get<std::string>());
            } else if (key == "seed") {
                cfg.seed = v.get<std::uint64_t>();
            } else if (key == "g_init") {
                cfg.g_init = models::init_scheme_from_string(v.get<std::string>());
            } else if (key == "substeps") {
                cfg.substeps = v.get<int>();
            } else if (key == "power_iters") {
                cfg.power_iters = v.get<int>();
            } else if (key == "log_every") {
                cfg.log_every = v.get<int>();
            } else if (key == "eval_every") {
                cfg.eval_every = v.get<int>();
            } else if (key == "finetune_fraction") {
                cfg.finetune_fraction = v.get<double>();
            } else if (key == "arch") {
                cfg.arch = v.get<std::string>();
            } else if (key == "hidden_width") {
                cfg.hidden_width = v.get<int>();
            } else if (key == "channels") {
                cfg.channels = v.get<int>();
            } else {
                throw ConfigError("config: unknown key '" + key + "'");
            }
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("config: wrong value type: ") + e.what());
    }
    training::validate(cfg);
    return cfg;
}

// ---- files -----------------------------------------------------------------

Json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open '" + path.string() + "' for reading");
    }
    try {
        return Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw IoError("malformed JSON in '" + path.string() + "': " + e.what());
    }
}

void write_text_file(const std::filesystem::path& path, const std::string& text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot open '" + path.string() + "' for writing");
    }
    out << text;
    if (!out) {
        throw IoError("failed writing '" + path.string() + "'");
    }
}

namespace {

template <class F>
auto parse_document(const std::filesystem::path& path, F&& parse)
{
    const Json j = read_json_file(path);
    try {
        return parse(j);
    } catch (const Json::exception& e) {
        throw ContractError("'" + path.string() + "': " + e.what());
    }
}

} // namespace

systems::Dataset load_dataset(const std::filesystem::path& path)
{
    return parse_document(path, [](const Json& j) { return dataset_from_json(j); });
}

void save_dataset(const std::filesystem::path& path, const systems::Dataset& data)
{
    write_text_file(path, dump_json(to_json(data)));
}

models::DecomposedModel load_model(const std::filesystem::path& path)
{
    return parse_document(path, [](const Json& j) { return model_from_json(j); });
}

void save_model(const std::filesystem::path& path, const models::DecomposedModel& model)
{
    write_text_file(path, dump_json(to_json(model)));
}

void save_metrics(const std::filesystem::path& path, const training::Metrics& metrics)
{
    std::ostringstream os;
    metrics.write_csv(os);
    write_text_file(path, os.str());
}

void write_bound_csv(std::ostream& os, const std::vector<theory::BoundRow>& rows)
{
    os << "m,n,epsilon_with_penalty,epsilon_no_penalty\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%d,%d,%.17g,%.17g\n", r.m, r.n, r.eps_penalty, r.eps_no_penalty);
        os << buf;
    }
}

} // namespace leads::harness
