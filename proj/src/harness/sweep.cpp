#include "leads/harness/sweep.hpp"

#include "leads/error.hpp"

#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>

namespace leads::harness {

void validate(const SweepSpec& spec)
{
    if (spec.total_envs < 1) {
        throw ConfigError("sweep: total_envs must be positive");
    }
    if (spec.group_counts.empty() || spec.traj_per_env.empty() || spec.seeds.empty() || spec.methods.empty()) {
        throw ConfigError("sweep: group_counts, traj_per_env, seeds and methods must be non-empty");
    }
    for (int b : spec.group_counts) {
        if (b < 1 || spec.total_envs % b != 0) {
            throw ConfigError("sweep: group count " + std::to_string(b) + " does not divide " +
                              std::to_string(spec.total_envs) + " environments");
        }
    }
    for (int n : spec.traj_per_env) {
        if (n < 1) {
            throw ConfigError("sweep: traj_per_env entries must be positive");
        }
    }
    if (spec.K < 1 || !(spec.dt > 0.0) || spec.test_traj < 1) {
        throw ConfigError("sweep: K, dt and test_traj must be positive");
    }
}

SweepSpec sweep_spec_from_json(const Json& j)
{
    if (!j.is_object()) {
        throw ConfigError("sweep spec: expected a JSON object");
    }
    SweepSpec s;
    bool have_config = false;
    try {
        if (j.contains("system")) {
            s.system = systems::system_from_string(j["system"].get<std::string>());
        }
        s.config = training::default_config(s.system);
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& key = it.key();
            const Json& v = it.value();
            if (key == "system") {
                continue;
            } else if (key == "total_envs") {
                s.total_envs = v.get<int>();
            } else if (key == "group_counts") {
                s.group_counts = v.get<std::vector<int>>();
            } else if (key == "traj_per_env") {
                s.traj_per_env = v.get<std::vector<int>>();
            } else if (key == "seeds") {
                s.seeds = v.get<std::vector<std::uint64_t>>();
            } else if (key == "methods") {
                s.methods.clear();
                for (const auto& m : v) {
                    s.methods.push_back(training::method_from_string(m.get<std::string>()));
                }
            } else if (key == "K") {
                s.K = v.get<int>();
            } else if (key == "dt") {
                s.dt = v.get<double>();
            } else if (key == "test_traj") {
                s.test_traj = v.get<int>();
            } else if (key == "grid") {
                s.gs_grid = v.get<std::size_t>();
            } else if (key == "config") {
                have_config = true;
            } else {
                throw ConfigError("sweep spec: unknown key '" + key + "'");
            }
        }
        if (have_config) {
            s.config = config_from_json(j["config"], s.config);
        }
    } catch (const Json::exception& e) {
        throw ConfigError(std::string("sweep spec: wrong value type: ") + e.what());
    }
    validate(s);
    return s;
}

systems::Dataset group_slice(const systems::Dataset& data, int group, int m)
{
    const std::size_t lo = static_cast<std::size_t>(group) * static_cast<std::size_t>(m);
    if (lo + static_cast<std::size_t>(m) > data.envs.size()) {
        throw ContractError("sweep: group " + std::to_string(group) + " out of range");
    }
    systems::Dataset out = data;
    out.envs.assign(data.envs.begin() + static_cast<std::ptrdiff_t>(lo),
                    data.envs.begin() + static_cast<std::ptrdiff_t>(lo + static_cast<std::size_t>(m)));
    return out;
}

namespace {

std::size_t thread_cap()
{
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("LEADS_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v > 0) {
            n = static_cast<std::size_t>(v);
        }
    }
    return n;
}

struct DataPair {
    systems::Dataset train;
    systems::Dataset test;
};

} // namespace

std::vector<SweepCell> run_sweep(const SweepSpec& spec)
{
    validate(spec);

    // One train/test pair per (seed, n); every b slices the same environments.
    std::map<std::pair<std::uint64_t, int>, DataPair> data;
    for (auto seed : spec.seeds) {
        for (int n : spec.traj_per_env) {
            systems::GenerateOptions g;
            g.system = spec.system;
            g.m_envs = spec.total_envs;
            g.n_traj = n;
            g.K = spec.K;
            g.dt = spec.dt;
            g.seed = seed;
            g.gs_grid = spec.gs_grid;
            DataPair p;
            p.train = systems::generate_dataset(g);
            g.n_traj = spec.test_traj;
            g.ic_stream = 1;
            p.test = systems::generate_dataset(g);
            data.emplace(std::make_pair(seed, n), std::move(p));
        }
    }

    std::vector<SweepCell> cells;
    for (auto method : spec.methods) {
        for (int b : spec.group_counts) {
            for (int n : spec.traj_per_env) {
                for (auto seed : spec.seeds) {
                    SweepCell c;
                    c.method = method;
                    c.b = b;
                    c.m = spec.total_envs / b;
                    c.n = n;
                    c.seed = seed;
                    cells.push_back(std::move(c));
                }
            }
        }
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mu;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) {
                return;
            }
            SweepCell& c = cells[i];
            try {
                const DataPair& d = data.at({c.seed, c.n});
                training::TrainConfig cfg = spec.config;
                cfg.method = c.method;
                cfg.seed = c.seed;
                double acc = 0.0;
                for (int g = 0; g < c.b; ++g) {
                    const auto train = group_slice(d.train, g, c.m);
                    const auto test = group_slice(d.test, g, c.m);
                    auto res = training::train(train, cfg, &test);
                    const double mse = res.metrics.test->mean;
                    c.group_mse.push_back(mse);
                    acc += mse;
                    for (auto& row : res.metrics.rows) {
                        row.env_id = "g" + std::to_string(g) + "/" + row.env_id;
                        c.metrics.rows.push_back(std::move(row));
                    }
                }
                c.test_mse = acc / c.b;
            } catch (...) {
                std::lock_guard lock(failure_mu);
                if (!failure) {
                    failure = std::current_exception();
                }
                next.store(cells.size());
            }
        }
    };
    const std::size_t n_threads = std::min(thread_cap(), cells.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (failure) {
        std::rethrow_exception(failure);
    }
    return cells;
}

void write_sweep(const std::filesystem::path& dir, const std::vector<SweepCell>& cells)
{
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create sweep directory '" + dir.string() + "': " + ec.message());
    }
    std::string agg = "method,b,m,n,seed,test_mse\n";
    char buf[256];
    for (const auto& c : cells) {
        const std::string name = training::to_string(c.method) + "_b" + std::to_string(c.b) + "_n" +
                                 std::to_string(c.n) + "_s" + std::to_string(c.seed) + ".csv";
        save_metrics(dir / name, c.metrics);
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%llu,%.17g\n", training::to_string(c.method).c_str(), c.b, c.m,
                      c.n, static_cast<unsigned long long>(c.seed), c.test_mse);
        agg += buf;
    }
    write_text_file(dir / "aggregate.csv", agg);
}

} // namespace leads::harness
