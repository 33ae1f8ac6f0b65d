#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "cdc/checkpoint.hpp"
#include "cdc/training.hpp"

namespace cdc {

constexpr const char* kCodeVersion = "cdc-0.1.0";
constexpr const char* kMetricsSchema = "# cdc-metrics-v1";
constexpr const char* kEvalSchema = "# cdc-eval-v1";
constexpr const char* kAggregateSchema = "# cdc-aggregate-v1";
constexpr const char* kThresholdSchema = "# cdc-threshold-v1";

namespace fs = std::filesystem;
using nlohmann::json;

// ---- config files: flat key=value with CLI override precedence ----

inline std::map<std::string, std::string> read_config_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("config: malformed line '" + line + "' in " + path);
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return kv;
}

inline void apply_config(TrainConfig& cfg, const std::map<std::string, std::string>& kv) {
    for (const auto& [k, v] : kv) {
        if (k == "gamma") cfg.gamma = std::stod(v);
        else if (k == "batch") cfg.batch = std::stoi(v);
        else if (k == "lr_critic") cfg.lr_critic = std::stod(v);
        else if (k == "lr_actor") cfg.lr_actor = std::stod(v);
        else if (k == "tau") cfg.tau = std::stod(v);
        else if (k == "update_every") cfg.update_every = std::stoi(v);
        else if (k == "grid_dp") cfg.grid.dp = std::stod(v);
        else if (k == "grid_p") cfg.grid.P = std::stoi(v);
        else if (k == "delta") cfg.delta = std::stod(v);
        else if (k == "temperature") cfg.temperature = std::stod(v);
        else if (k == "grad_clip") cfg.grad_clip = std::stod(v);
        else if (k == "episodes") cfg.episodes = std::stoi(v);
        else if (k == "eval_every") cfg.eval_every = std::stoi(v);
        else if (k == "eval_episodes") cfg.eval_episodes = std::stoi(v);
        else if (k == "n_agents") cfg.n_agents = std::stoi(v);
        else if (k == "buffer_capacity") cfg.buffer_capacity = std::stoull(v);
        else if (k == "seed") cfg.seed = std::stoull(v);
        else throw std::runtime_error("config: unknown key '" + k + "'");
    }
}

inline json config_to_json(const TrainConfig& c) {
    return json{{"gamma", c.gamma},
                {"batch", c.batch},
                {"lr_critic", c.lr_critic},
                {"lr_actor", c.lr_actor},
                {"tau", c.tau},
                {"update_every", c.update_every},
                {"grid_dp", c.grid.dp},
                {"grid_p", c.grid.P},
                {"delta", c.delta},
                {"temperature", c.temperature},
                {"grad_clip", c.grad_clip},
                {"seed", c.seed},
                {"n_agents", c.n_agents},
                {"episodes", c.episodes},
                {"eval_every", c.eval_every},
                {"eval_episodes", c.eval_episodes},
                {"buffer_capacity", c.buffer_capacity}};
}

inline TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    c.gamma = j.at("gamma");
    c.batch = j.at("batch");
    c.lr_critic = j.at("lr_critic");
    c.lr_actor = j.at("lr_actor");
    c.tau = j.at("tau");
    c.update_every = j.at("update_every");
    c.grid.dp = j.at("grid_dp");
    c.grid.P = j.at("grid_p");
    c.delta = j.at("delta");
    c.temperature = j.at("temperature");
    c.grad_clip = j.at("grad_clip");
    c.seed = j.at("seed");
    c.n_agents = j.at("n_agents");
    c.episodes = j.at("episodes");
    c.eval_every = j.at("eval_every");
    c.eval_episodes = j.at("eval_episodes");
    c.buffer_capacity = j.at("buffer_capacity");
    return c;
}

// ---- run manifest ----

struct RunManifest {
    std::string task;
    std::string algorithm;
    TrainConfig cfg;
    std::vector<std::uint64_t> seeds;
    std::string out_dir;
    std::string code_version = kCodeVersion;
    double wall_seconds = 0.0;
    std::string best_selection =
        "mean eval reward over eval_episodes argmax rollouts every eval_every episodes";
};

inline void write_manifest(const std::string& path, const RunManifest& m) {
    json j{{"task", m.task},
           {"algorithm", m.algorithm},
           {"config", config_to_json(m.cfg)},
           {"seeds", m.seeds},
           {"out_dir", m.out_dir},
           {"code_version", m.code_version},
           {"wall_seconds", m.wall_seconds},
           {"best_selection", m.best_selection}};
    std::ofstream os(path);
    if (!os) throw std::runtime_error("manifest: cannot write " + path);
    os << j.dump(2) << "\n";
}

inline RunManifest read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("manifest: cannot open " + path);
    json j = json::parse(is);
    RunManifest m;
    m.task = j.at("task");
    m.algorithm = j.at("algorithm");
    m.cfg = config_from_json(j.at("config"));
    m.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    m.out_dir = j.at("out_dir");
    m.code_version = j.at("code_version");
    m.wall_seconds = j.at("wall_seconds");
    m.best_selection = j.at("best_selection");
    return m;
}

// ---- CSV I/O ----

inline std::string fmt(double x) {
    std::ostringstream os;
    os << std::setprecision(17) << x;
    return os.str();
}

class MetricCsv {
public:
    explicit MetricCsv(const std::string& path) : os_(path) {
        if (!os_) throw std::runtime_error("metrics: cannot write " + path);
        os_ << kMetricsSchema << "\n";
        os_ << "episode,reward,distance,collisions,time,success,caught,wall_seconds\n";
        os_.flush();
    }

    void write(const MetricRow& r) {
        os_ << r.episode << ',' << fmt(r.m.reward) << ',' << fmt(r.m.distance) << ','
            << r.m.collisions << ',' << r.m.time << ',' << r.m.success << ',' << r.m.caught << ','
            << fmt(r.wall_seconds) << "\n";
        os_.flush();  // partial logs survive interruption
    }

private:
    std::ofstream os_;
};

inline void write_eval_episodes(const std::string& path, const std::vector<EpisodeMetrics>& rows) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("eval: cannot write " + path);
    os << kEvalSchema << "\n";
    os << "episode,reward,distance,collisions,time,success,caught,farthest\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& m = rows[i];
        os << (i + 1) << ',' << fmt(m.reward) << ',' << fmt(m.distance) << ',' << m.collisions
           << ',' << m.time << ',' << m.success << ',' << m.caught << ',' << fmt(m.farthest)
           << "\n";
    }
}

inline std::vector<EpisodeMetrics> read_eval_episodes(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("eval: cannot open " + path);
    std::string line;
    std::getline(is, line);
    if (line != kEvalSchema)
        throw std::runtime_error("eval: schema mismatch in " + path + " (got '" + line + "')");
    std::getline(is, line);  // header
    std::vector<EpisodeMetrics> rows;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::vector<std::string> cells;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (cells.size() != 8)
            throw std::runtime_error("eval: malformed row in " + path + ": '" + line + "'");
        EpisodeMetrics m;
        m.reward = std::stod(cells[1]);
        m.distance = std::stod(cells[2]);
        m.collisions = std::stoi(cells[3]);
        m.time = std::stoi(cells[4]);
        m.success = std::stoi(cells[5]);
        m.caught = std::stoi(cells[6]);
        m.farthest = std::stod(cells[7]);
        rows.push_back(m);
    }
    return rows;
}

struct MetricStat {
    double mean = 0.0;
    double stddev = 0.0;
    std::size_t count = 0;
};

inline MetricStat stat_of(const std::vector<double>& xs) {
    MetricStat s;
    s.count = xs.size();
    if (xs.empty()) return s;
    for (double x : xs) s.mean += x;
    s.mean /= static_cast<double>(xs.size());
    for (double x : xs) s.stddev += (x - s.mean) * (x - s.mean);
    s.stddev = std::sqrt(s.stddev / static_cast<double>(xs.size()));
    return s;
}

inline const std::vector<std::string>& metric_names() {
    static const std::vector<std::string> names = {"reward",  "distance", "collisions", "time",
                                                   "success", "caught",   "farthest"};
    return names;
}

inline double metric_value(const EpisodeMetrics& m, const std::string& name) {
    if (name == "reward") return m.reward;
    if (name == "distance") return m.distance;
    if (name == "collisions") return m.collisions;
    if (name == "time") return m.time;
    if (name == "success") return m.success;
    if (name == "caught") return m.caught;
    if (name == "farthest") return m.farthest;
    throw std::invalid_argument("unknown metric " + name);
}

inline std::map<std::string, MetricStat> summarize(const std::vector<EpisodeMetrics>& rows) {
    std::map<std::string, MetricStat> out;
    for (const auto& name : metric_names()) {
        std::vector<double> xs;
        xs.reserve(rows.size());
        for (const auto& r : rows) xs.push_back(metric_value(r, name));
        out[name] = stat_of(xs);
    }
    return out;
}

// Pools per-episode metric rows across run directories and emits the
// mean +- std table (each cell aggregates seeds x episodes values).
struct AggregateResult {
    std::map<std::string, MetricStat> stats;
    std::size_t pooled_rows = 0;
};

inline AggregateResult aggregate_runs(const std::vector<std::string>& run_dirs,
                                      const std::string& file_name = "eval_episodes.csv") {
    if (run_dirs.empty()) throw std::invalid_argument("aggregate: no run directories");
    std::vector<EpisodeMetrics> pooled;
    for (const auto& dir : run_dirs) {
        const std::string path = (fs::path(dir) / file_name).string();
        auto rows = read_eval_episodes(path);
        pooled.insert(pooled.end(), rows.begin(), rows.end());
    }
    AggregateResult res;
    res.pooled_rows = pooled.size();
    res.stats = summarize(pooled);
    return res;
}

inline void write_aggregate_csv(const std::string& path, const AggregateResult& res) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("aggregate: cannot write " + path);
    os << kAggregateSchema << "\n";
    os << "metric,mean,std,count\n";
    for (const auto& name : metric_names()) {
        const auto& s = res.stats.at(name);
        os << name << ',' << fmt(s.mean) << ',' << fmt(s.stddev) << ',' << s.count << "\n";
    }
}

// ---- trace & communication-graph exports ----

inline void write_trace_jsonl(const std::string& path, const EpisodeTrace& trace) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("trace: cannot write " + path);
    for (const auto& s : trace.steps) {
        json rec{{"step", s.step},
                 {"reward", s.reward},
                 {"collisions", s.info.collisions},
                 {"success", s.info.success},
                 {"caught", s.info.caught},
                 {"actions", s.actions}};
        json pos = json::array();
        for (const auto& p : s.positions) pos.push_back({p.x, p.y});
        rec["positions"] = pos;
        json lms = json::array();
        for (const auto& p : s.landmarks) lms.push_back({p.x, p.y});
        rec["landmarks"] = lms;
        os << rec.dump() << "\n";
    }
}

// Per-step edge lists over all unordered pairs (self-pairs included) plus the
// episode-averaged matrix with eigenvector centralities.
inline void write_comm_graphs_json(const std::string& path,
                                   const std::vector<CommRecord>& per_step) {
    if (per_step.empty() || !per_step.front().present)
        throw std::invalid_argument("comm export: no communication records");
    const int n = per_step.front().shm.n;
    json steps = json::array();
    std::vector<StableHeatMatrix> shms;
    for (std::size_t t = 0; t < per_step.size(); ++t) {
        const auto& c = per_step[t];
        shms.push_back(c.shm);
        json edges = json::array();
        for (int u = 0; u < n; ++u)
            for (int v = u; v < n; ++v)
                edges.push_back({{"u", u},
                                 {"v", v},
                                 {"s", u == v ? 0.0 : c.S(u, v)},
                                 {"h", c.shm.H(u, v)},
                                 {"p_hat", c.shm.p_hat(u, v)},
                                 {"found", c.shm.is_found(u, v)}});
        steps.push_back({{"step", t + 1}, {"edges", edges}});
    }
    Mat avg = average_heat_over_episode(shms);
    auto centrality = eigenvector_centrality(avg);
    json avg_rows = json::array();
    for (int u = 0; u < n; ++u) {
        json row = json::array();
        for (int v = 0; v < n; ++v) row.push_back(avg(u, v));
        avg_rows.push_back(row);
    }
    json doc{{"n", n},
             {"steps", steps},
             {"averaged",
              {{"matrix", avg_rows},
               {"centrality", centrality.centrality},
               {"degenerate", centrality.degenerate}}}};
    std::ofstream os(path);
    if (!os) throw std::runtime_error("comm export: cannot write " + path);
    os << doc.dump(2) << "\n";
}

// ---- end-to-end runs ----

struct RunOutputs {
    std::string run_dir;
    TrainResult result;
};

// One seed end to end: train, log metrics, keep best/final checkpoints, and
// stamp the manifest.
inline RunOutputs run_training(Task task, const std::string& algo_name, TrainConfig cfg,
                               const std::string& out_root) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::path run_dir = fs::path(out_root) / ("seed_" + std::to_string(cfg.seed));
    fs::create_directories(run_dir);

    Trainer trainer(task, cfg, algo_name);
    cfg = trainer.config();  // defaults resolved

    RunManifest manifest;
    manifest.task = task_name(task);
    manifest.algorithm = algo_name;
    manifest.cfg = cfg;
    manifest.seeds = {cfg.seed};
    manifest.out_dir = run_dir.string();
    write_manifest((run_dir / "manifest.json").string(), manifest);

    MetricCsv csv((run_dir / "metrics.csv").string());
    const CheckpointMeta meta = checkpoint_meta_for(trainer.algorithm(), task, cfg.hyper());
    RunOutputs out;
    out.run_dir = run_dir.string();
    out.result = trainer.run(
        [&](const MetricRow& row) { csv.write(row); },
        [&](const std::string& label, double) {
            save_checkpoint((run_dir / ("checkpoint_" + label + ".bin")).string(), meta,
                            trainer.algorithm().named_params());
        });

    manifest.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest((run_dir / "manifest.json").string(), manifest);
    return out;
}

// Seed fan-out: one independent training context per seed, run in parallel.
inline std::vector<RunOutputs> run_seeds(Task task, const std::string& algo_name,
                                         const TrainConfig& base_cfg,
                                         const std::vector<std::uint64_t>& seeds,
                                         const std::string& out_root) {
    std::vector<RunOutputs> outs(seeds.size());
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(seeds.size());
    for (std::size_t i = 0; i < seeds.size(); ++i) {
        threads.emplace_back([&, i]() {
            try {
                TrainConfig cfg = base_cfg;
                cfg.seed = seeds[i];
                outs[i] = run_training(task, algo_name, cfg, out_root);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        });
    }
    for (auto& t : threads) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
    return outs;
}

// Evaluate a checkpoint for some episodes; writes per-episode rows and the
// summary next to each other.
struct EvalOutputs {
    std::vector<EpisodeMetrics> rows;
    std::map<std::string, MetricStat> summary;
};

inline EvalOutputs run_evaluation(const std::string& checkpoint_path, int episodes,
                                  int n_override, std::uint64_t env_seed,
                                  const std::string& out_dir) {
    auto ck = load_checkpoint(checkpoint_path);
    auto algo = restore_algorithm(ck, n_override);
    const Task task = task_from_name(ck.meta.task);
    EvalOutputs out;
    out.rows = evaluate_algorithm(*algo, task, algo->n_agents(), episodes, env_seed);
    out.summary = summarize(out.rows);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_eval_episodes((fs::path(out_dir) / "eval_episodes.csv").string(), out.rows);
        std::ofstream os((fs::path(out_dir) / "eval_summary.csv").string());
        os << kEvalSchema << "\n";
        os << "metric,mean,std,count\n";
        for (const auto& name : metric_names()) {
            const auto& s = out.summary.at(name);
            os << name << ',' << fmt(s.mean) << ',' << fmt(s.stddev) << ',' << s.count << "\n";
        }
    }
    return out;
}

// Delta sweep of the stable-time threshold: one desk-scale training run per
// delta, evaluated and tabulated side by side.
inline void run_threshold_study(Task task, const std::string& algo_name, TrainConfig base_cfg,
                                const std::vector<double>& deltas, const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream os((fs::path(out_dir) / "threshold_table.csv").string());
    if (!os) throw std::runtime_error("threshold study: cannot write table");
    os << kThresholdSchema << "\n";
    os << "delta,reward_mean,reward_std,time_mean,time_std,success_mean,success_std\n";
    for (double delta : deltas) {
        TrainConfig cfg = base_cfg;
        cfg.delta = delta;
        Trainer trainer(task, cfg, algo_name);
        trainer.run();
        auto rows = evaluate_algorithm(trainer.algorithm(), task, trainer.config().n_agents,
                                       trainer.config().eval_episodes, cfg.seed + 101);
        auto s = summarize(rows);
        os << fmt(delta) << ',' << fmt(s["reward"].mean) << ',' << fmt(s["reward"].stddev) << ','
           << fmt(s["time"].mean) << ',' << fmt(s["time"].stddev) << ','
           << fmt(s["success"].mean) << ',' << fmt(s["success"].stddev) << "\n";
        os.flush();
    }
}

}  // namespace cdc
