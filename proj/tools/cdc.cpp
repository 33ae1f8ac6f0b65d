// Command-line driver: train / eval / export-graphs / aggregate.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cdc/harness.hpp"

namespace {

std::string default_out_root() {
    if (const char* env = std::getenv("CDC_OUT_ROOT")) return env;
    return "runs";
}

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
    std::vector<std::uint64_t> seeds;
    std::stringstream ss(s);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
        if (!cell.empty()) seeds.push_back(std::stoull(cell));
    }
    if (seeds.empty()) throw std::runtime_error("no seeds given");
    return seeds;
}

void print_summary(const std::map<std::string, cdc::MetricStat>& summary) {
    std::cout << "metric        mean          std           n\n";
    for (const auto& name : cdc::metric_names()) {
        const auto& s = summary.at(name);
        std::cout << name;
        for (std::size_t i = name.size(); i < 14; ++i) std::cout << ' ';
        std::cout << s.mean << "  +- " << s.stddev << "  (" << s.count << ")\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Connectivity-driven communication for cooperative particle tasks"};
    app.require_subcommand(1);

    // ---- train ----
    auto* train = app.add_subcommand("train", "train one or more seeds");
    std::string task_name_arg = "navigation", algo = "cdc", out_dir, config_path, manifest_path;
    std::string seeds_arg = "1";
    cdc::TrainConfig cfg;
    int agents = 0, episodes = 0;
    train->add_option("--task", task_name_arg, "navigation|formation|line|dynamic_pack");
    train->add_option("--algo", algo,
                      "cdc|independent_ddpg|average_obs|nearest_neighbour|cdc_ff_critic");
    train->add_option("--agents", agents, "agent count (default per task)");
    train->add_option("--episodes", episodes, "episode budget (default per task)");
    train->add_option("--seed", seeds_arg, "comma-separated seed list");
    train->add_option("--out", out_dir, "output root (default $CDC_OUT_ROOT or ./runs)");
    train->add_option("--config", config_path, "key=value config file");
    train->add_option("--manifest", manifest_path, "re-run from a manifest.json");
    train->add_option("--gamma", cfg.gamma);
    train->add_option("--batch", cfg.batch);
    train->add_option("--lr-critic", cfg.lr_critic);
    train->add_option("--lr-actor", cfg.lr_actor);
    train->add_option("--tau", cfg.tau);
    train->add_option("--update-every", cfg.update_every);
    train->add_option("--grid-dp", cfg.grid.dp);
    train->add_option("--grid-p", cfg.grid.P);
    train->add_option("--delta", cfg.delta);
    train->add_option("--temperature", cfg.temperature);
    train->add_option("--grad-clip", cfg.grad_clip);
    train->add_option("--eval-every", cfg.eval_every);
    train->add_option("--eval-episodes", cfg.eval_episodes);
    train->add_option("--buffer-capacity", cfg.buffer_capacity);

    // ---- eval ----
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    std::string ckpt_path, eval_out;
    int eval_agents = 0, eval_episodes = 100;
    std::uint64_t eval_seed = 12345;
    eval->add_option("checkpoint", ckpt_path, "checkpoint file")->required();
    eval->add_option("--agents", eval_agents, "override the agent count");
    eval->add_option("--episodes", eval_episodes, "evaluation episodes (default 100)");
    eval->add_option("--seed", eval_seed, "environment seed");
    eval->add_option("--out", eval_out, "directory for eval CSVs");

    // ---- export-graphs ----
    auto* exportg = app.add_subcommand("export-graphs", "export communication graphs");
    std::string exp_ckpt, exp_out = "graphs";
    std::uint64_t exp_seed = 7;
    exportg->add_option("checkpoint", exp_ckpt, "checkpoint file")->required();
    exportg->add_option("--out", exp_out, "output directory");
    exportg->add_option("--seed", exp_seed, "environment seed");

    // ---- aggregate ----
    auto* agg = app.add_subcommand("aggregate", "pool eval rows across run directories");
    std::vector<std::string> run_dirs;
    std::string agg_out = "aggregate.csv";
    agg->add_option("runs", run_dirs, "run directories")->required();
    agg->add_option("--out", agg_out, "output CSV path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            cdc::Task task;
            std::vector<std::uint64_t> seeds;
            if (!manifest_path.empty()) {
                cdc::RunManifest m = cdc::read_manifest(manifest_path);
                task = cdc::task_from_name(m.task);
                algo = m.algorithm;
                cfg = m.cfg;
                seeds = m.seeds;
            } else {
                task = cdc::task_from_name(task_name_arg);
                if (!config_path.empty()) cdc::apply_config(cfg, cdc::read_config_file(config_path));
                if (agents > 0) cfg.n_agents = agents;
                if (episodes > 0) cfg.episodes = episodes;
                seeds = parse_seeds(seeds_arg);
            }
            if (out_dir.empty())
                out_dir = default_out_root() + "/" + cdc::task_name(task) + "_" + algo;
            auto outs = cdc::run_seeds(task, algo, cfg, seeds, out_dir);
            for (const auto& o : outs)
                std::cout << "run complete: " << o.run_dir
                          << " (best eval reward " << o.result.best_eval_reward << ")\n";
        } else if (*eval) {
            auto out = cdc::run_evaluation(ckpt_path, eval_episodes, eval_agents, eval_seed,
                                           eval_out);
            print_summary(out.summary);
            if (!eval_out.empty()) std::cout << "rows written to " << eval_out << "\n";
        } else if (*exportg) {
            auto ck = cdc::load_checkpoint(exp_ckpt);
            auto algo_ptr = cdc::restore_algorithm(ck);
            const cdc::Task task = cdc::task_from_name(ck.meta.task);
            std::vector<cdc::EpisodeTrace> traces;
            std::vector<std::vector<cdc::CommRecord>> comms;
            cdc::evaluate_algorithm(*algo_ptr, task, algo_ptr->n_agents(), 1, exp_seed, &traces,
                                    &comms);
            if (comms.empty() || comms[0].empty() || !comms[0][0].present)
                throw std::runtime_error("checkpoint algorithm exports no communication graph");
            cdc::fs::create_directories(exp_out);
            cdc::write_comm_graphs_json((cdc::fs::path(exp_out) / "comm_graphs.json").string(),
                                        comms[0]);
            cdc::write_trace_jsonl((cdc::fs::path(exp_out) / "trace.jsonl").string(), traces[0]);
            std::cout << "graphs written to " << exp_out << "\n";
        } else if (*agg) {
            auto res = cdc::aggregate_runs(run_dirs);
            cdc::write_aggregate_csv(agg_out, res);
            std::cout << "pooled " << res.pooled_rows << " rows into " << agg_out << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
