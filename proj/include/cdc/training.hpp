#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdc/algorithm.hpp"
#include "cdc/checkpoint.hpp"
#include "cdc/env.hpp"
#include "cdc/nn.hpp"
#include "cdc/replay.hpp"

namespace cdc {

struct TrainConfig {
    double gamma = 0.95;
    int batch = 1024;
    double lr_critic = 1e-3;
    double lr_actor = 1e-4;
    double tau = 0.01;
    int update_every = 100;  // one update per this many stored transitions
    TimeGrid grid;           // dp = 0.1, P = 300
    double delta = 0.05;
    double temperature = 1.0;
    double grad_clip = 0.5;
    std::uint64_t seed = 1;
    int n_agents = 0;   // 0 -> per-task default
    int episodes = 0;   // 0 -> per-task default
    int eval_every = 500;
    int eval_episodes = 20;
    std::size_t buffer_capacity = 1000000;

    static int default_agents(Task t) { return t == Task::Navigation ? 3 : 4; }
    static int default_episodes(Task t) { return t == Task::Navigation ? 100000 : 50000; }

    AlgoHyper hyper() const { return {grid, delta, temperature}; }

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("config: gamma");
        if (batch < 1) throw std::invalid_argument("config: batch");
        if (!(lr_critic > 0.0) || !(lr_actor > 0.0)) throw std::invalid_argument("config: lr");
        if (!(tau >= 0.0 && tau <= 1.0)) throw std::invalid_argument("config: tau");
        if (update_every < 1) throw std::invalid_argument("config: update_every");
        if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("config: delta");
        if (!(grid.dp > 0.0) || grid.P < 2) throw std::invalid_argument("config: grid");
        if (!(temperature > 0.0)) throw std::invalid_argument("config: temperature");
    }
};

struct CollectResult {
    EpisodeTrace trace;
    std::vector<CommRecord> comms;  // per step, when requested
};

// One episode with train-mode (hard Gumbel) actions; transitions optionally
// appended to the buffer.
inline CollectResult collect_episode(ParticleEnv& env, Algorithm& algo, Rng& rng,
                                     ReplayBuffer* buffer, bool record_comm = false) {
    CollectResult out;
    auto first = env.reset();
    out.trace.task = env.config().task;
    out.trace.n_agents = env.config().n_agents;
    out.trace.initial_positions = env.state().positions;

    JointObs obs = first.observations;
    for (int t = 1; t <= env.config().episode_length; ++t) {
        CommRecord comm;
        JointActs acts =
            algo.act(obs, ActionMode::TrainHard, rng, false, record_comm ? &comm : nullptr);
        if (record_comm) out.comms.push_back(std::move(comm));

        const std::vector<Vec2> landmarks_before = env.state().landmarks;
        StepResult sr = env.step(acts);

        StepRecord rec;
        rec.step = t;
        rec.positions = env.state().positions;
        rec.landmarks = landmarks_before;
        for (const auto& a : acts) {
            int am = 0;
            for (int i = 1; i < kNumActions; ++i)
                if (a[i] == 1.0) am = i;
            rec.actions.push_back(am);
        }
        rec.reward = sr.reward;
        rec.info = sr.info;
        out.trace.steps.push_back(std::move(rec));

        if (buffer) buffer->push({obs, acts, sr.reward, sr.observations});
        obs = sr.observations;
    }
    return out;
}

// y_j = r + gamma * Q'_j(o', a') with a' from the target actor (deterministic
// argmax head on target-network messages). No gradients flow through y.
inline std::vector<double> td_targets(Algorithm& algo, const Transition& tr, double gamma,
                                      Rng& rng) {
    JointActs next_acts = algo.act(tr.next_obs, ActionMode::EvalArgmax, rng, true);
    Tape tape;
    NoGradScope ng(tape);
    auto qs = algo.q_heads(tape, algo.obs_tensors(tr.next_obs), algo.act_tensors(next_acts), true);
    std::vector<double> ys;
    ys.reserve(qs.size());
    for (const auto& q : qs) ys.push_back(tr.reward + gamma * q->v[0]);
    return ys;
}

struct UpdateReport {
    bool skipped = false;
    double critic_loss = 0.0;
    double actor_loss = 0.0;
    double critic_grad_norm = 0.0;
    double actor_grad_norm = 0.0;
    int soft_updates = 0;
};

// One optimization pass: critic step on the TD loss, actor step on -Q with
// re-derived soft actions, then one soft update of both target pairs.
inline UpdateReport update_step(Algorithm& algo, const ReplayBuffer& buffer,
                                const TrainConfig& cfg, AdamState& critic_opt,
                                AdamState& actor_opt, Rng& rng) {
    UpdateReport rep;
    if (buffer.size() < static_cast<std::size_t>(cfg.batch)) {
        rep.skipped = true;
        return rep;
    }
    const auto idx = buffer.sample_indices(static_cast<std::size_t>(cfg.batch), rng);
    auto actor_ps = algo.actor_params();
    auto critic_ps = algo.critic_params();
    const double inv_b = 1.0 / static_cast<double>(cfg.batch);

    // ---- critic ----
    zero_grads(critic_ps);
    zero_grads(actor_ps);
    set_requires_grad(actor_ps, false);
    Tape tape;
    for (std::size_t i : idx) {
        const Transition& tr = buffer.at(i);
        const std::vector<double> ys = td_targets(algo, tr, cfg.gamma, rng);
        tape.clear();
        auto qs = algo.q_heads(tape, algo.obs_tensors(tr.obs), algo.act_tensors(tr.acts), false);
        TensorPtr loss = scalar_tensor(0.0);
        for (std::size_t j = 0; j < qs.size(); ++j) {
            auto d = tape.sub(qs[j], scalar_tensor(ys[j]));
            loss = tape.add(loss, tape.mul(d, d));
        }
        loss = tape.scale(loss, inv_b);
        rep.critic_loss += loss->v[0];
        tape.backward(loss);
    }
    set_requires_grad(actor_ps, true);
    rep.critic_grad_norm = clip_grad_norm(critic_ps, cfg.grad_clip);
    adam_step(critic_opt, critic_ps);

    // ---- actor ----
    zero_grads(critic_ps);
    zero_grads(actor_ps);
    set_requires_grad(critic_ps, false);
    for (std::size_t i : idx) {
        const Transition& tr = buffer.at(i);
        tape.clear();
        auto obs_t = algo.obs_tensors(tr.obs);
        auto acts = algo.actions_diff(tape, obs_t, rng);
        auto qs = algo.q_heads(tape, obs_t, acts, false);
        TensorPtr loss = scalar_tensor(0.0);
        for (const auto& q : qs) loss = tape.add(loss, q);
        loss = tape.scale(loss, -inv_b);
        rep.actor_loss += loss->v[0];
        tape.backward(loss);
    }
    tape.clear();
    set_requires_grad(critic_ps, true);
    rep.actor_grad_norm = clip_grad_norm(actor_ps, cfg.grad_clip);
    adam_step(actor_opt, actor_ps);

    soft_update(algo.actor_targets());
    soft_update(algo.critic_targets());
    rep.soft_updates = 1;
    return rep;
}

// Eval-mode rollouts (argmax actions, nothing stored). The agent count may
// differ from training for shared-parameter algorithms; the observation width
// must match what the networks expect.
inline std::vector<EpisodeMetrics> evaluate_algorithm(
    Algorithm& algo, Task task, int n_agents, int episodes, std::uint64_t env_seed,
    std::vector<EpisodeTrace>* traces = nullptr,
    std::vector<std::vector<CommRecord>>* comms = nullptr) {
    EnvConfig cfg = EnvConfig::make(task, n_agents);
    if (padded_obs_width(cfg) != algo.input_width())
        throw std::runtime_error("evaluate: observation width mismatch (" +
                                 std::to_string(padded_obs_width(cfg)) + " vs network " +
                                 std::to_string(algo.input_width()) + ")");
    ParticleEnv env(cfg, env_seed);
    Rng rng(env_seed ^ 0x5bd1e995u);  // argmax actions draw nothing; kept for symmetry
    std::vector<EpisodeMetrics> rows;
    for (int e = 0; e < episodes; ++e) {
        CollectResult cr;
        auto first = env.reset();
        cr.trace.task = task;
        cr.trace.n_agents = n_agents;
        cr.trace.initial_positions = env.state().positions;
        JointObs obs = first.observations;
        std::vector<CommRecord> episode_comms;
        for (int t = 1; t <= cfg.episode_length; ++t) {
            CommRecord comm;
            JointActs acts =
                algo.act(obs, ActionMode::EvalArgmax, rng, false, comms ? &comm : nullptr);
            if (comms) episode_comms.push_back(std::move(comm));
            const std::vector<Vec2> landmarks_before = env.state().landmarks;
            StepResult sr = env.step(acts);
            StepRecord rec;
            rec.step = t;
            rec.positions = env.state().positions;
            rec.landmarks = landmarks_before;
            for (const auto& a : acts) {
                int am = 0;
                for (int i = 1; i < kNumActions; ++i)
                    if (a[i] == 1.0) am = i;
                rec.actions.push_back(am);
            }
            rec.reward = sr.reward;
            rec.info = sr.info;
            cr.trace.steps.push_back(std::move(rec));
            obs = sr.observations;
        }
        rows.push_back(episode_metrics(cr.trace));
        if (traces) traces->push_back(std::move(cr.trace));
        if (comms) comms->push_back(std::move(episode_comms));
    }
    return rows;
}

struct MetricRow {
    int episode = 0;
    EpisodeMetrics m;
    double wall_seconds = 0.0;
};

struct TrainResult {
    std::vector<MetricRow> rows;
    double best_eval_reward = -1e300;
    int best_eval_episode = 0;
    int updates_run = 0;
    int updates_skipped = 0;
};

// Full training loop for one seed: alternate collection with one update per
// `update_every` stored transitions, evaluate periodically, track the best
// evaluation mean.
class Trainer {
public:
    Trainer(Task task, const TrainConfig& cfg, std::string algo_name = "cdc")
        : task_(task), cfg_(cfg), algo_name_(std::move(algo_name)) {
        cfg_.validate();
        if (cfg_.n_agents == 0) cfg_.n_agents = TrainConfig::default_agents(task);
        if (cfg_.episodes == 0) cfg_.episodes = TrainConfig::default_episodes(task);
        Rng init_rng(cfg_.seed);
        env_cfg_ = EnvConfig::make(task, cfg_.n_agents);
        algo_ = make_algorithm(algo_name_, env_cfg_, cfg_.hyper(), init_rng);
        algo_->actor_targets().tau = cfg_.tau;
        algo_->critic_targets().tau = cfg_.tau;
        algo_->sync_targets();
        env_ = std::make_unique<ParticleEnv>(env_cfg_, cfg_.seed);
        act_rng_ = Rng(cfg_.seed ^ 0xA5A5A5A5ull);
        update_rng_ = Rng(cfg_.seed ^ 0x3C3C3C3Cull);
        buffer_ = std::make_unique<ReplayBuffer>(cfg_.buffer_capacity);
        critic_opt_ = std::make_unique<AdamState>(cfg_.lr_critic);
        actor_opt_ = std::make_unique<AdamState>(cfg_.lr_actor);
    }

    Algorithm& algorithm() { return *algo_; }
    const TrainConfig& config() const { return cfg_; }
    const EnvConfig& env_config() const { return env_cfg_; }
    ReplayBuffer& buffer() { return *buffer_; }

    using RowSink = std::function<void(const MetricRow&)>;
    using CheckpointSink = std::function<void(const std::string& label, double eval_reward)>;

    TrainResult run(RowSink on_row = nullptr, CheckpointSink on_checkpoint = nullptr) {
        TrainResult res;
        const auto t0 = std::chrono::steady_clock::now();
        int pending = 0;
        for (int ep = 1; ep <= cfg_.episodes; ++ep) {
            CollectResult cr = collect_episode(*env_, *algo_, act_rng_, buffer_.get());
            pending += env_cfg_.episode_length;
            while (pending >= cfg_.update_every) {
                pending -= cfg_.update_every;
                UpdateReport rep =
                    update_step(*algo_, *buffer_, cfg_, *critic_opt_, *actor_opt_, update_rng_);
                if (rep.skipped) ++res.updates_skipped;
                else ++res.updates_run;
            }
            MetricRow row;
            row.episode = ep;
            row.m = episode_metrics(cr.trace);
            row.wall_seconds =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            if (on_row) on_row(row);
            res.rows.push_back(row);

            if (cfg_.eval_every > 0 && ep % cfg_.eval_every == 0) {
                const double mean_reward = eval_mean_reward(ep);
                if (mean_reward > res.best_eval_reward) {
                    res.best_eval_reward = mean_reward;
                    res.best_eval_episode = ep;
                    if (on_checkpoint) on_checkpoint("best", mean_reward);
                }
            }
        }
        if (on_checkpoint) on_checkpoint("final", res.best_eval_reward);
        return res;
    }

    double eval_mean_reward(int at_episode) {
        auto rows = evaluate_algorithm(*algo_, task_, cfg_.n_agents, cfg_.eval_episodes,
                                       cfg_.seed + 7919ull * static_cast<std::uint64_t>(at_episode));
        double s = 0.0;
        for (const auto& r : rows) s += r.reward;
        return rows.empty() ? 0.0 : s / static_cast<double>(rows.size());
    }

private:
    Task task_;
    TrainConfig cfg_;
    std::string algo_name_;
    EnvConfig env_cfg_;
    std::unique_ptr<Algorithm> algo_;
    std::unique_ptr<ParticleEnv> env_;
    std::unique_ptr<ReplayBuffer> buffer_;
    std::unique_ptr<AdamState> critic_opt_, actor_opt_;
    Rng act_rng_{0}, update_rng_{0};
};

}  // namespace cdc
