#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdc/rng.hpp"

namespace cdc {

enum class Task { Navigation, Formation, Line, DynamicPack };

inline const char* task_name(Task t) {
    switch (t) {
        case Task::Navigation: return "navigation";
        case Task::Formation: return "formation";
        case Task::Line: return "line";
        case Task::DynamicPack: return "dynamic_pack";
    }
    return "?";
}

inline Task task_from_name(const std::string& s) {
    if (s == "navigation") return Task::Navigation;
    if (s == "formation") return Task::Formation;
    if (s == "line") return Task::Line;
    if (s == "dynamic_pack" || s == "pack") return Task::DynamicPack;
    throw std::invalid_argument("unknown task '" + s +
                                "' (valid: navigation, formation, line, dynamic_pack)");
}

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline double dist(const Vec2& a, const Vec2& b) {
    const double dx = a.x - b.x, dy = a.y - b.y;
    return std::sqrt(dx * dx + dy * dy);
}

// Physics constants of the particle world.
constexpr double kDt = 0.1;
constexpr double kDamping = 0.25;
constexpr double kAccel = 5.0;
constexpr double kVmax = 1.0;
constexpr double kWorldBound = 1.5;
constexpr int kNumActions = 5;  // no-op, +x, -x, +y, -y

struct EnvConfig {
    Task task = Task::Navigation;
    int n_agents = 3;
    int episode_length = 25;  // 25 for Navigation, 50 otherwise
    double success_epsilon = 0.1;
    double agent_radius = 0.05;
    double catch_bonus = 100.0;

    int n_landmarks() const {
        switch (task) {
            case Task::Navigation: return n_agents;
            case Task::Formation: return 1;
            case Task::Line: return 2;
            case Task::DynamicPack: return 1;
        }
        return 0;
    }

    static EnvConfig make(Task task, int n_agents) {
        EnvConfig c;
        c.task = task;
        c.n_agents = n_agents;
        c.episode_length = (task == Task::Navigation) ? 25 : 50;
        return c;
    }
};

struct WorldState {
    std::vector<Vec2> positions;
    std::vector<Vec2> velocities;
    std::vector<Vec2> landmarks;
    int step_index = 0;
    std::vector<std::uint8_t> leader_mask;  // DynamicPack: first two agents lead
    int caught_count = 0;
    int collisions_total = 0;
    std::vector<double> path_length;
};

struct StepInfo {
    int collisions = 0;
    bool success = false;
    bool caught = false;
    std::vector<double> min_distances;  // per target/landmark, min over agents
    double farthest = 0.0;              // max over agents of distance to nearest landmark
};

struct StepResult {
    std::vector<std::vector<double>> observations;
    double reward = 0.0;
    bool done = false;
    StepInfo info;
};

// Target points for the shape tasks. Formation: regular n-gon of radius 0.5
// around the landmark, vertex 0 at angle 0. Line: n points evenly spaced on
// the segment between the two landmarks, endpoints included.
inline std::vector<Vec2> task_targets(const EnvConfig& cfg, const WorldState& st) {
    std::vector<Vec2> t;
    if (cfg.task == Task::Formation) {
        const Vec2 c = st.landmarks[0];
        for (int k = 0; k < cfg.n_agents; ++k) {
            const double a = 2.0 * std::numbers::pi * k / cfg.n_agents;
            t.push_back({c.x + 0.5 * std::cos(a), c.y + 0.5 * std::sin(a)});
        }
    } else if (cfg.task == Task::Line) {
        const Vec2 a = st.landmarks[0], b = st.landmarks[1];
        for (int k = 0; k < cfg.n_agents; ++k) {
            const double f = cfg.n_agents > 1
                                 ? static_cast<double>(k) / (cfg.n_agents - 1)
                                 : 0.0;
            t.push_back({a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)});
        }
    }
    return t;
}

inline int count_collisions(const EnvConfig& cfg, const WorldState& st) {
    int c = 0;
    for (int u = 0; u < cfg.n_agents; ++u)
        for (int v = u + 1; v < cfg.n_agents; ++v)
            if (dist(st.positions[u], st.positions[v]) < 2.0 * cfg.agent_radius) ++c;
    return c;
}

// Shared team reward plus the per-step metric snapshot. Pure function of the
// post-move state; the DynamicPack catch bonus is added by the stepper which
// owns the relocation.
inline double task_reward(const EnvConfig& cfg, const WorldState& st, StepInfo& info) {
    const int n = cfg.n_agents;
    info.min_distances.clear();
    double reward = 0.0;

    auto min_dist_to = [&](const Vec2& target) {
        double best = 1e300;
        for (int a = 0; a < n; ++a) best = std::min(best, dist(st.positions[a], target));
        return best;
    };

    switch (cfg.task) {
        case Task::Navigation: {
            bool covered = true;
            for (const Vec2& lm : st.landmarks) {
                const double d = min_dist_to(lm);
                info.min_distances.push_back(d);
                reward -= d;
                covered = covered && d < cfg.success_epsilon;
            }
            info.collisions = count_collisions(cfg, st);
            reward -= static_cast<double>(info.collisions);
            info.success = covered && info.collisions == 0;
            break;
        }
        case Task::Formation:
        case Task::Line: {
            bool covered = true;
            for (const Vec2& target : task_targets(cfg, st)) {
                const double d = min_dist_to(target);
                info.min_distances.push_back(d);
                reward -= d;
                covered = covered && d < cfg.success_epsilon;
            }
            info.collisions = count_collisions(cfg, st);
            info.success = covered;
            break;
        }
        case Task::DynamicPack: {
            const Vec2 lm = st.landmarks[0];
            double worst = 0.0;
            bool all_close = true;
            for (int a = 0; a < n; ++a) {
                const double d = dist(st.positions[a], lm);
                reward -= d;
                worst = std::max(worst, d);
                all_close = all_close && d < cfg.success_epsilon;
            }
            info.min_distances.push_back(min_dist_to(lm));
            info.collisions = count_collisions(cfg, st);
            info.caught = all_close;
            info.success = all_close;
            break;
        }
    }

    // farthest agent from its nearest landmark (agent-count invariant)
    double far = 0.0;
    for (int a = 0; a < n; ++a) {
        double nearest = 1e300;
        for (const Vec2& lm : st.landmarks)
            nearest = std::min(nearest, dist(st.positions[a], lm));
        far = std::max(far, nearest);
    }
    info.farthest = far;
    return reward;
}

// Per-agent observations. Widths differ per role in DynamicPack (members are
// blind); everywhere else all agents share one width.
inline std::vector<double> observe(const EnvConfig& cfg, const WorldState& st, int agent) {
    if (agent < 0 || agent >= cfg.n_agents)
        throw std::invalid_argument("observe: bad agent index " + std::to_string(agent));
    const Vec2 p = st.positions[agent], v = st.velocities[agent];
    std::vector<double> o = {p.x, p.y, v.x, v.y};
    auto push_rel = [&](const Vec2& q) {
        o.push_back(q.x - p.x);
        o.push_back(q.y - p.y);
    };
    switch (cfg.task) {
        case Task::Navigation:
            for (const Vec2& lm : st.landmarks) push_rel(lm);
            for (int a = 0; a < cfg.n_agents; ++a)
                if (a != agent) push_rel(st.positions[a]);
            break;
        case Task::Formation:
            push_rel(st.landmarks[0]);
            break;
        case Task::Line:
            push_rel(st.landmarks[0]);
            push_rel(st.landmarks[1]);
            break;
        case Task::DynamicPack:
            if (st.leader_mask[agent]) push_rel(st.landmarks[0]);
            break;
    }
    return o;
}

inline int observation_width(const EnvConfig& cfg, bool leader) {
    switch (cfg.task) {
        case Task::Navigation: return 4 + 2 * cfg.n_landmarks() + 2 * (cfg.n_agents - 1);
        case Task::Formation: return 6;
        case Task::Line: return 8;
        case Task::DynamicPack: return leader ? 6 : 4;
    }
    return 0;
}

// Deterministic 2-D particle world for the four cooperative tasks.
class ParticleEnv {
public:
    ParticleEnv(EnvConfig cfg, std::uint64_t seed) : cfg_(cfg), rng_(seed) {
        if (cfg_.n_agents < 1) throw std::invalid_argument("ParticleEnv: need at least 1 agent");
    }

    const EnvConfig& config() const { return cfg_; }
    const WorldState& state() const { return st_; }
    WorldState& mutable_state() { return st_; }  // scripted scenarios and tests

    StepResult reset() {
        st_ = WorldState{};
        st_.positions.resize(cfg_.n_agents);
        st_.velocities.assign(cfg_.n_agents, Vec2{});
        st_.path_length.assign(cfg_.n_agents, 0.0);
        st_.leader_mask.assign(cfg_.n_agents, 0);
        if (cfg_.task == Task::DynamicPack)
            for (int i = 0; i < std::min(2, cfg_.n_agents); ++i) st_.leader_mask[i] = 1;
        for (auto& p : st_.positions) {
            p.x = rng_.uniform(-1.0, 1.0);
            p.y = rng_.uniform(-1.0, 1.0);
        }
        st_.landmarks.resize(cfg_.n_landmarks());
        for (auto& lm : st_.landmarks) {
            lm.x = rng_.uniform(-1.0, 1.0);
            lm.y = rng_.uniform(-1.0, 1.0);
        }
        StepResult r;
        r.observations = observe_all();
        return r;
    }

    StepResult step(const std::vector<std::vector<double>>& actions) {
        if (static_cast<int>(actions.size()) != cfg_.n_agents)
            throw std::invalid_argument("step: expected " + std::to_string(cfg_.n_agents) +
                                        " actions, got " + std::to_string(actions.size()));
        for (int a = 0; a < cfg_.n_agents; ++a) {
            const auto& act = actions[a];
            int ones = 0;
            bool ok = act.size() == kNumActions;
            for (double x : act) {
                if (x == 1.0) ++ones;
                else if (x != 0.0) ok = false;
            }
            if (!ok || ones != 1)
                throw std::invalid_argument("step: malformed action for agent " +
                                            std::to_string(a));
        }

        for (int a = 0; a < cfg_.n_agents; ++a) {
            Vec2 force{};
            if (actions[a][1] == 1.0) force.x = kAccel;
            else if (actions[a][2] == 1.0) force.x = -kAccel;
            else if (actions[a][3] == 1.0) force.y = kAccel;
            else if (actions[a][4] == 1.0) force.y = -kAccel;

            Vec2& v = st_.velocities[a];
            v.x = v.x * (1.0 - kDamping) + force.x * kDt;
            v.y = v.y * (1.0 - kDamping) + force.y * kDt;
            const double speed = std::sqrt(v.x * v.x + v.y * v.y);
            if (speed > kVmax) {
                v.x *= kVmax / speed;
                v.y *= kVmax / speed;
            }
            Vec2& p = st_.positions[a];
            const Vec2 old = p;
            p.x = std::clamp(p.x + v.x * kDt, -kWorldBound, kWorldBound);
            p.y = std::clamp(p.y + v.y * kDt, -kWorldBound, kWorldBound);
            st_.path_length[a] += dist(p, old);
        }
        ++st_.step_index;

        StepResult res;
        res.reward = task_reward(cfg_, st_, res.info);
        st_.collisions_total += res.info.collisions;
        if (cfg_.task == Task::DynamicPack && res.info.caught) {
            ++st_.caught_count;
            res.reward += cfg_.catch_bonus;
            st_.landmarks[0].x = rng_.uniform(-1.0, 1.0);
            st_.landmarks[0].y = rng_.uniform(-1.0, 1.0);
        }
        res.done = st_.step_index >= cfg_.episode_length;
        res.observations = observe_all();
        return res;
    }

    std::vector<std::vector<double>> observe_all() const {
        std::vector<std::vector<double>> obs(cfg_.n_agents);
        for (int a = 0; a < cfg_.n_agents; ++a) obs[a] = observe(cfg_, st_, a);
        return obs;
    }

private:
    EnvConfig cfg_;
    WorldState st_;
    Rng rng_;
};

// ---- episode traces & metrics ----

struct StepRecord {
    int step = 0;  // 1-based
    std::vector<Vec2> positions;
    std::vector<Vec2> landmarks;  // active during the step (pre-relocation)
    std::vector<int> actions;     // argmax indices
    double reward = 0.0;
    StepInfo info;
};

struct EpisodeTrace {
    Task task = Task::Navigation;
    int n_agents = 0;
    std::vector<Vec2> initial_positions;
    std::vector<StepRecord> steps;
};

struct EpisodeMetrics {
    double reward = 0.0;
    double distance = 0.0;
    int collisions = 0;
    int time = 0;  // first success step, or episode length
    int success = 0;
    int caught = 0;
    double farthest = 0.0;  // mean over steps of the farthest-agent distance
};

inline EpisodeMetrics episode_metrics(const EpisodeTrace& trace) {
    EpisodeMetrics m;
    m.time = static_cast<int>(trace.steps.size());
    std::vector<Vec2> prev = trace.initial_positions;
    bool succeeded = false;
    double far_sum = 0.0;
    for (const auto& s : trace.steps) {
        m.reward += s.reward;
        m.collisions += s.info.collisions;
        for (int a = 0; a < trace.n_agents; ++a) m.distance += dist(s.positions[a], prev[a]);
        prev = s.positions;
        if (s.info.caught) ++m.caught;
        if (!succeeded && s.info.success) {
            succeeded = true;
            m.time = s.step;
        }
        far_sum += s.info.farthest;
    }
    m.success = succeeded ? 1 : 0;
    if (!trace.steps.empty()) m.farthest = far_sum / static_cast<double>(trace.steps.size());
    return m;
}

}  // namespace cdc
