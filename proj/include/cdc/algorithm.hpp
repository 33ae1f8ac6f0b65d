#pragma once

#include <algorithm>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cdc/critic.hpp"
#include "cdc/env.hpp"
#include "cdc/nn.hpp"
#include "cdc/policy.hpp"
#include "cdc/replay.hpp"
#include "cdc/spectral.hpp"
#include "cdc/tensor.hpp"

namespace cdc {

// Observation width the networks consume: the widest per-role width of the
// task. DynamicPack members (width 4) are zero-padded up to the leader width.
inline int padded_obs_width(const EnvConfig& cfg) {
    return std::max(observation_width(cfg, true), observation_width(cfg, false));
}

inline std::vector<double> pad_to(const std::vector<double>& v, int width) {
    std::vector<double> out(v);
    if (static_cast<int>(out.size()) > width)
        throw std::invalid_argument("pad_to: observation wider than the network input (" +
                                    std::to_string(out.size()) + " > " + std::to_string(width) +
                                    ")");
    out.resize(width, 0.0);
    return out;
}

// Per-step communication snapshot (CDC family only).
struct CommRecord {
    bool present = false;
    Mat S;
    StableHeatMatrix shm;
};

struct AlgoHyper {
    TimeGrid grid;
    double delta = 0.05;
    double temperature = 1.0;
};

// One trainable multi-agent system: actors, critic head(s), and their target
// copies. The training loop only talks to this interface, so CDC and the
// ablation baselines all share the same buffer/optimizer/target machinery.
class Algorithm {
public:
    virtual ~Algorithm() = default;

    virtual std::string kind() const = 0;
    virtual int n_agents() const = 0;
    virtual int input_width() const = 0;

    // Environment-facing action selection (no gradients recorded).
    virtual JointActs act(const JointObs& obs, ActionMode mode, Rng& rng, bool use_target,
                          CommRecord* comm = nullptr) = 0;

    // Differentiable per-agent actions for the actor loss (soft samples).
    virtual std::vector<TensorPtr> actions_diff(Tape& tape, const std::vector<TensorPtr>& obs,
                                                Rng& rng) = 0;

    // Critic value head(s): one scalar for centralized critics, one per agent
    // for independent ones.
    virtual std::vector<TensorPtr> q_heads(Tape& tape, const std::vector<TensorPtr>& obs,
                                           const std::vector<TensorPtr>& acts,
                                           bool use_target) = 0;

    virtual std::vector<TensorPtr> actor_params() = 0;
    virtual std::vector<TensorPtr> critic_params() = 0;
    virtual TargetPair& actor_targets() = 0;
    virtual TargetPair& critic_targets() = 0;
    virtual ParamList named_params() = 0;

    std::vector<TensorPtr> obs_tensors(const JointObs& obs) const {
        std::vector<TensorPtr> ts;
        ts.reserve(obs.size());
        for (const auto& o : obs) ts.push_back(tensor({input_width()}, pad_to(o, input_width())));
        return ts;
    }

    std::vector<TensorPtr> act_tensors(const JointActs& acts) const {
        std::vector<TensorPtr> ts;
        ts.reserve(acts.size());
        for (const auto& a : acts) ts.push_back(tensor({kActionCount}, a));
        return ts;
    }

    void load_named(const std::vector<std::pair<std::string, std::vector<double>>>& values) {
        ParamList mine = named_params();
        if (values.size() != mine.size())
            throw std::invalid_argument("load_named: parameter count mismatch");
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (mine[i].name != values[i].first)
                throw std::invalid_argument("load_named: name mismatch at '" + mine[i].name +
                                            "' vs '" + values[i].first + "'");
            if (mine[i].t->v.size() != values[i].second.size())
                throw std::invalid_argument("load_named: size mismatch at '" + mine[i].name + "'");
            mine[i].t->v = values[i].second;
        }
        sync_targets();
    }

    // Copy live parameters into the target copies (checkpoint load, init).
    void sync_targets() {
        auto copy = [](TargetPair& p) {
            for (std::size_t i = 0; i < p.live.size(); ++i) p.target[i]->v = p.live[i]->v;
        };
        copy(actor_targets());
        copy(critic_targets());
    }
};

// ---- CDC ----

class CdcAlgorithm : public Algorithm {
public:
    CdcAlgorithm(int n, int obs_width, AlgoHyper hyper, Rng& rng)
        : n_(n),
          hyper_(hyper),
          actor_(make_cdc_params(obs_width, rng)),
          actor_tgt_(clone_cdc_params(actor_)),
          critic_(make_critic_params(obs_width, rng)),
          critic_tgt_(clone_critic_params(critic_)) {
        actor_pair_ = make_target_pair(tensors_of(cdc_param_list(actor_)),
                                       tensors_of(cdc_param_list(actor_tgt_)), 0.01);
        critic_pair_ = make_target_pair(tensors_of(critic_param_list(critic_)),
                                        tensors_of(critic_param_list(critic_tgt_)), 0.01);
    }

    std::string kind() const override { return "cdc"; }
    int n_agents() const override { return n_; }
    int input_width() const override { return actor_.obs_width; }

    JointActs act(const JointObs& obs, ActionMode mode, Rng& rng, bool use_target,
                  CommRecord* comm) override {
        Tape tape;
        NoGradScope ng(tape);
        auto f = cdc_forward(tape, use_target ? actor_tgt_ : actor_, obs_tensors(obs),
                             hyper_.grid, hyper_.delta, mode, hyper_.temperature, rng);
        if (comm) {
            comm->present = true;
            comm->S = Mat(n_);
            comm->S.a = f.S->v;
            comm->shm = f.shm;
        }
        JointActs out;
        for (const auto& a : f.selection.actions) out.push_back(a->v);
        return out;
    }

    std::vector<TensorPtr> actions_diff(Tape& tape, const std::vector<TensorPtr>& obs,
                                        Rng& rng) override {
        auto f = cdc_forward(tape, actor_, obs, hyper_.grid, hyper_.delta, ActionMode::LossSoft,
                             hyper_.temperature, rng);
        return f.selection.actions;
    }

    std::vector<TensorPtr> q_heads(Tape& tape, const std::vector<TensorPtr>& obs,
                                   const std::vector<TensorPtr>& acts, bool use_target) override {
        return {critic_q(tape, use_target ? critic_tgt_ : critic_, obs, acts)};
    }

    std::vector<TensorPtr> actor_params() override { return actor_pair_.live; }
    std::vector<TensorPtr> critic_params() override { return critic_pair_.live; }
    TargetPair& actor_targets() override { return actor_pair_; }
    TargetPair& critic_targets() override { return critic_pair_; }

    ParamList named_params() override {
        ParamList ps;
        for (auto& np : cdc_param_list(actor_)) ps.push_back({"actor." + np.name, np.t});
        for (auto& np : critic_param_list(critic_)) ps.push_back({"critic." + np.name, np.t});
        return ps;
    }

    const CdcParams& actor() const { return actor_; }
    const AlgoHyper& hyper() const { return hyper_; }

private:
    int n_;
    AlgoHyper hyper_;
    CdcParams actor_, actor_tgt_;
    CriticParams critic_, critic_tgt_;
    TargetPair actor_pair_, critic_pair_;
};

// ---- ablation baselines ----

enum class BaselineKind { IndependentDDPG, AverageObs, NearestNeighbourObs, CdcFeedForwardCritic };

inline const char* baseline_name(BaselineKind k) {
    switch (k) {
        case BaselineKind::IndependentDDPG: return "independent_ddpg";
        case BaselineKind::AverageObs: return "average_obs";
        case BaselineKind::NearestNeighbourObs: return "nearest_neighbour";
        case BaselineKind::CdcFeedForwardCritic: return "cdc_ff_critic";
    }
    return "?";
}

// Centralized feed-forward critic over the concatenation of everyone's
// observation/action pairs (the "traditional critic" of the ablations).
struct FeedForwardCritic {
    int n = 0;
    int obs_width = 0;
    Mlp net;  // n*(obs_width+5) -> (64,64) -> 1
};

inline FeedForwardCritic make_ff_critic(int n, int obs_width, Rng& rng) {
    FeedForwardCritic c;
    c.n = n;
    c.obs_width = obs_width;
    c.net = make_mlp(n * (obs_width + kActionCount), {kHiddenWidth, kHiddenWidth}, 1,
                     OutAct::Identity, rng);
    return c;
}

inline TensorPtr ff_critic_q(Tape& tape, const FeedForwardCritic& c,
                             const std::vector<TensorPtr>& obs,
                             const std::vector<TensorPtr>& acts) {
    std::vector<TensorPtr> parts;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        parts.push_back(obs[i]);
        parts.push_back(acts[i]);
    }
    return mlp_forward(tape, c.net, tape.concat(parts));
}

// Builds augmented per-agent inputs for the observation-sharing ablations:
// (own obs, mean of the selected neighbours' obs).
inline std::vector<TensorPtr> shared_obs_inputs(Tape& tape, BaselineKind kind,
                                                const std::vector<TensorPtr>& obs,
                                                bool* fallback_flag) {
    const int n = static_cast<int>(obs.size());
    const int w = obs.front()->shape[0];
    std::vector<TensorPtr> inputs;
    for (int u = 0; u < n; ++u) {
        std::vector<int> neighbours;
        if (kind == BaselineKind::AverageObs) {
            for (int v = 0; v < n; ++v)
                if (v != u) neighbours.push_back(v);
        } else {
            // two Euclidean-nearest agents by current position (obs[0..1])
            std::vector<std::pair<double, int>> by_dist;
            for (int v = 0; v < n; ++v) {
                if (v == u) continue;
                const double dx = obs[v]->v[0] - obs[u]->v[0];
                const double dy = obs[v]->v[1] - obs[u]->v[1];
                by_dist.push_back({dx * dx + dy * dy, v});
            }
            std::sort(by_dist.begin(), by_dist.end());
            const int take = std::min<std::size_t>(2, by_dist.size());
            if (take < 2 && fallback_flag) *fallback_flag = true;
            for (int k = 0; k < take; ++k) neighbours.push_back(by_dist[k].second);
        }
        auto mean = tensor({w});
        if (!neighbours.empty()) {
            for (int v : neighbours)
                for (int i = 0; i < w; ++i) mean->v[i] += obs[v]->v[i];
            for (double& x : mean->v) x /= static_cast<double>(neighbours.size());
        }
        inputs.push_back(tape.concat({obs[u], mean}));
    }
    return inputs;
}

class BaselineAlgorithm : public Algorithm {
public:
    BaselineAlgorithm(BaselineKind kind, int n, int obs_width, AlgoHyper hyper, Rng& rng)
        : kind_(kind), n_(n), obs_width_(obs_width), hyper_(hyper) {
        switch (kind_) {
            case BaselineKind::IndependentDDPG:
                for (int i = 0; i < n_; ++i) {
                    actors_.push_back(make_mlp(obs_width_, {kHiddenWidth, kHiddenWidth},
                                               kActionCount, OutAct::Identity, rng));
                    critics_.push_back(make_mlp(obs_width_ + kActionCount,
                                                {kHiddenWidth, kHiddenWidth}, 1,
                                                OutAct::Identity, rng));
                }
                break;
            case BaselineKind::AverageObs:
            case BaselineKind::NearestNeighbourObs:
                actors_.push_back(make_mlp(2 * obs_width_, {kHiddenWidth, kHiddenWidth},
                                           kActionCount, OutAct::Identity, rng));
                ff_critic_ = std::make_unique<FeedForwardCritic>(make_ff_critic(n_, obs_width_, rng));
                break;
            case BaselineKind::CdcFeedForwardCritic:
                cdc_actor_ = std::make_unique<CdcParams>(make_cdc_params(obs_width_, rng));
                ff_critic_ = std::make_unique<FeedForwardCritic>(make_ff_critic(n_, obs_width_, rng));
                break;
        }
        init_targets();
    }

    std::string kind() const override { return baseline_name(kind_); }
    int n_agents() const override { return n_; }
    int input_width() const override { return obs_width_; }
    bool neighbour_fallback() const { return neighbour_fallback_; }

    JointActs act(const JointObs& obs, ActionMode mode, Rng& rng, bool use_target,
                  CommRecord* comm) override {
        Tape tape;
        NoGradScope ng(tape);
        auto actions =
            forward_actions(tape, obs_tensors(obs), mode, rng, use_target);
        if (comm && kind_ == BaselineKind::CdcFeedForwardCritic) {
            // the CDC-actor ablation still produces a communication graph
            auto f = cdc_forward(tape, use_target ? *cdc_actor_tgt_ : *cdc_actor_,
                                 obs_tensors(obs), hyper_.grid, hyper_.delta,
                                 ActionMode::EvalArgmax, hyper_.temperature, rng);
            comm->present = true;
            comm->S = Mat(n_);
            comm->S.a = f.S->v;
            comm->shm = f.shm;
        }
        JointActs out;
        for (const auto& a : actions) out.push_back(a->v);
        return out;
    }

    std::vector<TensorPtr> actions_diff(Tape& tape, const std::vector<TensorPtr>& obs,
                                        Rng& rng) override {
        return forward_actions(tape, obs, ActionMode::LossSoft, rng, false);
    }

    std::vector<TensorPtr> q_heads(Tape& tape, const std::vector<TensorPtr>& obs,
                                   const std::vector<TensorPtr>& acts, bool use_target) override {
        if (kind_ == BaselineKind::IndependentDDPG) {
            std::vector<TensorPtr> qs;
            auto& nets = use_target ? critics_tgt_ : critics_;
            for (int i = 0; i < n_; ++i)
                qs.push_back(mlp_forward(tape, nets[i], tape.concat({obs[i], acts[i]})));
            return qs;
        }
        return {ff_critic_q(tape, use_target ? *ff_critic_tgt_ : *ff_critic_, obs, acts)};
    }

    std::vector<TensorPtr> actor_params() override { return actor_pair_.live; }
    std::vector<TensorPtr> critic_params() override { return critic_pair_.live; }
    TargetPair& actor_targets() override { return actor_pair_; }
    TargetPair& critic_targets() override { return critic_pair_; }

    ParamList named_params() override {
        ParamList ps;
        if (kind_ == BaselineKind::IndependentDDPG) {
            for (int i = 0; i < n_; ++i) {
                append_params(ps, "actor" + std::to_string(i), actors_[i]);
                append_params(ps, "critic" + std::to_string(i), critics_[i]);
            }
        } else if (kind_ == BaselineKind::CdcFeedForwardCritic) {
            for (auto& np : cdc_param_list(*cdc_actor_)) ps.push_back({"actor." + np.name, np.t});
            append_params(ps, "critic.ff", ff_critic_->net);
        } else {
            append_params(ps, "actor.shared", actors_[0]);
            append_params(ps, "critic.ff", ff_critic_->net);
        }
        return ps;
    }

private:
    std::vector<TensorPtr> forward_actions(Tape& tape, const std::vector<TensorPtr>& obs,
                                           ActionMode mode, Rng& rng, bool use_target) {
        std::vector<TensorPtr> logits;
        switch (kind_) {
            case BaselineKind::IndependentDDPG: {
                auto& nets = use_target ? actors_tgt_ : actors_;
                for (int i = 0; i < n_; ++i) logits.push_back(mlp_forward(tape, nets[i], obs[i]));
                break;
            }
            case BaselineKind::AverageObs:
            case BaselineKind::NearestNeighbourObs: {
                auto inputs = shared_obs_inputs(tape, kind_, obs, &neighbour_fallback_);
                auto& net = use_target ? actors_tgt_[0] : actors_[0];
                for (int i = 0; i < n_; ++i) logits.push_back(mlp_forward(tape, net, inputs[i]));
                break;
            }
            case BaselineKind::CdcFeedForwardCritic: {
                auto f = cdc_forward(tape, use_target ? *cdc_actor_tgt_ : *cdc_actor_, obs,
                                     hyper_.grid, hyper_.delta, mode, hyper_.temperature, rng);
                return f.selection.actions;
            }
        }
        ActionSelection sel;
        for (auto& l : logits) {
            switch (mode) {
                case ActionMode::TrainHard:
                    sel.actions.push_back(gumbel_softmax(tape, l, hyper_.temperature, true, rng));
                    break;
                case ActionMode::LossSoft:
                    sel.actions.push_back(gumbel_softmax(tape, l, hyper_.temperature, false, rng));
                    break;
                case ActionMode::EvalArgmax: {
                    auto a = tensor(l->shape);
                    int am = 0;
                    for (int i = 1; i < l->numel(); ++i)
                        if (l->v[i] > l->v[am]) am = i;
                    a->v[am] = 1.0;
                    sel.actions.push_back(a);
                    break;
                }
            }
        }
        return sel.actions;
    }

    void init_targets() {
        auto live_actor = collect_actor();
        auto live_critic = collect_critic();
        // deep copies for targets
        switch (kind_) {
            case BaselineKind::IndependentDDPG:
                for (int i = 0; i < n_; ++i) {
                    actors_tgt_.push_back(clone_mlp(actors_[i]));
                    critics_tgt_.push_back(clone_mlp(critics_[i]));
                }
                break;
            case BaselineKind::AverageObs:
            case BaselineKind::NearestNeighbourObs:
                actors_tgt_.push_back(clone_mlp(actors_[0]));
                ff_critic_tgt_ = std::make_unique<FeedForwardCritic>();
                *ff_critic_tgt_ = {ff_critic_->n, ff_critic_->obs_width, clone_mlp(ff_critic_->net)};
                break;
            case BaselineKind::CdcFeedForwardCritic:
                cdc_actor_tgt_ = std::make_unique<CdcParams>(clone_cdc_params(*cdc_actor_));
                ff_critic_tgt_ = std::make_unique<FeedForwardCritic>();
                *ff_critic_tgt_ = {ff_critic_->n, ff_critic_->obs_width, clone_mlp(ff_critic_->net)};
                break;
        }
        actor_pair_ = make_target_pair(live_actor, collect_actor_tgt(), 0.01);
        critic_pair_ = make_target_pair(live_critic, collect_critic_tgt(), 0.01);
    }

    std::vector<TensorPtr> collect_actor() {
        ParamList ps;
        if (kind_ == BaselineKind::CdcFeedForwardCritic) return tensors_of(cdc_param_list(*cdc_actor_));
        for (auto& a : actors_) append_params(ps, "a", a);
        return tensors_of(ps);
    }
    std::vector<TensorPtr> collect_actor_tgt() {
        ParamList ps;
        if (kind_ == BaselineKind::CdcFeedForwardCritic)
            return tensors_of(cdc_param_list(*cdc_actor_tgt_));
        for (auto& a : actors_tgt_) append_params(ps, "a", a);
        return tensors_of(ps);
    }
    std::vector<TensorPtr> collect_critic() {
        ParamList ps;
        if (kind_ == BaselineKind::IndependentDDPG) {
            for (auto& c : critics_) append_params(ps, "c", c);
        } else {
            append_params(ps, "c", ff_critic_->net);
        }
        return tensors_of(ps);
    }
    std::vector<TensorPtr> collect_critic_tgt() {
        ParamList ps;
        if (kind_ == BaselineKind::IndependentDDPG) {
            for (auto& c : critics_tgt_) append_params(ps, "c", c);
        } else {
            append_params(ps, "c", ff_critic_tgt_->net);
        }
        return tensors_of(ps);
    }

    BaselineKind kind_;
    int n_;
    int obs_width_;
    AlgoHyper hyper_;
    bool neighbour_fallback_ = false;

    std::vector<Mlp> actors_, actors_tgt_;    // per-agent or single shared
    std::vector<Mlp> critics_, critics_tgt_;  // IndependentDDPG only
    std::unique_ptr<CdcParams> cdc_actor_, cdc_actor_tgt_;
    std::unique_ptr<FeedForwardCritic> ff_critic_, ff_critic_tgt_;
    TargetPair actor_pair_, critic_pair_;
};

inline std::unique_ptr<Algorithm> make_algorithm(const std::string& name, const EnvConfig& cfg,
                                                 const AlgoHyper& hyper, Rng& rng) {
    const int w = padded_obs_width(cfg);
    if (name == "cdc") return std::make_unique<CdcAlgorithm>(cfg.n_agents, w, hyper, rng);
    if (name == "independent_ddpg")
        return std::make_unique<BaselineAlgorithm>(BaselineKind::IndependentDDPG, cfg.n_agents, w,
                                                   hyper, rng);
    if (name == "average_obs")
        return std::make_unique<BaselineAlgorithm>(BaselineKind::AverageObs, cfg.n_agents, w,
                                                   hyper, rng);
    if (name == "nearest_neighbour")
        return std::make_unique<BaselineAlgorithm>(BaselineKind::NearestNeighbourObs,
                                                   cfg.n_agents, w, hyper, rng);
    if (name == "cdc_ff_critic")
        return std::make_unique<BaselineAlgorithm>(BaselineKind::CdcFeedForwardCritic,
                                                   cfg.n_agents, w, hyper, rng);
    throw std::invalid_argument(
        "unknown algorithm '" + name +
        "' (valid: cdc, independent_ddpg, average_obs, nearest_neighbour, cdc_ff_critic)");
}

}  // namespace cdc
