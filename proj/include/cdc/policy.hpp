#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cdc/nn.hpp"
#include "cdc/rng.hpp"
#include "cdc/spectral.hpp"
#include "cdc/tensor.hpp"

namespace cdc {

constexpr int kHiddenWidth = 64;
constexpr int kMessageWidth = 32;
constexpr int kActionCount = 5;

// One parameter set shared by every agent: the pairwise observation encoder
// (two hidden layers realized as a per-agent branch plus a joint head, which
// makes c_{u,v} = c_{v,u} hold exactly for any parameters), the connectivity
// head, and the action head.
struct CdcParams {
    int obs_width = 0;
    Linear enc_branch;  // obs -> 64, per-agent branch
    Linear enc_hidden;  // 64 -> 64, joint head after summing branches
    Linear enc_out;     // 64 -> 32, message output
    Mlp strength;       // 32 -> (64,64) -> 1, sigmoid output
    Mlp action;         // 32 -> (64,64) -> 5 logits
};

inline CdcParams make_cdc_params(int obs_width, Rng& rng) {
    CdcParams p;
    p.obs_width = obs_width;
    p.enc_branch = make_linear(obs_width, kHiddenWidth, rng);
    p.enc_hidden = make_linear(kHiddenWidth, kHiddenWidth, rng);
    p.enc_out = make_linear(kHiddenWidth, kMessageWidth, rng);
    p.strength = make_mlp(kMessageWidth, {kHiddenWidth, kHiddenWidth}, 1, OutAct::Sigmoid, rng);
    p.action = make_mlp(kMessageWidth, {kHiddenWidth, kHiddenWidth}, kActionCount,
                        OutAct::Identity, rng);
    return p;
}

inline ParamList cdc_param_list(const CdcParams& p) {
    ParamList ps;
    append_params(ps, "enc_branch", p.enc_branch);
    append_params(ps, "enc_hidden", p.enc_hidden);
    append_params(ps, "enc_out", p.enc_out);
    append_params(ps, "strength", p.strength);
    append_params(ps, "action", p.action);
    return ps;
}

inline TensorPtr clone_tensor(const TensorPtr& t) {
    auto c = tensor(t->shape);
    c->v = t->v;
    return c;
}

inline Linear clone_linear(const Linear& l) { return {clone_tensor(l.W), clone_tensor(l.b)}; }

inline Mlp clone_mlp(const Mlp& m) {
    Mlp c;
    c.out_act = m.out_act;
    for (const auto& l : m.layers) c.layers.push_back(clone_linear(l));
    return c;
}

inline CdcParams clone_cdc_params(const CdcParams& p) {
    CdcParams c;
    c.obs_width = p.obs_width;
    c.enc_branch = clone_linear(p.enc_branch);
    c.enc_hidden = clone_linear(p.enc_hidden);
    c.enc_out = clone_linear(p.enc_out);
    c.strength = clone_mlp(p.strength);
    c.action = clone_mlp(p.action);
    return c;
}

// Symmetric pairwise messages; (u,v) and (v,u) share one tensor.
struct MessageTensor {
    int n = 0;
    std::vector<TensorPtr> pairs;  // upper triangle incl. diagonal

    static std::size_t tri_index(int n, int u, int v) {
        if (u > v) std::swap(u, v);
        return static_cast<std::size_t>(u) * n - static_cast<std::size_t>(u) * (u - 1) / 2 +
               (v - u);
    }

    const TensorPtr& at(int u, int v) const { return pairs[tri_index(n, u, v)]; }
};

// c_{u,v} = head(g(o_u) + g(o_v)); the diagonal uses 2 g(o_u).
inline MessageTensor encode_pairwise(Tape& tape, const CdcParams& p,
                                     const std::vector<TensorPtr>& obs) {
    const int n = static_cast<int>(obs.size());
    for (const auto& o : obs)
        if (o->shape != std::vector<int>{p.obs_width})
            throw std::invalid_argument("encode_pairwise: observation width " +
                                        shape_str(o->shape) + " does not match encoder width (" +
                                        std::to_string(p.obs_width) + ")");
    std::vector<TensorPtr> branch(n);
    for (int i = 0; i < n; ++i) branch[i] = linear_forward(tape, p.enc_branch, obs[i]);

    MessageTensor mt;
    mt.n = n;
    mt.pairs.resize(static_cast<std::size_t>(n) * (n + 1) / 2);
    for (int u = 0; u < n; ++u)
        for (int v = u; v < n; ++v) {
            TensorPtr joint = (u == v) ? tape.scale(branch[u], 2.0)
                                       : tape.add(branch[u], branch[v]);
            auto h1 = tape.relu(joint);
            auto h2 = tape.relu(linear_forward(tape, p.enc_hidden, h1));
            mt.pairs[MessageTensor::tri_index(n, u, v)] = linear_forward(tape, p.enc_out, h2);
        }
    return mt;
}

// Strengths are sigmoid outputs, mathematically inside (0,1); the clamp only
// guards against rounding to exactly 0 or 1 under saturated heads, where the
// sigmoid derivative has already vanished.
constexpr double kStrengthFloor = 1e-12;

// sigma(strength head) per unordered pair, scattered into a symmetric n x n
// matrix with a structurally zero diagonal.
inline TensorPtr connectivity(Tape& tape, const CdcParams& p, const MessageTensor& mt) {
    const int n = mt.n;
    struct Entry {
        int u, v;
        TensorPtr s;
    };
    auto entries = std::make_shared<std::vector<Entry>>();
    bool any_grad = false;
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) {
            auto s = mlp_forward(tape, p.strength, mt.at(u, v));
            any_grad = any_grad || tape.track(s);
            entries->push_back({u, v, s});
        }
    auto S = tensor({n, n});
    const double ceil = 1.0 - kStrengthFloor;
    for (const auto& e : *entries) {
        const double val = std::clamp(e.s->v[0], kStrengthFloor, ceil);
        S->at(e.u, e.v) = val;
        S->at(e.v, e.u) = val;
    }
    if (any_grad) {
        S->requires_grad = true;
        tape.record([entries, S]() {
            if (S->g.empty()) return;
            const int m = S->shape[0];
            for (const auto& e : *entries) {
                if (!e.s->requires_grad) continue;
                e.s->ensure_grad();
                e.s->g[0] += S->g[static_cast<std::size_t>(e.u) * m + e.v] +
                             S->g[static_cast<std::size_t>(e.v) * m + e.u];
            }
        });
    }
    return S;
}

// Differentiable stable-heat attention: forward runs the Laplacian  ->
// eigendecomposition -> grid scan; backward applies the matrix-function
// derivative with the time selection held fixed. When `frozen` is given the
// scan is skipped and heat values are evaluated at the frozen times (gradient
// checks re-run the forward under perturbation without moving p-hat).
inline TensorPtr stable_heat(Tape& tape, const TensorPtr& S, const TimeGrid& grid, double delta,
                             StableHeatMatrix* out_shm = nullptr,
                             const StableHeatMatrix* frozen = nullptr) {
    if (S->shape.size() != 2 || S->shape[0] != S->shape[1])
        throw std::invalid_argument("stable_heat: expected square matrix, got " +
                                    shape_str(S->shape));
    const int n = S->shape[0];
    Mat Sm(n);
    Sm.a = S->v;
    auto graph = std::make_shared<WeightedGraph>(n, std::move(Sm));
    auto es = std::make_shared<EigenSystem>(sym_eigendecompose(normalized_laplacian(*graph)));

    auto shm = std::make_shared<StableHeatMatrix>();
    if (frozen) {
        *shm = *frozen;
        shm->H = heat_at_frozen(*es, *frozen);
    } else {
        *shm = detect_stable_times(*es, grid, delta);
    }
    if (out_shm) *out_shm = *shm;

    auto H = tensor({n, n});
    H->v = shm->H.a;
    if (tape.track(S)) {
        H->requires_grad = true;
        tape.record([S, H, graph, es, shm]() {
            if (H->g.empty()) return;
            const int m = shm->n;
            Mat upstream(m);
            upstream.a = H->g;
            Mat dS = detail::heat_vjp_raw(*graph, *shm, upstream, *es);
            S->ensure_grad();
            for (std::size_t i = 0; i < dS.a.size(); ++i) S->g[i] += dS.a[i];
        });
    }
    return H;
}

// m_u = sum_v H_{u,v} c_{u,v}; pairs without a stable heat value carry H = 0
// and therefore contribute nothing.
inline std::vector<TensorPtr> aggregate_messages(Tape& tape, const MessageTensor& mt,
                                                 const TensorPtr& H) {
    const int n = mt.n;
    if (H->shape != std::vector<int>{n, n})
        throw std::invalid_argument("aggregate_messages: H shape " + shape_str(H->shape) +
                                    " does not match " + std::to_string(n) + " agents");
    const int w = mt.pairs.front()->shape[0];
    std::vector<TensorPtr> messages(n);
    for (int u = 0; u < n; ++u) {
        auto m = tensor({w});
        for (int v = 0; v < n; ++v) {
            const double h = H->at(u, v);
            const auto& c = mt.at(u, v);
            for (int i = 0; i < w; ++i) m->v[i] += h * c->v[i];
        }
        bool needs = tape.track(H);
        for (int v = 0; v < n && !needs; ++v) needs = tape.track(mt.at(u, v));
        if (needs) {
            m->requires_grad = true;
            auto pairs = std::make_shared<std::vector<TensorPtr>>();
            for (int v = 0; v < n; ++v) pairs->push_back(mt.at(u, v));
            tape.record([m, H, pairs, u, n, w]() {
                if (m->g.empty()) return;
                for (int v = 0; v < n; ++v) {
                    const auto& c = (*pairs)[v];
                    const double h = H->v[static_cast<std::size_t>(u) * n + v];
                    if (H->requires_grad) {
                        H->ensure_grad();
                        double dot = 0.0;
                        for (int i = 0; i < w; ++i) dot += m->g[i] * c->v[i];
                        H->g[static_cast<std::size_t>(u) * n + v] += dot;
                    }
                    if (c->requires_grad) {
                        c->ensure_grad();
                        for (int i = 0; i < w; ++i) c->g[i] += h * m->g[i];
                    }
                }
            });
        }
        messages[u] = m;
    }
    return messages;
}

enum class ActionMode { TrainHard, LossSoft, EvalArgmax };

struct ActionSelection {
    std::vector<TensorPtr> actions;  // one-hot (or soft in LossSoft mode)
    std::vector<TensorPtr> logits;
};

inline ActionSelection select_actions(Tape& tape, const CdcParams& p,
                                      const std::vector<TensorPtr>& messages, ActionMode mode,
                                      double temperature, Rng& rng) {
    ActionSelection out;
    for (const auto& m : messages) {
        auto logits = mlp_forward(tape, p.action, m);
        out.logits.push_back(logits);
        switch (mode) {
            case ActionMode::TrainHard:
                out.actions.push_back(gumbel_softmax(tape, logits, temperature, true, rng));
                break;
            case ActionMode::LossSoft:
                out.actions.push_back(gumbel_softmax(tape, logits, temperature, false, rng));
                break;
            case ActionMode::EvalArgmax: {
                auto a = tensor(logits->shape);
                int am = 0;
                for (int i = 1; i < logits->numel(); ++i)
                    if (logits->v[i] > logits->v[am]) am = i;
                a->v[am] = 1.0;
                out.actions.push_back(a);
                break;
            }
        }
    }
    return out;
}

struct CdcForward {
    ActionSelection selection;
    std::vector<TensorPtr> messages;
    TensorPtr S;
    TensorPtr H;
    StableHeatMatrix shm;
};

// Full actor pipeline of one time-step: encode pairs, build the connectivity
// graph, diffuse, aggregate, select.
inline CdcForward cdc_forward(Tape& tape, const CdcParams& p, const std::vector<TensorPtr>& obs,
                              const TimeGrid& grid, double delta, ActionMode mode,
                              double temperature, Rng& rng,
                              const StableHeatMatrix* frozen = nullptr) {
    CdcForward f;
    MessageTensor mt = encode_pairwise(tape, p, obs);
    f.S = connectivity(tape, p, mt);
    f.H = stable_heat(tape, f.S, grid, delta, &f.shm, frozen);
    f.messages = aggregate_messages(tape, mt, f.H);
    f.selection = select_actions(tape, p, f.messages, mode, temperature, rng);
    return f;
}

}  // namespace cdc
