#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "cdc/nn.hpp"
#include "cdc/policy.hpp"
#include "cdc/rng.hpp"
#include "cdc/tensor.hpp"

namespace cdc {

// One centralized recurrent critic for the whole system: each agent's
// (observation, action) pair is embedded and folded into an LSTM; the last
// hidden state produces the Q-value.
struct CriticParams {
    int obs_width = 0;  // padded observation width
    Linear embed;       // (obs_width + kActionCount) -> 64
    LstmCellParams lstm;
    Mlp q_head;  // 64 -> (64,64) -> 1
};

inline CriticParams make_critic_params(int obs_width, Rng& rng) {
    CriticParams p;
    p.obs_width = obs_width;
    p.embed = make_linear(obs_width + kActionCount, kHiddenWidth, rng);
    p.lstm = make_lstm_cell(kHiddenWidth, kHiddenWidth, rng);
    p.q_head = make_mlp(kHiddenWidth, {kHiddenWidth, kHiddenWidth}, 1, OutAct::Identity, rng);
    return p;
}

inline ParamList critic_param_list(const CriticParams& p) {
    ParamList ps;
    append_params(ps, "embed", p.embed);
    append_params(ps, "lstm", p.lstm);
    append_params(ps, "q_head", p.q_head);
    return ps;
}

inline LstmCellParams clone_lstm(const LstmCellParams& p) {
    LstmCellParams c;
    c.input_dim = p.input_dim;
    c.hidden_dim = p.hidden_dim;
    c.input_gate = {clone_tensor(p.input_gate.Wx), clone_tensor(p.input_gate.Wh),
                    clone_tensor(p.input_gate.b)};
    c.forget_gate = {clone_tensor(p.forget_gate.Wx), clone_tensor(p.forget_gate.Wh),
                     clone_tensor(p.forget_gate.b)};
    c.cell_gate = {clone_tensor(p.cell_gate.Wx), clone_tensor(p.cell_gate.Wh),
                   clone_tensor(p.cell_gate.b)};
    c.output_gate = {clone_tensor(p.output_gate.Wx), clone_tensor(p.output_gate.Wh),
                     clone_tensor(p.output_gate.b)};
    return c;
}

inline CriticParams clone_critic_params(const CriticParams& p) {
    CriticParams c;
    c.obs_width = p.obs_width;
    c.embed = clone_linear(p.embed);
    c.lstm = clone_lstm(p.lstm);
    c.q_head = clone_mlp(p.q_head);
    return c;
}

// Q(o_1..o_N, a_1..a_N): agents are fed in ascending index order, z_0 = 0.
inline TensorPtr critic_q(Tape& tape, const CriticParams& p, const std::vector<TensorPtr>& obs,
                          const std::vector<TensorPtr>& acts) {
    if (obs.size() != acts.size())
        throw std::invalid_argument("critic_q: observation/action count mismatch");
    TensorPtr h = tensor({p.lstm.hidden_dim});
    TensorPtr c = tensor({p.lstm.hidden_dim});
    for (std::size_t i = 0; i < obs.size(); ++i) {
        auto x = linear_forward(tape, p.embed, tape.concat({obs[i], acts[i]}));
        auto hc = lstm_cell(tape, p.lstm, x, h, c);
        h = hc.first;
        c = hc.second;
    }
    return mlp_forward(tape, p.q_head, h);
}

// Live/target parameter mirror with the soft mixing rate.
struct TargetPair {
    std::vector<TensorPtr> live;
    std::vector<TensorPtr> target;
    double tau = 0.01;
};

inline TargetPair make_target_pair(std::vector<TensorPtr> live, std::vector<TensorPtr> target,
                                   double tau) {
    if (live.size() != target.size())
        throw std::invalid_argument("make_target_pair: list sizes differ");
    for (std::size_t i = 0; i < live.size(); ++i)
        if (live[i]->shape != target[i]->shape)
            throw std::invalid_argument("make_target_pair: shape mismatch at " +
                                        std::to_string(i));
    return {std::move(live), std::move(target), tau};
}

// theta' <- tau * theta + (1 - tau) * theta'
inline void soft_update(TargetPair& pair) {
    for (std::size_t i = 0; i < pair.live.size(); ++i) {
        const auto& src = pair.live[i]->v;
        auto& dst = pair.target[i]->v;
        if (src.size() != dst.size())
            throw std::invalid_argument("soft_update: shape mismatch at " + std::to_string(i));
        for (std::size_t j = 0; j < src.size(); ++j)
            dst[j] = pair.tau * src[j] + (1.0 - pair.tau) * dst[j];
    }
}

}  // namespace cdc
