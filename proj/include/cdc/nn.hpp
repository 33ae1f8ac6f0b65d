#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "cdc/rng.hpp"
#include "cdc/tensor.hpp"

namespace cdc {

struct NamedParam {
    std::string name;
    TensorPtr t;
};
using ParamList = std::vector<NamedParam>;

inline std::vector<TensorPtr> tensors_of(const ParamList& ps) {
    std::vector<TensorPtr> out;
    out.reserve(ps.size());
    for (const auto& p : ps) out.push_back(p.t);
    return out;
}

inline void zero_grads(const std::vector<TensorPtr>& ps) {
    for (const auto& p : ps) p->zero_grad();
}

inline void set_requires_grad(const std::vector<TensorPtr>& ps, bool on) {
    for (const auto& p : ps) p->requires_grad = on;
}

inline double grad_norm(const std::vector<TensorPtr>& ps) {
    double s = 0.0;
    for (const auto& p : ps)
        for (double g : p->g) s += g * g;
    return std::sqrt(s);
}

// Global-norm clip: if ||g|| exceeds max_norm, scale all gradients down.
inline double clip_grad_norm(const std::vector<TensorPtr>& ps, double max_norm) {
    double n = grad_norm(ps);
    if (n > max_norm && n > 0.0) {
        double k = max_norm / n;
        for (const auto& p : ps)
            for (double& g : p->g) g *= k;
    }
    return n;
}

// ---- layers ----

struct Linear {
    TensorPtr W;  // {out, in}
    TensorPtr b;  // {out}
};

// Weights uniform in +-1/sqrt(fan_in), biases zero.
inline Linear make_linear(int in, int out, Rng& rng) {
    Linear l;
    l.W = tensor({out, in}, true);
    l.b = tensor({out}, true);
    double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : l.W->v) w = rng.uniform(-bound, bound);
    return l;
}

inline TensorPtr linear_forward(Tape& tape, const Linear& l, const TensorPtr& x) {
    return tape.add(tape.matmul(l.W, x), l.b);
}

inline void append_params(ParamList& ps, const std::string& prefix, const Linear& l) {
    ps.push_back({prefix + ".W", l.W});
    ps.push_back({prefix + ".b", l.b});
}

enum class OutAct { Identity, Sigmoid, Tanh };

struct Mlp {
    std::vector<Linear> layers;  // hidden layers then output layer
    OutAct out_act = OutAct::Identity;
};

inline Mlp make_mlp(int in, const std::vector<int>& hidden, int out, OutAct out_act, Rng& rng) {
    Mlp m;
    m.out_act = out_act;
    int w = in;
    for (int h : hidden) {
        m.layers.push_back(make_linear(w, h, rng));
        w = h;
    }
    m.layers.push_back(make_linear(w, out, rng));
    return m;
}

// Hidden activations are ReLU; the output activation is whatever the call
// site configured on the Mlp.
inline TensorPtr mlp_forward(Tape& tape, const Mlp& m, const TensorPtr& x) {
    TensorPtr h = x;
    for (std::size_t i = 0; i + 1 < m.layers.size(); ++i)
        h = tape.relu(linear_forward(tape, m.layers[i], h));
    h = linear_forward(tape, m.layers.back(), h);
    switch (m.out_act) {
        case OutAct::Identity: return h;
        case OutAct::Sigmoid: return tape.sigmoid(h);
        case OutAct::Tanh: return tape.tanh(h);
    }
    return h;
}

inline void append_params(ParamList& ps, const std::string& prefix, const Mlp& m) {
    for (std::size_t i = 0; i < m.layers.size(); ++i)
        append_params(ps, prefix + ".l" + std::to_string(i), m.layers[i]);
}

// ---- LSTM cell ----

struct LstmGate {
    TensorPtr Wx;  // {hidden, input}
    TensorPtr Wh;  // {hidden, hidden}
    TensorPtr b;   // {hidden}
};

struct LstmCellParams {
    int input_dim = 0;
    int hidden_dim = 0;
    LstmGate input_gate, forget_gate, cell_gate, output_gate;
};

inline LstmGate make_lstm_gate(int in, int hid, Rng& rng) {
    LstmGate g;
    double bound = 1.0 / std::sqrt(static_cast<double>(in + hid));
    g.Wx = tensor({hid, in}, true);
    g.Wh = tensor({hid, hid}, true);
    g.b = tensor({hid}, true);
    for (double& w : g.Wx->v) w = rng.uniform(-bound, bound);
    for (double& w : g.Wh->v) w = rng.uniform(-bound, bound);
    return g;
}

inline LstmCellParams make_lstm_cell(int input_dim, int hidden_dim, Rng& rng) {
    LstmCellParams p;
    p.input_dim = input_dim;
    p.hidden_dim = hidden_dim;
    p.input_gate = make_lstm_gate(input_dim, hidden_dim, rng);
    p.forget_gate = make_lstm_gate(input_dim, hidden_dim, rng);
    p.cell_gate = make_lstm_gate(input_dim, hidden_dim, rng);
    p.output_gate = make_lstm_gate(input_dim, hidden_dim, rng);
    return p;
}

inline TensorPtr lstm_gate_preact(Tape& tape, const LstmGate& g, const TensorPtr& x,
                                  const TensorPtr& h) {
    return tape.add(tape.add(tape.matmul(g.Wx, x), tape.matmul(g.Wh, h)), g.b);
}

// Standard recurrence: c' = f.c + i.g, h' = o.tanh(c').
inline std::pair<TensorPtr, TensorPtr> lstm_cell(Tape& tape, const LstmCellParams& p,
                                                 const TensorPtr& x, const TensorPtr& h_prev,
                                                 const TensorPtr& c_prev) {
    auto i = tape.sigmoid(lstm_gate_preact(tape, p.input_gate, x, h_prev));
    auto f = tape.sigmoid(lstm_gate_preact(tape, p.forget_gate, x, h_prev));
    auto g = tape.tanh(lstm_gate_preact(tape, p.cell_gate, x, h_prev));
    auto o = tape.sigmoid(lstm_gate_preact(tape, p.output_gate, x, h_prev));
    auto c = tape.add(tape.mul(f, c_prev), tape.mul(i, g));
    auto h = tape.mul(o, tape.tanh(c));
    return {h, c};
}

inline void append_params(ParamList& ps, const std::string& prefix, const LstmCellParams& p) {
    const std::pair<const char*, const LstmGate*> gates[] = {
        {".i", &p.input_gate}, {".f", &p.forget_gate}, {".g", &p.cell_gate}, {".o", &p.output_gate}};
    for (auto& [suffix, gate] : gates) {
        ps.push_back({prefix + suffix + ".Wx", gate->Wx});
        ps.push_back({prefix + suffix + ".Wh", gate->Wh});
        ps.push_back({prefix + suffix + ".b", gate->b});
    }
}

// ---- Gumbel-Softmax ----

// Samples y = softmax((logits + gumbel)/temperature). With hard=true the
// forward value is the one-hot argmax while the recorded adjoint still routes
// gradients through the soft sample (straight-through).
inline TensorPtr gumbel_softmax(Tape& tape, const TensorPtr& logits, double temperature,
                                bool hard, Rng& rng) {
    if (!(temperature > 0.0))
        throw std::invalid_argument("gumbel_softmax: temperature must be positive, got " +
                                    std::to_string(temperature));
    Tape::check_finite(logits, "gumbel_softmax logits");
    const std::size_t n = logits->v.size();
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = (logits->v[i] + rng.gumbel()) / temperature;
    double mx = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) denom += (y[i] = std::exp(z[i] - mx));
    for (std::size_t i = 0; i < n; ++i) y[i] /= denom;

    auto out = tensor(logits->shape);
    if (hard) {
        std::size_t am = 0;
        for (std::size_t i = 1; i < n; ++i)
            if (y[i] > y[am]) am = i;
        out->v[am] = 1.0;
    } else {
        out->v = y;
    }
    if (tape.track(logits)) {
        out->requires_grad = true;
        tape.record([logits, out, y = std::move(y), temperature]() {
            if (out->g.empty()) return;
            logits->ensure_grad();
            double dot = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) dot += out->g[i] * y[i];
            for (std::size_t i = 0; i < y.size(); ++i)
                logits->g[i] += y[i] * (out->g[i] - dot) / temperature;
        });
    }
    return out;
}

// ---- Adam ----

struct AdamState {
    double lr;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<std::vector<double>> m, v;

    explicit AdamState(double lr_) : lr(lr_) {}
};

// One Adam update with bias correction. Moments are allocated lazily on the
// first call and must keep matching the parameter shapes afterwards.
inline void adam_step(AdamState& s, const std::vector<TensorPtr>& params) {
    if (s.m.empty()) {
        s.m.resize(params.size());
        s.v.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            s.m[i].assign(params[i]->v.size(), 0.0);
            s.v[i].assign(params[i]->v.size(), 0.0);
        }
    }
    if (s.m.size() != params.size())
        throw std::invalid_argument("adam_step: parameter count changed");
    ++s.step;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        if (s.m[i].size() != p.v.size())
            throw std::invalid_argument("adam_step: shape mismatch on parameter " +
                                        std::to_string(i));
        p.ensure_grad();
        for (std::size_t j = 0; j < p.v.size(); ++j) {
            const double g = p.g[j];
            s.m[i][j] = s.beta1 * s.m[i][j] + (1.0 - s.beta1) * g;
            s.v[i][j] = s.beta2 * s.v[i][j] + (1.0 - s.beta2) * g * g;
            const double mhat = s.m[i][j] / bc1;
            const double vhat = s.v[i][j] / bc2;
            p.v[j] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
        }
    }
}

}  // namespace cdc
