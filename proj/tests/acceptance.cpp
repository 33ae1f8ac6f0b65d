// Acceptance suite: runs every criterion at its stated tolerance and prints
// one [PASS]/[FAIL] line each. Exit code is the number of failed criteria.
// Optional arguments select criteria by number (e.g. "./acceptance 1 4 11").

#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cdc/harness.hpp"
#include "cdc/policy.hpp"
#include "cdc/training.hpp"

using namespace cdc;

namespace {

struct Check {
    bool ok = true;
    std::ostringstream detail;

    void require(bool cond, const std::string& what) {
        if (!cond) {
            ok = false;
            if (detail.tellp() > 0) detail << "; ";
            detail << what;
        }
    }
};

WeightedGraph random_graph(int n, Rng& rng, double lo = 0.05, double hi = 0.95) {
    Mat S(n);
    for (int u = 0; u < n; ++u)
        for (int v = u + 1; v < n; ++v) S(u, v) = S(v, u) = rng.uniform(lo, hi);
    return WeightedGraph(n, std::move(S));
}

std::vector<TensorPtr> random_obs(int n, int width, Rng& rng) {
    std::vector<TensorPtr> obs;
    for (int i = 0; i < n; ++i) {
        auto o = tensor({width});
        for (double& x : o->v) x = rng.uniform(-1.0, 1.0);
        obs.push_back(o);
    }
    return obs;
}

double vec_rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        num += (a[i] - b[i]) * (a[i] - b[i]);
        den += b[i] * b[i];
    }
    return den > 1e-18 ? std::sqrt(num / den) : std::sqrt(num);
}

std::vector<double> fd_grad(const std::function<double()>& f, std::vector<double>& x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double keep = x[i];
        x[i] = keep + h;
        const double fp = f();
        x[i] = keep - h;
        const double fm = f();
        x[i] = keep;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

std::vector<double> fd_grad_params(const std::function<double()>& f,
                                   const std::vector<TensorPtr>& params, double h) {
    std::vector<double> all;
    for (const auto& p : params) {
        auto g = fd_grad(f, p->v, h);
        all.insert(all.end(), g.begin(), g.end());
    }
    return all;
}

std::vector<double> flat_grads(const std::vector<TensorPtr>& params) {
    std::vector<double> g;
    for (const auto& p : params) {
        if (p->g.empty()) g.insert(g.end(), p->v.size(), 0.0);
        else g.insert(g.end(), p->g.begin(), p->g.end());
    }
    return g;
}

// ---- criteria ----

// C1: H(0) = I within 1e-12, 50 random graphs, n in 2..10
Check c01_heat_identity() {
    Check c;
    Rng rng(1001);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + static_cast<int>(rng.index(9));
        EigenSystem es = sym_eigendecompose(normalized_laplacian(random_graph(n, rng)));
        Mat H = heat_kernel_at(es, 0.0);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double expect = i == j ? 1.0 : 0.0;
                c.require(std::abs(H(i, j) - expect) < 1e-12, "H(0) != I at n=" + std::to_string(n));
            }
    }
    return c;
}

// C2: two-node closed form within 1e-10 at p in {0.1, 1, 10}
Check c02_two_node() {
    Check c;
    Rng rng(1002);
    for (int trial = 0; trial < 5; ++trial) {
        EigenSystem es = sym_eigendecompose(normalized_laplacian(random_graph(2, rng)));
        for (double p : {0.1, 1.0, 10.0}) {
            Mat H = heat_kernel_at(es, p);
            const double off = (1.0 - std::exp(-2.0 * p)) / 2.0;
            c.require(std::abs(H(0, 1) - off) < 1e-10, "off-diagonal at p=" + std::to_string(p));
        }
    }
    return c;
}

// C3: spectral sum and Pade agree within Frobenius 1e-8 (20 graphs, 3 times)
Check c03_lemma_pade() {
    Check c;
    Rng rng(1003);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 2 + static_cast<int>(rng.index(7));
        WeightedGraph g = random_graph(n, rng);
        Mat L = normalized_laplacian(g);
        EigenSystem es = sym_eigendecompose(L);
        for (double p : {0.5, 2.0, 10.0}) {
            const double err = frobenius_distance(heat_kernel_at(es, p), heat_kernel_pade(L, p));
            c.require(err < 1e-8, "frobenius " + std::to_string(err));
        }
    }
    return c;
}

// C4: stable-heat VJP vs central finite differences, frozen p-hat, n=5
Check c04_heat_vjp() {
    Check c;
    Rng rng(1004);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 5;
        WeightedGraph g = random_graph(n, rng);
        EigenSystem es = sym_eigendecompose(normalized_laplacian(g));
        StableHeatMatrix shm = detect_stable_times(es, TimeGrid{}, 0.05);
        Mat upstream(n);
        for (double& x : upstream.a) x = rng.uniform(-1.0, 1.0);
        Mat grad = stable_heat_vjp(g, shm, upstream);

        auto loss_at = [&](const Mat& S) {
            WeightedGraph gp(n, S);
            Mat H = heat_at_frozen(sym_eigendecompose(normalized_laplacian(gp)), shm);
            double s = 0.0;
            for (std::size_t i = 0; i < H.a.size(); ++i) s += upstream.a[i] * H.a[i];
            return s;
        };
        const double h = 1e-6;
        std::vector<double> fd, an;
        for (int u = 0; u < n; ++u)
            for (int v = u + 1; v < n; ++v) {
                Mat Sp = g.S, Sm = g.S;
                Sp(u, v) += h;
                Sp(v, u) += h;
                Sm(u, v) -= h;
                Sm(v, u) -= h;
                fd.push_back((loss_at(Sp) - loss_at(Sm)) / (2.0 * h));
                an.push_back(grad(u, v));
            }
        const double err = vec_rel_error(an, fd);
        c.require(err < 1e-4, "rel error " + std::to_string(err));
    }
    return c;
}

// C5: end-to-end actor gradient vs finite differences, n=3, rel < 1e-3
Check c05_actor_gradient() {
    Check c;
    Rng rng(1005);
    const int n = 3;
    CdcParams p = make_cdc_params(6, rng);
    auto obs = random_obs(n, 6, rng);
    auto params = tensors_of(cdc_param_list(p));
    TimeGrid grid;

    Tape tape0;
    Rng r0(1);
    auto base = cdc_forward(tape0, p, obs, grid, 0.05, ActionMode::EvalArgmax, 1.0, r0);
    StableHeatMatrix sel = base.shm;

    auto probe = [&]() {
        Tape t;
        NoGradScope ng(t);
        Rng r(1);
        auto f = cdc_forward(t, p, obs, grid, 0.05, ActionMode::EvalArgmax, 1.0, r, &sel);
        double s = 0.0;
        for (const auto& l : f.selection.logits)
            for (double x : l->v) s += x;
        return s;
    };
    auto fd = fd_grad_params(probe, params, 1e-5);

    Tape tape;
    Rng r1(1);
    auto f = cdc_forward(tape, p, obs, grid, 0.05, ActionMode::EvalArgmax, 1.0, r1, &sel);
    TensorPtr loss = scalar_tensor(0.0);
    for (const auto& l : f.selection.logits) loss = tape.add(loss, tape.sum(l));
    tape.backward(loss);
    const double err = vec_rel_error(flat_grads(params), fd);
    c.require(err < 1e-3, "rel error " + std::to_string(err));
    return c;
}

// C6: per-op gradients vs finite differences < 1e-4; LSTM closed form exact
Check c06_autodiff() {
    Check c;
    Rng rng(1006);

    for (EwOp op : {EwOp::Sigmoid, EwOp::Tanh, EwOp::Relu, EwOp::Exp, EwOp::Neg}) {
        auto x = tensor({6}, true);
        for (double& v : x->v) {
            v = rng.uniform(-1.0, 1.0);
            if (std::abs(v) < 0.1) v = 0.3;
        }
        auto probe = [&]() {
            Tape t;
            NoGradScope ng(t);
            auto y = t.elementwise(op, x);
            double s = 0.0;
            for (std::size_t i = 0; i < y->v.size(); ++i) s += y->v[i] * y->v[i];
            return s;
        };
        auto fd = fd_grad(probe, x->v, 1e-5);
        Tape tape;
        auto y = tape.elementwise(op, x);
        tape.backward(tape.sum(tape.mul(y, y)));
        c.require(vec_rel_error(flat_grads({x}), fd) < 1e-4, "elementwise op grad");
        x->zero_grad();
    }

    {
        auto A = tensor({4, 5}, true);
        auto B = tensor({5, 3}, true);
        for (double& v : A->v) v = rng.uniform(-1.0, 1.0);
        for (double& v : B->v) v = rng.uniform(-1.0, 1.0);
        auto probe = [&]() {
            Tape t;
            NoGradScope ng(t);
            auto C = t.matmul(A, B);
            double s = 0.0;
            for (double v : C->v) s += v;
            return s;
        };
        auto fd = fd_grad_params(probe, {A, B}, 1e-5);
        Tape tape;
        tape.backward(tape.sum(tape.matmul(A, B)));
        c.require(vec_rel_error(flat_grads({A, B}), fd) < 1e-4, "matmul grad");
    }

    {
        auto a = tensor({5}, true);
        auto b = tensor({5}, true);
        for (double& v : a->v) v = rng.uniform(0.2, 1.0);
        for (double& v : b->v) v = rng.uniform(0.2, 1.0);
        auto probe = [&]() {
            Tape t;
            NoGradScope ng(t);
            auto y = t.softmax(t.concat({t.mul(a, b), t.sub(a, b)}));
            auto m = t.mean(t.mul(y, y));
            return m->v[0];
        };
        auto fd = fd_grad_params(probe, {a, b}, 1e-5);
        Tape tape;
        auto y = tape.softmax(tape.concat({tape.mul(a, b), tape.sub(a, b)}));
        tape.backward(tape.mean(tape.mul(y, y)));
        c.require(vec_rel_error(flat_grads({a, b}), fd) < 1e-4, "composite grad");
    }

    {
        Rng prng(7);
        LstmCellParams lp = make_lstm_cell(3, 4, prng);
        ParamList ps;
        append_params(ps, "lstm", lp);
        for (auto& np : ps)
            for (double& w : np.t->v) w = 0.0;
        Tape tape;
        auto x = tensor({3}, {0.4, -0.2, 0.8});
        auto h0 = tensor({4});
        auto c0 = tensor({4}, {0.6, -0.9, 0.25, 1.4});
        auto [h, cc] = lstm_cell(tape, lp, x, h0, c0);
        for (int i = 0; i < 4; ++i) {
            c.require(std::abs(cc->v[i] - 0.5 * c0->v[i]) < 1e-12, "lstm cell closed form");
            c.require(std::abs(h->v[i] - 0.5 * std::tanh(0.5 * c0->v[i])) < 1e-12,
                      "lstm hidden closed form");
        }

        Rng prng2(8);
        LstmCellParams lp2 = make_lstm_cell(3, 5, prng2);
        ParamList ps2;
        append_params(ps2, "lstm", lp2);
        auto params = tensors_of(ps2);
        auto x2 = tensor({3}, {0.1, 0.5, -0.3});
        auto h2 = tensor({5}, {0.2, -0.1, 0.0, 0.4, -0.6});
        auto c2 = tensor({5}, {0.5, 0.3, -0.2, 0.1, 0.0});
        auto probe = [&]() {
            Tape t;
            NoGradScope ng(t);
            auto [hh, _] = lstm_cell(t, lp2, x2, h2, c2);
            (void)_;
            double s = 0.0;
            for (double v : hh->v) s += v;
            return s;
        };
        auto fd = fd_grad_params(probe, params, 1e-5);
        Tape tape2;
        auto [hh, _] = lstm_cell(tape2, lp2, x2, h2, c2);
        (void)_;
        tape2.backward(tape2.sum(hh));
        c.require(vec_rel_error(flat_grads(params), fd) < 1e-4, "lstm grads");
    }
    return c;
}

// C7: Gumbel-Softmax marginals within 3 standard errors at 1e5 draws
Check c07_gumbel() {
    Check c;
    Rng rng(1007);
    Tape tape;
    auto logits = tensor({5}, {1.2, 0.3, -0.5, 0.0, 0.8});

    std::vector<double> probs(5);
    double z = 0.0;
    for (int k = 0; k < 5; ++k) z += (probs[k] = std::exp(logits->v[k]));
    for (double& p : probs) p /= z;

    const int draws = 100000;
    std::vector<int> counts(5, 0);
    for (int i = 0; i < draws; ++i) {
        auto y = gumbel_softmax(tape, logits, 1.0, true, rng);
        double sum = 0.0;
        int ones = 0, am = -1;
        for (int k = 0; k < 5; ++k) {
            sum += y->v[k];
            if (y->v[k] == 1.0) {
                ++ones;
                am = k;
            } else {
                c.require(y->v[k] == 0.0, "hard sample not one-hot");
            }
        }
        c.require(sum == 1.0 && ones == 1, "hard sample not one-hot");
        ++counts[am];
    }
    for (int k = 0; k < 5; ++k) {
        const double freq = static_cast<double>(counts[k]) / draws;
        const double se = std::sqrt(probs[k] * (1.0 - probs[k]) / draws);
        c.require(std::abs(freq - probs[k]) <= 3.0 * se,
                  "category " + std::to_string(k) + " off by " +
                      std::to_string(std::abs(freq - probs[k]) / se) + " se");
    }
    return c;
}

// C8: environment oracles
Check c08_env() {
    Check c;
    {
        ParticleEnv env(EnvConfig::make(Task::Navigation, 1), 3);
        env.reset();
        env.mutable_state().positions[0] = {0.0, 0.0};
        env.mutable_state().velocities[0] = {0.0, 0.0};
        std::vector<double> plus_x = {0, 1, 0, 0, 0};
        env.step({plus_x});
        c.require(env.state().positions[0].x == 0.05 && env.state().positions[0].y == 0.0,
                  "integrator first step");
    }
    {
        EnvConfig cfg = EnvConfig::make(Task::Formation, 4);
        ParticleEnv env(cfg, 23);
        env.reset();
        WorldState st = env.state();
        auto targets = task_targets(cfg, st);
        for (int a = 0; a < 4; ++a) st.positions[a] = targets[a];
        StepInfo info;
        const double r = task_reward(cfg, st, info);
        c.require(std::abs(r) < 1e-12 && info.success, "formation vertex placement");
    }
    {
        EnvConfig cfg = EnvConfig::make(Task::Line, 3);
        Rng arng(53);
        std::vector<std::vector<std::vector<double>>> script;
        for (int t = 0; t < cfg.episode_length; ++t) {
            std::vector<std::vector<double>> acts;
            for (int a = 0; a < 3; ++a) {
                std::vector<double> one(kNumActions, 0.0);
                one[arng.index(kNumActions)] = 1.0;
                acts.push_back(one);
            }
            script.push_back(acts);
        }
        auto run = [&]() {
            ParticleEnv env(cfg, 59);
            env.reset();
            std::vector<double> rewards;
            for (const auto& acts : script) rewards.push_back(env.step(acts).reward);
            return rewards;
        };
        c.require(run() == run(), "deterministic replay");
    }
    {
        EnvConfig cfg = EnvConfig::make(Task::Line, 4);
        ParticleEnv env(cfg, 31);
        env.reset();
        auto targets = task_targets(cfg, env.state());
        const Vec2 a = env.state().landmarks[0], b = env.state().landmarks[1];
        const double fr[4] = {0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
        for (int k = 0; k < 4; ++k)
            c.require(targets[k].x == a.x + fr[k] * (b.x - a.x) &&
                          targets[k].y == a.y + fr[k] * (b.y - a.y),
                      "line target fractions");
    }
    return c;
}

// C9: permutation equivariance of the full actor, 20 trials
Check c09_permutation() {
    Check c;
    Rng rng(1009);
    for (int trial = 0; trial < 20; ++trial) {
        const int n = 3 + static_cast<int>(rng.index(3));
        CdcParams p = make_cdc_params(6, rng);
        auto obs = random_obs(n, 6, rng);
        std::vector<int> perm(n);
        for (int i = 0; i < n; ++i) perm[i] = i;
        for (int i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
        std::vector<TensorPtr> obs_p(n);
        for (int i = 0; i < n; ++i) obs_p[perm[i]] = obs[i];

        Tape tape;
        Rng ra(3), rb(3);
        auto fa = cdc_forward(tape, p, obs, TimeGrid{}, 0.05, ActionMode::EvalArgmax, 1.0, ra);
        auto fb = cdc_forward(tape, p, obs_p, TimeGrid{}, 0.05, ActionMode::EvalArgmax, 1.0, rb);
        for (int u = 0; u < n; ++u)
            c.require(fa.selection.actions[u]->v == fb.selection.actions[perm[u]]->v,
                      "actions permute");
        for (int u = 0; u < n; ++u)
            for (int v = 0; v < n; ++v) {
                c.require(fa.S->at(u, v) == fb.S->at(perm[u], perm[v]), "S conjugation exact");
                c.require(std::abs(fa.H->at(u, v) - fb.H->at(perm[u], perm[v])) < 1e-10,
                          "H conjugation 1e-10");
            }
    }
    return c;
}

// C10: delta sweep runs end to end at desk scale and emits the table
Check c10_threshold_study(const fs::path& workdir) {
    Check c;
    TrainConfig cfg;
    cfg.seed = 1;
    cfg.episodes = 24;
    cfg.n_agents = 4;
    cfg.batch = 256;
    cfg.eval_every = 0;
    cfg.eval_episodes = 3;
    const auto dir = workdir / "threshold_study";
    run_threshold_study(Task::Formation, "cdc", cfg, {0.01, 0.025, 0.05, 0.075, 0.1},
                        dir.string());
    std::ifstream is(dir / "threshold_table.csv");
    c.require(is.good(), "table missing");
    std::string line;
    std::getline(is, line);
    c.require(line == kThresholdSchema, "schema line");
    std::getline(is, line);
    int rows = 0;
    std::vector<double> deltas;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        ++rows;
        deltas.push_back(std::stod(line.substr(0, line.find(','))));
    }
    c.require(rows == 5, "expected 5 delta rows, got " + std::to_string(rows));
    if (rows == 5)
        c.require(deltas == std::vector<double>{0.01, 0.025, 0.05, 0.075, 0.1}, "delta column");
    return c;
}

// C11: learning-trend smoke on Navigation n=3 (5000 episodes, seed 1)
Check c11_learning_trend(const fs::path& workdir) {
    Check c;
    TrainConfig cfg;
    cfg.seed = 1;
    cfg.episodes = 5000;
    cfg.n_agents = 3;
    cfg.eval_every = 500;
    cfg.eval_episodes = 20;
    auto out = run_training(Task::Navigation, "cdc", cfg, (workdir / "trend").string());

    const auto& rows = out.result.rows;
    c.require(rows.size() == 5000, "row count");
    double first = 0.0, last = 0.0;
    for (int i = 0; i < 500; ++i) {
        first += rows[i].m.reward;
        last += rows[rows.size() - 500 + i].m.reward;
    }
    first /= 500.0;
    last /= 500.0;
    const double required = first + 0.2 * (0.0 - first);

    // uniform-random policy baseline over 500 episodes
    EnvConfig ec = EnvConfig::make(Task::Navigation, 3);
    ParticleEnv env(ec, 1);
    Rng rrng(1);
    double random_mean = 0.0;
    for (int e = 0; e < 500; ++e) {
        env.reset();
        double total = 0.0;
        for (int t = 0; t < ec.episode_length; ++t) {
            std::vector<std::vector<double>> acts;
            for (int a = 0; a < 3; ++a) {
                std::vector<double> one(kNumActions, 0.0);
                one[rrng.index(kNumActions)] = 1.0;
                acts.push_back(one);
            }
            total += env.step(acts).reward;
        }
        random_mean += total;
    }
    random_mean /= 500.0;

    c.detail << "first500=" << first << " last500=" << last << " required>=" << required
             << " random=" << random_mean;
    c.require(last >= required, "trend improvement short");
    c.require(last > random_mean, "did not beat the random policy");
    return c;
}

// C12: varying-N execution from a smoke-trained DynamicPack checkpoint
Check c12_varying_n(const fs::path& workdir) {
    Check c;
    TrainConfig cfg;
    cfg.seed = 1;
    cfg.episodes = 26;
    cfg.n_agents = 4;
    cfg.eval_every = 10;
    cfg.eval_episodes = 2;
    auto out = run_training(Task::DynamicPack, "cdc", cfg, (workdir / "varying_n").string());
    const std::string ckpt = out.run_dir + "/checkpoint_final.bin";
    c.require(fs::exists(ckpt), "checkpoint missing");

    for (int n = 3; n <= 8; ++n) {
        auto loaded = load_checkpoint(ckpt);
        auto algo = restore_algorithm(loaded, n);
        auto rows = evaluate_algorithm(*algo, Task::DynamicPack, n, 2, 77 + n);
        c.require(rows.size() == 2, "episode count at n=" + std::to_string(n));
        for (const auto& r : rows)
            c.require(std::isfinite(r.farthest) && r.farthest >= 0.0,
                      "farthest-agent distance at n=" + std::to_string(n));
    }
    return c;
}

// C13: aggregation pools 5 seeds x 100 episodes into 500 values per cell
Check c13_aggregation(const fs::path& workdir) {
    Check c;
    const auto root = workdir / "aggregate";
    std::vector<std::string> dirs;
    Rng rng(1013);
    for (int s = 0; s < 5; ++s) {
        const auto dir = root / ("seed_" + std::to_string(s));
        fs::create_directories(dir);
        std::vector<EpisodeMetrics> rows;
        for (int e = 0; e < 100; ++e) {
            EpisodeMetrics m;
            m.reward = rng.uniform(-10.0, 0.0);
            m.distance = rng.uniform(0.0, 5.0);
            m.time = 1 + static_cast<int>(rng.index(50));
            rows.push_back(m);
        }
        write_eval_episodes((dir / "eval_episodes.csv").string(), rows);
        dirs.push_back(dir.string());
    }
    auto res = aggregate_runs(dirs);
    c.require(res.pooled_rows == 500, "pooled rows " + std::to_string(res.pooled_rows));
    for (const auto& name : metric_names())
        c.require(res.stats.at(name).count == 500, "cell count for " + name);
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) only.push_back(std::atoi(argv[i]));
    auto selected = [&](int k) {
        if (only.empty()) return true;
        for (int o : only)
            if (o == k) return true;
        return false;
    };

    fs::path workdir = fs::temp_directory_path() /
                       ("cdc_acceptance_" + std::to_string(::getpid()));
    fs::remove_all(workdir);
    fs::create_directories(workdir);

    struct Entry {
        int id;
        const char* name;
        std::function<Check()> run;
    };
    const std::vector<Entry> entries = {
        {1, "heat-kernel-identity H(0)=I", [] { return c01_heat_identity(); }},
        {2, "two-node closed form", [] { return c02_two_node(); }},
        {3, "spectral/Pade consistency", [] { return c03_lemma_pade(); }},
        {4, "stable-heat VJP vs finite differences", [] { return c04_heat_vjp(); }},
        {5, "end-to-end actor gradient", [] { return c05_actor_gradient(); }},
        {6, "autodiff op suite + LSTM closed form", [] { return c06_autodiff(); }},
        {7, "Gumbel-Softmax marginals and one-hots", [] { return c07_gumbel(); }},
        {8, "environment oracles", [] { return c08_env(); }},
        {9, "actor permutation equivariance", [] { return c09_permutation(); }},
        {10, "threshold sweep end to end", [&] { return c10_threshold_study(workdir); }},
        {11, "learning-trend smoke (navigation, 5000 episodes)",
         [&] { return c11_learning_trend(workdir); }},
        {12, "varying agent count execution", [&] { return c12_varying_n(workdir); }},
        {13, "aggregation arithmetic (5x100=500)", [&] { return c13_aggregation(workdir); }},
    };

    int failures = 0;
    for (const auto& e : entries) {
        if (!selected(e.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Check c;
        try {
            c = e.run();
        } catch (const std::exception& ex) {
            c.ok = false;
            c.detail << "exception: " << ex.what();
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("[%s] C%02d %s (%.2f s)%s%s\n", c.ok ? "PASS" : "FAIL", e.id, e.name, secs,
                    c.detail.tellp() > 0 ? " -- " : "", c.detail.str().c_str());
        std::fflush(stdout);
        if (!c.ok) ++failures;
    }
    std::error_code ec;
    fs::remove_all(workdir, ec);
    return failures;
}
