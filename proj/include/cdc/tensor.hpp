#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdc {

// Dense 64-bit float tensor participating in reverse-mode differentiation.
// Values are stored flat in row-major order; the gradient buffer is
// materialized lazily the first time something accumulates into it.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;  // values
    std::vector<double> g;  // gradient, same length as v once materialized
    bool requires_grad = false;

    int numel() const {
        int n = 1;
        for (int d : shape) n *= d;
        return n;
    }

    void ensure_grad() {
        if (g.size() != v.size()) g.assign(v.size(), 0.0);
    }

    void zero_grad() {
        std::fill(g.begin(), g.end(), 0.0);
    }

    double& at(int i) { return v[static_cast<std::size_t>(i)]; }
    double at(int i) const { return v[static_cast<std::size_t>(i)]; }
    // 2-D accessors
    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * shape[1] + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * shape[1] + j]; }
};

using TensorPtr = std::shared_ptr<Tensor>;

inline std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ")";
    return os.str();
}

inline TensorPtr tensor(std::vector<int> shape, bool requires_grad = false) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->v.assign(static_cast<std::size_t>(t->numel()), 0.0);
    t->requires_grad = requires_grad;
    return t;
}

inline TensorPtr tensor(std::vector<int> shape, std::vector<double> values,
                        bool requires_grad = false) {
    auto t = std::make_shared<Tensor>();
    t->shape = std::move(shape);
    t->v = std::move(values);
    if (static_cast<int>(t->v.size()) != t->numel())
        throw std::invalid_argument("tensor: values length " + std::to_string(t->v.size()) +
                                    " does not match shape " + shape_str(t->shape));
    t->requires_grad = requires_grad;
    return t;
}

inline TensorPtr scalar_tensor(double x, bool requires_grad = false) {
    return tensor({1}, {x}, requires_grad);
}

enum class EwOp { Sigmoid, Tanh, Relu, Exp, Neg };

// Ordered record of executed operations. Each op pushes a closure that applies
// its local adjoint rule; replaying the closures in reverse order propagates
// gradients from the loss to every requires_grad tensor it reaches. A tape is
// single-threaded; independent training contexts own independent tapes.
class Tape {
public:
    bool recording() const { return recording_; }
    void set_recording(bool on) { recording_ = on; }

    void clear() { steps_.clear(); }
    std::size_t size() const { return steps_.size(); }

    // Custom ops (graph assembly, stable-heat, Gumbel straight-through) push
    // their adjoints through here.
    void record(std::function<void()> adjoint) {
        steps_.push_back(std::move(adjoint));
    }

    void backward(const TensorPtr& loss) {
        if (loss->numel() != 1)
            throw std::invalid_argument("backward: loss must be scalar, got " +
                                        shape_str(loss->shape));
        loss->ensure_grad();
        loss->g[0] += 1.0;
        for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
    }

    // ---- elementwise ----

    TensorPtr elementwise(EwOp op, const TensorPtr& x) {
        check_finite(x, "elementwise input");
        auto out = tensor(x->shape);
        const std::size_t n = x->v.size();
        switch (op) {
            case EwOp::Sigmoid:
                for (std::size_t i = 0; i < n; ++i) out->v[i] = 1.0 / (1.0 + std::exp(-x->v[i]));
                break;
            case EwOp::Tanh:
                for (std::size_t i = 0; i < n; ++i) out->v[i] = std::tanh(x->v[i]);
                break;
            case EwOp::Relu:
                for (std::size_t i = 0; i < n; ++i) out->v[i] = x->v[i] > 0.0 ? x->v[i] : 0.0;
                break;
            case EwOp::Exp:
                for (std::size_t i = 0; i < n; ++i) out->v[i] = std::exp(x->v[i]);
                break;
            case EwOp::Neg:
                for (std::size_t i = 0; i < n; ++i) out->v[i] = -x->v[i];
                break;
        }
        if (track(x)) {
            out->requires_grad = true;
            record([op, x, out]() {
                if (out->g.empty()) return;
                x->ensure_grad();
                const std::size_t m = x->v.size();
                switch (op) {
                    case EwOp::Sigmoid:
                        for (std::size_t i = 0; i < m; ++i)
                            x->g[i] += out->g[i] * out->v[i] * (1.0 - out->v[i]);
                        break;
                    case EwOp::Tanh:
                        for (std::size_t i = 0; i < m; ++i)
                            x->g[i] += out->g[i] * (1.0 - out->v[i] * out->v[i]);
                        break;
                    case EwOp::Relu:
                        for (std::size_t i = 0; i < m; ++i)
                            if (x->v[i] > 0.0) x->g[i] += out->g[i];
                        break;
                    case EwOp::Exp:
                        for (std::size_t i = 0; i < m; ++i) x->g[i] += out->g[i] * out->v[i];
                        break;
                    case EwOp::Neg:
                        for (std::size_t i = 0; i < m; ++i) x->g[i] -= out->g[i];
                        break;
                }
            });
        }
        return out;
    }

    TensorPtr sigmoid(const TensorPtr& x) { return elementwise(EwOp::Sigmoid, x); }
    TensorPtr tanh(const TensorPtr& x) { return elementwise(EwOp::Tanh, x); }
    TensorPtr relu(const TensorPtr& x) { return elementwise(EwOp::Relu, x); }
    TensorPtr exp(const TensorPtr& x) { return elementwise(EwOp::Exp, x); }
    TensorPtr neg(const TensorPtr& x) { return elementwise(EwOp::Neg, x); }

    // ---- same-shape binary ----

    TensorPtr add(const TensorPtr& a, const TensorPtr& b) {
        check_same_shape(a, b, "add");
        auto out = tensor(a->shape);
        for (std::size_t i = 0; i < a->v.size(); ++i) out->v[i] = a->v[i] + b->v[i];
        if (track(a) || track(b)) {
            out->requires_grad = true;
            record([a, b, out]() {
                if (out->g.empty()) return;
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < a->v.size(); ++i) a->g[i] += out->g[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::size_t i = 0; i < b->v.size(); ++i) b->g[i] += out->g[i];
                }
            });
        }
        return out;
    }

    TensorPtr sub(const TensorPtr& a, const TensorPtr& b) {
        check_same_shape(a, b, "sub");
        auto out = tensor(a->shape);
        for (std::size_t i = 0; i < a->v.size(); ++i) out->v[i] = a->v[i] - b->v[i];
        if (track(a) || track(b)) {
            out->requires_grad = true;
            record([a, b, out]() {
                if (out->g.empty()) return;
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < a->v.size(); ++i) a->g[i] += out->g[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::size_t i = 0; i < b->v.size(); ++i) b->g[i] -= out->g[i];
                }
            });
        }
        return out;
    }

    TensorPtr mul(const TensorPtr& a, const TensorPtr& b) {
        check_same_shape(a, b, "mul");
        auto out = tensor(a->shape);
        for (std::size_t i = 0; i < a->v.size(); ++i) out->v[i] = a->v[i] * b->v[i];
        if (track(a) || track(b)) {
            out->requires_grad = true;
            record([a, b, out]() {
                if (out->g.empty()) return;
                if (a->requires_grad) {
                    a->ensure_grad();
                    for (std::size_t i = 0; i < a->v.size(); ++i) a->g[i] += out->g[i] * b->v[i];
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    for (std::size_t i = 0; i < b->v.size(); ++i) b->g[i] += out->g[i] * a->v[i];
                }
            });
        }
        return out;
    }

    TensorPtr scale(const TensorPtr& a, double k) {
        auto out = tensor(a->shape);
        for (std::size_t i = 0; i < a->v.size(); ++i) out->v[i] = a->v[i] * k;
        if (track(a)) {
            out->requires_grad = true;
            record([a, out, k]() {
                if (out->g.empty()) return;
                a->ensure_grad();
                for (std::size_t i = 0; i < a->v.size(); ++i) a->g[i] += out->g[i] * k;
            });
        }
        return out;
    }

    // ---- matmul ----
    // Accepts 2-D x 2-D, 2-D x 1-D (matvec), 1-D x 2-D, and 1-D x 1-D (dot).

    TensorPtr matmul(const TensorPtr& a, const TensorPtr& b) {
        const bool a_vec = a->shape.size() == 1;
        const bool b_vec = b->shape.size() == 1;
        if (a->shape.size() > 2 || b->shape.size() > 2 || a->shape.empty() || b->shape.empty())
            throw std::invalid_argument("matmul: ranks must be 1 or 2, got " +
                                        shape_str(a->shape) + " x " + shape_str(b->shape));
        const int m = a_vec ? 1 : a->shape[0];
        const int ka = a_vec ? a->shape[0] : a->shape[1];
        const int kb = b_vec ? b->shape[0] : b->shape[0];
        const int n = b_vec ? 1 : b->shape[1];
        if (ka != kb)
            throw std::invalid_argument("matmul: inner dimensions disagree, " +
                                        shape_str(a->shape) + " x " + shape_str(b->shape));
        std::vector<int> out_shape;
        if (!a_vec && !b_vec) out_shape = {m, n};
        else if (!a_vec) out_shape = {m};
        else if (!b_vec) out_shape = {n};
        else out_shape = {1};

        auto out = tensor(out_shape);
        gemm_nn(a->v.data(), b->v.data(), out->v.data(), m, ka, n);
        if (track(a) || track(b)) {
            out->requires_grad = true;
            record([a, b, out, m, ka, n]() {
                if (out->g.empty()) return;
                if (a->requires_grad) {
                    a->ensure_grad();
                    gemm_nt(out->g.data(), b->v.data(), a->g.data(), m, n, ka);
                }
                if (b->requires_grad) {
                    b->ensure_grad();
                    gemm_tn(a->v.data(), out->g.data(), b->g.data(), ka, m, n);
                }
            });
        }
        return out;
    }

    // ---- reductions & reshaping ----

    TensorPtr sum(const TensorPtr& x) {
        auto out = tensor({1});
        out->v[0] = std::accumulate(x->v.begin(), x->v.end(), 0.0);
        if (track(x)) {
            out->requires_grad = true;
            record([x, out]() {
                if (out->g.empty()) return;
                x->ensure_grad();
                for (std::size_t i = 0; i < x->v.size(); ++i) x->g[i] += out->g[0];
            });
        }
        return out;
    }

    TensorPtr mean(const TensorPtr& x) {
        return scale(sum(x), 1.0 / static_cast<double>(x->numel()));
    }

    TensorPtr concat(const std::vector<TensorPtr>& parts) {
        int total = 0;
        bool any_grad = false;
        for (const auto& p : parts) {
            if (p->shape.size() != 1)
                throw std::invalid_argument("concat: expects 1-D parts, got " +
                                            shape_str(p->shape));
            total += p->shape[0];
            any_grad = any_grad || track(p);
        }
        auto out = tensor({total});
        int off = 0;
        for (const auto& p : parts) {
            std::copy(p->v.begin(), p->v.end(), out->v.begin() + off);
            off += p->shape[0];
        }
        if (any_grad) {
            out->requires_grad = true;
            record([parts, out]() {
                if (out->g.empty()) return;
                int o = 0;
                for (const auto& p : parts) {
                    if (p->requires_grad) {
                        p->ensure_grad();
                        for (int i = 0; i < p->shape[0]; ++i) p->g[i] += out->g[o + i];
                    }
                    o += p->shape[0];
                }
            });
        }
        return out;
    }

    // numerically stable softmax over a 1-D tensor
    TensorPtr softmax(const TensorPtr& x) {
        if (x->shape.size() != 1)
            throw std::invalid_argument("softmax: expects 1-D input, got " +
                                        shape_str(x->shape));
        auto out = tensor(x->shape);
        const std::size_t n = x->v.size();
        double mx = *std::max_element(x->v.begin(), x->v.end());
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i) z += (out->v[i] = std::exp(x->v[i] - mx));
        for (std::size_t i = 0; i < n; ++i) out->v[i] /= z;
        if (track(x)) {
            out->requires_grad = true;
            record([x, out]() {
                if (out->g.empty()) return;
                x->ensure_grad();
                double dot = 0.0;
                for (std::size_t i = 0; i < x->v.size(); ++i) dot += out->g[i] * out->v[i];
                for (std::size_t i = 0; i < x->v.size(); ++i)
                    x->g[i] += out->v[i] * (out->g[i] - dot);
            });
        }
        return out;
    }

    bool track(const TensorPtr& t) const { return recording_ && t->requires_grad; }

    static void check_finite(const TensorPtr& x, const char* what) {
        for (std::size_t i = 0; i < x->v.size(); ++i)
            if (!std::isfinite(x->v[i]))
                throw std::runtime_error(std::string(what) + ": non-finite value at index " +
                                         std::to_string(i));
    }

private:
    static void check_same_shape(const TensorPtr& a, const TensorPtr& b, const char* op) {
        if (a->shape != b->shape)
            throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                        shape_str(a->shape) + " vs " + shape_str(b->shape));
    }

    // C[m x n] += A[m x k] * B[k x n]
    static void gemm_nn(const double* A, const double* B, double* C, int m, int k, int n) {
        for (int i = 0; i < m; ++i) {
            const double* a_row = A + static_cast<std::size_t>(i) * k;
            double* c_row = C + static_cast<std::size_t>(i) * n;
            for (int p = 0; p < k; ++p) {
                const double a = a_row[p];
                if (a == 0.0) continue;
                const double* b_row = B + static_cast<std::size_t>(p) * n;
                for (int j = 0; j < n; ++j) c_row[j] += a * b_row[j];
            }
        }
    }

    // C[m x k] += A[m x n] * B[k x n]^T
    static void gemm_nt(const double* A, const double* B, double* C, int m, int n, int k) {
        for (int i = 0; i < m; ++i) {
            const double* a_row = A + static_cast<std::size_t>(i) * n;
            double* c_row = C + static_cast<std::size_t>(i) * k;
            for (int p = 0; p < k; ++p) {
                const double* b_row = B + static_cast<std::size_t>(p) * n;
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += a_row[j] * b_row[j];
                c_row[p] += acc;
            }
        }
    }

    // C[k x n] += A[m x k]^T * B[m x n]
    static void gemm_tn(const double* A, const double* B, double* C, int k, int m, int n) {
        for (int i = 0; i < m; ++i) {
            const double* a_row = A + static_cast<std::size_t>(i) * k;
            const double* b_row = B + static_cast<std::size_t>(i) * n;
            for (int p = 0; p < k; ++p) {
                const double a = a_row[p];
                if (a == 0.0) continue;
                double* c_row = C + static_cast<std::size_t>(p) * n;
                for (int j = 0; j < n; ++j) c_row[j] += a * b_row[j];
            }
        }
    }

    std::vector<std::function<void()>> steps_;
    bool recording_ = true;
};

// RAII guard disabling tape recording (target networks, evaluation rollouts).
class NoGradScope {
public:
    explicit NoGradScope(Tape& t) : tape_(t), prev_(t.recording()) { tape_.set_recording(false); }
    ~NoGradScope() { tape_.set_recording(prev_); }
    NoGradScope(const NoGradScope&) = delete;
    NoGradScope& operator=(const NoGradScope&) = delete;

private:
    Tape& tape_;
    bool prev_;
};

}  // namespace cdc
