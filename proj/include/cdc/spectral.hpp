#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace cdc {

// Dense square matrix, row-major. Everything in this module is desk-scale
// (n <= 64), so no sparsity or blocking.
struct Mat {
    int n = 0;
    std::vector<double> a;

    Mat() = default;
    explicit Mat(int n_) : n(n_), a(static_cast<std::size_t>(n_) * n_, 0.0) {}

    double& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * n + j]; }
    double operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * n + j]; }

    static Mat identity(int n) {
        Mat m(n);
        for (int i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }
};

inline Mat mat_mul(const Mat& A, const Mat& B) {
    Mat C(A.n);
    for (int i = 0; i < A.n; ++i)
        for (int k = 0; k < A.n; ++k) {
            double a = A(i, k);
            if (a == 0.0) continue;
            for (int j = 0; j < A.n; ++j) C(i, j) += a * B(k, j);
        }
    return C;
}

inline Mat mat_transpose(const Mat& A) {
    Mat T(A.n);
    for (int i = 0; i < A.n; ++i)
        for (int j = 0; j < A.n; ++j) T(j, i) = A(i, j);
    return T;
}

inline double mat_inf_norm(const Mat& A) {
    double best = 0.0;
    for (int i = 0; i < A.n; ++i) {
        double row = 0.0;
        for (int j = 0; j < A.n; ++j) row += std::abs(A(i, j));
        best = std::max(best, row);
    }
    return best;
}

inline double frobenius_distance(const Mat& A, const Mat& B) {
    double s = 0.0;
    for (std::size_t i = 0; i < A.a.size(); ++i) {
        double d = A.a[i] - B.a[i];
        s += d * d;
    }
    return std::sqrt(s);
}

// Symmetric connectivity-strength matrix with zero diagonal; off-diagonal
// entries are sigmoid outputs, so they live in the open interval (0,1).
struct WeightedGraph {
    int n = 0;
    Mat S;

    WeightedGraph() = default;
    WeightedGraph(int n_, Mat s) : n(n_), S(std::move(s)) { validate(); }

    void validate() const {
        if (S.n != n) throw std::invalid_argument("WeightedGraph: matrix size != n");
        for (int u = 0; u < n; ++u) {
            if (S(u, u) != 0.0)
                throw std::invalid_argument("WeightedGraph: nonzero diagonal at " +
                                            std::to_string(u));
            for (int v = u + 1; v < n; ++v) {
                if (S(u, v) != S(v, u))
                    throw std::invalid_argument("WeightedGraph: asymmetric at (" +
                                                std::to_string(u) + "," + std::to_string(v) + ")");
                if (!(S(u, v) > 0.0 && S(u, v) < 1.0))
                    throw std::invalid_argument("WeightedGraph: strength out of (0,1) at (" +
                                                std::to_string(u) + "," + std::to_string(v) + ")");
            }
        }
    }
};

struct EigenSystem {
    std::vector<double> eigenvalues;  // ascending
    Mat eigenvectors;                 // orthonormal columns
};

struct TimeGrid {
    double dp = 0.1;
    int P = 300;

    double point(int k) const { return dp * static_cast<double>(k); }  // k in [1, P]
};

// Heat-kernel values at per-pair stable diffusion times. Pairs with no stable
// time keep H = 0 and found = false, which encodes "no communication".
struct StableHeatMatrix {
    int n = 0;
    Mat H;
    Mat p_hat;
    std::vector<std::uint8_t> found;  // n*n, symmetric
    std::vector<int> k_index;         // grid index of p_hat, -1 where not found
    TimeGrid grid;

    bool is_found(int u, int v) const { return found[static_cast<std::size_t>(u) * n + v] != 0; }
};

constexpr double kDegreeFloor = 1e-8;

// D^{-1/2} (D - S) D^{-1/2}. Degrees below the floor are clamped and counted;
// sigmoid-positive strengths make that unreachable in normal operation.
inline Mat normalized_laplacian(const WeightedGraph& g, int* clamped_degrees = nullptr) {
    const int n = g.n;
    std::vector<double> deg(n, 0.0);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v) deg[u] += g.S(u, v);
    int clamps = 0;
    std::vector<double> rinv(n);
    for (int u = 0; u < n; ++u) {
        double d = deg[u];
        if (d < kDegreeFloor) {
            d = kDegreeFloor;
            ++clamps;
        }
        rinv[u] = 1.0 / std::sqrt(d);
    }
    if (clamped_degrees) *clamped_degrees += clamps;
    Mat L(n);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            L(u, v) = (u == v ? 1.0 : 0.0) - g.S(u, v) * rinv[u] * rinv[v];
    // Isolated-vertex convention: a single node has zero degree and a zero
    // Laplacian, so its heat value stays 1 at every diffusion time.
    if (n == 1) L(0, 0) = 0.0;
    return L;
}

// Cyclic Jacobi rotations; converged when the largest off-diagonal magnitude
// drops below 1e-12. Eigenvalues returned ascending with matching columns.
inline EigenSystem sym_eigendecompose(const Mat& m_in) {
    const int n = m_in.n;
    Mat A(n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = 0.5 * (m_in(i, j) + m_in(j, i));
    Mat V = Mat::identity(n);

    const double tol = 1e-12;
    bool converged = (n <= 1);
    for (int sweep = 0; sweep < 100 && !converged; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off = std::max(off, std::abs(A(p, q)));
        if (off < tol) {
            converged = true;
            break;
        }
        for (int p = 0; p < n - 1; ++p) {
            for (int q = p + 1; q < n; ++q) {
                const double apq = A(p, q);
                if (std::abs(apq) < tol * 1e-3) continue;
                const double theta = (A(q, q) - A(p, p)) / (2.0 * apq);
                const double t = (theta >= 0.0)
                                     ? 1.0 / (theta + std::sqrt(theta * theta + 1.0))
                                     : -1.0 / (-theta + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                // A <- J^T A J, V <- V J with J the (p,q) rotation
                for (int i = 0; i < n; ++i) {
                    const double aip = A(i, p), aiq = A(i, q);
                    A(i, p) = c * aip - s * aiq;
                    A(i, q) = s * aip + c * aiq;
                }
                for (int j = 0; j < n; ++j) {
                    const double apj = A(p, j), aqj = A(q, j);
                    A(p, j) = c * apj - s * aqj;
                    A(q, j) = s * apj + c * aqj;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = V(i, p), viq = V(i, q);
                    V(i, p) = c * vip - s * viq;
                    V(i, q) = s * vip + c * viq;
                }
            }
        }
    }
    if (!converged) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off = std::max(off, std::abs(A(p, q)));
        if (off >= tol)
            throw std::runtime_error("sym_eigendecompose: no convergence in 100 sweeps, off=" +
                                     std::to_string(off));
    }

    std::vector<int> order(n);
    for (int i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int i, int j) { return A(i, i) < A(j, j); });

    EigenSystem es;
    es.eigenvalues.resize(n);
    es.eigenvectors = Mat(n);
    for (int k = 0; k < n; ++k) {
        es.eigenvalues[k] = A(order[k], order[k]);
        for (int i = 0; i < n; ++i) es.eigenvectors(i, k) = V(i, order[k]);
    }
    return es;
}

// H(p)_{u,v} = sum_i exp(-lambda_i p) phi_i(u) phi_i(v)
inline Mat heat_kernel_at(const EigenSystem& es, double p) {
    if (p < 0.0)
        throw std::invalid_argument("heat_kernel_at: negative diffusion time " +
                                    std::to_string(p));
    const int n = static_cast<int>(es.eigenvalues.size());
    Mat H(n);
    std::vector<double> e(n);
    for (int i = 0; i < n; ++i) e[i] = std::exp(-es.eigenvalues[i] * p);
    for (int u = 0; u < n; ++u)
        for (int v = u; v < n; ++v) {
            double s = 0.0;
            for (int i = 0; i < n; ++i) s += e[i] * es.eigenvectors(u, i) * es.eigenvectors(v, i);
            H(u, v) = s;
            H(v, u) = s;
        }
    return H;
}

namespace detail {

// Solve A X = B by Gaussian elimination with partial pivoting.
inline Mat solve_linear(Mat A, Mat B) {
    const int n = A.n;
    for (int col = 0; col < n; ++col) {
        int piv = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(A(r, col)) > std::abs(A(piv, col))) piv = r;
        if (std::abs(A(piv, col)) < 1e-300)
            throw std::runtime_error("solve_linear: singular matrix");
        if (piv != col)
            for (int j = 0; j < n; ++j) {
                std::swap(A(col, j), A(piv, j));
                std::swap(B(col, j), B(piv, j));
            }
        const double inv = 1.0 / A(col, col);
        for (int r = 0; r < n; ++r) {
            if (r == col) continue;
            const double f = A(r, col) * inv;
            if (f == 0.0) continue;
            for (int j = col; j < n; ++j) A(r, j) -= f * A(col, j);
            for (int j = 0; j < n; ++j) B(r, j) -= f * B(col, j);
        }
    }
    Mat X(n);
    for (int i = 0; i < n; ++i) {
        const double inv = 1.0 / A(i, i);
        for (int j = 0; j < n; ++j) X(i, j) = B(i, j) * inv;
    }
    return X;
}

// Matrix exponential by scaling-and-squaring with a diagonal [6/6] Pade
// approximant; the argument is scaled until its norm is at most 1/2.
inline Mat expm(const Mat& M) {
    static const double kPade[7] = {1.0,      1.0 / 2.0,     5.0 / 44.0,   1.0 / 66.0,
                                    1.0 / 792.0, 1.0 / 15840.0, 1.0 / 665280.0};
    const int n = M.n;
    double norm = mat_inf_norm(M);
    int s = 0;
    while (norm > 0.5) {
        norm *= 0.5;
        ++s;
    }
    Mat B = M;
    const double scale = std::ldexp(1.0, -s);
    for (double& x : B.a) x *= scale;

    Mat N = Mat::identity(n);
    Mat D = Mat::identity(n);
    Mat Bk = Mat::identity(n);
    double sign = 1.0;
    for (int k = 1; k <= 6; ++k) {
        Bk = mat_mul(Bk, B);
        sign = -sign;
        for (std::size_t i = 0; i < Bk.a.size(); ++i) {
            N.a[i] += kPade[k] * Bk.a[i];
            D.a[i] += sign * kPade[k] * Bk.a[i];
        }
    }
    Mat X = solve_linear(D, N);
    for (int k = 0; k < s; ++k) X = mat_mul(X, X);
    return X;
}

}  // namespace detail

// H(p) = expm(-p * Lhat), the route the paper uses in practice; the spectral
// sum above is the cross-check (Lemma-style identity).
inline Mat heat_kernel_pade(const Mat& lap, double p) {
    if (p < 0.0)
        throw std::invalid_argument("heat_kernel_pade: negative diffusion time " +
                                    std::to_string(p));
    Mat A = lap;
    for (double& x : A.a) x *= -p;
    return detail::expm(A);
}

constexpr double kHeatZeroDenominator = 1e-12;

// Scan the uniform grid for the first time each pair's relative change drops
// below delta. Pairs whose running value is numerically zero at a candidate
// point skip that candidate (the relative test divides by it); pairs that
// never qualify stay found=false with H = 0.
inline StableHeatMatrix detect_stable_times(const EigenSystem& es, const TimeGrid& grid,
                                            double delta) {
    if (!(grid.dp > 0.0) || grid.P < 1)
        throw std::invalid_argument("detect_stable_times: invalid grid");
    if (!(delta > 0.0 && delta <= 1.0))
        throw std::invalid_argument("detect_stable_times: delta must be in (0,1], got " +
                                    std::to_string(delta));
    const int n = static_cast<int>(es.eigenvalues.size());
    StableHeatMatrix shm;
    shm.n = n;
    shm.H = Mat(n);
    shm.p_hat = Mat(n);
    shm.found.assign(static_cast<std::size_t>(n) * n, 0);
    shm.k_index.assign(static_cast<std::size_t>(n) * n, -1);
    shm.grid = grid;

    std::vector<double> e(n), decay(n);
    for (int i = 0; i < n; ++i) {
        e[i] = std::exp(-es.eigenvalues[i] * grid.point(1));
        decay[i] = std::exp(-es.eigenvalues[i] * grid.dp);
    }
    auto eval = [&](Mat& H) {
        for (int u = 0; u < n; ++u)
            for (int v = u; v < n; ++v) {
                double s = 0.0;
                for (int i = 0; i < n; ++i)
                    s += e[i] * es.eigenvectors(u, i) * es.eigenvectors(v, i);
                H(u, v) = s;
                H(v, u) = s;
            }
    };

    Mat Hk(n), Hk1(n);
    eval(Hk);
    int unresolved = n * (n + 1) / 2;
    for (int k = 1; k <= grid.P - 1 && unresolved > 0; ++k) {
        for (int i = 0; i < n; ++i) e[i] *= decay[i];
        eval(Hk1);
        for (int u = 0; u < n; ++u)
            for (int v = u; v < n; ++v) {
                if (shm.is_found(u, v)) continue;
                const double h = Hk(u, v);
                if (std::abs(h) < kHeatZeroDenominator) continue;
                if (std::abs((Hk1(u, v) - h) / h) < delta) {
                    shm.H(u, v) = shm.H(v, u) = h;
                    shm.p_hat(u, v) = shm.p_hat(v, u) = grid.point(k);
                    shm.found[static_cast<std::size_t>(u) * n + v] = 1;
                    shm.found[static_cast<std::size_t>(v) * n + u] = 1;
                    shm.k_index[static_cast<std::size_t>(u) * n + v] = k;
                    shm.k_index[static_cast<std::size_t>(v) * n + u] = k;
                    --unresolved;
                }
            }
        std::swap(Hk, Hk1);
    }
    return shm;
}

// Re-evaluate heat values at a frozen stable-time selection (used by the
// gradient path and its finite-difference oracle, where the discrete time
// selection must not move).
inline Mat heat_at_frozen(const EigenSystem& es, const StableHeatMatrix& sel) {
    const int n = static_cast<int>(es.eigenvalues.size());
    if (sel.n != n) throw std::invalid_argument("heat_at_frozen: dimension mismatch");
    Mat H(n);
    for (int u = 0; u < n; ++u)
        for (int v = u; v < n; ++v) {
            if (!sel.is_found(u, v)) continue;
            const double p = sel.p_hat(u, v);
            double s = 0.0;
            for (int i = 0; i < n; ++i)
                s += std::exp(-es.eigenvalues[i] * p) * es.eigenvectors(u, i) *
                     es.eigenvectors(v, i);
            H(u, v) = s;
            H(v, u) = s;
        }
    return H;
}

namespace detail {

// d(sum U . H)/dS with independent matrix entries (no pair symmetrization).
// Pairs sharing a stable time are grouped and pushed through the
// Daleckii-Krein divided-difference kernel, then chained through
// Lhat = D^{-1/2}(D - S)D^{-1/2} including the degree dependence on S.
inline Mat heat_vjp_raw(const WeightedGraph& g, const StableHeatMatrix& shm, const Mat& upstream,
                        const EigenSystem& es) {
    const int n = g.n;
    if (shm.n != n || upstream.n != n)
        throw std::invalid_argument("stable_heat_vjp: dimension mismatch, graph n=" +
                                    std::to_string(n) + " shm n=" + std::to_string(shm.n) +
                                    " upstream n=" + std::to_string(upstream.n));

    // group found pairs by grid index
    std::map<int, std::vector<std::pair<int, int>>> groups;
    for (int u = 0; u < n; ++u)
        for (int v = u; v < n; ++v)
            if (shm.is_found(u, v)) groups[shm.k_index[static_cast<std::size_t>(u) * n + v]].push_back({u, v});

    const Mat& Phi = es.eigenvectors;
    const Mat PhiT = mat_transpose(Phi);

    Mat G(n);  // dLoss/dLhat
    for (const auto& [k, pairs] : groups) {
        const double tau = shm.grid.point(k);
        // mask the (symmetrized) upstream to this group's pairs
        Mat U(n);
        for (const auto& [u, v] : pairs) {
            if (u == v) {
                U(u, u) = upstream(u, u);
            } else {
                const double w = 0.5 * (upstream(u, v) + upstream(v, u));
                U(u, v) = w;
                U(v, u) = w;
            }
        }
        Mat M = mat_mul(PhiT, mat_mul(U, Phi));
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                const double li = es.eigenvalues[i], lj = es.eigenvalues[j];
                double gamma;
                if (std::abs(li - lj) > 1e-9) {
                    gamma = (std::exp(-li * tau) - std::exp(-lj * tau)) / (li - lj);
                } else {
                    gamma = -tau * std::exp(-0.5 * (li + lj) * tau);
                }
                M(i, j) *= gamma;
            }
        Mat Gk = mat_mul(Phi, mat_mul(M, PhiT));
        for (std::size_t i = 0; i < G.a.size(); ++i) G.a[i] += Gk.a[i];
    }

    // chain through the normalized Laplacian
    std::vector<double> deg(n, 0.0);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v) deg[u] += g.S(u, v);
    std::vector<double> rinv(n), q(n, 0.0);
    std::vector<bool> clamped(n, false);
    for (int u = 0; u < n; ++u) {
        double d = deg[u];
        if (d < kDegreeFloor) {
            d = kDegreeFloor;
            clamped[u] = true;
        }
        deg[u] = d;
        rinv[u] = 1.0 / std::sqrt(d);
    }
    // q_a = dLoss/d(degree_a); zero where clamping froze the degree
    for (int a = 0; a < n; ++a) {
        if (clamped[a]) continue;
        double s = 0.0;
        for (int c = 0; c < n; ++c) s += G(a, c) * g.S(a, c) * rinv[c];
        q[a] = s / (deg[a] * std::sqrt(deg[a]));
    }
    Mat dS(n);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v) dS(u, v) = -G(u, v) * rinv[u] * rinv[v] + q[u];
    return dS;
}

}  // namespace detail

// Gradient of sum(upstream . H) with respect to the shared per-pair
// strengths: entry (u,v) is the derivative under a symmetric perturbation of
// s_{u,v}. The diagonal is structurally zero.
inline Mat stable_heat_vjp(const WeightedGraph& g, const StableHeatMatrix& shm,
                           const Mat& upstream) {
    const EigenSystem es = sym_eigendecompose(normalized_laplacian(g));
    Mat raw = detail::heat_vjp_raw(g, shm, upstream, es);
    Mat out(g.n);
    for (int u = 0; u < g.n; ++u)
        for (int v = 0; v < g.n; ++v) out(u, v) = (u == v) ? 0.0 : raw(u, v) + raw(v, u);
    return out;
}

struct CentralityResult {
    std::vector<double> centrality;  // nonnegative, sums to 1
    bool degenerate = false;         // zero matrix fallback
};

// Dominant eigenvector by power iteration, normalized to unit sum. The
// iteration runs on M + sigma*I (same eigenvectors); the shift keeps the
// leading eigenvalue strictly dominant on bipartite-like structures where
// -rho is also in the spectrum.
inline CentralityResult eigenvector_centrality(const Mat& m) {
    const int n = m.n;
    for (double x : m.a)
        if (x < -1e-12)
            throw std::invalid_argument("eigenvector_centrality: negative entry");
    CentralityResult res;
    const double sigma = mat_inf_norm(m);
    if (sigma < 1e-300) {
        res.centrality.assign(n, 1.0 / static_cast<double>(n));
        res.degenerate = true;
        return res;
    }
    std::vector<double> x(n, 1.0 / static_cast<double>(n)), y(n);
    const int max_iters = 1000000;
    for (int it = 0; it < max_iters; ++it) {
        double norm2 = 0.0;
        for (int i = 0; i < n; ++i) {
            double s = sigma * x[i];
            for (int j = 0; j < n; ++j) s += m(i, j) * x[j];
            y[i] = s;
            norm2 += s * s;
        }
        norm2 = std::sqrt(norm2);
        if (norm2 < 1e-300) {
            res.centrality.assign(n, 1.0 / static_cast<double>(n));
            res.degenerate = true;
            return res;
        }
        double diff = 0.0;
        for (int i = 0; i < n; ++i) {
            y[i] /= norm2;
            diff = std::max(diff, std::abs(y[i] - x[i]));
        }
        x = y;
        if (diff < 1e-12) break;
        if (it == max_iters - 1)
            throw std::runtime_error("eigenvector_centrality: power iteration did not converge");
    }
    double sum = 0.0;
    for (double& xi : x) {
        xi = std::abs(xi);
        sum += xi;
    }
    if (sum < 1e-300) {
        res.centrality.assign(n, 1.0 / static_cast<double>(n));
        res.degenerate = true;
        return res;
    }
    for (double& xi : x) xi /= sum;
    res.centrality = std::move(x);
    return res;
}

// Elementwise mean of the stable-heat matrices of one episode.
inline Mat average_heat_over_episode(const std::vector<StableHeatMatrix>& per_step) {
    if (per_step.empty())
        throw std::invalid_argument("average_heat_over_episode: empty episode");
    const int n = per_step.front().n;
    Mat avg(n);
    for (const auto& shm : per_step) {
        if (shm.n != n)
            throw std::invalid_argument("average_heat_over_episode: inconsistent sizes");
        for (std::size_t i = 0; i < avg.a.size(); ++i) avg.a[i] += shm.H.a[i];
    }
    const double inv = 1.0 / static_cast<double>(per_step.size());
    for (double& x : avg.a) x *= inv;
    return avg;
}

}  // namespace cdc
