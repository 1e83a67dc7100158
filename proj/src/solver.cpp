#include "hdtreat/solver.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

namespace hdtreat {

Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double radius) {
    if (radius < 0) throw invalid_input("project_l1_ball: radius must be >= 0");
    if (v.lpNorm<1>() <= radius) return v;
    if (radius == 0) return Eigen::VectorXd::Zero(v.size());

    std::vector<double> u(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) u[i] = std::abs(v[i]);
    std::sort(u.begin(), u.end(), std::greater<>());
    double cumsum = 0.0, theta = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        cumsum += u[j];
        const double t = (cumsum - radius) / static_cast<double>(j + 1);
        if (j + 1 == u.size() || u[j + 1] <= t) {
            theta = t;
            break;
        }
    }
    Eigen::VectorXd out(v.size());
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        const double mag = std::abs(v[i]) - theta;
        out[i] = mag > 0 ? (v[i] > 0 ? mag : -mag) : 0.0;
    }
    return out;
}

double gram_lipschitz(const RiskQuadratic& risk) {
    if (risk.is_diagonal()) {
        const double lmax = risk.k > 0 ? risk.diag.maxCoeff() : 0.0;
        return 2.0 * lmax;
    }
    // Power iteration, deterministic start, 50 iterations or 1e-6 relative
    // stagnation.
    Eigen::VectorXd v = Eigen::VectorXd::Constant(risk.k, 1.0 / std::sqrt(double(risk.k)));
    double lambda = 0.0;
    for (int it = 0; it < 50; ++it) {
        Eigen::VectorXd w = risk.gram_times(v);
        const double norm = w.norm();
        if (norm <= 1e-300) return 0.0;
        const double next = v.dot(w);
        v = w / norm;
        if (it > 0 && std::abs(next - lambda) <= 1e-6 * std::max(1.0, std::abs(next))) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return 2.0 * 1.01 * std::max(lambda, 0.0);
}

namespace {

double kkt_residual_at(const RiskQuadratic& risk, const Eigen::VectorXd& beta, double s,
                       double lipschitz) {
    if (lipschitz <= 0) return 0.0;
    const Eigen::VectorXd grad = 2.0 * (risk.gram_times(beta) - risk.b);
    const Eigen::VectorXd proj = project_l1_ball(beta - grad / lipschitz, s);
    return (beta - proj).lpNorm<Eigen::Infinity>();
}

Solution finish(const RiskQuadratic& risk, Eigen::VectorXd beta, int iters, double kkt,
                bool exact, bool heuristic = false) {
    Solution sol;
    sol.objective = evaluate(risk, beta);
    sol.beta = std::move(beta);
    sol.iterations = iters;
    sol.kkt_residual = kkt;
    sol.exact = exact;
    sol.heuristic = heuristic;
    return sol;
}

// Exact minimizer of sum_a G_a beta_a^2 - 2 b_a beta_a over the L1 ball for
// strictly positive diagonals: beta_a(t) = sign(b_a) (|b_a| - t)_+ / G_a with
// the threshold t solved from the piecewise-linear budget equation.
Eigen::VectorXd diagonal_l1_exact(const Eigen::VectorXd& diag, const Eigen::VectorXd& b,
                                  double s) {
    const Eigen::Index k = diag.size();
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
    double l1 = 0.0;
    for (Eigen::Index a = 0; a < k; ++a) {
        if (diag[a] > 0) {
            beta[a] = b[a] / diag[a];
            l1 += std::abs(beta[a]);
        }
    }
    if (l1 <= s) return beta;

    std::vector<Eigen::Index> order;
    order.reserve(k);
    for (Eigen::Index a = 0; a < k; ++a)
        if (diag[a] > 0 && b[a] != 0.0) order.push_back(a);
    std::sort(order.begin(), order.end(), [&](Eigen::Index i, Eigen::Index j) {
        return std::abs(b[i]) > std::abs(b[j]);
    });

    double sum_b = 0.0, sum_g = 0.0, t = 0.0;
    for (std::size_t pos = 0; pos < order.size(); ++pos) {
        const Eigen::Index a = order[pos];
        sum_b += std::abs(b[a]) / diag[a];
        sum_g += 1.0 / diag[a];
        const double hi = std::abs(b[a]);
        const double lo = pos + 1 < order.size() ? std::abs(b[order[pos + 1]]) : 0.0;
        t = (sum_b - s) / sum_g;
        if (t >= lo && t <= hi) break;
    }
    t = std::max(t, 0.0);
    beta.setZero();
    for (Eigen::Index a : order) {
        const double mag = std::abs(b[a]) - t;
        if (mag > 0) beta[a] = (b[a] > 0 ? mag : -mag) / diag[a];
    }
    return beta;
}

}  // namespace

Solution solve_lasso_constrained(const RiskQuadratic& risk, double s, const EstimatorConfig& cfg,
                                 std::vector<double>* trace) {
    if (s < 0) throw invalid_input("solve_lasso_constrained: s must be >= 0");
    cfg.validate();
    const int k = risk.k;
    if (s == 0.0) return finish(risk, Eigen::VectorXd::Zero(k), 0, 0.0, true);

    if (risk.is_diagonal()) {
        bool clean = true;  // zero-Gram coordinates must carry no linear pull
        for (int a = 0; a < k && clean; ++a)
            if (risk.diag[a] == 0.0 && risk.b[a] != 0.0) clean = false;
        if (clean) {
            Eigen::VectorXd beta = diagonal_l1_exact(risk.diag, risk.b, s);
            const double kkt = kkt_residual_at(risk, beta, s, gram_lipschitz(risk));
            return finish(risk, std::move(beta), 0, kkt, true);
        }
    }

    const double L = gram_lipschitz(risk);
    if (L <= 0) {
        // Pure linear objective: all mass on the strongest coordinate.
        Eigen::Index best = 0;
        const double bmax = risk.b.cwiseAbs().maxCoeff(&best);
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
        if (bmax > 0) beta[best] = risk.b[best] > 0 ? s : -s;
        return finish(risk, std::move(beta), 0, 0.0, true);
    }

    const int max_iters = cfg.resolved_max_iters(k);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd gx = Eigen::VectorXd::Zero(k);
    double f = risk.constant;
    int iters = 0;
    for (; iters < max_iters; ++iters) {
        const Eigen::VectorXd grad = 2.0 * (gx - risk.b);
        x = project_l1_ball(x - grad / L, s);
        gx = risk.gram_times(x);
        const double fn = x.dot(gx) - 2.0 * risk.b.dot(x) + risk.constant;
        if (trace) trace->push_back(fn);
        const bool converged = std::abs(f - fn) <= cfg.solver_tol * std::max(1.0, std::abs(fn));
        f = fn;
        if (converged) {
            ++iters;
            break;
        }
    }
    return finish(risk, x, iters, kkt_residual_at(risk, x, s, L), false);
}

namespace {

double choose_count(int k, int s) {
    double c = 1.0;
    for (int j = 1; j <= s; ++j) {
        c *= static_cast<double>(k - s + j) / j;
        if (c > 1e18) return 1e18;
    }
    return c;
}

// Restricted least squares on a support; returns false when the restricted
// Gram is singular and inconsistent with b.
bool restricted_solve(const RiskQuadratic& risk, const std::vector<int>& support,
                      Eigen::VectorXd& beta_out) {
    const int m = static_cast<int>(support.size());
    Eigen::MatrixXd g(m, m);
    Eigen::VectorXd bs(m);
    for (int i = 0; i < m; ++i) {
        bs[i] = risk.b[support[i]];
        for (int j = 0; j < m; ++j) {
            g(i, j) = risk.is_diagonal()
                          ? (support[i] == support[j] ? risk.diag[support[i]] : 0.0)
                          : risk.dense(support[i], support[j]);
        }
    }
    Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
    Eigen::VectorXd beta = ldlt.solve(bs);
    if (!beta.allFinite()) return false;
    const double resid = (g * beta - bs).lpNorm<Eigen::Infinity>();
    if (resid > 1e-8 * (1.0 + bs.lpNorm<Eigen::Infinity>())) return false;
    beta_out = std::move(beta);
    return true;
}

double support_objective(const RiskQuadratic& risk, const std::vector<int>& support,
                         const Eigen::VectorXd& beta_s) {
    Eigen::VectorXd beta = Eigen::VectorXd::Zero(risk.k);
    for (std::size_t i = 0; i < support.size(); ++i) beta[support[i]] = beta_s[i];
    return evaluate(risk, beta);
}

}  // namespace

Solution solve_best_subset(const RiskQuadratic& risk, int s, const EstimatorConfig& cfg,
                           SubsetMode mode, std::size_t enumeration_budget) {
    if (s < 0) throw invalid_input("solve_best_subset: s must be >= 0");
    cfg.validate();
    const int k = risk.k;
    s = std::min(s, k);
    if (mode == SubsetMode::Auto) {
        if (risk.is_diagonal())
            mode = SubsetMode::ExactDiagonal;
        else
            mode = choose_count(k, s) <= static_cast<double>(enumeration_budget)
                       ? SubsetMode::Exhaustive
                       : SubsetMode::Greedy;
    }
    if (s == 0) return finish(risk, Eigen::VectorXd::Zero(k), 0, 0.0, true);

    if (mode == SubsetMode::ExactDiagonal) {
        if (!risk.is_diagonal())
            throw invalid_input("solve_best_subset: ExactDiagonal needs a diagonal Gram");
        std::vector<int> order;
        for (int a = 0; a < k; ++a)
            if (risk.diag[a] > 0.0) order.push_back(a);
        std::stable_sort(order.begin(), order.end(), [&](int i, int j) {
            const double si = risk.b[i] * risk.b[i] / risk.diag[i];
            const double sj = risk.b[j] * risk.b[j] / risk.diag[j];
            if (si != sj) return si > sj;
            return i < j;
        });
        Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
        for (int t = 0; t < std::min<int>(s, static_cast<int>(order.size())); ++t)
            beta[order[t]] = risk.b[order[t]] / risk.diag[order[t]];
        return finish(risk, std::move(beta), 0, 0.0, true);
    }

    if (mode == SubsetMode::Exhaustive) {
        if (risk.form == RiskQuadratic::Gram::Operator)
            throw invalid_input("solve_best_subset: Exhaustive needs explicit Gram storage");
        if (choose_count(k, s) > static_cast<double>(enumeration_budget))
            throw invalid_input(
                "solve_best_subset: enumeration over budget; use SubsetMode::Greedy");
        std::vector<int> support(s);
        std::iota(support.begin(), support.end(), 0);
        Eigen::VectorXd best_beta = Eigen::VectorXd::Zero(k);
        double best_obj = risk.constant;  // beta = 0 as baseline
        bool more = true;
        while (more) {
            Eigen::VectorXd beta_s;
            if (restricted_solve(risk, support, beta_s)) {
                const double obj = support_objective(risk, support, beta_s);
                if (obj < best_obj) {
                    best_obj = obj;
                    best_beta.setZero();
                    for (int i = 0; i < s; ++i) best_beta[support[i]] = beta_s[i];
                }
            }
            // next lexicographic combination
            int i = s - 1;
            while (i >= 0 && support[i] == k - s + i) --i;
            if (i < 0) {
                more = false;
            } else {
                ++support[i];
                for (int j = i + 1; j < s; ++j) support[j] = support[j - 1] + 1;
            }
        }
        return finish(risk, std::move(best_beta), 0, 0.0, true);
    }

    // Greedy forward selection.
    std::vector<int> support;
    std::vector<bool> used(k, false);
    Eigen::VectorXd best_beta = Eigen::VectorXd::Zero(k);
    for (int step = 0; step < s; ++step) {
        int pick = -1;
        double pick_obj = 0.0;
        Eigen::VectorXd pick_beta;
        for (int a = 0; a < k; ++a) {
            if (used[a]) continue;
            std::vector<int> trial = support;
            trial.push_back(a);
            std::sort(trial.begin(), trial.end());
            Eigen::VectorXd beta_s;
            if (!restricted_solve(risk, trial, beta_s)) continue;
            const double obj = support_objective(risk, trial, beta_s);
            if (pick < 0 || obj < pick_obj) {
                pick = a;
                pick_obj = obj;
                pick_beta = Eigen::VectorXd::Zero(k);
                for (std::size_t i = 0; i < trial.size(); ++i) pick_beta[trial[i]] = beta_s[i];
            }
        }
        if (pick < 0) break;
        used[pick] = true;
        support.push_back(pick);
        std::sort(support.begin(), support.end());
        best_beta = pick_beta;
    }
    return finish(risk, std::move(best_beta), static_cast<int>(support.size()), 0.0, false, true);
}

Eigen::VectorXd soft_threshold_estimator(const Eigen::VectorXd& means, double lambda) {
    if (lambda < 0) throw invalid_input("soft_threshold_estimator: lambda must be >= 0");
    Eigen::VectorXd out(means.size());
    for (Eigen::Index a = 0; a < means.size(); ++a) {
        const double mag = std::abs(means[a]) - lambda;
        out[a] = mag > 0 ? (means[a] > 0 ? mag : -mag) : 0.0;
    }
    return out;
}

Eigen::VectorXd hard_threshold_estimator(const Eigen::VectorXd& means, double lambda) {
    if (lambda < 0) throw invalid_input("hard_threshold_estimator: lambda must be >= 0");
    Eigen::VectorXd out(means.size());
    for (Eigen::Index a = 0; a < means.size(); ++a)
        out[a] = std::abs(means[a]) > lambda ? means[a] : 0.0;
    return out;
}

Solution solve_penalized_l1(const RiskQuadratic& risk, double lambda, const EstimatorConfig& cfg) {
    if (lambda < 0) throw invalid_input("solve_penalized_l1: lambda must be >= 0");
    cfg.validate();
    const int k = risk.k;
    const double L = gram_lipschitz(risk);
    if (L <= 0) {
        for (int a = 0; a < k; ++a)
            if (2.0 * std::abs(risk.b[a]) > lambda)
                throw numeric_error("solve_penalized_l1: unbounded below (zero curvature)");
        return finish(risk, Eigen::VectorXd::Zero(k), 0, 0.0, true);
    }
    const int max_iters = cfg.resolved_max_iters(k);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd gx = Eigen::VectorXd::Zero(k);
    double f = risk.constant;
    int iters = 0;
    for (; iters < max_iters; ++iters) {
        const Eigen::VectorXd grad = 2.0 * (gx - risk.b);
        x = soft_threshold_estimator(x - grad / L, lambda / L);
        gx = risk.gram_times(x);
        const double fn =
            x.dot(gx) - 2.0 * risk.b.dot(x) + risk.constant + lambda * x.lpNorm<1>();
        const bool converged = std::abs(f - fn) <= cfg.solver_tol * std::max(1.0, std::abs(fn));
        f = fn;
        if (converged) {
            ++iters;
            break;
        }
    }
    const Eigen::VectorXd grad = 2.0 * (gx - risk.b);
    const Eigen::VectorXd prox = soft_threshold_estimator(x - grad / L, lambda / L);
    Solution sol = finish(risk, x, iters, (x - prox).lpNorm<Eigen::Infinity>(), false);
    return sol;
}

namespace {

// Manual Gauss-Jordan with partial pivoting, independent of the Eigen-based
// restricted solver so the enumeration oracle is a genuinely separate route.
bool gauss_solve(std::vector<double> a, std::vector<double> rhs, int m,
                 std::vector<double>& out) {
    out.assign(m, 0.0);
    for (int col = 0; col < m; ++col) {
        int piv = col;
        for (int r = col + 1; r < m; ++r)
            if (std::abs(a[r * m + col]) > std::abs(a[piv * m + col])) piv = r;
        if (std::abs(a[piv * m + col]) < 1e-12) return false;
        if (piv != col) {
            for (int c = 0; c < m; ++c) std::swap(a[piv * m + c], a[col * m + c]);
            std::swap(rhs[piv], rhs[col]);
        }
        const double d = a[col * m + col];
        for (int c = 0; c < m; ++c) a[col * m + c] /= d;
        rhs[col] /= d;
        for (int r = 0; r < m; ++r) {
            if (r == col) continue;
            const double factor = a[r * m + col];
            if (factor == 0.0) continue;
            for (int c = 0; c < m; ++c) a[r * m + c] -= factor * a[col * m + c];
            rhs[r] -= factor * rhs[col];
        }
    }
    out = rhs;
    return true;
}

}  // namespace

Solution brute_force_oracle(const RiskQuadratic& risk, ConstraintKind kind, double s,
                            double grid_step, std::size_t budget) {
    const int k = risk.k;
    if (kind == ConstraintKind::L1Ball) {
        if (k > 3) throw invalid_input("brute_force_oracle: grid mode handles k <= 3 only");
        if (grid_step <= 0) throw invalid_input("brute_force_oracle: grid_step must be > 0");
        const long long n_steps = static_cast<long long>(std::floor(s / grid_step + 1e-9));
        // Lattice points inside the L1 ball: count(k, r) = sum_i count(k-1, r - |i|).
        std::vector<double> count(n_steps + 1, 1.0);  // k = 1 ball of radius r has 2r+1... start at dim 0
        for (long long r = 0; r <= n_steps; ++r) count[r] = 1.0;
        for (int dim = 1; dim <= k; ++dim) {
            std::vector<double> next(n_steps + 1, 0.0);
            for (long long r = 0; r <= n_steps; ++r) {
                double total = count[r];
                for (long long i = 1; i <= r; ++i) total += 2.0 * count[r - i];
                next[r] = total > 1e18 ? 1e18 : total;
            }
            count = std::move(next);
        }
        if (count[n_steps] > static_cast<double>(budget))
            throw invalid_input("brute_force_oracle: grid too large for budget");

        Eigen::VectorXd beta(k), best = Eigen::VectorXd::Zero(k);
        double best_obj = evaluate(risk, best);
        std::vector<long long> n(k, 0);
        // Nested lattice walk over sum |n_i| <= n_steps, lexicographic.
        const auto consider = [&]() {
            for (int j = 0; j < k; ++j) beta[j] = static_cast<double>(n[j]) * grid_step;
            const double obj = evaluate(risk, beta);
            if (obj < best_obj) {
                best_obj = obj;
                best = beta;
            }
        };
        for (n[0] = -n_steps; n[0] <= n_steps; ++n[0]) {
            const long long r1 = n_steps - std::abs(n[0]);
            if (k == 1) {
                consider();
                continue;
            }
            for (n[1] = -r1; n[1] <= r1; ++n[1]) {
                const long long r2 = r1 - std::abs(n[1]);
                if (k == 2) {
                    consider();
                    continue;
                }
                for (n[2] = -r2; n[2] <= r2; ++n[2]) consider();
            }
        }
        Solution sol;
        sol.beta = best;
        sol.objective = best_obj;
        sol.exact = true;
        return sol;
    }

    // L0: enumerate supports of size 0..s.
    const int ss = std::min(static_cast<int>(s), k);
    double total = 0;
    for (int size = 0; size <= ss; ++size) total += choose_count(k, size);
    if (total > static_cast<double>(budget))
        throw invalid_input("brute_force_oracle: subset enumeration too large for budget");
    if (risk.form == RiskQuadratic::Gram::Operator)
        throw invalid_input("brute_force_oracle: needs explicit Gram storage");

    Eigen::VectorXd best = Eigen::VectorXd::Zero(k);
    double best_obj = risk.constant;
    std::vector<int> support;
    std::vector<double> g, rhs, beta_s;
    for (int size = 1; size <= ss; ++size) {
        support.assign(size, 0);
        std::iota(support.begin(), support.end(), 0);
        bool more = true;
        while (more) {
            g.assign(static_cast<std::size_t>(size) * size, 0.0);
            rhs.assign(size, 0.0);
            for (int i = 0; i < size; ++i) {
                rhs[i] = risk.b[support[i]];
                for (int j = 0; j < size; ++j)
                    g[i * size + j] = risk.is_diagonal()
                                          ? (support[i] == support[j] ? risk.diag[support[i]] : 0.0)
                                          : risk.dense(support[i], support[j]);
            }
            if (gauss_solve(g, rhs, size, beta_s)) {
                Eigen::VectorXd beta = Eigen::VectorXd::Zero(k);
                for (int i = 0; i < size; ++i) beta[support[i]] = beta_s[i];
                const double obj = evaluate(risk, beta);
                if (obj < best_obj) {
                    best_obj = obj;
                    best = beta;
                }
            }
            int i = size - 1;
            while (i >= 0 && support[i] == k - size + i) --i;
            if (i < 0) {
                more = false;
            } else {
                ++support[i];
                for (int j = i + 1; j < size; ++j) support[j] = support[j - 1] + 1;
            }
        }
    }
    Solution sol;
    sol.beta = best;
    sol.objective = best_obj;
    sol.exact = true;
    return sol;
}

}  // namespace hdtreat
