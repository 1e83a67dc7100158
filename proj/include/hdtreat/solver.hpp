#pragma once

#include <vector>

#include <Eigen/Core>

#include "hdtreat/risk.hpp"

namespace hdtreat {

struct Solution {
    Eigen::VectorXd beta;
    double objective = 0.0;
    int iterations = 0;
    // || beta - Proj(beta - grad R(beta) / L) ||_inf with L the gradient
    // Lipschitz constant; 0 for closed-form and enumerative paths.
    double kkt_residual = 0.0;
    bool exact = false;      // closed form or exhaustive
    bool heuristic = false;  // greedy forward selection carries no guarantee
};

// Euclidean projection onto { ||beta||_1 <= radius }, exact via
// sort-and-threshold.
Eigen::VectorXd project_l1_ball(const Eigen::VectorXd& v, double radius);

// Gradient Lipschitz constant of the risk, 2 * 1.01 * lambda_max(G)
// (power-iteration estimate; exact for diagonal G).
double gram_lipschitz(const RiskQuadratic& risk);

// L1-constrained minimization. Projected gradient with fixed step 1/L from
// beta = 0, stopping when the relative objective decrease falls below
// cfg.solver_tol or at max_iters; diagonal Gram matrices take an exact
// weighted-thresholding path instead. `trace`, when given, receives the
// objective after every iterate.
Solution solve_lasso_constrained(const RiskQuadratic& risk, double s, const EstimatorConfig& cfg,
                                 std::vector<double>* trace = nullptr);

enum class SubsetMode { Auto, ExactDiagonal, Exhaustive, Greedy };

// L0-constrained minimization. ExactDiagonal scores coordinates by b^2/G
// (zero-Gram coordinates are pinned at 0); Exhaustive enumerates supports
// and refuses beyond `enumeration_budget`; Greedy is forward selection and
// is flagged heuristic.
Solution solve_best_subset(const RiskQuadratic& risk, int s, const EstimatorConfig& cfg,
                           SubsetMode mode = SubsetMode::Auto,
                           std::size_t enumeration_budget = 1000000);

// Gaussian-sequence style estimators on the per-level means of the
// estimated pseudo-outcomes.
Eigen::VectorXd soft_threshold_estimator(const Eigen::VectorXd& means, double lambda);
Eigen::VectorXd hard_threshold_estimator(const Eigen::VectorXd& means, double lambda);

// Minimize R(beta) + lambda ||beta||_1 by proximal gradient (ISTA). Used to
// check the soft-thresholding equivalence against an independent route.
Solution solve_penalized_l1(const RiskQuadratic& risk, double lambda, const EstimatorConfig& cfg);

enum class ConstraintKind { L1Ball, L0 };

// Verification oracle: exhaustive grid minimization over the L1 ball
// (k <= 3) or support enumeration with an internal Gauss-Jordan restricted
// solve (L0). Refuses problems whose enumeration exceeds `budget` points.
Solution brute_force_oracle(const RiskQuadratic& risk, ConstraintKind kind, double s,
                            double grid_step, std::size_t budget = 200000000);

}  // namespace hdtreat
