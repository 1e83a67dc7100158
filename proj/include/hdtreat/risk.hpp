#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hdtreat/pseudo.hpp"

namespace hdtreat {

// Empirical risk R(beta) = beta'G beta - 2 b'beta (+ constant), assembled
// once and handed to the solvers. The Gram term is stored diagonally for
// single multi-valued treatments, densely for vector treatments up to
// k = 4096, and as an implicit operator (matrix-vector products through the
// packed n2 x k design) above that. The beta-free constant is dropped for
// the main risks (argmin-invariant); the alternative risk keeps it so that
// evaluate() reproduces the literal double sum.
struct RiskQuadratic {
    enum class Gram { Diagonal, Dense, Operator };

    Gram form = Gram::Diagonal;
    int k = 0;
    Eigen::VectorXd diag;   // Diagonal
    Eigen::MatrixXd dense;  // Dense
    std::vector<std::uint64_t> op_rows;  // Operator: packed design rows
    std::size_t op_n = 0;
    int op_stride = 0;
    Eigen::VectorXd b;
    double constant = 0.0;

    Eigen::VectorXd gram_times(const Eigen::VectorXd& v) const;
    double quad_form(const Eigen::VectorXd& v) const;
    bool is_diagonal() const { return form == Gram::Diagonal; }
};

double evaluate(const RiskQuadratic& risk, const Eigen::VectorXd& beta);

// Gram representation switch point for vector treatments.
inline constexpr int kDenseGramLimit = 4096;

// Single multi-valued risk: G = diag(scaling^2 * N2_a / n2), where N2_a
// counts level a among the used D2 rows, and b_a = scaling^2 * varpi_a *
// (D2 mean of the unscaled pseudo-outcome at a). `positions` selects a
// subset of the table's D2 rows (empty = all); cross-validation scores
// held-out rows through this.
RiskQuadratic assemble_single(const PseudoOutcomeTable& table, const Dataset& data,
                              std::span<const std::size_t> positions = {});

// Binary-vector risk: G = (1/n2) sum_i A_i A_i', b = sum over D1-observed
// combinations of varpi_a * (D2 mean of the pseudo-outcome at a) * a.
RiskQuadratic assemble_vector(const PseudoOutcomeTable& table, const Dataset& data,
                              std::span<const std::size_t> positions = {});

// Fixed-weight separable risk sum_a w(a) P2_n{(phi_a - beta_a)^2} for single
// multi-valued treatments; expects an unscaled table. Per-level minimization
// decouples. Levels with w(a) = 0 or without D1 weight are degenerate:
// their coordinate does not appear in the risk at all.
struct SeparableRisk {
    RiskQuadratic quad;               // diagonal, with the beta-free constant kept
    std::vector<double> level_means;  // D2 mean of phi_a per level 1..k (0 where degenerate)
    std::vector<std::uint8_t> degenerate;  // per level 1..k
};

SeparableRisk assemble_alternative(const PseudoOutcomeTable& table,
                                   std::span<const double> weights,
                                   std::span<const std::size_t> positions = {});

}  // namespace hdtreat
