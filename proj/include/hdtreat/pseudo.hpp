#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hdtreat/core.hpp"
#include "hdtreat/nuisance.hpp"

namespace hdtreat {

// phi_a(Z) = 1(A=a)/pi_hat_a(X) * (Y - mu_hat_a(X)) + mu_hat_a(X) - psi0,
// the uncentered efficient influence function of E{mu_a(X)} minus the
// intercept. Throws numeric_error if the indicator fires on a zero
// propensity (precluded whenever the model carries a positive floor).
double pseudo_outcome(const Dataset& data, std::size_t i, int level, const NuisanceModel& model,
                      double psi0);
double pseudo_outcome(const Dataset& data, std::size_t i, std::span<const std::uint64_t> combo,
                      const NuisanceModel& model, double psi0);

// Pseudo-outcomes over D2 for every treatment value with positive D1 weight,
// stored as the two additive parts (the indicator term lives only at the
// observation's own treatment; the mu_hat term is shared across rows when
// the model is constant in x). phi values are materialized lazily.
struct PseudoOutcomeTable {
    TreatmentSpec spec;
    double scaling = 1.0;  // sqrt(k) for single multi-valued, 1 for binary vector
    double psi0 = 0.0;

    std::vector<std::size_t> rows;  // D2 dataset rows, dataset order
    std::vector<int> level_ids;     // single: 1-based levels with varpi > 0
    std::vector<double> varpi;      // D1 weight per table level
    CombinationTable combos;        // vector: the D1 dictionary (all props > 0)

    std::vector<std::ptrdiff_t> row_match;  // per row: table position of own treatment, or -1
    std::vector<double> indicator_part;     // per row: (y - mu_hat_A(x)) / pi_hat_A(x)
    bool mu_constant = true;
    std::vector<double> mu_part_const;  // per table level: mu_hat - psi0
    std::vector<double> mu_part_dense;  // row-major rows x levels otherwise

    std::size_t n_rows() const { return rows.size(); }
    std::size_t n_levels() const { return varpi.size(); }

    double mu_part(std::size_t row_pos, std::size_t level_pos) const {
        return mu_constant ? mu_part_const[level_pos]
                           : mu_part_dense[row_pos * n_levels() + level_pos];
    }
    double phi_unscaled(std::size_t row_pos, std::size_t level_pos) const {
        double v = mu_part(row_pos, level_pos);
        if (row_match[row_pos] == static_cast<std::ptrdiff_t>(level_pos))
            v += indicator_part[row_pos];
        return v;
    }
    double phi(std::size_t row_pos, std::size_t level_pos) const {
        return scaling * phi_unscaled(row_pos, level_pos);
    }

    // Per-table-level means of the unscaled phi over a subset of row
    // positions (empty subset = all rows).
    std::vector<double> level_means(std::span<const std::size_t> positions = {}) const;
};

// scaling: sqrt(k) for single multi-valued treatments, 1 for binary vectors.
// Pass scaling_override >= 0 to force a specific scaling (used by the
// alternative risk, which wants unscaled outcomes).
PseudoOutcomeTable scaled_pseudo_outcomes(const Dataset& data, const NuisanceModel& model,
                                          double psi0, double scaling_override = -1.0);

enum class InterceptKind { MeanOfLevels, MedianOfLevels, FixedLevel };

// psi0_hat as the average over levels of the D2 means of the uncentered
// efficient influence functions. Median and fixed-level variants share the
// interface. Single multi-valued treatments only.
double estimate_intercept(const Dataset& data, const NuisanceModel& model,
                          InterceptKind kind = InterceptKind::MeanOfLevels, int fixed_level = 1);

}  // namespace hdtreat
