#pragma once

#include <cstdint>
#include <functional>
#include <span>

#include "hdtreat/core.hpp"
#include "hdtreat/dgp.hpp"

namespace hdtreat {

// First-stage model: propensity and outcome regression handles plus the D1
// empirical proportions. Queries go through pi()/mu(), which clamp the
// propensity at `floor`. `constant_in_x` marks models whose handles ignore
// the covariate argument; downstream table construction exploits this to
// avoid O(n*k) evaluation sweeps.
struct NuisanceModel {
    TreatmentSpec spec;

    std::function<double(int, std::span<const double>)> pi_level;
    std::function<double(int, std::span<const double>)> mu_level;
    std::function<double(std::span<const std::uint64_t>, std::span<const double>)> pi_combo;
    std::function<double(std::span<const std::uint64_t>, std::span<const double>)> mu_combo;

    std::vector<double> varpi_hat;  // single: per level, sums to 1
    CombinationTable combos;        // vector: D1 dictionary with proportions

    double floor = 0.0;
    bool constant_in_x = false;

    double pi(int level, std::span<const double> x) const {
        return std::max(pi_level(level, x), floor);
    }
    double mu(int level, std::span<const double> x) const { return mu_level(level, x); }
    double pi(std::span<const std::uint64_t> bits, std::span<const double> x) const {
        return std::max(pi_combo(bits, x), floor);
    }
    double mu(std::span<const std::uint64_t> bits, std::span<const double> x) const {
        return mu_combo(bits, x);
    }
};

double default_propensity_floor(int k, std::size_t n);

// pi_hat == pi and mu_hat == mu from the generating process; error norms are
// identically zero.
NuisanceModel oracle_nuisance(const DgpTruth& truth, const Dataset& data);

// Fitted on D1: mu_hat(a,.) is the mean outcome at level a (fallback where
// the level is unseen), pi_hat(a,.) = max(varpi_hat_a, floor), constant in x.
// floor < 0 selects the default 1/(10 k n).
NuisanceModel empirical_nuisance(const Dataset& data, double floor = -1.0,
                                 double mu_fallback = 0.0);

// Sign patterns r, q with |r| = |q| = 1 pointwise, so corruption norms come
// out exactly delta and eps.
struct CorruptionPattern {
    std::function<double(int, std::span<const double>)> r_level, q_level;
    std::function<double(std::span<const std::uint64_t>, std::span<const double>)> r_combo,
        q_combo;
};

// sign(x_1 - median), the same pattern at every level.
CorruptionPattern default_corruption_pattern(double median);

// pi_hat'(a,x) = pi(a,x) / (1 + delta r_a(x)), mu_hat'(a,x) = mu(a,x) + eps q_a(x),
// where pi, mu are the base model's handles (pass the oracle to corrupt the
// truth). Requires 0 <= delta < 1 so the perturbed propensity stays positive.
NuisanceModel corrupt_nuisance(const NuisanceModel& base, double delta, double eps,
                               const CorruptionPattern& pattern);
NuisanceModel corrupt_nuisance(const NuisanceModel& base, double delta, double eps,
                               const DgpTruth& truth);

struct ErrorNorms {
    double delta = 0.0;  // || pi_a / pi_hat_a - 1 ||_{L2(P_X)}
    double eps = 0.0;    // || mu_a - mu_hat_a ||_{L2(P_X)}
    double se_delta = 0.0;
    double se_eps = 0.0;
};

// L2(P_X) error norms of the model against the generating process at one
// level; quadrature for d = 1 uniform covariates, Monte Carlo otherwise.
ErrorNorms nuisance_error_norms(const NuisanceModel& model, const DgpTruth& truth, int level,
                                std::uint64_t seed = 7, std::size_t mc_draws = 100000);
ErrorNorms nuisance_error_norms(const NuisanceModel& model, const DgpTruth& truth,
                                std::span<const std::uint64_t> combo, std::uint64_t seed = 7,
                                std::size_t mc_draws = 100000);

}  // namespace hdtreat
