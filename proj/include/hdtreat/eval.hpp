#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "hdtreat/dgp.hpp"

namespace hdtreat {

// sum_a w_a (psi_hat_a - psi_a)^2 with weights summing to 1 (population
// treatment probabilities or empirical proportions).
double weighted_mse_single(const Eigen::VectorXd& psi_hat, const Eigen::VectorXd& psi_true,
                           std::span<const double> weights);

// (psi_hat - psi)' M (psi_hat - psi) for a PSD second-moment matrix M.
double prediction_mse_vector(const Eigen::VectorXd& psi_hat, const Eigen::VectorXd& psi_true,
                             const Eigen::MatrixXd& second_moment);

// E[AA'] for iid Bernoulli(1/2) components: 1/2 on the diagonal, 1/4 off it.
Eigen::MatrixXd bernoulli_half_second_moment(int k);

// Monte Carlo second moment of the treatment design for other generators.
Eigen::MatrixXd mc_second_moment(const DgpTruth& truth, std::size_t draws, std::uint64_t seed);

struct RateFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
    double se_slope = 0.0;
    std::vector<std::pair<double, double>> points;  // (n, mse)
};

// Least-squares slope of log(mse) on log(n).
RateFit rate_fit(std::span<const std::pair<double, double>> points);

}  // namespace hdtreat
