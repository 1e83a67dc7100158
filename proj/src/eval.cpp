#include "hdtreat/eval.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

namespace hdtreat {

double weighted_mse_single(const Eigen::VectorXd& psi_hat, const Eigen::VectorXd& psi_true,
                           std::span<const double> weights) {
    if (psi_hat.size() != psi_true.size() ||
        weights.size() != static_cast<std::size_t>(psi_hat.size()))
        throw invalid_input("weighted_mse_single: dimension mismatch");
    double wsum = 0.0;
    for (double w : weights) {
        if (w < 0) throw invalid_input("weighted_mse_single: negative weight");
        wsum += w;
    }
    if (std::abs(wsum - 1.0) > 1e-9)
        throw invalid_input("weighted_mse_single: weights must sum to 1");
    return pairwise_sum(static_cast<std::size_t>(psi_hat.size()), [&](std::size_t a) {
        const double d = psi_hat[a] - psi_true[a];
        return weights[a] * d * d;
    });
}

double prediction_mse_vector(const Eigen::VectorXd& psi_hat, const Eigen::VectorXd& psi_true,
                             const Eigen::MatrixXd& second_moment) {
    if (psi_hat.size() != psi_true.size() || second_moment.rows() != psi_hat.size() ||
        second_moment.cols() != psi_hat.size())
        throw invalid_input("prediction_mse_vector: dimension mismatch");
    const double scale = std::max(1.0, second_moment.cwiseAbs().maxCoeff());
    if (!second_moment.isApprox(second_moment.transpose(), 1e-10))
        throw invalid_input("prediction_mse_vector: matrix must be symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(second_moment,
                                                       Eigen::EigenvaluesOnly);
    if (eig.eigenvalues().minCoeff() < -1e-8 * scale)
        throw invalid_input("prediction_mse_vector: matrix is not PSD");
    const Eigen::VectorXd delta = psi_hat - psi_true;
    return delta.dot(second_moment * delta);
}

Eigen::MatrixXd bernoulli_half_second_moment(int k) {
    Eigen::MatrixXd m = Eigen::MatrixXd::Constant(k, k, 0.25);
    m.diagonal().setConstant(0.5);
    return m;
}

Eigen::MatrixXd mc_second_moment(const DgpTruth& truth, std::size_t draws, std::uint64_t seed) {
    if (truth.spec.kind != TreatmentKind::BinaryVector)
        throw invalid_input("mc_second_moment: binary-vector designs only");
    const int k = truth.spec.k;
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(k, k);
    Rng rng(seed);
    std::vector<double> x(truth.d);
    std::vector<int> bits;
    bits.reserve(k);
    for (std::size_t t = 0; t < draws; ++t) {
        truth.draw_x(rng, x);
        bits.clear();
        for (int j = 0; j < k; ++j)
            if (rng.next_bernoulli(truth.component_prob(j, x))) bits.push_back(j);
        for (std::size_t u = 0; u < bits.size(); ++u)
            for (std::size_t v = u; v < bits.size(); ++v) sum(bits[u], bits[v]) += 1.0;
    }
    sum /= static_cast<double>(draws);
    for (int i = 0; i < k; ++i)
        for (int j = i + 1; j < k; ++j) sum(j, i) = sum(i, j);
    return sum;
}

RateFit rate_fit(std::span<const std::pair<double, double>> points) {
    if (points.size() < 2) throw invalid_input("rate_fit: need at least 2 points");
    const std::size_t n = points.size();
    double sx = 0, sy = 0;
    for (const auto& [pn, mse] : points) {
        if (!(pn > 0) || !(mse > 0))
            throw invalid_input("rate_fit: points must have positive n and mse");
        sx += std::log(pn);
        sy += std::log(mse);
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0, syy = 0;
    for (const auto& [pn, mse] : points) {
        const double dx = std::log(pn) - mx;
        const double dy = std::log(mse) - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if (sxx <= 0) throw invalid_input("rate_fit: sample sizes must not all coincide");
    RateFit fit;
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    fit.r_squared = syy > 0 ? (sxy * sxy) / (sxx * syy) : 1.0;
    if (n > 2) {
        const double rss = syy - fit.slope * sxy;
        fit.se_slope = std::sqrt(std::max(rss, 0.0) / (static_cast<double>(n - 2) * sxx));
    }
    fit.points.assign(points.begin(), points.end());
    return fit;
}

}  // namespace hdtreat
