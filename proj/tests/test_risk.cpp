#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "hdtreat/risk.hpp"
#include "hdtreat/solver.hpp"

using namespace hdtreat;

namespace {

// Literal implementation of the single multi-valued empirical risk: a plain
// double sum over D2 observations and levels through pseudo_outcome(), kept
// deliberately independent of the assembly path.
double literal_single_risk(const Dataset& data, const NuisanceModel& model, double psi0,
                           const Eigen::VectorXd& beta,
                           const std::vector<std::size_t>& rows) {
    const int k = data.spec.k;
    double total = 0.0;
    for (std::size_t i : rows) {
        double term = k * beta[data.a_level[i] - 1] * beta[data.a_level[i] - 1];
        for (int a = 1; a <= k; ++a) {
            if (model.varpi_hat[a - 1] == 0.0) continue;
            term += -2.0 * k * pseudo_outcome(data, i, a, model, psi0) * beta[a - 1] *
                    model.varpi_hat[a - 1];
        }
        total += term;
    }
    return total / static_cast<double>(rows.size());
}

double literal_vector_risk(const Dataset& data, const NuisanceModel& model, double psi0,
                           const Eigen::VectorXd& beta,
                           const std::vector<std::size_t>& rows) {
    const int k = data.spec.k;
    double total = 0.0;
    for (std::size_t i : rows) {
        double own = 0.0;
        for (int j = 0; j < k; ++j)
            if (data.a_bit(i, j)) own += beta[j];
        double term = own * own;
        for (std::size_t c = 0; c < model.combos.count(); ++c) {
            const auto combo = model.combos.row(c);
            double dot = 0.0;
            for (int j = 0; j < k; ++j)
                if ((combo[j / 64] >> (j % 64)) & 1u) dot += beta[j];
            term += -2.0 * pseudo_outcome(data, i, combo, model, psi0) * dot *
                    model.combos.prop[c];
        }
        total += term;
    }
    return total / static_cast<double>(rows.size());
}

Dataset manual_single(int k, std::vector<int> d1_levels, std::vector<int> d2_levels,
                      std::vector<double> d1_y, std::vector<double> d2_y) {
    Dataset d;
    d.spec = {TreatmentKind::SingleMultiValued, k};
    d.n = d1_levels.size() + d2_levels.size();
    d.d = 1;
    d.x.assign(d.n, 0.25);
    for (int a : d1_levels) {
        d.a_level.push_back(a);
        d.fold.push_back(FoldId::D1);
    }
    for (int a : d2_levels) {
        d.a_level.push_back(a);
        d.fold.push_back(FoldId::D2);
    }
    d.y = std::move(d1_y);
    d.y.insert(d.y.end(), d2_y.begin(), d2_y.end());
    return d;
}

}  // namespace

TEST_CASE("evaluate on raw quadratics") {
    RiskQuadratic r;
    r.form = RiskQuadratic::Gram::Diagonal;
    r.k = 2;
    r.diag = Eigen::Vector2d(1.0, 1.0);
    r.b = Eigen::Vector2d::Zero();
    CHECK(evaluate(r, Eigen::Vector2d::Zero()) == 0.0);
    CHECK(evaluate(r, Eigen::Vector2d(1.0, 0.0)) == 1.0);

    RiskQuadratic q;
    q.form = RiskQuadratic::Gram::Diagonal;
    q.k = 1;
    q.diag = Eigen::VectorXd::Constant(1, 2.0);
    q.b = Eigen::VectorXd::Constant(1, 3.0);
    CHECK(evaluate(q, Eigen::VectorXd::Constant(1, 1.0)) == -4.0);

    CHECK_THROWS_AS(evaluate(q, Eigen::Vector2d::Zero()), invalid_input);
}

TEST_CASE("assemble_single worked examples") {
    // D1 = {1, 2}, D2 = {1, 2}: varpi = (1/2, 1/2), one D2 observation per level
    auto data = manual_single(2, {1, 2}, {1, 2}, {0.4, 0.6}, {1.0, 0.0});
    const auto model = empirical_nuisance(data, 0.0);
    const auto table = scaled_pseudo_outcomes(data, model, 0.0);
    const auto risk = assemble_single(table, data);
    CHECK(risk.diag[0] == doctest::Approx(1.0).epsilon(1e-15));  // k * N_a / n2 = 2 * 1/2
    CHECK(risk.diag[1] == doctest::Approx(1.0).epsilon(1e-15));

    // b_a = k * varpi_a * m_a = m_a here
    const auto means = table.level_means();
    CHECK(risk.b[0] == doctest::Approx(means[0]).epsilon(1e-15));
    CHECK(risk.b[1] == doctest::Approx(means[1]).epsilon(1e-15));
}

TEST_CASE("levels missing from D1 carry zero linear weight") {
    // level 3 appears only in D2
    auto data = manual_single(3, {1, 2}, {3, 3}, {0.4, 0.6}, {5.0, 7.0});
    const auto model = empirical_nuisance(data, 0.0);
    const auto table = scaled_pseudo_outcomes(data, model, 0.0);
    const auto risk = assemble_single(table, data);
    CHECK(risk.b[2] == 0.0);
    CHECK(risk.diag[2] > 0.0);  // quadratic term still sees D2 mass
}

TEST_CASE("assembled single risk equals the literal double sum") {
    Rng rng(51);
    for (int t = 0; t < 8; ++t) {
        DgpSpec spec;
        spec.spec = {TreatmentKind::SingleMultiValued, 4 + static_cast<int>(rng.next_below(17))};
        spec.n = 20 + rng.next_below(31);
        spec.target.psi = Eigen::VectorXd::Zero(spec.spec.k);
        spec.target.psi[0] = 0.5;
        spec.target.sparsity_norm = SparsityNorm::L0;
        spec.target.s = 1;
        spec.seed = 100 + t;
        const auto gen = gen_single_multivalued(spec);
        const auto model = empirical_nuisance(gen.data);
        const double psi0 = 0.1;
        const auto table = scaled_pseudo_outcomes(gen.data, model, psi0);
        const auto risk = assemble_single(table, gen.data);

        const auto rows = gen.data.fold_rows(FoldId::D2);
        for (int b = 0; b < 5; ++b) {
            Eigen::VectorXd beta(spec.spec.k);
            for (int a = 0; a < spec.spec.k; ++a) beta[a] = rng.next_normal();
            const double lit = literal_single_risk(gen.data, model, psi0, beta, rows);
            CHECK(evaluate(risk, beta) == doctest::Approx(lit).epsilon(1e-10));
        }

        // subset positions agree with the literal sum over those rows
        std::vector<std::size_t> positions, subset_rows;
        for (std::size_t p = 0; p < rows.size(); p += 2) {
            positions.push_back(p);
            subset_rows.push_back(rows[p]);
        }
        const auto sub_risk = assemble_single(table, gen.data, positions);
        Eigen::VectorXd beta = Eigen::VectorXd::Constant(spec.spec.k, 0.3);
        CHECK(evaluate(sub_risk, beta) ==
              doctest::Approx(literal_single_risk(gen.data, model, psi0, beta, subset_rows))
                  .epsilon(1e-10));
    }
}

TEST_CASE("assemble_vector degenerate cases") {
    // all treatment vectors zero
    Dataset d;
    d.spec = {TreatmentKind::BinaryVector, 4};
    d.n = 4;
    d.d = 1;
    d.x.assign(4, 0.1);
    d.a_bits.assign(4, 0);
    d.y = {1.0, 2.0, 3.0, 4.0};
    d.fold = {FoldId::D1, FoldId::D1, FoldId::D2, FoldId::D2};
    const auto model = empirical_nuisance(d, 0.0);
    const auto table = scaled_pseudo_outcomes(d, model, 0.0);
    const auto risk = assemble_vector(table, d);
    CHECK(risk.dense.cwiseAbs().maxCoeff() == 0.0);
    CHECK(risk.b.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("single D1 combination e_1 produces b = m e_1") {
    Dataset d;
    d.spec = {TreatmentKind::BinaryVector, 3};
    d.n = 4;
    d.d = 1;
    d.x.assign(4, 0.1);
    d.a_bits.assign(4, 0);
    d.set_a_bit(0, 0);
    d.set_a_bit(1, 0);
    d.set_a_bit(2, 0);  // D2 row matching the combination
    // row 3 stays the zero vector in D2
    d.y = {2.0, 4.0, 3.0, 9.0};
    d.fold = {FoldId::D1, FoldId::D1, FoldId::D2, FoldId::D2};
    const auto model = empirical_nuisance(d, 0.0);
    const auto table = scaled_pseudo_outcomes(d, model, 0.0);
    const auto risk = assemble_vector(table, d);
    const auto means = table.level_means();
    REQUIRE(table.n_levels() == 1);
    CHECK(risk.b[0] == doctest::Approx(means[0]).epsilon(1e-14));
    CHECK(risk.b[1] == 0.0);
    CHECK(risk.b[2] == 0.0);
}

TEST_CASE("assembled vector risk equals the literal sum and is PSD") {
    Rng rng(57);
    DgpSpec spec;
    spec.spec = {TreatmentKind::BinaryVector, 3};
    spec.n = 6;
    spec.target.psi = Eigen::VectorXd::Zero(3);
    spec.seed = 5;
    const auto gen = gen_binary_vector(spec);
    const auto model = empirical_nuisance(gen.data);
    const double psi0 = 0.2;
    const auto table = scaled_pseudo_outcomes(gen.data, model, psi0);
    const auto risk = assemble_vector(table, gen.data);
    const auto rows = gen.data.fold_rows(FoldId::D2);
    for (int b = 0; b < 20; ++b) {
        Eigen::VectorXd beta(3);
        for (int a = 0; a < 3; ++a) beta[a] = rng.next_normal();
        CHECK(evaluate(risk, beta) ==
              doctest::Approx(literal_vector_risk(gen.data, model, psi0, beta, rows))
                  .epsilon(1e-10));
    }

    CHECK(risk.dense.isApprox(risk.dense.transpose(), 1e-14));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(risk.dense, Eigen::EigenvaluesOnly);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("larger vector Gram stays symmetric PSD") {
    DgpSpec spec;
    spec.spec = {TreatmentKind::BinaryVector, 24};
    spec.n = 400;
    spec.target.psi = Eigen::VectorXd::Zero(24);
    spec.seed = 6;
    const auto gen = gen_binary_vector(spec);
    const auto model = empirical_nuisance(gen.data);
    const auto table = scaled_pseudo_outcomes(gen.data, model, 0.0);
    const auto risk = assemble_vector(table, gen.data);
    CHECK(risk.dense.isApprox(risk.dense.transpose(), 1e-14));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(risk.dense, Eigen::EigenvaluesOnly);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10);
}

TEST_CASE("alternative risk: unconstrained minimizer is the per-level mean") {
    auto data = manual_single(3, {1, 2, 3, 1}, {1, 2, 3, 2}, {0.1, 0.2, 0.3, 0.4},
                              {1.0, 2.0, 3.0, 4.0});
    const auto model = empirical_nuisance(data, 0.0);
    const auto table = scaled_pseudo_outcomes(data, model, 0.0, 1.0);  // unscaled
    std::vector<double> w(3, 1.0);
    const auto alt = assemble_alternative(table, w);
    for (int a = 0; a < 3; ++a) {
        CHECK(!alt.degenerate[a]);
        CHECK(alt.quad.b[a] / alt.quad.diag[a] ==
              doctest::Approx(alt.level_means[a]).epsilon(1e-14));
    }
}

TEST_CASE("alternative risk flags degenerate levels") {
    auto data = manual_single(3, {1, 2, 3, 1}, {1, 2, 3, 2}, {0.1, 0.2, 0.3, 0.4},
                              {1.0, 2.0, 3.0, 4.0});
    const auto model = empirical_nuisance(data, 0.0);
    const auto table = scaled_pseudo_outcomes(data, model, 0.0, 1.0);
    std::vector<double> w = {1.0, 0.0, 1.0};
    const auto alt = assemble_alternative(table, w);
    CHECK(alt.degenerate[1]);
    CHECK(alt.quad.diag[1] == 0.0);
    CHECK(alt.quad.b[1] == 0.0);
}

TEST_CASE("alternative risk evaluate matches the direct double sum") {
    auto data = manual_single(3, {1, 2, 3, 2}, {1, 2, 3, 2}, {0.5, 0.25, 0.75, 0.1},
                              {1.5, -0.5, 2.0, 0.25});
    const auto model = empirical_nuisance(data, 0.0);
    const double psi0 = 0.4;
    const auto table = scaled_pseudo_outcomes(data, model, psi0, 1.0);
    std::vector<double> w = {0.7, 1.3, 0.5};
    const auto alt = assemble_alternative(table, w);

    Rng rng(61);
    const auto rows = data.fold_rows(FoldId::D2);
    for (int t = 0; t < 10; ++t) {
        Eigen::VectorXd beta(3);
        for (int a = 0; a < 3; ++a) beta[a] = rng.next_normal();
        double direct = 0.0;
        for (std::size_t i : rows) {
            for (int a = 1; a <= 3; ++a) {
                const double phi = pseudo_outcome(data, i, a, model, psi0);
                direct += w[a - 1] * (phi - beta[a - 1]) * (phi - beta[a - 1]);
            }
        }
        direct /= static_cast<double>(rows.size());
        CHECK(evaluate(alt.quad, beta) == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("scaling by sqrt(k) multiplies the risk by k and keeps the argmin") {
    DgpSpec spec;
    spec.spec = {TreatmentKind::SingleMultiValued, 6};
    spec.n = 200;
    spec.target.psi = Eigen::VectorXd::Zero(6);
    spec.target.psi[1] = 0.8;
    spec.target.sparsity_norm = SparsityNorm::L0;
    spec.target.s = 1;
    spec.seed = 9;
    const auto gen = gen_single_multivalued(spec);
    const auto model = empirical_nuisance(gen.data);
    const auto scaled = scaled_pseudo_outcomes(gen.data, model, 0.0);  // sqrt(6)
    const auto unscaled = scaled_pseudo_outcomes(gen.data, model, 0.0, 1.0);
    const auto risk_s = assemble_single(scaled, gen.data);
    const auto risk_u = assemble_single(unscaled, gen.data);

    Rng rng(10);
    for (int t = 0; t < 10; ++t) {
        Eigen::VectorXd beta(6);
        for (int a = 0; a < 6; ++a) beta[a] = rng.next_normal();
        CHECK(evaluate(risk_s, beta) ==
              doctest::Approx(6.0 * evaluate(risk_u, beta)).epsilon(1e-12));
    }

    EstimatorConfig cfg;
    cfg.solver_tol = 1e-14;
    const auto sol_s = solve_lasso_constrained(risk_s, 0.8, cfg);
    const auto sol_u = solve_lasso_constrained(risk_u, 0.8, cfg);
    CHECK((sol_s.beta - sol_u.beta).lpNorm<Eigen::Infinity>() <= 1e-8);
}

TEST_CASE("operator-form Gram products match the dense representation") {
    DgpSpec spec;
    spec.spec = {TreatmentKind::BinaryVector, 20};
    spec.n = 128;
    spec.target.psi = Eigen::VectorXd::Zero(20);
    spec.seed = 12;
    const auto gen = gen_binary_vector(spec);
    const auto model = empirical_nuisance(gen.data);
    const auto table = scaled_pseudo_outcomes(gen.data, model, 0.0);
    const auto dense = assemble_vector(table, gen.data);

    RiskQuadratic op;
    op.form = RiskQuadratic::Gram::Operator;
    op.k = 20;
    op.op_stride = gen.data.spec.stride();
    op.b = dense.b;
    for (std::size_t p = 0; p < table.n_rows(); ++p) {
        const auto row = gen.data.a_row(table.rows[p]);
        op.op_rows.insert(op.op_rows.end(), row.begin(), row.end());
        ++op.op_n;
    }
    Rng rng(13);
    for (int t = 0; t < 10; ++t) {
        Eigen::VectorXd v(20);
        for (int a = 0; a < 20; ++a) v[a] = rng.next_normal();
        CHECK((op.gram_times(v) - dense.gram_times(v)).lpNorm<Eigen::Infinity>() <= 1e-12);
        CHECK(evaluate(op, v) == doctest::Approx(evaluate(dense, v)).epsilon(1e-12));
    }
}
