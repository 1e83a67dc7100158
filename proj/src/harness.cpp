#include "hdtreat/harness.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <thread>

#include <Eigen/Dense>

namespace hdtreat {

void ExperimentSpec::validate() const {
    if (replications < 1) throw invalid_input("ExperimentSpec: replications must be >= 1");
    if (sweep.empty()) throw invalid_input("ExperimentSpec: sweep must be non-empty");
    for (const auto& p : sweep) {
        if (p.n < 2 || p.k < 1 || p.s < 0) throw invalid_input("ExperimentSpec: bad sweep point");
    }
    estimator.validate();
    for (const auto& m : rate_metrics) metric_index(m);
}

std::size_t metric_index(const std::string& name) {
    for (std::size_t i = 0; i < kMetricNames.size(); ++i)
        if (name == kMetricNames[i]) return i;
    throw invalid_input("unknown metric: " + name);
}

std::uint64_t replication_seed(const ExperimentSpec& spec, std::size_t point_index, int rep) {
    return mix_seed(spec.base_seed, point_index, static_cast<std::uint64_t>(rep));
}

TargetParameter make_target(TargetRule rule, const TargetParameter& tmpl, int k, double s,
                            double amplitude) {
    TargetParameter t;
    switch (rule) {
        case TargetRule::FixedFromTemplate:
            if (tmpl.psi.size() != k)
                throw invalid_input("make_target: template psi does not match k");
            return tmpl;
        case TargetRule::SparseFirstCoords: {
            const int nnz = std::min<int>(k, static_cast<int>(std::llround(s)));
            t.psi0 = tmpl.psi0;
            t.psi = Eigen::VectorXd::Zero(k);
            for (int a = 0; a < nnz; ++a) t.psi[a] = amplitude;
            t.sparsity_norm = SparsityNorm::L0;
            t.s = nnz;
            return t;
        }
        case TargetRule::SpreadL1:
            t.psi0 = tmpl.psi0;
            t.psi = Eigen::VectorXd::Constant(k, s / k);
            t.sparsity_norm = SparsityNorm::L1;
            t.s = s;
            return t;
    }
    throw internal_error("make_target: unreachable");
}

namespace {

GeneratedData generate_point(const ExperimentSpec& spec, const SweepPoint& point,
                             std::uint64_t seed) {
    switch (spec.family) {
        case DgpFamily::Single:
        case DgpFamily::Vector: {
            DgpSpec d = spec.dgp;
            d.spec.kind = spec.family == DgpFamily::Single ? TreatmentKind::SingleMultiValued
                                                           : TreatmentKind::BinaryVector;
            d.spec.k = point.k;
            d.n = point.n;
            d.seed = seed;
            d.target = make_target(spec.target_rule, spec.dgp.target, point.k, point.s,
                                   spec.amplitude);
            return spec.family == DgpFamily::Single ? gen_single_multivalued(d)
                                                    : gen_binary_vector(d);
        }
        case DgpFamily::HardDense:
            return gen_hard_instance(point.k, point.n, PackingMode::Dense, 0, spec.hard_epsilon,
                                     seed, spec.dgp.d, spec.dgp.fold_ratio);
        case DgpFamily::HardSparse:
            return gen_hard_instance(point.k, point.n, PackingMode::Sparse,
                                     static_cast<int>(std::llround(point.s)), spec.hard_epsilon,
                                     seed, spec.dgp.d, spec.dgp.fold_ratio);
    }
    throw internal_error("generate_point: unreachable");
}

double resolve_budget(const ExperimentSpec& spec, const TargetParameter& target) {
    if (spec.budget_rule == BudgetRule::Fixed) return spec.estimator.budget;
    switch (spec.estimator.method) {
        case Method::LassoConstrained:
            return target.psi.lpNorm<1>();
        case Method::BestSubset: {
            int nnz = 0;
            for (Eigen::Index a = 0; a < target.psi.size(); ++a)
                if (target.psi[a] != 0.0) ++nnz;
            return nnz;
        }
        default:
            return spec.estimator.budget;  // thresholds have no true-norm analogue
    }
}

Eigen::VectorXd means_as_full_vector(const PseudoOutcomeTable& table, int k) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(k);
    const auto means = table.level_means();
    for (std::size_t l = 0; l < table.n_levels(); ++l) m[table.level_ids[l] - 1] = means[l];
    return m;
}

}  // namespace

Solution solve_estimator(const RiskQuadratic& risk, const PseudoOutcomeTable& table,
                         const EstimatorConfig& cfg, double budget) {
    const bool single = table.spec.kind == TreatmentKind::SingleMultiValued;
    switch (cfg.method) {
        case Method::LassoConstrained:
            return solve_lasso_constrained(risk, budget, cfg);
        case Method::BestSubset:
            return solve_best_subset(risk, static_cast<int>(std::llround(budget)), cfg);
        case Method::SoftThreshold:
        case Method::HardThreshold: {
            if (!single)
                throw invalid_input("threshold estimators apply to single multi-valued treatments");
            const Eigen::VectorXd m = means_as_full_vector(table, risk.k);
            Solution sol;
            sol.beta = cfg.method == Method::SoftThreshold ? soft_threshold_estimator(m, budget)
                                                           : hard_threshold_estimator(m, budget);
            sol.objective = evaluate(risk, sol.beta);
            sol.exact = true;
            return sol;
        }
        case Method::TrivialZero: {
            Solution sol;
            sol.beta = Eigen::VectorXd::Zero(risk.k);
            sol.objective = evaluate(risk, sol.beta);
            sol.exact = true;
            return sol;
        }
        case Method::PluginMean: {
            Solution sol;
            if (single) {
                sol.beta = means_as_full_vector(table, risk.k);
            } else {
                Eigen::LDLT<Eigen::MatrixXd> ldlt(risk.dense);
                sol.beta = ldlt.solve(risk.b);
                if (!sol.beta.allFinite())
                    throw numeric_error("PluginMean: singular design second moment");
            }
            sol.objective = evaluate(risk, sol.beta);
            sol.exact = true;
            return sol;
        }
    }
    throw internal_error("solve_estimator: unreachable");
}

ReplicationRecord run_replication(const ExperimentSpec& spec, std::size_t point_index, int rep) {
    ReplicationRecord rec;
    rec.point_index = point_index;
    rec.rep = rep;
    rec.seed = replication_seed(spec, point_index, rep);
    try {
        const SweepPoint& point = spec.sweep.at(point_index);
        GeneratedData gen = generate_point(spec, point, rec.seed);
        const Dataset& data = gen.data;
        const DgpTruth& truth = gen.truth;

        NuisanceModel model;
        switch (spec.nuisance_mode) {
            case NuisanceMode::Oracle:
                model = oracle_nuisance(truth, data);
                break;
            case NuisanceMode::Empirical:
                model = empirical_nuisance(data, spec.nuisance_floor);
                break;
            case NuisanceMode::Corrupted:
                model = corrupt_nuisance(oracle_nuisance(truth, data), spec.delta, spec.eps, truth);
                break;
        }

        const double psi0 = spec.use_estimated_intercept
                                ? estimate_intercept(data, model)
                                : truth.target.psi0;
        const PseudoOutcomeTable table = scaled_pseudo_outcomes(data, model, psi0);
        const bool single = data.spec.kind == TreatmentKind::SingleMultiValued;
        const RiskQuadratic risk =
            single ? assemble_single(table, data) : assemble_vector(table, data);

        const double budget = resolve_budget(spec, truth.target);
        const Solution sol = solve_estimator(risk, table, spec.estimator, budget);

        if (single) {
            rec.metrics[metric_index("wmse_pop")] =
                weighted_mse_single(sol.beta, truth.target.psi, truth.level_prob);
            std::vector<double> w2(point.k, 0.0);
            std::size_t n2 = 0;
            for (std::size_t i = 0; i < data.n; ++i) {
                if (data.fold[i] != FoldId::D2) continue;
                w2[data.a_level[i] - 1] += 1.0;
                ++n2;
            }
            for (double& w : w2) w /= static_cast<double>(n2);
            rec.metrics[metric_index("wmse_emp")] =
                weighted_mse_single(sol.beta, truth.target.psi, w2);
        } else {
            const Eigen::MatrixXd second_moment =
                truth.tilt == 0.0 ? bernoulli_half_second_moment(point.k)
                                  : mc_second_moment(truth, 1000000, mix_seed(rec.seed, 0xe2, 0));
            rec.metrics[metric_index("pred_mse")] =
                prediction_mse_vector(sol.beta, truth.target.psi, second_moment);
        }
        rec.metrics[metric_index("l1_norm")] = sol.beta.lpNorm<1>();
        double l0 = 0;
        for (Eigen::Index a = 0; a < sol.beta.size(); ++a)
            if (sol.beta[a] != 0.0) ++l0;
        rec.metrics[metric_index("l0_norm")] = l0;
        rec.metrics[metric_index("iterations")] = sol.iterations;
        rec.metrics[metric_index("kkt_residual")] = sol.kkt_residual;
        rec.ok = true;
    } catch (const std::exception& e) {
        rec.ok = false;
        rec.error = e.what();
    }
    return rec;
}

ExperimentReport run_experiment(const ExperimentSpec& spec, int threads) {
    spec.validate();
    if (threads < 1) threads = 1;
    const std::size_t n_points = spec.sweep.size();
    const std::size_t total = n_points * static_cast<std::size_t>(spec.replications);

    ExperimentReport report;
    report.replications.resize(total);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const std::size_t t = next.fetch_add(1);
            if (t >= total) return;
            const std::size_t point = t / spec.replications;
            const int rep = static_cast<int>(t % spec.replications);
            report.replications[t] = run_replication(spec, point, rep);
        }
    };
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }

    for (std::size_t p = 0; p < n_points; ++p) {
        PointSummary s;
        s.point = spec.sweep[p];
        s.replications = spec.replications;
        std::vector<double> vals;
        vals.reserve(spec.replications);
        for (std::size_t m = 0; m < kMetricNames.size(); ++m) {
            vals.clear();
            for (int r = 0; r < spec.replications; ++r) {
                const auto& rec = report.replications[p * spec.replications + r];
                if (rec.ok && std::isfinite(rec.metrics[m])) vals.push_back(rec.metrics[m]);
            }
            if (vals.empty()) {
                s.mean[m] = s.se[m] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            const double n = static_cast<double>(vals.size());
            const double mean = pairwise_sum(vals) / n;
            s.mean[m] = mean;
            if (vals.size() > 1) {
                const double ss = pairwise_sum(vals.size(), [&](std::size_t i) {
                    const double d = vals[i] - mean;
                    return d * d;
                });
                s.se[m] = std::sqrt(ss / (n - 1.0) / n);
            } else {
                s.se[m] = 0.0;
            }
        }
        s.failed = 0;
        for (int r = 0; r < spec.replications; ++r)
            if (!report.replications[p * spec.replications + r].ok) ++s.failed;
        s.all_failed = (s.failed == spec.replications);
        report.summary.push_back(std::move(s));
    }

    for (const auto& name : spec.rate_metrics) {
        const std::size_t m = metric_index(name);
        std::vector<std::pair<double, double>> pts;
        for (const auto& s : report.summary)
            if (!s.all_failed && std::isfinite(s.mean[m]) && s.mean[m] > 0)
                pts.emplace_back(static_cast<double>(s.point.n), s.mean[m]);
        if (pts.size() >= 2) report.rate_fits.emplace_back(name, rate_fit(pts));
    }
    return report;
}

CrossValidationResult cross_validate_s(const Dataset& data, const NuisanceModel& model,
                                       double psi0, const EstimatorConfig& estimator,
                                       std::span<const double> candidates, int folds) {
    if (folds < 2) throw invalid_input("cross_validate_s: need at least 2 folds");
    if (candidates.empty()) throw invalid_input("cross_validate_s: no candidate budgets");
    const PseudoOutcomeTable table = scaled_pseudo_outcomes(data, model, psi0);
    const std::size_t n2 = table.n_rows();
    if (n2 < static_cast<std::size_t>(folds))
        throw invalid_input("cross_validate_s: a CV fold would be empty");
    const bool single = data.spec.kind == TreatmentKind::SingleMultiValued;

    std::vector<std::vector<std::size_t>> group(folds);
    for (std::size_t i = 0; i < n2; ++i) group[i % folds].push_back(i);

    CrossValidationResult result;
    double best_score = 0.0;
    bool have_best = false;
    for (const double s : candidates) {
        double score = 0.0;
        for (int f = 0; f < folds; ++f) {
            std::vector<std::size_t> train;
            train.reserve(n2 - group[f].size());
            for (int g = 0; g < folds; ++g)
                if (g != f) train.insert(train.end(), group[g].begin(), group[g].end());
            const RiskQuadratic fit_risk =
                single ? assemble_single(table, data, train) : assemble_vector(table, data, train);
            const Solution sol = solve_estimator(fit_risk, table, estimator, s);
            const RiskQuadratic heldout = single ? assemble_single(table, data, group[f])
                                                 : assemble_vector(table, data, group[f]);
            score += evaluate(heldout, sol.beta);
        }
        score /= folds;
        result.curve.emplace_back(s, score);
        if (!have_best || score < best_score ||
            (score == best_score && s < result.chosen)) {
            best_score = score;
            result.chosen = s;
            have_best = true;
        }
    }
    return result;
}

namespace {

std::string sanitize(std::string s) {
    for (char& c : s)
        if (c == ',' || c == '\n' || c == '\r') c = ';';
    return s;
}

}  // namespace

void write_report_csvs(const ExperimentReport& report, const ExperimentSpec& spec,
                       const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);

    {
        std::ofstream out(fs::path(out_dir) / "replications.csv", std::ios::binary);
        out << "point,n,k,s,rep,seed,status,error";
        for (const char* m : kMetricNames) out << "," << m;
        out << "\n";
        for (const auto& rec : report.replications) {
            const auto& pt = spec.sweep[rec.point_index];
            out << rec.point_index << "," << pt.n << "," << pt.k << "," << format_double(pt.s)
                << "," << rec.rep << "," << rec.seed << "," << (rec.ok ? "ok" : "failed") << ","
                << sanitize(rec.error);
            for (std::size_t m = 0; m < kMetricNames.size(); ++m)
                out << "," << format_double(rec.metrics[m]);
            out << "\n";
        }
    }
    {
        std::ofstream out(fs::path(out_dir) / "summary.csv", std::ios::binary);
        out << "point,n,k,s,replications,failed,all_failed";
        for (const char* m : kMetricNames) out << "," << m << "_mean," << m << "_se";
        out << "\n";
        for (std::size_t p = 0; p < report.summary.size(); ++p) {
            const auto& s = report.summary[p];
            out << p << "," << s.point.n << "," << s.point.k << "," << format_double(s.point.s)
                << "," << s.replications << "," << s.failed << "," << (s.all_failed ? 1 : 0);
            for (std::size_t m = 0; m < kMetricNames.size(); ++m)
                out << "," << format_double(s.mean[m]) << "," << format_double(s.se[m]);
            out << "\n";
        }
    }
    {
        std::ofstream out(fs::path(out_dir) / "ratefits.csv", std::ios::binary);
        out << "metric,slope,intercept,r_squared,se_slope,n_points\n";
        for (const auto& [name, fit] : report.rate_fits) {
            out << name << "," << format_double(fit.slope) << "," << format_double(fit.intercept)
                << "," << format_double(fit.r_squared) << "," << format_double(fit.se_slope) << ","
                << fit.points.size() << "\n";
        }
    }
}

}  // namespace hdtreat
