#include "hdtreat/commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

namespace hdtreat {

namespace {

namespace fs = std::filesystem;

[[noreturn]] void bad_value(const std::string& key, const std::string& value) {
    throw invalid_input("config: bad value for " + key + ": '" + value + "'");
}

DgpFamily parse_family(const RunConfig& cfg) {
    const std::string kind = cfg.get_string("dgp.kind", "single");
    if (kind == "single") return DgpFamily::Single;
    if (kind == "vector") return DgpFamily::Vector;
    if (kind == "hard_dense") return DgpFamily::HardDense;
    if (kind == "hard_sparse") return DgpFamily::HardSparse;
    bad_value("dgp.kind", kind);
}

OutcomeNoise parse_noise(const RunConfig& cfg) {
    const std::string s = cfg.get_string("dgp.noise", "gaussian");
    if (s == "gaussian") return OutcomeNoise::Gaussian;
    if (s == "bernoulli") return OutcomeNoise::Bernoulli;
    bad_value("dgp.noise", s);
}

PropensityProfile parse_propensity(const RunConfig& cfg) {
    const std::string s = cfg.get_string("dgp.propensity", "exact_uniform");
    if (s == "exact_uniform") return PropensityProfile::ExactUniform;
    if (s == "near_uniform") return PropensityProfile::NearUniform;
    bad_value("dgp.propensity", s);
}

CovariateLaw parse_covariates(const RunConfig& cfg) {
    const std::string s = cfg.get_string("dgp.covariates", "uniform");
    if (s == "uniform") return CovariateLaw::Uniform01;
    if (s == "gaussian") return CovariateLaw::StdGaussian;
    bad_value("dgp.covariates", s);
}

Method parse_method(const RunConfig& cfg) {
    const std::string s = cfg.get_string("estimator.method", "lasso");
    if (s == "lasso") return Method::LassoConstrained;
    if (s == "best_subset") return Method::BestSubset;
    if (s == "soft_threshold") return Method::SoftThreshold;
    if (s == "hard_threshold") return Method::HardThreshold;
    if (s == "trivial_zero") return Method::TrivialZero;
    if (s == "plugin_mean") return Method::PluginMean;
    bad_value("estimator.method", s);
}

TargetRule parse_target_rule(const RunConfig& cfg) {
    const std::string s = cfg.get_string("dgp.target", "sparse");
    if (s == "sparse") return TargetRule::SparseFirstCoords;
    if (s == "spread") return TargetRule::SpreadL1;
    if (s == "explicit") return TargetRule::FixedFromTemplate;
    bad_value("dgp.target", s);
}

EstimatorConfig parse_estimator(const RunConfig& cfg, BudgetRule& rule) {
    EstimatorConfig est;
    est.method = parse_method(cfg);
    const std::string budget = cfg.get_string("estimator.budget", "auto");
    if (budget == "auto") {
        rule = BudgetRule::TrueNorm;
        est.budget = 0.0;
    } else {
        rule = BudgetRule::Fixed;
        RunConfig tmp;
        tmp.set("b", budget);
        est.budget = tmp.get_double("b", 0.0);
    }
    est.solver_tol = cfg.get_double("estimator.solver_tol", 1e-10);
    est.max_iters = static_cast<int>(cfg.get_int("estimator.max_iters", 0));
    est.validate();
    return est;
}

DgpSpec dgp_spec_from_config(const RunConfig& cfg, DgpFamily family) {
    DgpSpec spec;
    spec.spec.kind = family == DgpFamily::Vector ? TreatmentKind::BinaryVector
                                                 : TreatmentKind::SingleMultiValued;
    spec.spec.k = static_cast<int>(cfg.get_int("dgp.k", 2));
    spec.n = static_cast<std::size_t>(cfg.get_int("dgp.n", 100));
    spec.d = static_cast<int>(cfg.get_int("dgp.d", 1));
    spec.noise = parse_noise(cfg);
    spec.sigma = cfg.get_double("dgp.sigma", 1.0);
    spec.propensity = parse_propensity(cfg);
    spec.near_c = cfg.get_double("dgp.near_c", 0.5);
    spec.near_C = cfg.get_double("dgp.near_C", 2.0);
    spec.confounding = cfg.get_double("dgp.confounding", 0.0);
    spec.covariates = parse_covariates(cfg);
    spec.fold_ratio = cfg.get_double("dgp.fold_ratio", 0.5);
    spec.seed = cfg.get_uint64("seed", 1);

    const TargetRule rule = parse_target_rule(cfg);
    TargetParameter tmpl;
    tmpl.psi0 = cfg.get_double("dgp.psi0", 0.0);
    if (rule == TargetRule::FixedFromTemplate) {
        const auto values = cfg.get_doubles("dgp.psi");
        if (static_cast<int>(values.size()) != spec.spec.k)
            throw invalid_input("config: dgp.psi must list k values");
        tmpl.psi = Eigen::Map<const Eigen::VectorXd>(values.data(), values.size());
        tmpl.sparsity_norm = SparsityNorm::L1;
        tmpl.s = tmpl.psi.lpNorm<1>();
        spec.target = tmpl;
    } else {
        spec.target = make_target(rule, tmpl, spec.spec.k, cfg.get_double("dgp.s", 0.0),
                                  cfg.get_double("dgp.amplitude", 1.0));
    }
    return spec;
}

void write_truth_sidecar(const fs::path& path, const RunConfig& cfg, const DgpTruth& truth,
                         std::size_t n, std::uint64_t seed) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("cannot open for writing: " + path.string());
    out << "kind = " << cfg.get_string("dgp.kind", "single") << "\n";
    out << "k = " << truth.spec.k << "\n";
    out << "n = " << n << "\n";
    out << "d = " << truth.d << "\n";
    out << "seed = " << seed << "\n";
    out << "noise = " << (truth.noise == OutcomeNoise::Gaussian ? "gaussian" : "bernoulli")
        << "\n";
    out << "sigma = " << format_double(truth.sigma) << "\n";
    out << "confounding_tilt = " << format_double(truth.tilt) << "\n";
    out << "covariates = "
        << (truth.law == CovariateLaw::Uniform01 ? "uniform" : "gaussian") << "\n";
    out << "psi0 = " << format_double(truth.target.psi0) << "\n";
    for (int a = 1; a <= truth.spec.k; ++a)
        out << "psi_" << a << " = " << format_double(truth.target.psi[a - 1]) << "\n";
}

}  // namespace

void cmd_dgp(const RunConfig& cfg, const std::string& out_dir) {
    const DgpFamily family = parse_family(cfg);
    fs::create_directories(out_dir);

    GeneratedData gen;
    if (family == DgpFamily::HardDense || family == DgpFamily::HardSparse) {
        const int k = static_cast<int>(cfg.get_int("dgp.k", 8));
        const auto n = static_cast<std::size_t>(cfg.get_int("dgp.n", 100));
        const int s = static_cast<int>(cfg.get_int("dgp.s", 1));
        std::optional<double> eps;
        if (cfg.has("dgp.epsilon")) eps = cfg.get_double("dgp.epsilon", 0.0);
        gen = gen_hard_instance(k, n,
                                family == DgpFamily::HardDense ? PackingMode::Dense
                                                               : PackingMode::Sparse,
                                s, eps, cfg.get_uint64("seed", 1),
                                static_cast<int>(cfg.get_int("dgp.d", 1)),
                                cfg.get_double("dgp.fold_ratio", 0.5));
    } else {
        const DgpSpec spec = dgp_spec_from_config(cfg, family);
        gen = family == DgpFamily::Single ? gen_single_multivalued(spec) : gen_binary_vector(spec);
    }
    cfg.ensure_all_consumed();

    write_dataset_csv(gen.data, (fs::path(out_dir) / "dataset.csv").string());
    write_truth_sidecar(fs::path(out_dir) / "truth.txt", cfg, gen.truth, gen.data.n,
                        cfg.get_uint64("seed", 1));
}

void cmd_estimate(const RunConfig& cfg, const std::string& dataset_path,
                  const std::string& out_dir) {
    Dataset data = read_dataset_csv(dataset_path);
    if (cfg.has("estimate.k")) {
        const int k = static_cast<int>(cfg.get_int("estimate.k", 0));
        if (k < data.spec.k) throw invalid_input("estimate.k is smaller than observed levels");
        data.spec.k = k;
    } else {
        cfg.get_int("estimate.k", 0);  // mark consumed
    }
    BudgetRule rule = BudgetRule::Fixed;
    const EstimatorConfig est = parse_estimator(cfg, rule);
    if (rule != BudgetRule::Fixed)
        throw invalid_input("estimate: estimator.budget must be a number");
    const double psi0 = cfg.get_double("estimate.psi0", 0.0);
    const double floor = cfg.get_double("estimate.floor", -1.0);
    cfg.ensure_all_consumed();

    const NuisanceModel model = empirical_nuisance(data, floor);
    const PseudoOutcomeTable table = scaled_pseudo_outcomes(data, model, psi0);
    const bool single = data.spec.kind == TreatmentKind::SingleMultiValued;
    const RiskQuadratic risk = single ? assemble_single(table, data) : assemble_vector(table, data);
    const Solution sol = solve_estimator(risk, table, est, est.budget);

    fs::create_directories(out_dir);
    {
        std::ofstream out(fs::path(out_dir) / "estimates.csv", std::ios::binary);
        out << "level,psi_hat\n";
        for (int a = 1; a <= data.spec.k; ++a)
            out << a << "," << format_double(sol.beta[a - 1]) << "\n";
    }
    {
        std::ofstream out(fs::path(out_dir) / "diagnostics.txt", std::ios::binary);
        out << "objective = " << format_double(sol.objective) << "\n";
        out << "iterations = " << sol.iterations << "\n";
        out << "kkt_residual = " << format_double(sol.kkt_residual) << "\n";
        out << "exact = " << (sol.exact ? 1 : 0) << "\n";
        out << "psi0 = " << format_double(psi0) << "\n";
    }
}

ExperimentSpec experiment_spec_from_config(const RunConfig& cfg) {
    ExperimentSpec spec;
    spec.family = parse_family(cfg);
    spec.dgp = dgp_spec_from_config(cfg, spec.family);
    spec.target_rule = parse_target_rule(cfg);
    spec.amplitude = cfg.get_double("dgp.amplitude", 1.0);
    if (spec.target_rule == TargetRule::FixedFromTemplate) spec.dgp.target.validate();

    const std::string nuis = cfg.get_string("experiment.nuisance", "oracle");
    if (nuis == "oracle")
        spec.nuisance_mode = NuisanceMode::Oracle;
    else if (nuis == "empirical")
        spec.nuisance_mode = NuisanceMode::Empirical;
    else if (nuis == "corrupted")
        spec.nuisance_mode = NuisanceMode::Corrupted;
    else
        bad_value("experiment.nuisance", nuis);
    spec.delta = cfg.get_double("experiment.delta", 0.0);
    spec.eps = cfg.get_double("experiment.eps", 0.0);
    spec.nuisance_floor = cfg.get_double("experiment.floor", -1.0);

    spec.estimator = parse_estimator(cfg, spec.budget_rule);
    const std::string intercept = cfg.get_string("experiment.intercept", "known");
    if (intercept == "estimated")
        spec.use_estimated_intercept = true;
    else if (intercept != "known")
        bad_value("experiment.intercept", intercept);
    if (cfg.has("dgp.epsilon")) spec.hard_epsilon = cfg.get_double("dgp.epsilon", 0.0);

    for (const auto& word : cfg.get_words("experiment.sweep")) {
        SweepPoint p;
        const auto c1 = word.find(':');
        const auto c2 = word.find(':', c1 == std::string::npos ? 0 : c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            throw invalid_input("config: experiment.sweep entries must be n:k:s");
        RunConfig tmp;
        tmp.set("n", word.substr(0, c1));
        tmp.set("k", word.substr(c1 + 1, c2 - c1 - 1));
        tmp.set("s", word.substr(c2 + 1));
        p.n = static_cast<std::size_t>(tmp.get_int("n", 0));
        p.k = static_cast<int>(tmp.get_int("k", 0));
        p.s = tmp.get_double("s", 0.0);
        spec.sweep.push_back(p);
    }
    if (spec.sweep.empty()) throw invalid_input("config: experiment.sweep is required");
    spec.replications = static_cast<int>(cfg.get_int("experiment.replications", 1));
    spec.base_seed = cfg.get_uint64("seed", 1);
    spec.rate_metrics = cfg.get_words("experiment.rate_metrics");
    spec.validate();
    return spec;
}

void cmd_experiment(const RunConfig& cfg, const std::string& out_dir, int threads) {
    const ExperimentSpec spec = experiment_spec_from_config(cfg);
    cfg.ensure_all_consumed();
    const ExperimentReport report = run_experiment(spec, threads);
    write_report_csvs(report, spec, out_dir);
    bool any_ok = false;
    for (const auto& s : report.summary) any_ok = any_ok || !s.all_failed;
    if (!any_ok) throw numeric_error("experiment: every sweep point failed");
}

void cmd_cv(const RunConfig& cfg, const std::string& dataset_path, const std::string& out_dir) {
    Dataset data = read_dataset_csv(dataset_path);
    BudgetRule rule = BudgetRule::Fixed;
    EstimatorConfig est = parse_estimator(cfg, rule);
    const double psi0 = cfg.get_double("estimate.psi0", 0.0);
    const double floor = cfg.get_double("estimate.floor", -1.0);
    const auto candidates = cfg.get_doubles("cv.candidates");
    const int folds = static_cast<int>(cfg.get_int("cv.folds", 2));
    cfg.get_uint64("seed", 1);  // fold assignment is deterministic; accept the key anyway
    cfg.ensure_all_consumed();
    if (candidates.empty()) throw invalid_input("config: cv.candidates is required");

    const NuisanceModel model = empirical_nuisance(data, floor);
    const CrossValidationResult result =
        cross_validate_s(data, model, psi0, est, candidates, folds);

    fs::create_directories(out_dir);
    std::ofstream out(fs::path(out_dir) / "cv.csv", std::ios::binary);
    out << "candidate,heldout_risk,chosen\n";
    for (const auto& [s, score] : result.curve)
        out << format_double(s) << "," << format_double(score) << ","
            << (s == result.chosen ? 1 : 0) << "\n";
}

int run_cli(const std::vector<std::string>& args) {
    CLI::App app{"sparse pseudo-outcome regression for high-dimensional treatments"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".";
    std::vector<std::string> overrides;
    std::uint64_t seed = 0;
    bool seed_set = false;
    int threads = 1;
    app.add_option("--config", config_path, "flat key = value config file");
    app.add_option("--set", overrides, "override config entries, KEY=VALUE (repeatable)")
        ->allow_extra_args(false);
    app.add_option("--seed", seed, "seed override")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--threads", threads, "worker threads");
    app.add_option("--out", out_dir, "output directory");

    auto* dgp_cmd = app.add_subcommand("dgp", "generate a dataset and its truth sidecar");
    auto* est_cmd = app.add_subcommand("estimate", "estimate psi from a dataset CSV");
    auto* exp_cmd = app.add_subcommand("experiment", "run a Monte Carlo sweep");
    auto* cv_cmd = app.add_subcommand("cv", "cross-validate the constraint budget");
    std::string dataset_path;
    est_cmd->add_option("dataset", dataset_path, "dataset CSV path")->required();
    cv_cmd->add_option("dataset", dataset_path, "dataset CSV path")->required();
    // accept the global flags on either side of the subcommand name
    for (auto* sub : {dgp_cmd, est_cmd, exp_cmd, cv_cmd}) sub->fallthrough();

    try {
        std::vector<const char*> argv;
        argv.push_back("hdtreat");
        for (const auto& a : args) argv.push_back(a.c_str());
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    try {
        RunConfig cfg =
            config_path.empty() ? RunConfig() : RunConfig::from_file(config_path);
        for (const auto& kv : overrides) {
            const auto eq = kv.find('=');
            if (eq == std::string::npos)
                throw invalid_input("--set expects KEY=VALUE, got: " + kv);
            cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
        }
        if (seed_set) cfg.set("seed", std::to_string(seed));
        if ((dataset_path.empty() ? false : !fs::exists(dataset_path)))
            throw invalid_input("dataset file does not exist: " + dataset_path);

        if (dgp_cmd->parsed()) cmd_dgp(cfg, out_dir);
        if (est_cmd->parsed()) cmd_estimate(cfg, dataset_path, out_dir);
        if (exp_cmd->parsed()) cmd_experiment(cfg, out_dir, threads);
        if (cv_cmd->parsed()) cmd_cv(cfg, dataset_path, out_dir);
        return 0;
    } catch (const invalid_input& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const numeric_error& e) {
        std::cerr << "numeric error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 4;
    }
}

}  // namespace hdtreat
