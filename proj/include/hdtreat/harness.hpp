#pragma once

#include <array>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hdtreat/eval.hpp"
#include "hdtreat/nuisance.hpp"
#include "hdtreat/pseudo.hpp"
#include "hdtreat/risk.hpp"
#include "hdtreat/solver.hpp"

namespace hdtreat {

enum class NuisanceMode { Oracle, Empirical, Corrupted };
enum class DgpFamily { Single, Vector, HardDense, HardSparse };

// How the per-point target vector is built from (k, s).
enum class TargetRule {
    FixedFromTemplate,  // take the template's psi verbatim (k must match)
    SparseFirstCoords,  // amplitude on the first round(s) coordinates, L0
    SpreadL1,           // s/k on every coordinate, L1 budget s
};

enum class BudgetRule { Fixed, TrueNorm };

struct SweepPoint {
    std::size_t n = 0;
    int k = 0;
    double s = 0.0;
};

struct ExperimentSpec {
    DgpFamily family = DgpFamily::Single;
    DgpSpec dgp;  // template; n, k, target are overridden per sweep point
    TargetRule target_rule = TargetRule::SparseFirstCoords;
    double amplitude = 1.0;
    NuisanceMode nuisance_mode = NuisanceMode::Oracle;
    double delta = 0.0;  // Corrupted mode
    double eps = 0.0;
    double nuisance_floor = -1.0;  // Empirical mode; < 0 selects the default
    EstimatorConfig estimator;
    BudgetRule budget_rule = BudgetRule::TrueNorm;
    bool use_estimated_intercept = false;
    std::optional<double> hard_epsilon;  // override for hard-instance families
    std::vector<SweepPoint> sweep;
    int replications = 1;
    std::uint64_t base_seed = 1;
    std::vector<std::string> rate_metrics;

    void validate() const;
};

inline constexpr std::array<const char*, 7> kMetricNames = {
    "wmse_pop", "wmse_emp", "pred_mse", "l1_norm", "l0_norm", "iterations", "kkt_residual"};

struct MetricSet {
    std::array<double, kMetricNames.size()> values;
    MetricSet() { values.fill(std::numeric_limits<double>::quiet_NaN()); }
    double& operator[](std::size_t i) { return values[i]; }
    double operator[](std::size_t i) const { return values[i]; }
};

std::size_t metric_index(const std::string& name);

struct ReplicationRecord {
    std::size_t point_index = 0;
    int rep = 0;
    std::uint64_t seed = 0;
    bool ok = false;
    std::string error;
    MetricSet metrics;
};

struct PointSummary {
    SweepPoint point;
    int replications = 0;
    int failed = 0;
    bool all_failed = false;
    std::array<double, kMetricNames.size()> mean;
    std::array<double, kMetricNames.size()> se;
};

struct ExperimentReport {
    std::vector<ReplicationRecord> replications;
    std::vector<PointSummary> summary;
    std::vector<std::pair<std::string, RateFit>> rate_fits;
};

std::uint64_t replication_seed(const ExperimentSpec& spec, std::size_t point_index, int rep);

// Dispatch on the configured estimator; `budget` is the constraint level or
// threshold to use (already resolved from the budget rule or a CV candidate).
Solution solve_estimator(const RiskQuadratic& risk, const PseudoOutcomeTable& table,
                         const EstimatorConfig& cfg, double budget);

// One full pipeline pass: generate -> split -> nuisances on D1 ->
// pseudo-outcomes on D2 -> assemble -> solve -> score against the truth.
// Stage errors are captured in the record, not thrown.
ReplicationRecord run_replication(const ExperimentSpec& spec, std::size_t point_index, int rep);

// Replications run on a small worker pool; records land in slots keyed by
// (point, rep) and aggregation walks them in fixed order with pairwise
// reduction, so the report is identical for every thread count.
ExperimentReport run_experiment(const ExperimentSpec& spec, int threads = 1);

struct CrossValidationResult {
    double chosen = 0.0;
    std::vector<std::pair<double, double>> curve;  // (candidate, held-out risk)
};

// K-fold selection of the constraint budget within D2: fit on the training
// folds, score with the estimated risk on the held-out fold, reusing the
// D1 nuisances and weights throughout; lowest-s tie-break. Folds are a
// deterministic round-robin over the D2 rows (the rows are iid, so no
// shuffle is needed and the procedure has no random input of its own).
CrossValidationResult cross_validate_s(const Dataset& data, const NuisanceModel& model,
                                       double psi0, const EstimatorConfig& estimator,
                                       std::span<const double> candidates, int folds);

// replications.csv, summary.csv, ratefits.csv under out_dir.
void write_report_csvs(const ExperimentReport& report, const ExperimentSpec& spec,
                       const std::string& out_dir);

// Target construction shared by the harness and the CLI.
TargetParameter make_target(TargetRule rule, const TargetParameter& tmpl, int k, double s,
                            double amplitude);

}  // namespace hdtreat
