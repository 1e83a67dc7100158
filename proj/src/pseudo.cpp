#include "hdtreat/pseudo.hpp"

#include <algorithm>
#include <cmath>

namespace hdtreat {

namespace {

double indicator_term(double y, double mu, double pi) {
    if (pi <= 0.0) throw numeric_error("pseudo_outcome: zero propensity at observed treatment");
    return (y - mu) / pi;
}

}  // namespace

double pseudo_outcome(const Dataset& data, std::size_t i, int level, const NuisanceModel& model,
                      double psi0) {
    const auto x = data.x_row(i);
    double v = model.mu(level, x) - psi0;
    if (data.a_level[i] == level)
        v += indicator_term(data.y[i], model.mu(level, x), model.pi(level, x));
    return v;
}

double pseudo_outcome(const Dataset& data, std::size_t i, std::span<const std::uint64_t> combo,
                      const NuisanceModel& model, double psi0) {
    const auto x = data.x_row(i);
    double v = model.mu(combo, x) - psi0;
    const auto own = data.a_row(i);
    if (std::equal(own.begin(), own.end(), combo.begin()))
        v += indicator_term(data.y[i], model.mu(combo, x), model.pi(combo, x));
    return v;
}

std::vector<double> PseudoOutcomeTable::level_means(std::span<const std::size_t> positions) const {
    std::vector<std::size_t> all;
    if (positions.empty()) {
        all.resize(n_rows());
        for (std::size_t p = 0; p < all.size(); ++p) all[p] = p;
        positions = all;
    }
    const std::size_t m = positions.size();
    if (m == 0) throw invalid_input("level_means: empty row subset");
    const std::size_t L = n_levels();
    std::vector<double> mean(L, 0.0);
    if (mu_constant) {
        for (std::size_t l = 0; l < L; ++l) mean[l] = mu_part_const[l] * static_cast<double>(m);
        for (std::size_t p : positions) {
            const auto match = row_match[p];
            if (match >= 0) mean[match] += indicator_part[p];
        }
    } else {
        for (std::size_t l = 0; l < L; ++l) {
            mean[l] = pairwise_sum(m, [&](std::size_t t) {
                return mu_part_dense[positions[t] * L + l];
            });
        }
        for (std::size_t p : positions) {
            const auto match = row_match[p];
            if (match >= 0) mean[match] += indicator_part[p];
        }
    }
    for (double& v : mean) v /= static_cast<double>(m);
    return mean;
}

PseudoOutcomeTable scaled_pseudo_outcomes(const Dataset& data, const NuisanceModel& model,
                                          double psi0, double scaling_override) {
    data.validate();
    const bool single = data.spec.kind == TreatmentKind::SingleMultiValued;

    PseudoOutcomeTable table;
    table.spec = data.spec;
    table.psi0 = psi0;
    table.scaling = scaling_override >= 0
                        ? scaling_override
                        : (single ? std::sqrt(static_cast<double>(data.spec.k)) : 1.0);
    table.rows = data.fold_rows(FoldId::D2);
    table.mu_constant = model.constant_in_x;

    // Table levels: treatment values with positive weight on D1. Levels that
    // never appear in D1 carry zero weight in the risk and are dropped.
    std::vector<std::ptrdiff_t> level_to_pos;
    if (single) {
        level_to_pos.assign(data.spec.k, -1);
        for (int a = 1; a <= data.spec.k; ++a) {
            if (model.varpi_hat[a - 1] > 0.0) {
                level_to_pos[a - 1] = static_cast<std::ptrdiff_t>(table.level_ids.size());
                table.level_ids.push_back(a);
                table.varpi.push_back(model.varpi_hat[a - 1]);
            }
        }
    } else {
        table.combos = model.combos;
        table.varpi = model.combos.prop;
    }
    const std::size_t L = table.varpi.size();
    const std::size_t m = table.rows.size();

    table.row_match.resize(m);
    table.indicator_part.assign(m, 0.0);
    for (std::size_t p = 0; p < m; ++p) {
        const std::size_t i = table.rows[p];
        std::ptrdiff_t match;
        if (single) {
            match = level_to_pos[data.a_level[i] - 1];
        } else {
            match = table.combos.find(data.a_row(i));
        }
        table.row_match[p] = match;
        if (match >= 0) {
            const auto x = data.x_row(i);
            double mu, pi;
            if (single) {
                mu = model.mu(data.a_level[i], x);
                pi = model.pi(data.a_level[i], x);
            } else {
                mu = model.mu(data.a_row(i), x);
                pi = model.pi(data.a_row(i), x);
            }
            table.indicator_part[p] = indicator_term(data.y[i], mu, pi);
        }
    }

    if (table.mu_constant) {
        table.mu_part_const.resize(L);
        const auto x0 = data.x_row(table.rows.front());
        for (std::size_t l = 0; l < L; ++l) {
            const double mu = single ? model.mu(table.level_ids[l], x0)
                                     : model.mu(table.combos.row(l), x0);
            table.mu_part_const[l] = mu - psi0;
        }
    } else {
        table.mu_part_dense.resize(m * L);
        for (std::size_t p = 0; p < m; ++p) {
            const auto x = data.x_row(table.rows[p]);
            for (std::size_t l = 0; l < L; ++l) {
                const double mu =
                    single ? model.mu(table.level_ids[l], x) : model.mu(table.combos.row(l), x);
                table.mu_part_dense[p * L + l] = mu - psi0;
            }
        }
    }
    return table;
}

double estimate_intercept(const Dataset& data, const NuisanceModel& model, InterceptKind kind,
                          int fixed_level) {
    if (data.spec.kind != TreatmentKind::SingleMultiValued)
        throw invalid_input("estimate_intercept: single multi-valued treatments only");
    const int k = data.spec.k;
    const auto rows = data.fold_rows(FoldId::D2);
    if (rows.empty()) throw invalid_input("estimate_intercept: empty D2");

    // D2 means of the uncentered EIFs, i.e. pseudo-outcomes with psi0 = 0.
    std::vector<double> eif_mean(k, 0.0);
    if (model.constant_in_x) {
        const auto x0 = data.x_row(rows.front());
        for (int a = 1; a <= k; ++a) eif_mean[a - 1] = model.mu(a, x0) * rows.size();
        for (std::size_t i : rows) {
            const int a = data.a_level[i];
            const auto x = data.x_row(i);
            eif_mean[a - 1] += indicator_term(data.y[i], model.mu(a, x), model.pi(a, x));
        }
    } else {
        for (std::size_t i : rows) {
            const auto x = data.x_row(i);
            for (int a = 1; a <= k; ++a) eif_mean[a - 1] += model.mu(a, x);
            const int a = data.a_level[i];
            eif_mean[a - 1] += indicator_term(data.y[i], model.mu(a, x), model.pi(a, x));
        }
    }
    for (double& v : eif_mean) v /= static_cast<double>(rows.size());

    switch (kind) {
        case InterceptKind::MeanOfLevels:
            return pairwise_sum(eif_mean) / k;
        case InterceptKind::MedianOfLevels: {
            std::vector<double> sorted = eif_mean;
            std::sort(sorted.begin(), sorted.end());
            return k % 2 == 1 ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);
        }
        case InterceptKind::FixedLevel:
            if (fixed_level < 1 || fixed_level > k)
                throw invalid_input("estimate_intercept: fixed level out of range");
            return eif_mean[fixed_level - 1];
    }
    throw internal_error("estimate_intercept: unreachable");
}

}  // namespace hdtreat
