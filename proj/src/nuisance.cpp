#include "hdtreat/nuisance.hpp"

#include <cmath>
#include <memory>

namespace hdtreat {

double default_propensity_floor(int k, std::size_t n) {
    return 1.0 / (10.0 * k * static_cast<double>(n));
}

NuisanceModel oracle_nuisance(const DgpTruth& truth, const Dataset& data) {
    auto t = std::make_shared<const DgpTruth>(truth);
    NuisanceModel m;
    m.spec = truth.spec;
    m.floor = 0.0;
    m.constant_in_x = (t->tilt == 0.0 && t->mu_tilt == 0.0);
    if (truth.spec.kind == TreatmentKind::SingleMultiValued) {
        m.pi_level = [t](int a, std::span<const double> x) { return t->pi(a, x); };
        m.mu_level = [t](int a, std::span<const double> x) { return t->mu(a, x); };
        m.varpi_hat = empirical_proportions(data, FoldId::D1);
    } else {
        m.pi_combo = [t](std::span<const std::uint64_t> b, std::span<const double> x) {
            return t->pi_combo(b, x);
        };
        m.mu_combo = [t](std::span<const std::uint64_t> b, std::span<const double> x) {
            return t->mu_combo(b, x);
        };
        m.combos = empirical_combinations(data, FoldId::D1);
    }
    return m;
}

NuisanceModel empirical_nuisance(const Dataset& data, double floor, double mu_fallback) {
    data.validate();
    if (floor >= 1.0) throw invalid_input("empirical_nuisance: floor must be < 1");
    if (floor < 0) floor = default_propensity_floor(data.spec.k, data.n);

    NuisanceModel m;
    m.spec = data.spec;
    m.floor = floor;
    m.constant_in_x = true;

    if (data.spec.kind == TreatmentKind::SingleMultiValued) {
        m.varpi_hat = empirical_proportions(data, FoldId::D1);  // throws on empty D1
        const int k = data.spec.k;
        auto sum = std::make_shared<std::vector<double>>(k, 0.0);
        std::vector<std::size_t> count(k, 0);
        for (std::size_t i = 0; i < data.n; ++i) {
            if (data.fold[i] != FoldId::D1) continue;
            (*sum)[data.a_level[i] - 1] += data.y[i];
            ++count[data.a_level[i] - 1];
        }
        auto means = std::make_shared<std::vector<double>>(k, mu_fallback);
        for (int a = 0; a < k; ++a)
            if (count[a] > 0) (*means)[a] = (*sum)[a] / static_cast<double>(count[a]);
        auto varpi = std::make_shared<std::vector<double>>(m.varpi_hat);
        m.pi_level = [varpi](int a, std::span<const double>) { return (*varpi)[a - 1]; };
        m.mu_level = [means](int a, std::span<const double>) { return (*means)[a - 1]; };
    } else {
        auto table = std::make_shared<CombinationTable>(empirical_combinations(data, FoldId::D1));
        m.combos = *table;
        auto means = std::make_shared<std::vector<double>>(table->count(), 0.0);
        {
            std::vector<std::size_t> count(table->count(), 0);
            for (std::size_t i = 0; i < data.n; ++i) {
                if (data.fold[i] != FoldId::D1) continue;
                const auto j = table->find(data.a_row(i));
                (*means)[j] += data.y[i];
                ++count[j];
            }
            for (std::size_t j = 0; j < table->count(); ++j)
                (*means)[j] /= static_cast<double>(count[j]);
        }
        m.pi_combo = [table](std::span<const std::uint64_t> b, std::span<const double>) {
            const auto j = table->find(b);
            return j < 0 ? 0.0 : table->prop[j];
        };
        m.mu_combo = [table, means, mu_fallback](std::span<const std::uint64_t> b,
                                                 std::span<const double>) {
            const auto j = table->find(b);
            return j < 0 ? mu_fallback : (*means)[j];
        };
    }
    return m;
}

CorruptionPattern default_corruption_pattern(double median) {
    CorruptionPattern p;
    auto sgn = [median](std::span<const double> x) { return x[0] > median ? 1.0 : -1.0; };
    p.r_level = [sgn](int, std::span<const double> x) { return sgn(x); };
    p.q_level = p.r_level;
    p.r_combo = [sgn](std::span<const std::uint64_t>, std::span<const double> x) { return sgn(x); };
    p.q_combo = p.r_combo;
    return p;
}

NuisanceModel corrupt_nuisance(const NuisanceModel& base, double delta, double eps,
                               const CorruptionPattern& pattern) {
    if (delta < 0 || eps < 0) throw invalid_input("corrupt_nuisance: delta, eps must be >= 0");
    if (delta >= 1.0)
        throw invalid_input("corrupt_nuisance: delta >= 1 can drive the propensity to 0");

    NuisanceModel m = base;
    m.constant_in_x = base.constant_in_x && delta == 0.0 && eps == 0.0;
    if (base.spec.kind == TreatmentKind::SingleMultiValued) {
        if (delta > 0) {
            auto pi0 = base.pi_level;
            auto r = pattern.r_level;
            m.pi_level = [pi0, r, delta](int a, std::span<const double> x) {
                return pi0(a, x) / (1.0 + delta * r(a, x));
            };
        }
        if (eps > 0) {
            auto mu0 = base.mu_level;
            auto q = pattern.q_level;
            m.mu_level = [mu0, q, eps](int a, std::span<const double> x) {
                return mu0(a, x) + eps * q(a, x);
            };
        }
    } else {
        if (delta > 0) {
            auto pi0 = base.pi_combo;
            auto r = pattern.r_combo;
            m.pi_combo = [pi0, r, delta](std::span<const std::uint64_t> b,
                                         std::span<const double> x) {
                return pi0(b, x) / (1.0 + delta * r(b, x));
            };
        }
        if (eps > 0) {
            auto mu0 = base.mu_combo;
            auto q = pattern.q_combo;
            m.mu_combo = [mu0, q, eps](std::span<const std::uint64_t> b,
                                       std::span<const double> x) {
                return mu0(b, x) + eps * q(b, x);
            };
        }
    }
    return m;
}

NuisanceModel corrupt_nuisance(const NuisanceModel& base, double delta, double eps,
                               const DgpTruth& truth) {
    return corrupt_nuisance(base, delta, eps,
                            default_corruption_pattern(truth.covariate_median()));
}

namespace {

struct NormAccumulator {
    double sum_d = 0, sum_d2 = 0, sum_e = 0, sum_e2 = 0;
    std::size_t n = 0;

    void add(double dsq, double esq) {
        sum_d += dsq;
        sum_d2 += dsq * dsq;
        sum_e += esq;
        sum_e2 += esq * esq;
        ++n;
    }
    ErrorNorms finish(bool mc) const {
        ErrorNorms out;
        const double nn = static_cast<double>(n);
        const double md = sum_d / nn, me = sum_e / nn;
        out.delta = std::sqrt(std::max(md, 0.0));
        out.eps = std::sqrt(std::max(me, 0.0));
        if (mc && n > 1) {
            const double vd = std::max(sum_d2 / nn - md * md, 0.0) / (nn - 1);
            const double ve = std::max(sum_e2 / nn - me * me, 0.0) / (nn - 1);
            if (out.delta > 1e-15) out.se_delta = std::sqrt(vd) / (2 * out.delta);
            if (out.eps > 1e-15) out.se_eps = std::sqrt(ve) / (2 * out.eps);
        }
        return out;
    }
};

template <typename Eval>
ErrorNorms integrate_norms(const DgpTruth& truth, const Eval& eval, std::uint64_t seed,
                           std::size_t mc_draws) {
    NormAccumulator acc;
    if (truth.d == 1 && truth.law == CovariateLaw::Uniform01) {
        // Composite midpoint; the integrands are piecewise smooth with at
        // most one jump (at the median), so this is plenty at 2^14 panels.
        const std::size_t panels = std::size_t{1} << 14;
        double xbuf;
        for (std::size_t i = 0; i < panels; ++i) {
            xbuf = (static_cast<double>(i) + 0.5) / static_cast<double>(panels);
            auto [dsq, esq] = eval(std::span<const double>{&xbuf, 1});
            acc.add(dsq, esq);
        }
        return acc.finish(false);
    }
    Rng rng(seed);
    std::vector<double> x(truth.d);
    for (std::size_t i = 0; i < mc_draws; ++i) {
        truth.draw_x(rng, x);
        auto [dsq, esq] = eval(std::span<const double>{x.data(), x.size()});
        acc.add(dsq, esq);
    }
    return acc.finish(true);
}

}  // namespace

ErrorNorms nuisance_error_norms(const NuisanceModel& model, const DgpTruth& truth, int level,
                                std::uint64_t seed, std::size_t mc_draws) {
    auto eval = [&](std::span<const double> x) {
        const double ratio = truth.pi(level, x) / model.pi(level, x) - 1.0;
        const double diff = truth.mu(level, x) - model.mu(level, x);
        return std::pair<double, double>{ratio * ratio, diff * diff};
    };
    return integrate_norms(truth, eval, seed, mc_draws);
}

ErrorNorms nuisance_error_norms(const NuisanceModel& model, const DgpTruth& truth,
                                std::span<const std::uint64_t> combo, std::uint64_t seed,
                                std::size_t mc_draws) {
    auto eval = [&](std::span<const double> x) {
        const double ratio = truth.pi_combo(combo, x) / model.pi(combo, x) - 1.0;
        const double diff = truth.mu_combo(combo, x) - model.mu(combo, x);
        return std::pair<double, double>{ratio * ratio, diff * diff};
    };
    return integrate_norms(truth, eval, seed, mc_draws);
}

}  // namespace hdtreat
