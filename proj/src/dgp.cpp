#include "hdtreat/dgp.hpp"

#include <algorithm>
#include <bit>
#include <cmath>

namespace hdtreat {

void DgpSpec::validate() const {
    spec.validate();
    if (n < 2) throw invalid_input("DgpSpec: need n >= 2");
    if (d < 1) throw invalid_input("DgpSpec: need d >= 1");
    if (target.psi.size() != spec.k) throw invalid_input("DgpSpec: psi must have length k");
    if (propensity == PropensityProfile::NearUniform) {
        if (!(near_c > 0 && near_c <= near_C))
            throw invalid_input("DgpSpec: NearUniform requires 0 < c <= C");
        if (!(near_c <= 1.0 && near_C >= 1.0))
            throw invalid_input("DgpSpec: NearUniform band must contain the uniform point (c <= 1 <= C)");
    }
    if (noise == OutcomeNoise::Gaussian && sigma < 0)
        throw invalid_input("DgpSpec: sigma must be >= 0");
    if (confounding < 0) throw invalid_input("DgpSpec: confounding must be >= 0");
    if (!(fold_ratio > 0 && fold_ratio < 1)) throw invalid_input("DgpSpec: fold_ratio in (0,1)");
    target.validate();
}

double DgpTruth::pi(int level, std::span<const double> x) const {
    const double p = level_prob[level - 1];
    if (tilt == 0.0) return p;
    const double sg = sgn(x);
    return p * (1.0 + tilt * tilt_sign[level - 1] * sg) / (1.0 + tilt * tilt_norm * sg);
}

double DgpTruth::mu(int level, std::span<const double> x) const {
    double v = target.psi0 + target.psi[level - 1];
    if (mu_tilt != 0.0) v += mu_tilt * sgn(x);
    return v;
}

double DgpTruth::component_prob(int j, std::span<const double> x) const {
    if (tilt == 0.0) return 0.5;
    return 0.5 + 0.25 * tilt * tilt_sign[j] * sgn(x);
}

double DgpTruth::pi_combo(std::span<const std::uint64_t> bits, std::span<const double> x) const {
    double p = 1.0;
    for (int j = 0; j < spec.k; ++j) {
        const bool b = (bits[j / 64] >> (j % 64)) & 1u;
        const double pj = component_prob(j, x);
        p *= b ? pj : (1.0 - pj);
    }
    return p;
}

double DgpTruth::mu_combo(std::span<const std::uint64_t> bits, std::span<const double> x) const {
    double v = target.psi0;
    for (std::size_t w = 0; w < bits.size(); ++w) {
        std::uint64_t word = bits[w];
        while (word) {
            const int j = static_cast<int>(w) * 64 + std::countr_zero(word);
            v += target.psi[j];
            word &= word - 1;
        }
    }
    if (mu_tilt != 0.0) v += mu_tilt * sgn(x);
    return v;
}

void DgpTruth::draw_x(Rng& rng, std::span<double> out) const {
    for (auto& v : out)
        v = (law == CovariateLaw::Uniform01) ? rng.next_double() : rng.next_normal();
}

namespace {

std::vector<double> make_level_probs(const DgpSpec& spec, Rng& rng) {
    const int k = spec.spec.k;
    std::vector<double> p(k, 1.0 / k);
    if (spec.propensity == PropensityProfile::ExactUniform) return p;
    // Paired perturbation: levels 2i, 2i+1 get (1 +- t_i)/k, which keeps the
    // sum at exactly 1 and every entry inside [c/k, C/k].
    const double m = std::min(spec.near_C - 1.0, 1.0 - spec.near_c);
    for (int i = 0; i + 1 < k; i += 2) {
        const double t = m * rng.next_double();
        p[i] = (1.0 + t) / k;
        p[i + 1] = (1.0 - t) / k;
    }
    return p;
}

std::vector<int> make_tilt_signs(int k) {
    std::vector<int> s(k);
    for (int a = 0; a < k; ++a) s[a] = (a % 2 == 0) ? 1 : -1;
    if (k % 2 == 1) s[k - 1] = 0;
    return s;
}

// Largest tilt g for which all pi_a(x) stay within [lo_mult/k, hi_mult/k];
// the constraint region in g is an interval, so bisection applies.
double max_feasible_tilt(const std::vector<double>& p, const std::vector<int>& s, double D,
                         int k, double lo_mult, double hi_mult) {
    auto feasible = [&](double g) {
        for (double sg : {1.0, -1.0}) {
            const double denom = 1.0 + g * D * sg;
            if (denom <= 1e-9) return false;
            for (int a = 0; a < k; ++a) {
                const double v = p[a] * (1.0 + g * s[a] * sg) / denom;
                if (v < lo_mult / k - 1e-15 || v > hi_mult / k + 1e-15) return false;
            }
        }
        return true;
    };
    double lo = 0.0, hi = 0.999;
    if (feasible(hi)) return hi;
    for (int it = 0; it < 60; ++it) {
        const double mid = 0.5 * (lo + hi);
        (feasible(mid) ? lo : hi) = mid;
    }
    return lo;
}

void check_bernoulli_range(double lo, double hi) {
    if (lo < -1e-12 || hi > 1.0 + 1e-12)
        throw invalid_input("Bernoulli outcome: conditional mean outside [0,1]");
}

}  // namespace

GeneratedData gen_single_multivalued(const DgpSpec& spec) {
    spec.validate();
    if (spec.spec.kind != TreatmentKind::SingleMultiValued)
        throw invalid_input("gen_single_multivalued: wrong treatment kind");
    const int k = spec.spec.k;

    Rng prob_rng(mix_seed(spec.seed, 0x5e7, 0));
    DgpTruth truth;
    truth.spec = spec.spec;
    truth.target = spec.target;
    truth.d = spec.d;
    truth.law = spec.covariates;
    truth.noise = spec.noise;
    truth.sigma = spec.sigma;
    truth.level_prob = make_level_probs(spec, prob_rng);
    truth.tilt_sign = make_tilt_signs(k);
    if (spec.confounding > 0) {
        double D = 0;
        for (int a = 0; a < k; ++a) D += truth.level_prob[a] * truth.tilt_sign[a];
        truth.tilt_norm = D;
        const double lo = spec.propensity == PropensityProfile::NearUniform ? spec.near_c : 0.05;
        const double hi = spec.propensity == PropensityProfile::NearUniform ? spec.near_C : 1.95;
        truth.tilt = std::min(spec.confounding,
                              max_feasible_tilt(truth.level_prob, truth.tilt_sign, D, k, lo, hi));
        truth.mu_tilt = 0.5 * truth.tilt;
    }
    if (spec.noise == OutcomeNoise::Bernoulli) {
        for (int a = 0; a < k; ++a) {
            const double base = spec.target.psi0 + spec.target.psi[a];
            check_bernoulli_range(base - truth.mu_tilt, base + truth.mu_tilt);
        }
    }

    // Inverse-CDF tables for the two values of sgn(x).
    std::vector<double> cum_plus(k), cum_minus(k);
    {
        double cp = 0, cm = 0;
        std::vector<double> xp{1.0}, xm{-1.0};
        for (int a = 1; a <= k; ++a) {
            cp += truth.pi(a, xp);
            cm += truth.pi(a, xm);
            cum_plus[a - 1] = cp;
            cum_minus[a - 1] = cm;
        }
        cum_plus[k - 1] = cum_minus[k - 1] = 1.0;
    }

    Dataset data;
    data.spec = spec.spec;
    data.n = spec.n;
    data.d = spec.d;
    data.x.resize(spec.n * spec.d);
    data.a_level.resize(spec.n);
    data.y.resize(spec.n);

    Rng rng(mix_seed(spec.seed, 0x5e7, 1));
    const bool uniform_a = (truth.tilt == 0.0 && spec.propensity == PropensityProfile::ExactUniform);
    for (std::size_t i = 0; i < spec.n; ++i) {
        auto xi = std::span<double>{data.x.data() + i * spec.d, static_cast<std::size_t>(spec.d)};
        truth.draw_x(rng, xi);
        const double u = rng.next_double();
        int level;
        if (uniform_a) {
            level = 1 + std::min<int>(k - 1, static_cast<int>(u * k));
        } else {
            const auto& cum = truth.sgn(xi) > 0 ? cum_plus : cum_minus;
            level = 1 + static_cast<int>(std::upper_bound(cum.begin(), cum.end(), u) - cum.begin());
            level = std::min(level, k);
        }
        data.a_level[i] = level;
        const double m = truth.mu(level, xi);
        data.y[i] = (spec.noise == OutcomeNoise::Gaussian)
                        ? m + spec.sigma * rng.next_normal()
                        : (rng.next_bernoulli(m) ? 1.0 : 0.0);
    }
    data.fold = split_folds(spec.n, spec.fold_ratio, mix_seed(spec.seed, 0x5e7, 2));
    return {std::move(data), std::move(truth)};
}

GeneratedData gen_binary_vector(const DgpSpec& spec) {
    spec.validate();
    if (spec.spec.kind != TreatmentKind::BinaryVector)
        throw invalid_input("gen_binary_vector: wrong treatment kind");
    const int k = spec.spec.k;
    const int stride = spec.spec.stride();

    DgpTruth truth;
    truth.spec = spec.spec;
    truth.target = spec.target;
    truth.d = spec.d;
    truth.law = spec.covariates;
    truth.noise = spec.noise;
    truth.sigma = spec.sigma;
    truth.tilt_sign = make_tilt_signs(k);
    if (spec.confounding > 0) {
        truth.tilt = std::min(spec.confounding, 1.0);
        truth.mu_tilt = 0.5 * truth.tilt;
    }
    if (spec.noise == OutcomeNoise::Bernoulli) {
        double lo = spec.target.psi0, hi = spec.target.psi0;
        for (int j = 0; j < k; ++j) {
            lo += std::min(spec.target.psi[j], 0.0);
            hi += std::max(spec.target.psi[j], 0.0);
        }
        check_bernoulli_range(lo - truth.mu_tilt, hi + truth.mu_tilt);
    }

    Dataset data;
    data.spec = spec.spec;
    data.n = spec.n;
    data.d = spec.d;
    data.x.resize(spec.n * spec.d);
    data.a_bits.assign(spec.n * stride, 0);
    data.y.resize(spec.n);

    const std::uint64_t top_mask =
        (k % 64 == 0) ? ~std::uint64_t{0} : ((std::uint64_t{1} << (k % 64)) - 1);
    Rng rng(mix_seed(spec.seed, 0xb17, 1));
    for (std::size_t i = 0; i < spec.n; ++i) {
        auto xi = std::span<double>{data.x.data() + i * spec.d, static_cast<std::size_t>(spec.d)};
        truth.draw_x(rng, xi);
        if (truth.tilt == 0.0) {
            for (int w = 0; w < stride; ++w) {
                std::uint64_t word = rng.next_u64();
                if (w == stride - 1) word &= top_mask;
                data.a_bits[i * stride + w] = word;
            }
        } else {
            for (int j = 0; j < k; ++j)
                if (rng.next_bernoulli(truth.component_prob(j, xi))) data.set_a_bit(i, j);
        }
        const double m = truth.mu_combo(data.a_row(i), xi);
        data.y[i] = (spec.noise == OutcomeNoise::Gaussian)
                        ? m + spec.sigma * rng.next_normal()
                        : (rng.next_bernoulli(m) ? 1.0 : 0.0);
    }
    data.fold = split_folds(spec.n, spec.fold_ratio, mix_seed(spec.seed, 0xb17, 2));
    return {std::move(data), std::move(truth)};
}

void Packing::verify() const {
    const int st = stride();
    for (std::size_t i = 0; i < count_; ++i) {
        if (sparsity) {
            int ones = 0;
            for (int w = 0; w < st; ++w) ones += std::popcount(rows[i * st + w]);
            if (ones != *sparsity) throw internal_error("Packing: sparsity violated");
        }
        for (std::size_t j = i + 1; j < count_; ++j) {
            int dist = 0;
            for (int w = 0; w < st; ++w)
                dist += std::popcount(rows[i * st + w] ^ rows[j * st + w]);
            if (dist < min_distance) throw internal_error("Packing: distance violated");
        }
    }
}

Packing vg_packing(int k, PackingMode mode, int s, std::uint64_t seed, std::size_t max_count) {
    if (max_count < 1) throw invalid_input("vg_packing: max_count must be >= 1");
    Packing pk;
    pk.k = k;
    std::size_t target;
    if (mode == PackingMode::Dense) {
        if (k < 8) throw invalid_input("vg_packing: Dense requires k >= 8");
        pk.min_distance = (k + 7) / 8;
        const int exponent = std::min(k / 8, 20);
        target = std::min(std::size_t{1} << exponent, max_count);
    } else {
        if (s < 1 || s > k / 8) throw invalid_input("vg_packing: Sparse requires 1 <= s <= k/8");
        pk.sparsity = s;
        pk.min_distance = (s + 1) / 2;
        const double guaranteed = std::ceil(std::pow(1.0 + 0.5 * k / s, s / 8.0));
        target = std::min(static_cast<std::size_t>(guaranteed), max_count);
    }

    const int stride = pk.stride();
    const std::uint64_t top_mask =
        (k % 64 == 0) ? ~std::uint64_t{0} : ((std::uint64_t{1} << (k % 64)) - 1);
    Rng rng(seed);
    std::vector<std::uint64_t> cand(stride);
    std::vector<int> positions(k);
    const std::size_t budget = 1000 * target;
    for (std::size_t attempt = 0; attempt < budget && pk.count_ < target; ++attempt) {
        if (mode == PackingMode::Dense) {
            for (int w = 0; w < stride; ++w) cand[w] = rng.next_u64();
            cand[stride - 1] &= top_mask;
        } else {
            std::fill(cand.begin(), cand.end(), 0);
            for (int j = 0; j < k; ++j) positions[j] = j;
            for (int j = 0; j < s; ++j) {
                const std::size_t r = j + rng.next_below(k - j);
                std::swap(positions[j], positions[r]);
                cand[positions[j] / 64] |= std::uint64_t{1} << (positions[j] % 64);
            }
        }
        bool ok = true;
        for (std::size_t j = 0; j < pk.count_ && ok; ++j) {
            int dist = 0;
            for (int w = 0; w < stride; ++w)
                dist += std::popcount(cand[w] ^ pk.rows[j * stride + w]);
            ok = dist >= pk.min_distance;
        }
        if (ok) {
            pk.rows.insert(pk.rows.end(), cand.begin(), cand.end());
            ++pk.count_;
        }
    }
    if (pk.count_ < target)
        throw internal_error("vg_packing: failed to reach guaranteed count within retry budget");
    return pk;
}

double hard_instance_default_epsilon(int k, std::size_t n, PackingMode mode, int s) {
    const double nn = static_cast<double>(n);
    const double e2 = (mode == PackingMode::Dense)
                          ? k * std::log(2.0) / (4.0 * nn)
                          : k * std::log(static_cast<double>(k) / s) / (2.0 * nn);
    return std::min(0.5, std::sqrt(e2));
}

GeneratedData gen_hard_instance(int k, std::size_t n, PackingMode mode, int s,
                                std::optional<double> epsilon, std::uint64_t seed, int d,
                                double fold_ratio) {
    if (n < 2) throw invalid_input("gen_hard_instance: need n >= 2");
    if (epsilon && (*epsilon < 0 || *epsilon > 0.5))
        throw invalid_input("gen_hard_instance: eps must lie in [0, 1/2]");
    const double eps = epsilon ? *epsilon : hard_instance_default_epsilon(k, n, mode, s);

    const Packing pk = vg_packing(k, mode, s, mix_seed(seed, 0x4a6d, 0));
    Rng pick(mix_seed(seed, 0x4a6d, 1));
    const std::size_t w = pick.next_below(pk.count());

    DgpTruth truth;
    truth.spec = TreatmentSpec{TreatmentKind::SingleMultiValued, k};
    truth.d = d;
    truth.law = CovariateLaw::Uniform01;
    truth.noise = OutcomeNoise::Bernoulli;
    truth.level_prob.assign(k, 1.0 / k);
    truth.tilt_sign = make_tilt_signs(k);
    truth.target.psi0 = 0.5;
    truth.target.psi = Eigen::VectorXd::Zero(k);
    for (int a = 0; a < k; ++a)
        if (pk.bit(w, a)) truth.target.psi[a] = eps;
    truth.target.sparsity_norm = SparsityNorm::L0;
    truth.target.s = (mode == PackingMode::Sparse) ? s : k;

    Dataset data;
    data.spec = truth.spec;
    data.n = n;
    data.d = d;
    data.x.resize(n * d);
    data.a_level.resize(n);
    data.y.resize(n);
    Rng rng(mix_seed(seed, 0x4a6d, 2));
    for (std::size_t i = 0; i < n; ++i) {
        auto xi = std::span<double>{data.x.data() + i * d, static_cast<std::size_t>(d)};
        truth.draw_x(rng, xi);
        const int level = 1 + std::min<int>(k - 1, static_cast<int>(rng.next_double() * k));
        data.a_level[i] = level;
        data.y[i] = rng.next_bernoulli(0.5 + (pk.bit(w, level - 1) ? eps : 0.0)) ? 1.0 : 0.0;
    }
    data.fold = split_folds(n, fold_ratio, mix_seed(seed, 0x4a6d, 3));
    return {std::move(data), std::move(truth)};
}

}  // namespace hdtreat
