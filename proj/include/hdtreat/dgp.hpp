#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "hdtreat/core.hpp"
#include "hdtreat/rng.hpp"

namespace hdtreat {

enum class PropensityProfile { ExactUniform, NearUniform };
enum class OutcomeNoise { Bernoulli, Gaussian };
enum class CovariateLaw { Uniform01, StdGaussian };

struct DgpSpec {
    TreatmentSpec spec;
    std::size_t n = 0;
    int d = 1;
    TargetParameter target;
    PropensityProfile propensity = PropensityProfile::ExactUniform;
    double near_c = 0.5;  // NearUniform band [c/k, C/k]
    double near_C = 2.0;
    OutcomeNoise noise = OutcomeNoise::Gaussian;
    double sigma = 1.0;
    double confounding = 0.0;
    CovariateLaw covariates = CovariateLaw::Uniform01;
    double fold_ratio = 0.5;
    std::uint64_t seed = 0;

    void validate() const;
};

// Everything the oracle nuisance and the error metrics need to know about
// the generating process. Immutable once built.
//
// Propensities: for single multi-valued treatments
//   pi_a(x) = p_a (1 + g s_a sgn(x)) / (1 + g D sgn(x)),  sgn(x) = sign(x_1 - med),
// with balanced signs s_a in {-1,0,+1}, D = sum_a p_a s_a, and g shrunk so
// every pi_a(x) stays inside the near-uniform band. For binary vectors the
// component probabilities are 1/2 + (g/4) s_j sgn(x). The outcome regression
// carries the zero-mean compensating term mu_tilt * sgn(x), so
// integral of mu_a over the covariate law is psi0 + psi_a exactly.
struct DgpTruth {
    TreatmentSpec spec;
    TargetParameter target;
    int d = 1;
    CovariateLaw law = CovariateLaw::Uniform01;
    OutcomeNoise noise = OutcomeNoise::Gaussian;
    double sigma = 1.0;

    std::vector<double> level_prob;  // single: base p_a, sums to 1
    std::vector<int> tilt_sign;      // single: s_a; vector: s_j
    double tilt = 0.0;               // g above (0 when unconfounded)
    double tilt_norm = 0.0;          // D above
    double mu_tilt = 0.0;

    double covariate_median() const { return law == CovariateLaw::Uniform01 ? 0.5 : 0.0; }
    double sgn(std::span<const double> x) const {
        return x[0] > covariate_median() ? 1.0 : -1.0;
    }

    // Single multi-valued interface (level is 1-based).
    double pi(int level, std::span<const double> x) const;
    double mu(int level, std::span<const double> x) const;

    // Binary-vector interface on packed combinations.
    double component_prob(int j, std::span<const double> x) const;
    double pi_combo(std::span<const std::uint64_t> bits, std::span<const double> x) const;
    double mu_combo(std::span<const std::uint64_t> bits, std::span<const double> x) const;

    void draw_x(Rng& rng, std::span<double> out) const;
};

struct GeneratedData {
    Dataset data;
    DgpTruth truth;
};

GeneratedData gen_single_multivalued(const DgpSpec& spec);
GeneratedData gen_binary_vector(const DgpSpec& spec);

enum class PackingMode { Dense, Sparse };

// Binary vectors with pairwise Hamming distance >= min_distance; Sparse mode
// additionally fixes the number of ones.
struct Packing {
    int k = 0;
    int min_distance = 0;
    std::optional<int> sparsity;
    std::vector<std::uint64_t> rows;  // packed, count * stride words
    std::size_t count_ = 0;

    int stride() const { return (k + 63) / 64; }
    std::size_t count() const { return count_; }
    std::span<const std::uint64_t> row(std::size_t j) const {
        return {rows.data() + j * stride(), static_cast<std::size_t>(stride())};
    }
    bool bit(std::size_t j, int pos) const {
        return (rows[j * stride() + pos / 64] >> (pos % 64)) & 1u;
    }
    // Exhaustive re-check of the distance and sparsity invariants.
    void verify() const;
};

// Greedy randomized packing. Dense: k >= 8, count >= min(2^floor(k/8), cap),
// distance >= ceil(k/8). Sparse: 1 <= s <= k/8, exactly-s-sparse rows,
// distance >= ceil(s/2), count >= ceil((1 + k/(2s))^(s/8)) capped likewise.
// Failure to reach the guaranteed count within 1000x retries is an internal
// error: existence is guaranteed.
Packing vg_packing(int k, PackingMode mode, int s, std::uint64_t seed,
                   std::size_t max_count = std::size_t{1} << 20);

// Hard instance from the minimax constructions: X independent of (A, Y),
// pi_a = 1/k, Y | A=a ~ Bern(1/2 + omega_a * eps) with omega drawn uniformly
// from a Varshamov-Gilbert packing. When eps is omitted, Dense uses
// min(1/2, sqrt(k ln2 / (4n))) and Sparse min(1/2, sqrt(k ln(k/s) / (2n))).
GeneratedData gen_hard_instance(int k, std::size_t n, PackingMode mode, int s,
                                std::optional<double> epsilon, std::uint64_t seed,
                                int d = 1, double fold_ratio = 0.5);

double hard_instance_default_epsilon(int k, std::size_t n, PackingMode mode, int s);

}  // namespace hdtreat
