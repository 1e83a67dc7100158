#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "hdtreat/common.hpp"

namespace hdtreat {

enum class TreatmentKind { SingleMultiValued, BinaryVector };

// Which treatment regime and how many levels / component treatments.
struct TreatmentSpec {
    TreatmentKind kind = TreatmentKind::SingleMultiValued;
    int k = 1;

    void validate() const {
        if (k < 1) throw invalid_input("TreatmentSpec: k must be >= 1");
    }
    // Number of 64-bit words per packed binary-vector row.
    int stride() const { return (k + 63) / 64; }
};

enum class FoldId : std::uint8_t { D1 = 1, D2 = 2 };

// One iid sample (X, A, Y) plus fold labels for sample splitting.
// Single multi-valued treatments are stored as 1-based level indices;
// binary vectors as packed bit-rows (n x stride words, bit j of the row is
// component treatment j).
struct Dataset {
    TreatmentSpec spec;
    std::size_t n = 0;
    int d = 0;
    std::vector<double> x;          // row-major n x d
    std::vector<int> a_level;       // single: size n, values in 1..k
    std::vector<std::uint64_t> a_bits;  // vector: size n * stride
    std::vector<double> y;
    std::vector<FoldId> fold;

    std::span<const double> x_row(std::size_t i) const {
        return {x.data() + i * static_cast<std::size_t>(d), static_cast<std::size_t>(d)};
    }
    bool a_bit(std::size_t i, int j) const {
        const auto w = a_bits[i * spec.stride() + j / 64];
        return (w >> (j % 64)) & 1u;
    }
    void set_a_bit(std::size_t i, int j) {
        a_bits[i * spec.stride() + j / 64] |= (std::uint64_t{1} << (j % 64));
    }
    std::span<const std::uint64_t> a_row(std::size_t i) const {
        return {a_bits.data() + i * spec.stride(), static_cast<std::size_t>(spec.stride())};
    }

    std::vector<std::size_t> fold_rows(FoldId f) const;
    void validate() const;
};

enum class SparsityNorm { L0, L1 };

// Ground-truth target: E(Y^a) = psi0 + psi_a (single) or psi0 + a.psi (vector).
struct TargetParameter {
    double psi0 = 0.0;
    Eigen::VectorXd psi;
    SparsityNorm sparsity_norm = SparsityNorm::L0;
    double s = 0.0;

    void validate() const;
};

enum class Method {
    LassoConstrained,
    BestSubset,
    SoftThreshold,
    HardThreshold,
    TrivialZero,
    PluginMean,
};

struct EstimatorConfig {
    Method method = Method::LassoConstrained;
    double budget = 0.0;      // constraint level s or threshold lambda
    double solver_tol = 1e-10;
    int max_iters = 0;        // 0 = auto (50 * k)

    void validate() const {
        if (budget < 0) throw invalid_input("EstimatorConfig: budget must be >= 0");
        if (solver_tol <= 0) throw invalid_input("EstimatorConfig: solver_tol must be > 0");
        if (max_iters < 0) throw invalid_input("EstimatorConfig: max_iters must be >= 0");
    }
    int resolved_max_iters(int k) const { return max_iters > 0 ? max_iters : 50 * k; }
};

// Uniformly random partition; |D1| = round(ratio * n), clamped so both folds
// stay non-empty for n >= 2.
std::vector<FoldId> split_folds(std::size_t n, double ratio, std::uint64_t seed);

// Per-level proportions of a fold of a single multi-valued dataset.
// Length k; unobserved levels get 0; sums to 1.
std::vector<double> empirical_proportions(const Dataset& data, FoldId fold);

// Distinct observed binary-vector combinations on a fold, in canonical
// (lexicographic-by-words) order, with their proportions.
struct CombinationTable {
    int stride = 0;
    std::vector<std::uint64_t> rows;  // packed, size count * stride
    std::vector<double> prop;         // per combination, sums to 1

    std::size_t count() const { return prop.size(); }
    std::span<const std::uint64_t> row(std::size_t j) const {
        return {rows.data() + j * stride, static_cast<std::size_t>(stride)};
    }
    // Index of a packed row in the table, or -1.
    std::ptrdiff_t find(std::span<const std::uint64_t> key) const;
};

CombinationTable empirical_combinations(const Dataset& data, FoldId fold);

// Lossless re-encoding between a single multi-valued dataset and its
// one-hot binary-vector form.
Dataset to_one_hot(const Dataset& data);
Dataset from_one_hot(const Dataset& data);

// Dataset CSV: header x_1..x_d, then `a` (single) or a_1..a_k (bits), then
// y, then fold in {1,2}. Numbers are written in shortest round-trip form so
// read(write(data)) is value-exact.
void write_dataset_csv(const Dataset& data, std::ostream& out);
void write_dataset_csv(const Dataset& data, const std::string& path);
Dataset read_dataset_csv(std::istream& in);
Dataset read_dataset_csv(const std::string& path);

// Shortest decimal form that parses back to the identical double.
std::string format_double(double v);

}  // namespace hdtreat
