#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdtreat {

// Error taxonomy shared with the CLI exit codes: invalid_input -> 2,
// numeric_error -> 3, internal_error (and anything unexpected) -> 4.
struct invalid_input : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct numeric_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct internal_error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Pairwise (tree) summation. Fixed association order makes reductions
// bit-stable regardless of worker count, and the error grows like log n.
template <typename Get>
double pairwise_sum_impl(std::size_t lo, std::size_t hi, const Get& get) {
    const std::size_t n = hi - lo;
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += get(i);
        return s;
    }
    const std::size_t mid = lo + n / 2;
    return pairwise_sum_impl(lo, mid, get) + pairwise_sum_impl(mid, hi, get);
}

inline double pairwise_sum(std::span<const double> v) {
    return pairwise_sum_impl(0, v.size(), [&](std::size_t i) { return v[i]; });
}

template <typename Get>
double pairwise_sum(std::size_t n, const Get& get) {
    return pairwise_sum_impl(0, n, get);
}

inline double mean_of(std::span<const double> v) {
    if (v.empty()) throw invalid_input("mean_of: empty range");
    return pairwise_sum(v) / static_cast<double>(v.size());
}

}  // namespace hdtreat
