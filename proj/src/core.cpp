#include "hdtreat/core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "hdtreat/rng.hpp"

namespace hdtreat {

std::vector<std::size_t> Dataset::fold_rows(FoldId f) const {
    std::vector<std::size_t> rows;
    rows.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        if (fold[i] == f) rows.push_back(i);
    return rows;
}

void Dataset::validate() const {
    spec.validate();
    if (x.size() != n * static_cast<std::size_t>(d))
        throw invalid_input("Dataset: x size mismatch");
    if (y.size() != n || fold.size() != n)
        throw invalid_input("Dataset: column length mismatch");
    if (spec.kind == TreatmentKind::SingleMultiValued) {
        if (a_level.size() != n) throw invalid_input("Dataset: treatment length mismatch");
        for (int a : a_level)
            if (a < 1 || a > spec.k) throw invalid_input("Dataset: level out of range");
    } else {
        if (a_bits.size() != n * static_cast<std::size_t>(spec.stride()))
            throw invalid_input("Dataset: packed treatment size mismatch");
    }
    if (n >= 2) {
        bool has1 = false, has2 = false;
        for (FoldId f : fold) (f == FoldId::D1 ? has1 : has2) = true;
        if (!has1 || !has2) throw invalid_input("Dataset: a fold is empty");
    }
}

void TargetParameter::validate() const {
    if (s < 0) throw invalid_input("TargetParameter: s must be >= 0");
    if (sparsity_norm == SparsityNorm::L0) {
        int nnz = 0;
        for (Eigen::Index j = 0; j < psi.size(); ++j)
            if (psi[j] != 0.0) ++nnz;
        if (nnz > s + 1e-9)
            throw invalid_input("TargetParameter: ||psi||_0 exceeds budget s");
    } else {
        if (psi.lpNorm<1>() > s * (1 + 1e-12) + 1e-12)
            throw invalid_input("TargetParameter: ||psi||_1 exceeds budget s");
    }
}

std::vector<FoldId> split_folds(std::size_t n, double ratio, std::uint64_t seed) {
    if (n < 2) throw invalid_input("split_folds: need n >= 2");
    if (!(ratio > 0.0 && ratio < 1.0)) throw invalid_input("split_folds: ratio must be in (0,1)");
    std::size_t n1 = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(n)));
    n1 = std::clamp<std::size_t>(n1, 1, n - 1);

    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::size_t j = rng.next_below(i + 1);
        std::swap(idx[i], idx[j]);
    }
    std::vector<FoldId> fold(n, FoldId::D2);
    for (std::size_t i = 0; i < n1; ++i) fold[idx[i]] = FoldId::D1;
    return fold;
}

std::vector<double> empirical_proportions(const Dataset& data, FoldId fold) {
    if (data.spec.kind != TreatmentKind::SingleMultiValued)
        throw invalid_input("empirical_proportions: single multi-valued datasets only");
    std::vector<std::size_t> count(data.spec.k, 0);
    std::size_t total = 0;
    for (std::size_t i = 0; i < data.n; ++i) {
        if (data.fold[i] != fold) continue;
        ++count[data.a_level[i] - 1];
        ++total;
    }
    if (total == 0) throw invalid_input("empirical_proportions: empty fold");
    std::vector<double> prop(data.spec.k);
    for (int a = 0; a < data.spec.k; ++a)
        prop[a] = static_cast<double>(count[a]) / static_cast<double>(total);
    return prop;
}

std::ptrdiff_t CombinationTable::find(std::span<const std::uint64_t> key) const {
    // Binary search over the lexicographically sorted packed rows.
    std::size_t lo = 0, hi = count();
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        const auto r = row(mid);
        const auto cmp =
            std::lexicographical_compare_three_way(r.begin(), r.end(), key.begin(), key.end());
        if (cmp == std::strong_ordering::equal) return static_cast<std::ptrdiff_t>(mid);
        if (cmp == std::strong_ordering::less)
            lo = mid + 1;
        else
            hi = mid;
    }
    return -1;
}

CombinationTable empirical_combinations(const Dataset& data, FoldId fold) {
    if (data.spec.kind != TreatmentKind::BinaryVector)
        throw invalid_input("empirical_combinations: binary-vector datasets only");
    const int stride = data.spec.stride();
    std::vector<std::size_t> rows = data.fold_rows(fold);
    if (rows.empty()) throw invalid_input("empirical_combinations: empty fold");

    std::vector<std::size_t> order = rows;
    auto row_less = [&](std::size_t i, std::size_t j) {
        const auto ri = data.a_row(i), rj = data.a_row(j);
        return std::lexicographical_compare(ri.begin(), ri.end(), rj.begin(), rj.end());
    };
    std::sort(order.begin(), order.end(), row_less);

    CombinationTable table;
    table.stride = stride;
    std::size_t run = 0;
    for (std::size_t t = 0; t < order.size(); ++t) {
        ++run;
        const bool last = t + 1 == order.size();
        if (last || row_less(order[t], order[t + 1])) {
            const auto r = data.a_row(order[t]);
            table.rows.insert(table.rows.end(), r.begin(), r.end());
            table.prop.push_back(static_cast<double>(run) / static_cast<double>(rows.size()));
            run = 0;
        }
    }
    return table;
}

Dataset to_one_hot(const Dataset& data) {
    if (data.spec.kind != TreatmentKind::SingleMultiValued)
        throw invalid_input("to_one_hot: expected single multi-valued dataset");
    Dataset out = data;
    out.spec.kind = TreatmentKind::BinaryVector;
    out.a_level.clear();
    out.a_bits.assign(data.n * out.spec.stride(), 0);
    for (std::size_t i = 0; i < data.n; ++i) out.set_a_bit(i, data.a_level[i] - 1);
    return out;
}

Dataset from_one_hot(const Dataset& data) {
    if (data.spec.kind != TreatmentKind::BinaryVector)
        throw invalid_input("from_one_hot: expected binary-vector dataset");
    Dataset out = data;
    out.spec.kind = TreatmentKind::SingleMultiValued;
    out.a_bits.clear();
    out.a_level.assign(data.n, 0);
    for (std::size_t i = 0; i < data.n; ++i) {
        int level = 0;
        for (int j = 0; j < data.spec.k; ++j) {
            if (data.a_bit(i, j)) {
                if (level != 0) throw invalid_input("from_one_hot: row is not one-hot");
                level = j + 1;
            }
        }
        if (level == 0) throw invalid_input("from_one_hot: row is not one-hot");
        out.a_level[i] = level;
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc{}) throw internal_error("format_double: to_chars failed");
    return std::string(buf, ptr);
}

namespace {

double parse_double(const std::string& tok) {
    double v = 0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc{} || ptr != tok.data() + tok.size())
        throw invalid_input("CSV: bad numeric field '" + tok + "'");
    return v;
}

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t pos = line.find(',', start);
        if (pos == std::string::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

}  // namespace

void write_dataset_csv(const Dataset& data, std::ostream& out) {
    data.validate();
    for (int j = 1; j <= data.d; ++j) out << "x_" << j << ",";
    if (data.spec.kind == TreatmentKind::SingleMultiValued) {
        out << "a";
    } else {
        for (int j = 1; j <= data.spec.k; ++j) out << "a_" << j << (j < data.spec.k ? "," : "");
    }
    out << ",y,fold\n";
    for (std::size_t i = 0; i < data.n; ++i) {
        for (int j = 0; j < data.d; ++j) out << format_double(data.x[i * data.d + j]) << ",";
        if (data.spec.kind == TreatmentKind::SingleMultiValued) {
            out << data.a_level[i];
        } else {
            for (int j = 0; j < data.spec.k; ++j)
                out << (data.a_bit(i, j) ? 1 : 0) << (j + 1 < data.spec.k ? "," : "");
        }
        out << "," << format_double(data.y[i]) << ","
            << (data.fold[i] == FoldId::D1 ? 1 : 2) << "\n";
    }
}

void write_dataset_csv(const Dataset& data, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw invalid_input("cannot open for writing: " + path);
    write_dataset_csv(data, out);
}

Dataset read_dataset_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw invalid_input("CSV: missing header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto header = split_csv_line(line);

    int d = 0;
    while (d < static_cast<int>(header.size()) && header[d] == "x_" + std::to_string(d + 1)) ++d;
    int pos = d;
    Dataset data;
    data.d = d;
    if (pos < static_cast<int>(header.size()) && header[pos] == "a") {
        data.spec.kind = TreatmentKind::SingleMultiValued;
        ++pos;
    } else {
        data.spec.kind = TreatmentKind::BinaryVector;
        int k = 0;
        while (pos < static_cast<int>(header.size()) && header[pos] == "a_" + std::to_string(k + 1)) {
            ++k;
            ++pos;
        }
        if (k == 0) throw invalid_input("CSV: no treatment columns in header");
        data.spec.k = k;
    }
    if (pos + 2 != static_cast<int>(header.size()) || header[pos] != "y" || header[pos + 1] != "fold")
        throw invalid_input("CSV: header must end with y,fold");

    int max_level = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tok = split_csv_line(line);
        if (static_cast<int>(tok.size()) != static_cast<int>(header.size()))
            throw invalid_input("CSV: wrong field count in data row");
        for (int j = 0; j < d; ++j) data.x.push_back(parse_double(tok[j]));
        int t = d;
        if (data.spec.kind == TreatmentKind::SingleMultiValued) {
            const int a = static_cast<int>(parse_double(tok[t++]));
            if (a < 1) throw invalid_input("CSV: treatment level must be >= 1");
            max_level = std::max(max_level, a);
            data.a_level.push_back(a);
        } else {
            const std::size_t i = data.n;
            data.a_bits.resize((i + 1) * data.spec.stride(), 0);
            for (int j = 0; j < data.spec.k; ++j) {
                const double bit = parse_double(tok[t++]);
                if (bit != 0.0 && bit != 1.0) throw invalid_input("CSV: treatment bits must be 0/1");
                if (bit == 1.0) data.set_a_bit(i, j);
            }
        }
        data.y.push_back(parse_double(tok[t++]));
        const int f = static_cast<int>(parse_double(tok[t]));
        if (f != 1 && f != 2) throw invalid_input("CSV: fold must be 1 or 2");
        data.fold.push_back(f == 1 ? FoldId::D1 : FoldId::D2);
        ++data.n;
    }
    if (data.spec.kind == TreatmentKind::SingleMultiValued) data.spec.k = std::max(max_level, 1);
    data.validate();
    return data;
}

Dataset read_dataset_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_input("cannot open for reading: " + path);
    return read_dataset_csv(in);
}

}  // namespace hdtreat
