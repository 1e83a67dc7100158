#include "hdtreat/risk.hpp"

#include <bit>
#include <cmath>

namespace hdtreat {

Eigen::VectorXd RiskQuadratic::gram_times(const Eigen::VectorXd& v) const {
    switch (form) {
        case Gram::Diagonal:
            return diag.cwiseProduct(v);
        case Gram::Dense:
            return dense * v;
        case Gram::Operator: {
            Eigen::VectorXd out = Eigen::VectorXd::Zero(k);
            for (std::size_t i = 0; i < op_n; ++i) {
                const std::uint64_t* row = op_rows.data() + i * op_stride;
                double dot = 0.0;
                for (int w = 0; w < op_stride; ++w) {
                    std::uint64_t word = row[w];
                    while (word) {
                        dot += v[w * 64 + std::countr_zero(word)];
                        word &= word - 1;
                    }
                }
                for (int w = 0; w < op_stride; ++w) {
                    std::uint64_t word = row[w];
                    while (word) {
                        out[w * 64 + std::countr_zero(word)] += dot;
                        word &= word - 1;
                    }
                }
            }
            return out / static_cast<double>(op_n);
        }
    }
    throw internal_error("RiskQuadratic: bad Gram form");
}

double RiskQuadratic::quad_form(const Eigen::VectorXd& v) const {
    return v.dot(gram_times(v));
}

double evaluate(const RiskQuadratic& risk, const Eigen::VectorXd& beta) {
    if (beta.size() != risk.k) throw invalid_input("evaluate: dimension mismatch");
    return risk.quad_form(beta) - 2.0 * risk.b.dot(beta) + risk.constant;
}

namespace {

std::vector<std::size_t> all_positions(const PseudoOutcomeTable& table) {
    std::vector<std::size_t> pos(table.n_rows());
    for (std::size_t p = 0; p < pos.size(); ++p) pos[p] = p;
    return pos;
}

}  // namespace

RiskQuadratic assemble_single(const PseudoOutcomeTable& table, const Dataset& data,
                              std::span<const std::size_t> positions) {
    if (table.spec.kind != TreatmentKind::SingleMultiValued)
        throw invalid_input("assemble_single: single multi-valued tables only");
    std::vector<std::size_t> all;
    if (positions.empty()) {
        all = all_positions(table);
        positions = all;
    }
    const int k = table.spec.k;
    const double m = static_cast<double>(positions.size());
    const double c2 = table.scaling * table.scaling;

    RiskQuadratic risk;
    risk.form = RiskQuadratic::Gram::Diagonal;
    risk.k = k;
    risk.diag = Eigen::VectorXd::Zero(k);
    for (std::size_t p : positions) risk.diag[data.a_level[table.rows[p]] - 1] += 1.0;
    risk.diag *= c2 / m;

    risk.b = Eigen::VectorXd::Zero(k);
    const auto means = table.level_means(positions);
    for (std::size_t l = 0; l < table.n_levels(); ++l)
        risk.b[table.level_ids[l] - 1] = c2 * table.varpi[l] * means[l];
    return risk;
}

RiskQuadratic assemble_vector(const PseudoOutcomeTable& table, const Dataset& data,
                              std::span<const std::size_t> positions) {
    if (table.spec.kind != TreatmentKind::BinaryVector)
        throw invalid_input("assemble_vector: binary-vector tables only");
    std::vector<std::size_t> all;
    if (positions.empty()) {
        all = all_positions(table);
        positions = all;
    }
    const int k = table.spec.k;
    const int stride = table.spec.stride();
    const double m = static_cast<double>(positions.size());
    const double c2 = table.scaling * table.scaling;

    RiskQuadratic risk;
    risk.k = k;
    if (k <= kDenseGramLimit) {
        // Integer pair counts, then scale: exact and bit-stable.
        std::vector<std::int64_t> counts(static_cast<std::size_t>(k) * k, 0);
        std::vector<int> set_bits;
        set_bits.reserve(k);
        for (std::size_t p : positions) {
            const auto row = data.a_row(table.rows[p]);
            set_bits.clear();
            for (int w = 0; w < stride; ++w) {
                std::uint64_t word = row[w];
                while (word) {
                    set_bits.push_back(w * 64 + std::countr_zero(word));
                    word &= word - 1;
                }
            }
            for (std::size_t u = 0; u < set_bits.size(); ++u)
                for (std::size_t v = u; v < set_bits.size(); ++v)
                    ++counts[static_cast<std::size_t>(set_bits[u]) * k + set_bits[v]];
        }
        risk.form = RiskQuadratic::Gram::Dense;
        risk.dense = Eigen::MatrixXd::Zero(k, k);
        for (int i = 0; i < k; ++i)
            for (int j = i; j < k; ++j) {
                const double g = c2 * static_cast<double>(counts[static_cast<std::size_t>(i) * k + j]) / m;
                risk.dense(i, j) = g;
                risk.dense(j, i) = g;
            }
    } else {
        risk.form = RiskQuadratic::Gram::Operator;
        risk.op_stride = stride;
        risk.op_n = positions.size();
        risk.op_rows.reserve(positions.size() * stride);
        for (std::size_t p : positions) {
            const auto row = data.a_row(table.rows[p]);
            risk.op_rows.insert(risk.op_rows.end(), row.begin(), row.end());
        }
    }

    risk.b = Eigen::VectorXd::Zero(k);
    const auto means = table.level_means(positions);
    for (std::size_t l = 0; l < table.n_levels(); ++l) {
        const double w = c2 * table.varpi[l] * means[l];
        const auto combo = table.combos.row(l);
        for (int wd = 0; wd < stride; ++wd) {
            std::uint64_t word = combo[wd];
            while (word) {
                risk.b[wd * 64 + std::countr_zero(word)] += w;
                word &= word - 1;
            }
        }
    }
    return risk;
}

SeparableRisk assemble_alternative(const PseudoOutcomeTable& table,
                                   std::span<const double> weights,
                                   std::span<const std::size_t> positions) {
    if (table.spec.kind != TreatmentKind::SingleMultiValued)
        throw invalid_input("assemble_alternative: single multi-valued tables only");
    if (static_cast<int>(weights.size()) != table.spec.k)
        throw invalid_input("assemble_alternative: need one weight per level");
    std::vector<std::size_t> all;
    if (positions.empty()) {
        all = all_positions(table);
        positions = all;
    }
    const int k = table.spec.k;
    const double m = static_cast<double>(positions.size());

    SeparableRisk out;
    out.quad.form = RiskQuadratic::Gram::Diagonal;
    out.quad.k = k;
    out.quad.diag = Eigen::VectorXd::Zero(k);
    out.quad.b = Eigen::VectorXd::Zero(k);
    out.level_means.assign(k, 0.0);
    out.degenerate.assign(k, 1);

    const auto means = table.level_means(positions);
    // Mean of phi^2 per table level, from the two additive parts.
    std::vector<double> mean_sq(table.n_levels(), 0.0);
    for (std::size_t l = 0; l < table.n_levels(); ++l) {
        mean_sq[l] = pairwise_sum(positions.size(), [&](std::size_t t) {
            const double v = table.phi_unscaled(positions[t], l);
            return v * v;
        });
        mean_sq[l] /= m;
    }

    for (std::size_t l = 0; l < table.n_levels(); ++l) {
        const int a = table.level_ids[l];
        const double w = weights[a - 1];
        out.level_means[a - 1] = means[l];
        if (w == 0.0) continue;
        out.degenerate[a - 1] = 0;
        out.quad.diag[a - 1] = w;
        out.quad.b[a - 1] = w * means[l];
        out.quad.constant += w * mean_sq[l];
    }
    return out;
}

}  // namespace hdtreat
