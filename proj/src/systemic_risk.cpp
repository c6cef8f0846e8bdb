#include "tailnet/systemic_risk.hpp"

#include <map>

#include "tailnet/errors.hpp"

namespace tailnet {

namespace {

void check_inputs(const Eigen::MatrixXi& a, const Eigen::VectorXd& caps) {
    if (a.rows() != a.cols() || a.rows() != caps.size()) {
        throw std::invalid_argument("systemic score: adjacency is " + std::to_string(a.rows()) + "x" +
                                    std::to_string(a.cols()) + " but there are " + std::to_string(caps.size()) +
                                    " caps");
    }
    for (Eigen::Index i = 0; i < caps.size(); ++i) {
        if (!(caps(i) > 0.0)) {
            throw InputError("systemic score: nonpositive market cap at asset #" + std::to_string(i));
        }
    }
}

// (A C)_i with the diagonal skipped.
Eigen::VectorXd linked_caps(const Eigen::MatrixXi& a, const Eigen::VectorXd& caps) {
    const auto n = caps.size();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j != i && a(i, j) != 0) acc += a(i, j) * caps(j);
        }
        out(i) = acc;
    }
    return out;
}

}  // namespace

double systemic_score(const Eigen::MatrixXi& a, const Eigen::VectorXd& caps) {
    check_inputs(a, caps);
    return caps.dot(linked_caps(a, caps));
}

Eigen::VectorXd decompose_score(const Eigen::MatrixXi& a, const Eigen::VectorXd& caps, ContributionRule rule) {
    check_inputs(a, caps);
    Eigen::VectorXd s = caps.cwiseProduct(linked_caps(a, caps));
    if (rule == ContributionRule::EulerRaw) s *= 2.0;
    return s;
}

double negative_ratio(const CorrelationSet& cs) {
    if (cs.rho.empty()) {
        throw std::invalid_argument("negative_ratio: empty correlation set");
    }
    std::size_t negative = 0;
    for (const double r : cs.rho) negative += r < 0.0 ? 1 : 0;
    return static_cast<double>(negative) / static_cast<double>(cs.rho.size());
}

RiskSeries risk_series(std::span<const SignedAdjacency> adjacencies, const ReturnPanel& panel,
                       std::span<const CorrelationSet> correlation_sets, const RiskOptions& options) {
    if (adjacencies.size() != correlation_sets.size()) {
        throw InputError("risk series: " + std::to_string(adjacencies.size()) + " adjacency matrices but " +
                         std::to_string(correlation_sets.size()) + " correlation sets");
    }
    RiskSeries out;
    out.symbols = panel.symbols();
    out.contributions.resize(static_cast<Eigen::Index>(adjacencies.size()), static_cast<Eigen::Index>(panel.assets()));
    for (std::size_t t = 0; t < adjacencies.size(); ++t) {
        const auto& adj = adjacencies[t];
        const auto& cs = correlation_sets[t];
        if (cs.date != adj.date) {
            throw InputError("risk series: correlation set dated " + format_date(cs.date) +
                             " does not match adjacency dated " + format_date(adj.date));
        }
        const auto row = panel.row_of(adj.date);
        if (!row) {
            throw InputError("risk series: no market caps for " + format_date(adj.date));
        }
        Eigen::VectorXd caps = panel.caps_at(*row);
        if (options.normalize_caps) caps /= caps.sum();

        const Eigen::VectorXd contrib = decompose_score(adj.a, caps, ContributionRule::Additive);
        const double score = systemic_score(adj.a, caps);
        out.dates.push_back(adj.date);
        out.score.push_back(score);
        out.contributions.row(static_cast<Eigen::Index>(t)) =
            options.rule == ContributionRule::EulerRaw ? Eigen::VectorXd(2.0 * contrib) : contrib;
        out.negative_ratio.push_back(negative_ratio(cs));
    }
    return out;
}

AnnualTable annual_table(const RiskSeries& series) {
    std::map<int, std::vector<std::size_t>> rows_by_year;
    for (std::size_t t = 0; t < series.size(); ++t) rows_by_year[year_of(series.dates[t])].push_back(t);

    AnnualTable table;
    table.symbols = series.symbols;
    const auto n = static_cast<Eigen::Index>(series.symbols.size());
    table.contribution = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(rows_by_year.size()));
    Eigen::Index col = 0;
    for (const auto& [year, rows] : rows_by_year) {
        table.years.push_back(year);
        double score = 0.0;
        for (const auto t : rows) {
            table.contribution.col(col) += series.contributions.row(static_cast<Eigen::Index>(t)).transpose();
            score += series.score[t];
        }
        const double count = static_cast<double>(rows.size());
        table.contribution.col(col) /= count;
        table.score.push_back(score / count);
        table.average_score.push_back(score / count / static_cast<double>(n));
        ++col;
    }
    return table;
}

}  // namespace tailnet
