#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tailnet/date.hpp"
#include "tailnet/market_data.hpp"
#include "tailnet/similarity_network.hpp"

namespace tailnet {

enum class ContributionRule {
    Additive,   // S_i = C_i (A C)_i; contributions sum to the score
    EulerRaw,   // S_i = C_i dS/dC_i = 2 C_i (A C)_i; sums to twice the score
};

/// Quadratic form C' A C over off-diagonal entries. Throws std::invalid_argument on shape mismatch
/// and InputError on a nonpositive cap.
double systemic_score(const Eigen::MatrixXi& a, const Eigen::VectorXd& caps);

Eigen::VectorXd decompose_score(const Eigen::MatrixXi& a, const Eigen::VectorXd& caps,
                                ContributionRule rule = ContributionRule::Additive);

/// Share of strictly negative similarities, n2 / n.
double negative_ratio(const CorrelationSet& cs);

struct RiskOptions {
    ContributionRule rule = ContributionRule::Additive;
    /// Use caps divided by their cross-sectional sum instead of raw caps.
    bool normalize_caps = false;
};

struct RiskSeries {
    std::vector<Date> dates;
    std::vector<std::string> symbols;
    std::vector<double> score;
    Eigen::MatrixXd contributions;  // dates x assets
    std::vector<double> negative_ratio;

    std::size_t size() const noexcept { return dates.size(); }
};

/// Assembles score, contributions (caps at each date) and negative ratio per date.
/// The three inputs must carry the same dates in the same order; otherwise InputError names
/// the first offending date.
RiskSeries risk_series(std::span<const SignedAdjacency> adjacencies, const ReturnPanel& panel,
                       std::span<const CorrelationSet> correlation_sets, const RiskOptions& options = {});

/// Calendar-year means of daily contributions and scores.
struct AnnualTable {
    std::vector<int> years;
    std::vector<std::string> symbols;
    Eigen::MatrixXd contribution;        // assets x years
    std::vector<double> score;           // mean daily score per year
    std::vector<double> average_score;   // score / number of assets
};

AnnualTable annual_table(const RiskSeries& series);

}  // namespace tailnet
