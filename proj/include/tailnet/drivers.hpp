#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "tailnet/date.hpp"
#include "tailnet/systemic_risk.hpp"

namespace tailnet {

/// Exogenous daily covariates, one column per name.
struct CovariateTable {
    std::vector<Date> dates;
    std::vector<std::string> names;
    Eigen::MatrixXd values;  // dates x names
};

/// Reads `date,<name1>,<name2>,...`. Every cell must be a finite number.
CovariateTable load_covariates(const std::filesystem::path& path);

/// Replaces column `name` with log(1 + value); used for cumulative case counts.
void log1p_transform(CovariateTable& table, std::string_view name);

/// Regressand drawn from a risk series: "score", "negative_ratio" or a symbol's contribution.
Eigen::VectorXd regression_target(const RiskSeries& series, std::string_view target);

struct DesignMatrix {
    std::vector<Date> dates;
    std::vector<std::string> names;  // "intercept" first
    Eigen::VectorXd y;
    Eigen::MatrixXd x;
};

/// Inner join of the series and the lagged covariates; an intercept column is prepended.
/// A lag of L rows means the value observed L covariate rows earlier is used at each date.
DesignMatrix align_covariates(const RiskSeries& series, const CovariateTable& table,
                              const std::map<std::string, int>& lags, std::string_view target = "score");

/// Newey-West default truncation floor(4 (T/100)^(2/9)).
std::size_t default_bandwidth(std::size_t observations);

struct RegressionResult {
    std::vector<std::string> names;
    Eigen::VectorXd coef;
    Eigen::VectorXd se;       // Newey-West (Bartlett) standard errors
    Eigen::VectorXd t;
    Eigen::VectorXd p;        // two-sided, normal reference
    Eigen::VectorXd residuals;
    Eigen::MatrixXd covariance;
    double r2 = 0.0;
    std::size_t observations = 0;
    std::size_t bandwidth = 0;
};

/// Least squares through a column-pivoting QR with HAC covariance. Bandwidth 0 gives White (HC0)
/// errors. Throws ComputationError naming the collinear columns when the design is rank deficient.
RegressionResult ols_hac(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, std::size_t bandwidth,
                         std::vector<std::string> names = {});

/// Fixed-width human-readable report.
std::string format_report(const RegressionResult& result);

/// Machine-readable `name,coef,se,t,p` table.
std::string format_table(const RegressionResult& result);

}  // namespace tailnet
