#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "tailnet/date.hpp"
#include "tailnet/market_data.hpp"

namespace tailnet {

struct TailConfig {
    double alpha = 0.05;       // tail probability, (0, 0.5]
    std::size_t window = 250;  // rolling window length in days

    /// Throws ConfigError unless alpha is in (0, 0.5], window >= 2 and floor(alpha * window) >= 1.
    void validate() const;
};

/// Order-statistic rank k = ceil(alpha * window) used for the historical VaR.
std::size_t tail_rank(std::size_t window, double alpha);

/// Historical-simulation VaR: the k-th smallest return, k = tail_rank(size, alpha).
double historical_var(std::span<const double> window, double alpha);

/// Indices s (ascending) with window_j[s] <= var_j.
std::vector<std::size_t> tail_set(std::span<const double> window_i, std::span<const double> window_j, double var_j);

/// Mean of window_i over the tail days of window_j at level alpha.
double coes_pair(std::span<const double> window_i, std::span<const double> window_j, double alpha);

/// Mean of the returns at or below the historical VaR. Identical to coes_pair(window, window, alpha).
double expected_shortfall(std::span<const double> window, double alpha);

/// CoES cross-section at one date. values(i, j) = E[R_i | R_j <= VaR_j]; the diagonal holds ES_i.
struct CoESMatrix {
    Date date;
    Eigen::MatrixXd values;
    Eigen::VectorXd var;
};

/// CoES matrix over the window of `config.window` returns ending at panel row `last`.
CoESMatrix coes_matrix(const ReturnPanel& panel, std::size_t last, const TailConfig& config);

/// One CoES matrix per date from row window-1 to the end of the panel, in date order.
/// Dates are independent; `threads` > 1 evaluates them concurrently.
std::vector<CoESMatrix> rolling_coes(const ReturnPanel& panel, const TailConfig& config, unsigned threads = 1);

}  // namespace tailnet
