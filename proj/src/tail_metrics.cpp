#include "tailnet/tail_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tailnet/errors.hpp"
#include "tailnet/parallel.hpp"

namespace tailnet {

namespace {

// Products like 0.05 * 250 must land on the intended integer despite binary rounding.
constexpr double kRankSlack = 1e-9;

void check_alpha(double alpha) {
    if (!(alpha > 0.0) || alpha > 0.5) {
        throw ConfigError("alpha must lie in (0, 0.5], got " + std::to_string(alpha));
    }
}

double tail_mean(std::span<const double> values, std::span<const std::size_t> days) {
    double sum = 0.0;
    for (const auto s : days) sum += values[s];
    return sum / static_cast<double>(days.size());
}

}  // namespace

void TailConfig::validate() const {
    check_alpha(alpha);
    if (window < 2) {
        throw ConfigError("window must be at least 2 days");
    }
    if (std::floor(alpha * static_cast<double>(window) + kRankSlack) < 1.0) {
        throw ConfigError("alpha * window must be at least 1 so the tail holds an observation (alpha=" +
                          std::to_string(alpha) + ", window=" + std::to_string(window) + ")");
    }
}

std::size_t tail_rank(std::size_t window, double alpha) {
    const auto k = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(window) - kRankSlack));
    return std::clamp<std::size_t>(k, 1, window);
}

double historical_var(std::span<const double> window, double alpha) {
    check_alpha(alpha);
    if (window.size() < 2) {
        throw ConfigError("historical VaR needs at least 2 returns");
    }
    const auto k = tail_rank(window.size(), alpha);
    std::vector<double> sorted(window.begin(), window.end());
    std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1), sorted.end());
    return sorted[k - 1];
}

std::vector<std::size_t> tail_set(std::span<const double> window_i, std::span<const double> window_j, double var_j) {
    if (window_i.size() != window_j.size()) {
        throw std::invalid_argument("tail_set: windows differ in length");
    }
    std::vector<std::size_t> days;
    for (std::size_t s = 0; s < window_j.size(); ++s) {
        if (window_j[s] <= var_j) days.push_back(s);
    }
    return days;
}

double coes_pair(std::span<const double> window_i, std::span<const double> window_j, double alpha) {
    const double var_j = historical_var(window_j, alpha);
    const auto days = tail_set(window_i, window_j, var_j);
    return tail_mean(window_i, days);
}

double expected_shortfall(std::span<const double> window, double alpha) { return coes_pair(window, window, alpha); }

CoESMatrix coes_matrix(const ReturnPanel& panel, std::size_t last, const TailConfig& config) {
    const auto n = panel.assets();
    const auto w = config.window;
    CoESMatrix out{panel.dates()[last], Eigen::MatrixXd(n, n), Eigen::VectorXd(n)};
    for (std::size_t j = 0; j < n; ++j) {
        const auto conditioning = panel.window(j, last, w);
        const double var_j = historical_var(conditioning, config.alpha);
        const auto days = tail_set(conditioning, conditioning, var_j);
        out.var(static_cast<Eigen::Index>(j)) = var_j;
        for (std::size_t i = 0; i < n; ++i) {
            out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                tail_mean(panel.window(i, last, w), days);
        }
    }
    return out;
}

std::vector<CoESMatrix> rolling_coes(const ReturnPanel& panel, const TailConfig& config, unsigned threads) {
    config.validate();
    if (panel.assets() < 2) {
        throw InputError("rolling CoES needs at least 2 assets");
    }
    if (panel.periods() < config.window) {
        throw InputError("rolling CoES needs at least " + std::to_string(config.window) + " return days, panel has " +
                         std::to_string(panel.periods()));
    }
    const std::size_t count = panel.periods() - config.window + 1;
    std::vector<CoESMatrix> out(count);
    parallel_for(count, threads, [&](std::size_t k) { out[k] = coes_matrix(panel, config.window - 1 + k, config); });
    return out;
}

}  // namespace tailnet
