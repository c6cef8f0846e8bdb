#include "tailnet/drivers.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <Eigen/QR>

#include "tailnet/csv.hpp"
#include "tailnet/errors.hpp"

namespace tailnet {

CovariateTable load_covariates(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) {
        throw InputError("covariate file not found: " + path.string());
    }
    csv::Reader reader(path);
    std::string line;
    if (!reader.next(line)) {
        throw InputError(path.string() + ": empty file");
    }
    const auto header = csv::split(line);
    if (header.size() < 2 || header[0] != "date") {
        throw InputError(reader.where() + ": expected header 'date,<name>,...'");
    }
    CovariateTable table;
    for (std::size_t c = 1; c < header.size(); ++c) table.names.emplace_back(header[c]);
    std::vector<double> flat;
    while (reader.next(line)) {
        const auto fields = csv::split(line);
        if (fields.size() != header.size()) {
            throw InputError(reader.where() + ": expected " + std::to_string(header.size()) + " fields");
        }
        Date d;
        try {
            d = parse_date(fields[0]);
        } catch (const InputError& e) {
            throw InputError(reader.where() + ": field 'date': " + e.what());
        }
        if (!table.dates.empty() && d <= table.dates.back()) {
            throw InputError(reader.where() + ": dates must be strictly increasing");
        }
        table.dates.push_back(d);
        for (std::size_t c = 1; c < fields.size(); ++c) {
            double v = 0.0;
            if (!csv::parse_double(fields[c], v) || !std::isfinite(v)) {
                throw InputError(reader.where() + ": field '" + table.names[c - 1] + "': missing or invalid value '" +
                                 std::string(fields[c]) + "'");
            }
            flat.push_back(v);
        }
    }
    table.values = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        flat.data(), static_cast<Eigen::Index>(table.dates.size()), static_cast<Eigen::Index>(table.names.size()));
    return table;
}

void log1p_transform(CovariateTable& table, std::string_view name) {
    const auto it = std::find(table.names.begin(), table.names.end(), name);
    if (it == table.names.end()) {
        throw ConfigError("unknown covariate '" + std::string(name) + "'");
    }
    auto col = table.values.col(it - table.names.begin());
    if ((col.array() <= -1.0).any()) {
        throw InputError("covariate '" + std::string(name) + "' has values <= -1; log(1 + x) undefined");
    }
    col = col.array().log1p();
}

Eigen::VectorXd regression_target(const RiskSeries& series, std::string_view target) {
    const auto t = static_cast<Eigen::Index>(series.size());
    if (target == "score") return Eigen::Map<const Eigen::VectorXd>(series.score.data(), t);
    if (target == "negative_ratio") return Eigen::Map<const Eigen::VectorXd>(series.negative_ratio.data(), t);
    const auto it = std::find(series.symbols.begin(), series.symbols.end(), target);
    if (it == series.symbols.end()) {
        throw ConfigError("unknown regression target '" + std::string(target) +
                          "' (expected score, negative_ratio or a symbol)");
    }
    return series.contributions.col(it - series.symbols.begin());
}

DesignMatrix align_covariates(const RiskSeries& series, const CovariateTable& table,
                              const std::map<std::string, int>& lags, std::string_view target) {
    for (const auto& [name, lag] : lags) {
        if (std::find(table.names.begin(), table.names.end(), name) == table.names.end()) {
            throw ConfigError("lag given for unknown covariate '" + name + "'");
        }
        if (lag < 0) {
            throw ConfigError("lag for '" + name + "' must be nonnegative");
        }
    }
    const Eigen::VectorXd y_full = regression_target(series, target);
    const auto k = table.names.size();
    std::vector<int> lag_of(k, 0);
    for (std::size_t c = 0; c < k; ++c) {
        if (const auto it = lags.find(table.names[c]); it != lags.end()) lag_of[c] = it->second;
    }

    DesignMatrix dm;
    dm.names.push_back("intercept");
    for (const auto& n : table.names) dm.names.push_back(n);
    std::vector<std::size_t> series_rows;
    std::vector<std::size_t> table_rows;
    for (std::size_t t = 0; t < series.size(); ++t) {
        const auto it = std::lower_bound(table.dates.begin(), table.dates.end(), series.dates[t]);
        if (it == table.dates.end() || *it != series.dates[t]) continue;
        const auto row = static_cast<std::size_t>(it - table.dates.begin());
        const bool available = std::all_of(lag_of.begin(), lag_of.end(),
                                           [&](int lag) { return row >= static_cast<std::size_t>(lag); });
        if (!available) continue;
        series_rows.push_back(t);
        table_rows.push_back(row);
    }
    if (series_rows.empty()) {
        throw InputError("covariates and risk series have no overlapping dates after lagging");
    }
    const auto rows = static_cast<Eigen::Index>(series_rows.size());
    dm.y.resize(rows);
    dm.x.resize(rows, static_cast<Eigen::Index>(k + 1));
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto t = series_rows[static_cast<std::size_t>(r)];
        const auto row = table_rows[static_cast<std::size_t>(r)];
        dm.dates.push_back(series.dates[t]);
        dm.y(r) = y_full(static_cast<Eigen::Index>(t));
        dm.x(r, 0) = 1.0;
        for (std::size_t c = 0; c < k; ++c) {
            dm.x(r, static_cast<Eigen::Index>(c + 1)) =
                table.values(static_cast<Eigen::Index>(row - static_cast<std::size_t>(lag_of[c])), static_cast<Eigen::Index>(c));
        }
    }
    return dm;
}

std::size_t default_bandwidth(std::size_t observations) {
    return static_cast<std::size_t>(std::floor(4.0 * std::pow(static_cast<double>(observations) / 100.0, 2.0 / 9.0)));
}

RegressionResult ols_hac(const Eigen::VectorXd& y, const Eigen::MatrixXd& x, std::size_t bandwidth,
                         std::vector<std::string> names) {
    const auto t = x.rows();
    const auto k = x.cols();
    if (y.size() != t) {
        throw std::invalid_argument("ols_hac: y has " + std::to_string(y.size()) + " rows, design has " +
                                    std::to_string(t));
    }
    if (names.empty()) {
        for (Eigen::Index c = 0; c < k; ++c) names.push_back("x" + std::to_string(c));
    }
    if (static_cast<Eigen::Index>(names.size()) != k) {
        throw std::invalid_argument("ols_hac: column names do not match design width");
    }
    if (t <= k) {
        throw InputError("ols_hac: need more observations (" + std::to_string(t) + ") than regressors (" +
                         std::to_string(k) + ")");
    }

    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
    if (qr.rank() < k) {
        std::string cols;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index r = qr.rank(); r < k; ++r) {
            if (!cols.empty()) cols += ", ";
            cols += names[static_cast<std::size_t>(perm(r))];
        }
        throw ComputationError("ols_hac: design is rank deficient (rank " + std::to_string(qr.rank()) + " of " +
                               std::to_string(k) + "); collinear column(s): " + cols);
    }

    RegressionResult res;
    res.names = std::move(names);
    res.observations = static_cast<std::size_t>(t);
    res.bandwidth = bandwidth;
    res.coef = qr.solve(y);
    res.residuals = y - x * res.coef;

    // (X'X)^{-1} = P R^{-1} R^{-T} P' from the pivoted QR.
    const Eigen::MatrixXd r = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
    const Eigen::MatrixXd r_inv =
        r.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(k, k));
    const Eigen::MatrixXd bread_perm = r_inv * r_inv.transpose();
    const auto& perm = qr.colsPermutation();
    const Eigen::MatrixXd bread = perm * bread_perm * perm.transpose();

    // Newey-West meat with Bartlett weights.
    const Eigen::MatrixXd scores = x.array().colwise() * res.residuals.array();
    Eigen::MatrixXd meat = scores.transpose() * scores;
    const auto max_lag = std::min<Eigen::Index>(static_cast<Eigen::Index>(bandwidth), t - 1);
    for (Eigen::Index lag = 1; lag <= max_lag; ++lag) {
        const double w = 1.0 - static_cast<double>(lag) / static_cast<double>(bandwidth + 1);
        const Eigen::MatrixXd gamma = scores.bottomRows(t - lag).transpose() * scores.topRows(t - lag);
        meat += w * (gamma + gamma.transpose());
    }
    res.covariance = bread * meat * bread;
    res.se = res.covariance.diagonal().cwiseMax(0.0).cwiseSqrt();
    res.t = res.coef.cwiseQuotient(res.se);
    res.p.resize(k);
    for (Eigen::Index c = 0; c < k; ++c) res.p(c) = std::erfc(std::abs(res.t(c)) / std::sqrt(2.0));

    const double ssr = res.residuals.squaredNorm();
    const double sst = (y.array() - y.mean()).matrix().squaredNorm();
    res.r2 = sst > 0.0 ? std::clamp(1.0 - ssr / sst, 0.0, 1.0) : (ssr == 0.0 ? 1.0 : 0.0);
    return res;
}

std::string format_report(const RegressionResult& result) {
    std::ostringstream out;
    char line[160];
    std::snprintf(line, sizeof line, "OLS with Newey-West standard errors (Bartlett, lag %zu)\n", result.bandwidth);
    out << line;
    std::snprintf(line, sizeof line, "observations: %zu    R^2: %.6f\n\n", result.observations, result.r2);
    out << line;
    std::snprintf(line, sizeof line, "%-20s %14s %14s %10s %10s\n", "name", "coef", "se", "t", "p");
    out << line;
    for (std::size_t c = 0; c < result.names.size(); ++c) {
        const auto i = static_cast<Eigen::Index>(c);
        std::snprintf(line, sizeof line, "%-20s %14.6g %14.6g %10.4f %10.4g\n", result.names[c].c_str(),
                      result.coef(i), result.se(i), result.t(i), result.p(i));
        out << line;
    }
    return out.str();
}

std::string format_table(const RegressionResult& result) {
    std::ostringstream out;
    out << "name,coef,se,t,p\n";
    for (std::size_t c = 0; c < result.names.size(); ++c) {
        const auto i = static_cast<Eigen::Index>(c);
        out << result.names[c] << ',' << csv::format_double(result.coef(i)) << ',' << csv::format_double(result.se(i))
            << ',' << csv::format_double(result.t(i)) << ',' << csv::format_double(result.p(i)) << '\n';
    }
    return out.str();
}

}  // namespace tailnet
