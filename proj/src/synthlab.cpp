#include "tailnet/synthlab.hpp"

#include <cmath>
#include <cstdio>
#include <random>

#include "tailnet/errors.hpp"

namespace tailnet::synthlab {

namespace {

class InnovationSource {
public:
    InnovationSource(const FactorSpec& spec)
        : kind_(spec.innovation), normal_(0.0, 1.0), student_(spec.dof),
          t_scale_(spec.innovation == Innovation::StudentT ? std::sqrt((spec.dof - 2.0) / spec.dof) : 1.0) {}

    // Unit-variance draw.
    double operator()(std::mt19937_64& rng) {
        return kind_ == Innovation::Gaussian ? normal_(rng) : t_scale_ * student_(rng);
    }

private:
    Innovation kind_;
    std::normal_distribution<double> normal_;
    std::student_t_distribution<double> student_;
    double t_scale_;
};

}  // namespace

void FactorSpec::validate() const {
    const auto n = betas.size();
    if (n == 0) throw ConfigError("factor spec: no assets");
    if (idio_vol.size() != n || caps.size() != n) {
        throw ConfigError("factor spec: betas, idio_vol and caps must have the same length");
    }
    if (!symbols.empty() && symbols.size() != n) {
        throw ConfigError("factor spec: symbol count does not match asset count");
    }
    if (!(factor_vol > 0.0)) throw ConfigError("factor spec: factor_vol must be positive");
    for (std::size_t i = 0; i < n; ++i) {
        if (!(idio_vol[i] > 0.0)) throw ConfigError("factor spec: idio_vol must be positive");
        if (!(caps[i] > 0.0)) throw ConfigError("factor spec: caps must be positive");
        if (!std::isfinite(betas[i])) throw ConfigError("factor spec: non-finite beta");
    }
    if (horizon < 2) throw ConfigError("factor spec: horizon must be at least 2");
    if (innovation == Innovation::StudentT && !(dof > 2.0)) {
        throw ConfigError("factor spec: Student-t degrees of freedom must exceed 2");
    }
}

std::vector<std::string> FactorSpec::resolved_symbols() const {
    if (!symbols.empty()) return symbols;
    std::vector<std::string> out;
    for (std::size_t i = 0; i < betas.size(); ++i) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "S%02zu", i + 1);
        out.emplace_back(buf);
    }
    return out;
}

ReturnPanel generate_panel(const FactorSpec& spec) {
    spec.validate();
    const auto n = spec.assets();
    const auto t_len = spec.horizon;
    std::mt19937_64 rng(spec.seed);
    InnovationSource draw(spec);

    Eigen::MatrixXd rets(static_cast<Eigen::Index>(t_len), static_cast<Eigen::Index>(n));
    Eigen::MatrixXd caps(static_cast<Eigen::Index>(t_len), static_cast<Eigen::Index>(n));
    std::vector<Date> dates(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
        dates[t] = spec.start + std::chrono::days{static_cast<long long>(t + 1)};
        const double f = spec.factor_vol * draw(rng);
        for (std::size_t i = 0; i < n; ++i) {
            const auto r = static_cast<Eigen::Index>(t);
            const auto c = static_cast<Eigen::Index>(i);
            rets(r, c) = spec.betas[i] * f + spec.idio_vol[i] * draw(rng);
            caps(r, c) = spec.caps[i];
        }
    }
    return ReturnPanel(std::move(dates), spec.resolved_symbols(), std::move(rets), std::move(caps));
}

ReturnPanel regime_panel(const FactorSpec& pre, const FactorSpec& post, std::size_t switch_index) {
    pre.validate();
    post.validate();
    if (pre.assets() != post.assets() || pre.resolved_symbols() != post.resolved_symbols()) {
        throw ConfigError("regime panel: regimes must cover the same assets");
    }
    if (pre.start != post.start) {
        throw ConfigError("regime panel: regimes must share the start date");
    }
    if (switch_index > post.horizon || (switch_index > 0 && pre.horizon < switch_index)) {
        throw ConfigError("regime panel: switch index outside the pre/post horizons");
    }
    const auto after = generate_panel(post);
    if (switch_index == 0) return after;
    const auto before = generate_panel(pre);

    Eigen::MatrixXd rets = after.returns();
    Eigen::MatrixXd caps = after.caps();
    const auto k = static_cast<Eigen::Index>(switch_index);
    rets.topRows(k) = before.returns().topRows(k);
    caps.topRows(k) = before.caps().topRows(k);
    return ReturnPanel(after.dates(), after.symbols(), std::move(rets), std::move(caps));
}

std::vector<AssetRecord> price_records(const ReturnPanel& panel, double base) {
    std::vector<AssetRecord> out;
    const auto& dates = panel.dates();
    const Date first = dates.front() - std::chrono::days{1};
    std::vector<double> price(panel.assets(), base);
    for (std::size_t i = 0; i < panel.assets(); ++i) {
        out.push_back({panel.symbols()[i], first, base, panel.caps()(0, static_cast<Eigen::Index>(i))});
    }
    for (std::size_t t = 0; t < panel.periods(); ++t) {
        for (std::size_t i = 0; i < panel.assets(); ++i) {
            const auto r = static_cast<Eigen::Index>(t);
            const auto c = static_cast<Eigen::Index>(i);
            price[i] *= std::exp(panel.returns()(r, c));
            out.push_back({panel.symbols()[i], dates[t], price[i], panel.caps()(r, c)});
        }
    }
    return out;
}

double model_correlation(const FactorSpec& spec, std::size_t i, std::size_t j) {
    const double fv = spec.factor_vol * spec.factor_vol;
    auto variance = [&](std::size_t k) { return spec.betas[k] * spec.betas[k] * fv + spec.idio_vol[k] * spec.idio_vol[k]; };
    if (i == j) return 1.0;
    return spec.betas[i] * spec.betas[j] * fv / std::sqrt(variance(i) * variance(j));
}

FactorSpec preset(std::string_view name, std::size_t n_assets, std::uint64_t seed, std::size_t horizon,
                  std::size_t negative_assets) {
    if (n_assets < 2) throw ConfigError("preset: need at least 2 assets");
    FactorSpec spec;
    spec.seed = seed;
    spec.horizon = horizon;
    spec.factor_vol = 0.03;
    spec.betas.assign(n_assets, 1.0);
    spec.idio_vol.assign(n_assets, 0.02);
    spec.caps.resize(n_assets);
    // Cap profile decays geometrically from 1e11, a rough stand-in for a ranked crypto universe.
    for (std::size_t i = 0; i < n_assets; ++i) spec.caps[i] = 1e11 * std::pow(0.85, static_cast<double>(i));

    if (name == "independent") {
        spec.betas.assign(n_assets, 0.0);
    } else if (name == "homogeneous") {
        // defaults already describe it
    } else if (name == "tether-like") {
        if (negative_assets == 0 || negative_assets >= n_assets) {
            throw ConfigError("preset tether-like: negative asset count must be in [1, n_assets)");
        }
        const auto positive = n_assets - negative_assets;
        for (std::size_t i = 0; i < positive; ++i) {
            spec.betas[i] = positive == 1 ? 1.0 : 0.6 + 0.8 * static_cast<double>(i) / static_cast<double>(positive - 1);
        }
        for (std::size_t i = positive; i < n_assets; ++i) {
            spec.betas[i] = -1.0;
            spec.caps[i] = 2e10;
        }
        std::vector<std::string> symbols = FactorSpec{.betas = spec.betas}.resolved_symbols();
        for (std::size_t i = positive; i < n_assets; ++i) {
            symbols[i] = negative_assets == 1 ? "USDT" : "USD" + std::to_string(i - positive + 1);
        }
        spec.symbols = std::move(symbols);
    } else {
        throw ConfigError("unknown synthlab preset '" + std::string(name) +
                          "' (expected tether-like, independent or homogeneous)");
    }
    return spec;
}

}  // namespace tailnet::synthlab
