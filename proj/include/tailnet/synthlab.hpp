#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "tailnet/date.hpp"
#include "tailnet/market_data.hpp"

namespace tailnet::synthlab {

enum class Innovation { Gaussian, StudentT };

/// One-factor market: r_it = beta_i f_t + e_it with independent innovations.
struct FactorSpec {
    std::vector<double> betas;
    std::vector<double> idio_vol;    // daily return units, > 0
    double factor_vol = 0.03;        // > 0
    std::vector<double> caps;        // constant market caps, > 0
    std::uint64_t seed = 1;
    std::size_t horizon = 500;       // return days, >= 2
    Innovation innovation = Innovation::Gaussian;
    double dof = 4.0;                // Student-t degrees of freedom, > 2; unit variance after scaling
    std::vector<std::string> symbols;  // empty: S01, S02, ...
    Date start = Date{std::chrono::year{2018} / std::chrono::July / 1};

    std::size_t assets() const noexcept { return betas.size(); }
    /// Throws ConfigError on any violated invariant.
    void validate() const;
    std::vector<std::string> resolved_symbols() const;
};

/// Returns on dates start+1 .. start+horizon. Deterministic in the spec (including seed).
ReturnPanel generate_panel(const FactorSpec& spec);

/// First `switch_index` days from `pre`, the rest from `post`; the post segment continues post's own
/// random stream, so a switch at 0 reproduces generate_panel(post). Total length is post.horizon.
ReturnPanel regime_panel(const FactorSpec& pre, const FactorSpec& post, std::size_t switch_index);

/// Closing prices from base `base` compounded by the panel's log returns, one extra leading day.
std::vector<AssetRecord> price_records(const ReturnPanel& panel, double base = 100.0);

/// Population correlation beta_i beta_j sf^2 / (sd_i sd_j) of the factor model.
double model_correlation(const FactorSpec& spec, std::size_t i, std::size_t j);

/// Named fixtures:
///  - "tether-like": n-1 assets with betas spread over [0.6, 1.4], the last one beta -1 and a
///    stablecoin-sized cap;
///  - "independent": all betas 0;
///  - "homogeneous": all betas 1.
/// Extra negative-beta assets can be requested through `negative_assets` (tether-like only).
FactorSpec preset(std::string_view name, std::size_t n_assets, std::uint64_t seed, std::size_t horizon,
                  std::size_t negative_assets = 1);

}  // namespace tailnet::synthlab
