#include "tailnet/similarity_network.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "tailnet/errors.hpp"

namespace tailnet {

namespace {

constexpr double kRangeSlack = 1e-9;

double standard_normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

SignGroup sorted_group(const CorrelationSet& cs, bool positive) {
    std::vector<std::size_t> idx;
    for (std::size_t k = 0; k < cs.rho.size(); ++k) {
        if (positive ? cs.rho[k] > 0.0 : cs.rho[k] < 0.0) idx.push_back(k);
    }
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return cs.rho[a] < cs.rho[b]; });
    SignGroup g;
    g.members = idx;
    g.values.reserve(idx.size());
    for (const auto k : idx) g.values.push_back(cs.rho[k]);
    return g;
}

void set_edge(SignedAdjacency& adj, const AssetPair& p, int sign) {
    adj.a(static_cast<Eigen::Index>(p.i), static_cast<Eigen::Index>(p.j)) = sign;
    adj.a(static_cast<Eigen::Index>(p.j), static_cast<Eigen::Index>(p.i)) = sign;
}

std::optional<Breakpoint> group_breakpoint(const SignGroup& g, std::size_t assets, double theta_bar) {
    const auto phi = phi_transform(g.values, assets);
    const auto gaps = adjacent_gaps(phi);
    if (!gaps) return std::nullopt;
    return breakpoint_theta(*gaps, theta_bar);
}

}  // namespace

double cosine_similarity(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) {
        throw std::invalid_argument("cosine_similarity: vectors differ in length");
    }
    double dot = 0.0;
    double xx = 0.0;
    double yy = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        dot += x[k] * y[k];
        xx += x[k] * x[k];
        yy += y[k] * y[k];
    }
    if (!(xx > 0.0) || !(yy > 0.0)) {
        throw ComputationError("degenerate risk structure: zero-norm vector");
    }
    return std::clamp(dot / (std::sqrt(xx) * std::sqrt(yy)), -1.0, 1.0);
}

std::size_t pair_count(std::size_t assets) { return assets < 2 ? 0 : assets * (assets - 1) / 2; }

std::size_t pair_index(std::size_t i, std::size_t j, std::size_t assets) {
    if (i > j) std::swap(i, j);
    if (i == j || j >= assets) {
        throw std::out_of_range("pair_index: not a pair of distinct assets");
    }
    // pairs (0,1..N-1), (1,2..N-1), ...: rows before i contribute (N-1) + ... + (N-i).
    return i * (2 * assets - i - 1) / 2 + (j - i - 1);
}

CorrelationSet correlation_set(const CoESMatrix& coes, std::span<const std::string> symbols) {
    const auto n = static_cast<std::size_t>(coes.values.rows());
    // Row-major copy so each risk-structure vector is contiguous.
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rows = coes.values;
    auto row = [&](std::size_t i) { return std::span<const double>(rows.row(static_cast<Eigen::Index>(i)).data(), n); };

    for (std::size_t i = 0; i < n; ++i) {
        if (rows.row(static_cast<Eigen::Index>(i)).squaredNorm() == 0.0) {
            const std::string name = i < symbols.size() ? symbols[i] : "#" + std::to_string(i);
            throw ComputationError("degenerate risk structure: CoES row of asset " + name + " on " +
                                   format_date(coes.date) + " is zero");
        }
    }

    CorrelationSet cs;
    cs.date = coes.date;
    cs.assets = n;
    cs.rho.reserve(pair_count(n));
    cs.pairs.reserve(pair_count(n));
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            cs.rho.push_back(cosine_similarity(row(i), row(j)));
            cs.pairs.push_back({i, j});
        }
    }
    return cs;
}

GroupSplit split_groups(const CorrelationSet& cs) {
    GroupSplit out{sorted_group(cs, true), sorted_group(cs, false), {}};
    for (std::size_t k = 0; k < cs.rho.size(); ++k) {
        if (cs.rho[k] == 0.0) out.zero.push_back(k);
    }
    return out;
}

std::vector<double> phi_transform(std::span<const double> group, std::size_t assets) {
    const double scale = std::sqrt(static_cast<double>(assets));
    std::vector<double> out;
    out.reserve(group.size());
    for (const double r : group) out.push_back(standard_normal_cdf(scale * r));
    return out;
}

std::optional<std::vector<double>> adjacent_gaps(std::span<const double> phi) {
    if (phi.size() < 2) return std::nullopt;
    std::vector<double> gaps(phi.size() - 1);
    for (std::size_t k = 1; k < phi.size(); ++k) gaps[k - 1] = phi[k] - phi[k - 1];
    return gaps;
}

double segment_sse(std::span<const double> values) {
    if (values.empty()) return 0.0;
    double sum = 0.0;
    for (const double v : values) sum += v;
    const double mean = sum / static_cast<double>(values.size());
    double sse = 0.0;
    for (const double v : values) sse += (v - mean) * (v - mean);
    return sse;
}

std::optional<Breakpoint> breakpoint_theta(std::span<const double> gaps, double theta_bar) {
    if (!(theta_bar > 0.0) || !(theta_bar < 0.5)) {
        throw ConfigError("theta_bar must lie in (0, 0.5), got " + std::to_string(theta_bar));
    }
    const auto m = gaps.size();
    if (m < 2) return std::nullopt;
    const double md = static_cast<double>(m);
    const auto lo = static_cast<std::size_t>(std::max(1.0, std::ceil(theta_bar * md - kRangeSlack)));
    const auto hi = std::min(m - 1, static_cast<std::size_t>(std::floor((1.0 - theta_bar) * md + kRangeSlack)));
    if (lo > hi) return std::nullopt;

    std::optional<Breakpoint> best;
    for (std::size_t s = lo; s <= hi; ++s) {
        const double sse = segment_sse(gaps.first(s)) + segment_sse(gaps.subspan(s));
        if (!best || sse < best->sse) {
            best = Breakpoint{s, static_cast<double>(s) / md, sse};
        }
    }
    return best;
}

double BreakpointResult::negative_ratio() const {
    const auto n = n1 + n2 + n_zero;
    return n == 0 ? 0.0 : static_cast<double>(n2) / static_cast<double>(n);
}

bool SignedAdjacency::well_formed() const {
    if (a.rows() != a.cols()) return false;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        if (a(i, i) != 0) return false;
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            if (a(i, j) != a(j, i) || a(i, j) < -1 || a(i, j) > 1) return false;
        }
    }
    return true;
}

Network build_adjacency(const CorrelationSet& cs, double theta_bar) {
    if (!(theta_bar > 0.0) || !(theta_bar < 0.5)) {
        throw ConfigError("theta_bar must lie in (0, 0.5), got " + std::to_string(theta_bar));
    }
    const auto groups = split_groups(cs);
    Network net;
    net.adjacency.date = cs.date;
    net.adjacency.a = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(cs.assets), static_cast<Eigen::Index>(cs.assets));
    auto& bp = net.breakpoints;
    bp.theta_bar = theta_bar;
    bp.n1 = groups.positive.size();
    bp.n2 = groups.negative.size();
    bp.n_zero = groups.zero.size();

    // Both groups split between sorted positions s-1 and s (0-based).
    if (const auto split = group_breakpoint(groups.positive, cs.assets, theta_bar)) {
        const auto& g = groups.positive;
        bp.theta_plus = split->theta;
        bp.threshold_plus = g.values[split->split - 1];
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (g.values[k] > *bp.threshold_plus) {
                set_edge(net.adjacency, cs.pairs[g.members[k]], +1);
                ++bp.positive_edges;
            }
        }
    }
    if (const auto split = group_breakpoint(groups.negative, cs.assets, theta_bar)) {
        const auto& g = groups.negative;
        bp.theta_minus = split->theta;
        bp.threshold_minus = g.values[split->split];
        for (std::size_t k = 0; k < g.size(); ++k) {
            if (g.values[k] < *bp.threshold_minus) {
                set_edge(net.adjacency, cs.pairs[g.members[k]], -1);
                ++bp.negative_edges;
            }
        }
    }
    return net;
}

Network build_adjacency_fixed(const CorrelationSet& cs, double threshold) {
    if (!(threshold >= 0.0) || threshold >= 1.0) {
        throw ConfigError("fixed threshold must lie in [0, 1)");
    }
    Network net;
    net.adjacency.date = cs.date;
    net.adjacency.a = Eigen::MatrixXi::Zero(static_cast<Eigen::Index>(cs.assets), static_cast<Eigen::Index>(cs.assets));
    auto& bp = net.breakpoints;
    bp.theta_bar = 0.0;
    bp.threshold_plus = threshold;
    bp.threshold_minus = -threshold;
    for (std::size_t k = 0; k < cs.size(); ++k) {
        const double r = cs.rho[k];
        if (r > 0.0) ++bp.n1;
        else if (r < 0.0) ++bp.n2;
        else ++bp.n_zero;
        if (r > threshold) {
            set_edge(net.adjacency, cs.pairs[k], +1);
            ++bp.positive_edges;
        } else if (r < -threshold) {
            set_edge(net.adjacency, cs.pairs[k], -1);
            ++bp.negative_edges;
        }
    }
    return net;
}

}  // namespace tailnet
