#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "tailnet/date.hpp"
#include "tailnet/tail_metrics.hpp"

namespace tailnet {

/// Cosine of the angle between two risk-structure vectors, clamped to [-1, 1].
/// Throws ComputationError("degenerate risk structure") if either vector has zero norm.
double cosine_similarity(std::span<const double> x, std::span<const double> y);

struct AssetPair {
    std::size_t i = 0;
    std::size_t j = 0;  // i < j

    friend bool operator==(const AssetPair&, const AssetPair&) = default;
};

/// n = N(N-1)/2
std::size_t pair_count(std::size_t assets);

/// Linear index of the unordered pair {i, j} in row-major (i < j) order.
std::size_t pair_index(std::size_t i, std::size_t j, std::size_t assets);

/// Pairwise similarities of the rows of one CoES matrix, pairs in row-major i < j order.
struct CorrelationSet {
    Date date;
    std::size_t assets = 0;
    std::vector<double> rho;
    std::vector<AssetPair> pairs;

    std::size_t size() const noexcept { return rho.size(); }
};

/// All pairwise cosine similarities between CoES rows. `symbols`, when given, names an offending
/// zero row in the error message.
CorrelationSet correlation_set(const CoESMatrix& coes, std::span<const std::string> symbols = {});

/// Correlations of one sign, ascending. `members[k]` is the pair index of `values[k]`.
struct SignGroup {
    std::vector<double> values;
    std::vector<std::size_t> members;

    std::size_t size() const noexcept { return values.size(); }
};

struct GroupSplit {
    SignGroup positive;
    SignGroup negative;
    std::vector<std::size_t> zero;  // exact zeros, never edges
};

/// Partitions by sign; each group sorted ascending with ties ordered by pair index.
GroupSplit split_groups(const CorrelationSet& cs);

/// Elementwise Phi(sqrt(N) * rho) with Phi the standard normal CDF.
std::vector<double> phi_transform(std::span<const double> group, std::size_t assets);

/// Successive differences phi[k] - phi[k-1]; nullopt for fewer than two values.
std::optional<std::vector<double>> adjacent_gaps(std::span<const double> phi);

/// Two-segment least-squares split of a gap sequence.
///
/// `split` counts the gaps in the leading segment and is searched exhaustively over
/// [ceil(theta_bar * m), floor((1 - theta_bar) * m)], m = gaps.size(); the first minimiser wins.
struct Breakpoint {
    std::size_t split = 0;
    double theta = 0.0;  // split / m
    double sse = 0.0;    // within-segment sum of squares at the optimum
};

/// Sum of squared deviations from the mean (two-pass, index order). Zero for an empty range.
double segment_sse(std::span<const double> values);

/// Throws ConfigError unless theta_bar is in (0, 0.5). Returns nullopt when the admissible range is empty.
std::optional<Breakpoint> breakpoint_theta(std::span<const double> gaps, double theta_bar);

/// Per-date diagnostics of the breakpoint classification.
struct BreakpointResult {
    double theta_bar = 0.1;
    std::optional<double> theta_plus;
    std::optional<double> theta_minus;
    std::optional<double> threshold_plus;   // positive pairs strictly above become +1
    std::optional<double> threshold_minus;  // negative pairs strictly below become -1
    std::size_t n1 = 0;                     // positive group size
    std::size_t n2 = 0;                     // negative group size
    std::size_t n_zero = 0;
    std::size_t positive_edges = 0;
    std::size_t negative_edges = 0;

    double negative_ratio() const;
};

/// Symmetric matrix over {-1, 0, +1} with zero diagonal.
struct SignedAdjacency {
    Date date;
    Eigen::MatrixXi a;

    std::size_t assets() const noexcept { return static_cast<std::size_t>(a.rows()); }
    bool well_formed() const;
};

struct Network {
    SignedAdjacency adjacency;
    BreakpointResult breakpoints;
};

/// Breakpoint-classified signed adjacency.
///
/// Positive group: the pairs above the split (correlation > threshold_plus) are +1. Negative group:
/// the pairs in the leading segment (correlation < threshold_minus) are -1. Groups whose admissible
/// split range is empty (fewer than 3 members at the default theta_bar) contribute no edges.
Network build_adjacency(const CorrelationSet& cs, double theta_bar);

/// Debugging fallback: +1 where rho > threshold, -1 where rho < -threshold.
Network build_adjacency_fixed(const CorrelationSet& cs, double threshold);

}  // namespace tailnet
