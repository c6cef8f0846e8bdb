#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "tailnet/errors.hpp"
#include "tailnet/similarity_network.hpp"
#include "tailnet/synthlab.hpp"
#include "tailnet/systemic_risk.hpp"

using Catch::Matchers::ContainsSubstring;
using namespace tailnet;

namespace {

Eigen::MatrixXi random_adjacency(std::mt19937_64& rng, Eigen::Index n) {
    std::uniform_int_distribution<int> sign(-1, 1);
    Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i + 1; j < n; ++j) a(i, j) = a(j, i) = sign(rng);
    }
    return a;
}

Eigen::VectorXd random_caps(std::mt19937_64& rng, Eigen::Index n) {
    std::uniform_real_distribution<double> log_cap(std::log(1e6), std::log(1e12));
    Eigen::VectorXd c(n);
    for (auto& v : c) v = std::exp(log_cap(rng));
    return c;
}

// Pairwise expansion of the quadratic form.
double expanded_score(const Eigen::MatrixXi& a, const Eigen::VectorXd& c) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) {
        for (Eigen::Index j = 0; j < c.size(); ++j) {
            if (i != j) s += c(i) * a(i, j) * c(j);
        }
    }
    return s;
}

CorrelationSet set_with_negatives(std::size_t negatives, std::size_t total, Date date) {
    CorrelationSet cs;
    cs.date = date;
    cs.assets = 25;
    for (std::size_t k = 0; k < total; ++k) cs.rho.push_back(k < negatives ? -0.25 : 0.75);
    for (std::size_t i = 0; i < 25; ++i)
        for (std::size_t j = i + 1; j < 25; ++j) cs.pairs.push_back({i, j});
    return cs;
}

}  // namespace

TEST_CASE("score examples") {
    Eigen::MatrixXi ones = Eigen::MatrixXi::Ones(3, 3);
    ones.diagonal().setZero();
    const Eigen::VectorXd unit = Eigen::VectorXd::Ones(3);
    CHECK(systemic_score(ones, unit) == 6.0);
    CHECK(decompose_score(ones, unit) == Eigen::VectorXd::Constant(3, 2.0));
    CHECK(decompose_score(ones, unit, ContributionRule::EulerRaw) == Eigen::VectorXd::Constant(3, 4.0));

    CHECK(systemic_score(Eigen::MatrixXi::Zero(3, 3), Eigen::Vector3d(5, 7, 11)) == 0.0);
    CHECK(decompose_score(Eigen::MatrixXi::Zero(3, 3), Eigen::Vector3d(5, 7, 11)) == Eigen::VectorXd::Zero(3));

    Eigen::MatrixXi pair(2, 2);
    pair << 0, -1, -1, 0;
    CHECK(systemic_score(pair, Eigen::Vector2d(2, 3)) == -12.0);
}

TEST_CASE("diagonal entries never contribute") {
    Eigen::MatrixXi a = Eigen::MatrixXi::Identity(3, 3);
    CHECK(systemic_score(a, Eigen::Vector3d(1, 2, 3)) == 0.0);
}

TEST_CASE("invalid score inputs") {
    CHECK_THROWS_AS(systemic_score(Eigen::MatrixXi::Zero(3, 3), Eigen::Vector2d(1, 1)), std::invalid_argument);
    CHECK_THROWS_AS(systemic_score(Eigen::MatrixXi::Zero(2, 2), Eigen::Vector2d(1, 0)), InputError);
}

TEST_CASE("contributions add up to the score") {
    std::mt19937_64 rng(79);
    std::uniform_int_distribution<Eigen::Index> size(2, 40);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = size(rng);
        const auto a = random_adjacency(rng, n);
        const auto c = random_caps(rng, n);
        const double s = systemic_score(a, c);
        const auto parts = decompose_score(a, c);
        CHECK(std::abs(parts.sum() - s) / std::max(1.0, std::abs(s)) <= 1e-9);
        CHECK(std::abs(expanded_score(a, c) - s) / std::max(1.0, std::abs(s)) <= 1e-9);
        const auto raw = decompose_score(a, c, ContributionRule::EulerRaw);
        CHECK(std::abs(raw.sum() - 2.0 * s) / std::max(1.0, std::abs(s)) <= 1e-9);
    }
}

TEST_CASE("score and contributions are homogeneous of degree two") {
    std::mt19937_64 rng(83);
    for (int trial = 0; trial < 200; ++trial) {
        const auto a = random_adjacency(rng, 25);
        const auto c = random_caps(rng, 25);
        const double s = systemic_score(a, c);
        const auto parts = decompose_score(a, c);
        for (const double lambda : {0.5, 2.0, 10.0}) {
            const Eigen::VectorXd scaled = lambda * c;
            const double l2 = lambda * lambda;
            CHECK(std::abs(systemic_score(a, scaled) - l2 * s) <= 1e-9 * std::max(1.0, std::abs(l2 * s)));
            const auto sp = decompose_score(a, scaled);
            for (Eigen::Index i = 0; i < 25; ++i) {
                CHECK(std::abs(sp(i) - l2 * parts(i)) <= 1e-9 * std::max(1.0, std::abs(l2 * parts(i))));
            }
        }
    }
}

TEST_CASE("relabelling assets permutes contributions") {
    std::mt19937_64 rng(89);
    for (int trial = 0; trial < 100; ++trial) {
        const Eigen::Index n = 12;
        const auto a = random_adjacency(rng, n);
        const auto c = random_caps(rng, n);
        std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Eigen::MatrixXi pa(n, n);
        Eigen::VectorXd pc(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            pc(i) = c(perm[static_cast<std::size_t>(i)]);
            for (Eigen::Index j = 0; j < n; ++j) pa(i, j) = a(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
        }
        const auto parts = decompose_score(a, c);
        const auto pparts = decompose_score(pa, pc);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double want = parts(perm[static_cast<std::size_t>(i)]);
            // Summation order changes, so allow rounding relative to the sum of absolute terms.
            CHECK(std::abs(pparts(i) - want) <= 1e-13 * pc(i) * pc.sum());
        }
    }
}

TEST_CASE("negative ratio") {
    const Date d = parse_date("2021-06-01");
    CHECK(negative_ratio(set_with_negatives(45, 300, d)) == 0.15);
    CHECK(negative_ratio(set_with_negatives(300, 300, d)) == 1.0);
    CHECK(negative_ratio(set_with_negatives(0, 300, d)) == 0.0);
}

TEST_CASE("risk series assembles dated scores") {
    const std::vector<Date> dates{parse_date("2020-12-30"), parse_date("2020-12-31"), parse_date("2021-01-01")};
    Eigen::MatrixXd caps(3, 3);
    caps << 1, 2, 3, 2, 2, 2, 4, 1, 1;
    const ReturnPanel panel(dates, {"A", "B", "C"}, Eigen::MatrixXd::Zero(3, 3), caps);

    Eigen::MatrixXi a(3, 3);
    a << 0, 1, -1, 1, 0, 0, -1, 0, 0;
    std::vector<SignedAdjacency> adjs;
    std::vector<CorrelationSet> sets;
    for (const auto d : dates) {
        adjs.push_back({d, a});
        CorrelationSet cs;
        cs.date = d;
        cs.assets = 3;
        cs.rho = {0.5, -0.5, 0.1};
        cs.pairs = {{0, 1}, {0, 2}, {1, 2}};
        sets.push_back(cs);
    }
    const auto series = risk_series(adjs, panel, sets);
    REQUIRE(series.size() == 3);
    for (std::size_t t = 0; t < 3; ++t) {
        const Eigen::VectorXd c = caps.row(static_cast<Eigen::Index>(t)).transpose();
        CHECK(series.score[t] == systemic_score(a, c));
        CHECK(series.negative_ratio[t] == Catch::Approx(1.0 / 3.0).epsilon(1e-15));
        CHECK(series.contributions.row(static_cast<Eigen::Index>(t)).transpose() == decompose_score(a, c));
    }

    RiskOptions normalized;
    normalized.normalize_caps = true;
    const auto shares = risk_series(adjs, panel, sets, normalized);
    const Eigen::VectorXd c0 = caps.row(0).transpose() / caps.row(0).sum();
    CHECK(shares.score[0] == Catch::Approx(systemic_score(a, c0)).epsilon(1e-15));

    const auto table = annual_table(series);
    CHECK(table.years == std::vector<int>{2020, 2021});
    CHECK(table.contribution.rows() == 3);
    CHECK(table.score[0] == Catch::Approx((series.score[0] + series.score[1]) / 2.0).epsilon(1e-15));
    CHECK(table.score[1] == series.score[2]);
    CHECK(table.average_score[1] == series.score[2] / 3.0);
    CHECK(table.contribution(0, 0) ==
          Catch::Approx((series.contributions(0, 0) + series.contributions(1, 0)) / 2.0).epsilon(1e-15));

    auto shifted = sets;
    shifted[1].date = parse_date("2020-12-29");
    CHECK_THROWS_WITH(risk_series(adjs, panel, shifted), ContainsSubstring("2020-12-29"));
}

TEST_CASE("stablecoin-like asset contributes negatively") {
    const auto spec = synthlab::preset("tether-like", 25, 13, 500);
    const auto panel = synthlab::generate_panel(spec);
    const auto tensor = rolling_coes(panel, TailConfig{});
    std::vector<SignedAdjacency> adjs;
    std::vector<CorrelationSet> sets;
    for (const auto& m : tensor) {
        sets.push_back(correlation_set(m));
        adjs.push_back(build_adjacency(sets.back(), 0.1).adjacency);
    }
    const auto series = risk_series(adjs, panel, sets);
    const Eigen::VectorXd mean = series.contributions.colwise().mean().transpose();
    CHECK(mean(24) < 0.0);
    for (Eigen::Index i = 0; i < 24; ++i) CHECK(mean(i) > 0.0);
}
