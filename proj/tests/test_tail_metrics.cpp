#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "tailnet/errors.hpp"
#include "tailnet/tail_metrics.hpp"

using namespace tailnet;

namespace {

// Reference order statistic: full sort, 1-based rank.
double sorted_kth(std::vector<double> v, std::size_t k) {
    std::sort(v.begin(), v.end());
    return v[k - 1];
}

std::vector<double> normal_sample(std::mt19937_64& rng, std::size_t n, double sd = 0.02) {
    std::normal_distribution<double> z(0.0, sd);
    std::vector<double> out(n);
    for (auto& x : out) x = z(rng);
    return out;
}

ReturnPanel random_panel(std::size_t t, std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 0.03);
    std::vector<Date> dates;
    for (std::size_t k = 0; k < t; ++k) dates.push_back(parse_date("2020-01-01") + std::chrono::days{k});
    std::vector<std::string> symbols;
    for (std::size_t i = 0; i < n; ++i) symbols.push_back("A" + std::to_string(i));
    Eigen::MatrixXd r(t, n);
    for (Eigen::Index k = 0; k < r.size(); ++k) r.data()[k] = z(rng);
    return ReturnPanel(dates, symbols, r, Eigen::MatrixXd::Constant(t, n, 1e9));
}

}  // namespace

TEST_CASE("VaR of twenty evenly spaced returns at 10% is the second smallest") {
    std::vector<double> w;
    for (int k = -10; k < 10; ++k) w.push_back(k / 100.0);
    std::shuffle(w.begin(), w.end(), std::mt19937_64(3));
    CHECK(tail_rank(20, 0.1) == 2);
    CHECK(historical_var(w, 0.1) == sorted_kth(w, 2));
    CHECK(historical_var(w, 0.1) == -0.09);
}

TEST_CASE("VaR of a constant window is the constant") {
    const std::vector<double> w(37, -0.0125);
    CHECK(historical_var(w, 0.05) == -0.0125);
}

TEST_CASE("default window uses the 13th order statistic") {
    CHECK(tail_rank(250, 0.05) == 13);
    std::mt19937_64 rng(5);
    const auto w = normal_sample(rng, 250);
    CHECK(historical_var(w, 0.05) == sorted_kth(w, 13));
}

TEST_CASE("VaR matches a sorting oracle on random windows") {
    std::mt19937_64 rng(17);
    std::uniform_int_distribution<std::size_t> size(2, 400);
    std::uniform_real_distribution<double> level(0.01, 0.5);
    for (int trial = 0; trial < 500; ++trial) {
        const auto n = size(rng);
        const double a = level(rng);
        auto w = normal_sample(rng, n);
        // Coarse rounding creates ties.
        if (trial % 3 == 0) {
            for (auto& x : w) x = std::round(x * 200.0) / 200.0;
        }
        const auto k = static_cast<std::size_t>(std::max(1.0, std::ceil(a * static_cast<double>(n) - 1e-9)));
        CHECK(tail_rank(n, a) == std::min(k, n));
        CHECK(historical_var(w, a) == sorted_kth(w, tail_rank(n, a)));
    }
}

TEST_CASE("invalid tail configuration is rejected") {
    const std::vector<double> w(10, 0.0);
    CHECK_THROWS_AS(historical_var(w, 0.0), ConfigError);
    CHECK_THROWS_AS(historical_var(w, 0.6), ConfigError);
    CHECK_THROWS_AS(historical_var(std::vector<double>{1.0}, 0.1), ConfigError);
    CHECK_THROWS_AS((TailConfig{0.05, 10}.validate()), ConfigError);  // floor(0.5) = 0
    CHECK_NOTHROW((TailConfig{0.05, 20}.validate()));
    CHECK_NOTHROW((TailConfig{0.5, 2}.validate()));
}

TEST_CASE("tail set enumerates days at or below VaR") {
    const std::vector<double> wj{-0.03, -0.02, -0.01, 0.0, 0.01};
    const std::vector<double> wi{1, 2, 3, 4, 5};
    CHECK(tail_set(wi, wj, -0.02) == std::vector<std::size_t>{0, 1});
    const std::vector<double> shuffled{0.01, -0.02, 0.0, -0.03, -0.01};
    CHECK(tail_set(wi, shuffled, -0.02) == std::vector<std::size_t>{1, 3});
}

TEST_CASE("self-conditioned CoES is ES, the mean of the k smallest") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const auto w = normal_sample(rng, 250);
        const double es = expected_shortfall(w, 0.05);
        CHECK(coes_pair(w, w, 0.05) == es);
        auto sorted = w;
        std::sort(sorted.begin(), sorted.end());
        const double oracle = std::accumulate(sorted.begin(), sorted.begin() + 13, 0.0) / 13.0;
        CHECK(std::abs(es - oracle) <= 1e-15);
    }
}

TEST_CASE("CoES of an independent zero-mean series is near zero") {
    std::mt19937_64 rng(29);
    const std::size_t w = 20000;
    const double a = 0.05;
    const auto xi = normal_sample(rng, w, 0.02);
    const auto xj = normal_sample(rng, w, 0.05);
    const double c = coes_pair(xi, xj, a);
    const auto m = static_cast<double>(tail_set(xi, xj, historical_var(xj, a)).size());
    const double se = 0.02 / std::sqrt(m);
    CHECK(std::abs(c) < 3.0 * se);
}

TEST_CASE("ES never exceeds VaR") {
    std::mt19937_64 rng(31);
    std::student_t_distribution<double> heavy(3.0);
    for (int trial = 0; trial < 1000; ++trial) {
        std::vector<double> w(250);
        for (auto& x : w) x = 0.01 * heavy(rng);
        CHECK(expected_shortfall(w, 0.05) <= historical_var(w, 0.05) + 1e-12);
    }
}

TEST_CASE("shifting the conditioned window shifts CoES by the same constant") {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 200; ++trial) {
        const auto wi = normal_sample(rng, 250);
        const auto wj = normal_sample(rng, 250);
        const double c = 0.0375 * (trial % 7 - 3);
        auto shifted = wi;
        for (auto& x : shifted) x += c;
        const double base = coes_pair(wi, wj, 0.05);
        CHECK(std::abs(coes_pair(shifted, wj, 0.05) - (base + c)) <= 1e-14);
    }
}

TEST_CASE("joint permutation of the time order leaves CoES unchanged") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 200; ++trial) {
        const auto wi = normal_sample(rng, 250);
        const auto wj = normal_sample(rng, 250);
        std::vector<std::size_t> perm(250);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        std::vector<double> pi(250), pj(250);
        for (std::size_t s = 0; s < 250; ++s) {
            pi[s] = wi[perm[s]];
            pj[s] = wj[perm[s]];
        }
        const double a = coes_pair(wi, wj, 0.05);
        const double b = coes_pair(pi, pj, 0.05);
        // Same multiset of summands in a different order.
        CHECK(std::abs(a - b) <= 1e-15 * std::max(1.0, std::abs(a)) * 13);
        CHECK(historical_var(wj, 0.05) == historical_var(pj, 0.05));
    }
}

TEST_CASE("rolling CoES produces T - W + 1 dated matrices") {
    const auto panel = random_panel(30, 4, 43);
    const TailConfig cfg{0.1, 25};
    const auto tensor = rolling_coes(panel, cfg);
    REQUIRE(tensor.size() == 6);
    for (std::size_t k = 0; k < tensor.size(); ++k) {
        CHECK(tensor[k].date == panel.dates()[24 + k]);
        CHECK(tensor[k].values.rows() == 4);
        CHECK(tensor[k].values.allFinite());
        for (Eigen::Index i = 0; i < 4; ++i) {
            const auto wi = panel.window(static_cast<std::size_t>(i), 24 + k, 25);
            CHECK(tensor[k].values(i, i) == expected_shortfall(wi, 0.1));
            CHECK(tensor[k].var(i) == historical_var(wi, 0.1));
            for (Eigen::Index j = 0; j < 4; ++j) {
                const auto wj = panel.window(static_cast<std::size_t>(j), 24 + k, 25);
                CHECK(tensor[k].values(i, j) == coes_pair(wi, wj, 0.1));
            }
        }
    }
    CHECK(rolling_coes(random_panel(25, 3, 1), cfg).size() == 1);
}

TEST_CASE("rolling CoES at the default size is 25 x 25 and thread-invariant") {
    const auto panel = random_panel(260, 25, 47);
    const TailConfig cfg;
    const auto serial = rolling_coes(panel, cfg, 1);
    const auto parallel = rolling_coes(panel, cfg, 4);
    REQUIRE(serial.size() == 11);
    CHECK(serial.front().values.rows() == 25);
    CHECK(serial.front().values.cols() == 25);
    for (std::size_t k = 0; k < serial.size(); ++k) {
        CHECK(serial[k].date == parallel[k].date);
        CHECK((serial[k].values.array() == parallel[k].values.array()).all());
    }
}

TEST_CASE("short history is rejected with the required length") {
    const auto panel = random_panel(100, 3, 53);
    CHECK_THROWS_WITH(rolling_coes(panel, TailConfig{}), Catch::Matchers::ContainsSubstring("250"));
}
