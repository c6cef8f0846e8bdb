#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <vector>

#include "tailnet/errors.hpp"
#include "tailnet/similarity_network.hpp"
#include "tailnet/synthlab.hpp"

using Catch::Matchers::ContainsSubstring;
using namespace tailnet;

namespace {

// Normal CDF by composite Simpson integration of the density from 0 to |x|.
double phi_simpson(double x) {
    const int steps = 20000;
    const double b = std::abs(x);
    const double h = b / steps;
    auto f = [](double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); };
    double s = f(0.0) + f(b);
    for (int k = 1; k < steps; ++k) s += (k % 2 ? 4.0 : 2.0) * f(k * h);
    const double half = s * h / 3.0;
    return x >= 0 ? 0.5 + half : 0.5 - half;
}

double mean_sq_dev(const std::vector<double>& v, std::size_t from, std::size_t to) {
    if (from == to) return 0.0;
    double sum = 0.0;
    for (std::size_t k = from; k < to; ++k) sum += v[k];
    const double mu = sum / static_cast<double>(to - from);
    double out = 0.0;
    for (std::size_t k = from; k < to; ++k) out += (v[k] - mu) * (v[k] - mu);
    return out;
}

struct OracleSplit {
    std::size_t split;
    double sse;
};

// Scans every split 1..m-1 and keeps those inside the trimmed proportion band.
std::optional<OracleSplit> exhaustive_split(const std::vector<double>& gaps, double theta_bar) {
    const std::size_t m = gaps.size();
    std::optional<OracleSplit> best;
    for (std::size_t s = 1; s < m; ++s) {
        const double share = static_cast<double>(s);
        const double md = static_cast<double>(m);
        if (share < theta_bar * md - 1e-9 || share > (1.0 - theta_bar) * md + 1e-9) continue;
        const double sse = mean_sq_dev(gaps, 0, s) + mean_sq_dev(gaps, s, m);
        if (!best || sse < best->sse) best = OracleSplit{s, sse};
    }
    return best;
}

CoESMatrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
    const auto n = static_cast<Eigen::Index>(rows.size());
    CoESMatrix m{parse_date("2021-01-01"), Eigen::MatrixXd(n, n), Eigen::VectorXd::Zero(n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) m.values(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    }
    return m;
}

CorrelationSet set_of(std::vector<double> rho, std::size_t assets) {
    CorrelationSet cs;
    cs.date = parse_date("2021-01-01");
    cs.assets = assets;
    cs.rho = std::move(rho);
    for (std::size_t i = 0; i < assets; ++i) {
        for (std::size_t j = i + 1; j < assets; ++j) cs.pairs.push_back({i, j});
    }
    return cs;
}

// Independent classification: edges from sorted raw values, split on transformed gaps.
Eigen::MatrixXi oracle_adjacency(const CorrelationSet& cs, double theta_bar) {
    const auto n = static_cast<Eigen::Index>(cs.assets);
    Eigen::MatrixXi a = Eigen::MatrixXi::Zero(n, n);
    for (const int sign : {+1, -1}) {
        std::vector<std::pair<double, std::size_t>> g;
        for (std::size_t k = 0; k < cs.rho.size(); ++k) {
            if (sign * cs.rho[k] > 0.0) g.emplace_back(cs.rho[k], k);
        }
        std::sort(g.begin(), g.end());
        if (g.size() < 2) continue;
        std::vector<double> gaps;
        for (std::size_t k = 1; k < g.size(); ++k) {
            const double root = std::sqrt(static_cast<double>(cs.assets));
            gaps.push_back(0.5 * std::erfc(-root * g[k].first / std::sqrt(2.0)) -
                           0.5 * std::erfc(-root * g[k - 1].first / std::sqrt(2.0)));
        }
        const auto split = exhaustive_split(gaps, theta_bar);
        if (!split) continue;
        const double cut = sign > 0 ? g[split->split - 1].first : g[split->split].first;
        for (const auto& [v, k] : g) {
            if ((sign > 0 && v > cut) || (sign < 0 && v < cut)) {
                const auto& p = cs.pairs[k];
                a(static_cast<Eigen::Index>(p.i), static_cast<Eigen::Index>(p.j)) = sign;
                a(static_cast<Eigen::Index>(p.j), static_cast<Eigen::Index>(p.i)) = sign;
            }
        }
    }
    return a;
}

}  // namespace

TEST_CASE("cosine similarity examples") {
    const std::vector<double> x{1, 2, 2}, y{2, 1, 2};
    CHECK(cosine_similarity(x, x) == 1.0);
    CHECK(cosine_similarity(std::vector<double>{1, 0}, std::vector<double>{0, 1}) == 0.0);
    CHECK(cosine_similarity(x, y) == Catch::Approx(8.0 / 9.0).epsilon(1e-15));
    CHECK_THROWS_WITH(cosine_similarity(std::vector<double>{0, 0}, std::vector<double>{1, 1}),
                      ContainsSubstring("degenerate risk structure"));
}

TEST_CASE("cosine similarity is scale invariant and bounded") {
    std::mt19937_64 rng(59);
    std::normal_distribution<double> z;
    std::uniform_real_distribution<double> scale(-6.0, 6.0);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<double> x(25), y(25);
        for (auto& v : x) v = z(rng);
        for (auto& v : y) v = z(rng);
        const double c = std::pow(10.0, scale(rng));
        auto cx = x;
        for (auto& v : cx) v *= c;
        const double r = cosine_similarity(x, y);
        CHECK(std::abs(cosine_similarity(cx, y) - r) <= 1e-12);
        CHECK(r >= -1.0);
        CHECK(r <= 1.0);
    }
}

TEST_CASE("pair indexing is a bijection in row-major order") {
    for (std::size_t n : {2u, 3u, 7u, 25u}) {
        std::set<std::size_t> seen;
        std::size_t expected = 0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                CHECK(pair_index(i, j, n) == expected++);
                CHECK(pair_index(j, i, n) == pair_index(i, j, n));
                seen.insert(pair_index(i, j, n));
            }
        }
        CHECK(seen.size() == pair_count(n));
    }
    CHECK(pair_count(3) == 3);
    CHECK(pair_count(25) == 300);
}

TEST_CASE("correlation set over CoES rows") {
    std::mt19937_64 rng(61);
    std::normal_distribution<double> z(-0.05, 0.02);
    std::vector<std::vector<double>> rows(25, std::vector<double>(25));
    for (auto& r : rows)
        for (auto& v : r) v = z(rng);
    rows[7] = rows[3];
    const auto cs = correlation_set(matrix_from_rows(rows));
    REQUIRE(cs.size() == 300);
    CHECK(cs.rho[pair_index(3, 7, 25)] == Catch::Approx(1.0).epsilon(1e-15));
    for (std::size_t k = 0; k < cs.size(); ++k) {
        const auto [i, j] = cs.pairs[k];
        CHECK(cs.rho[k] == cosine_similarity(rows[i], rows[j]));
    }

    rows[4].assign(25, 0.0);
    std::vector<std::string> symbols(25, "X");
    symbols[4] = "ZERO";
    CHECK_THROWS_WITH(correlation_set(matrix_from_rows(rows), symbols), ContainsSubstring("ZERO"));
}

TEST_CASE("sign partition") {
    const auto cs = set_of({0.5, -0.2, 0.9}, 3);
    const auto g = split_groups(cs);
    CHECK(g.positive.values == std::vector<double>{0.5, 0.9});
    CHECK(g.negative.values == std::vector<double>{-0.2});
    CHECK(g.negative.members == std::vector<std::size_t>{1});

    const auto with_zero = split_groups(set_of({0.0, 0.3, 0.1}, 3));
    CHECK(with_zero.zero == std::vector<std::size_t>{0});
    CHECK(with_zero.negative.size() == 0);
}

TEST_CASE("normal transform values") {
    const std::vector<double> g{-1.0, 0.0, 1.0};
    const auto phi = phi_transform(g, 25);
    CHECK(phi[1] == 0.5);
    CHECK(std::abs(phi[2] - phi_simpson(5.0)) <= 1e-12);
    CHECK(std::abs(phi[0] - phi_simpson(-5.0)) <= 1e-12);
    CHECK(phi[2] == Catch::Approx(0.9999997).margin(5e-8));
    CHECK(phi[0] == Catch::Approx(2.87e-7).margin(5e-10));

    std::mt19937_64 rng(67);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> sorted(200);
    for (auto& v : sorted) v = u(rng);
    std::sort(sorted.begin(), sorted.end());
    const auto t = phi_transform(sorted, 25);
    CHECK(std::is_sorted(t.begin(), t.end()));
}

TEST_CASE("adjacent gaps") {
    const auto gaps = adjacent_gaps(std::vector<double>{0.1, 0.4, 0.9});
    REQUIRE(gaps);
    CHECK((*gaps)[0] == Catch::Approx(0.3).epsilon(1e-14));
    CHECK((*gaps)[1] == Catch::Approx(0.5).epsilon(1e-14));
    CHECK(*adjacent_gaps(std::vector<double>(5, 0.7)) == std::vector<double>(4, 0.0));
    CHECK_FALSE(adjacent_gaps(std::vector<double>{0.3}));
}

TEST_CASE("breakpoint examples") {
    const auto step = breakpoint_theta(std::vector<double>{1, 1, 1, 10, 10, 10}, 0.1);
    REQUIRE(step);
    CHECK(step->split == 3);
    CHECK(step->theta == 0.5);
    CHECK(step->sse == 0.0);

    const auto flat = breakpoint_theta(std::vector<double>{2, 2, 2, 2}, 0.1);
    REQUIRE(flat);
    CHECK(flat->split == 1);  // ceil(0.4) is the smallest admissible split

    const std::vector<double> bowl{5, 1, 1, 1, 1, 5};
    const auto b = breakpoint_theta(bowl, 0.1);
    const auto o = exhaustive_split(bowl, 0.1);
    REQUIRE(b);
    REQUIRE(o);
    CHECK(b->split == o->split);
    CHECK(b->sse == o->sse);

    CHECK_FALSE(breakpoint_theta(std::vector<double>{1.0}, 0.1));
    CHECK_THROWS_AS(breakpoint_theta(bowl, 0.5), ConfigError);
    CHECK_THROWS_AS(breakpoint_theta(bowl, 0.0), ConfigError);
}

TEST_CASE("breakpoint agrees with the exhaustive oracle") {
    std::mt19937_64 rng(71);
    std::uniform_int_distribution<std::size_t> len(2, 50);
    std::uniform_real_distribution<double> trim(0.01, 0.49);
    std::exponential_distribution<double> gap(20.0);
    std::uniform_int_distribution<int> coarse(0, 3);
    for (int trial = 0; trial < 3000; ++trial) {
        std::vector<double> gaps(len(rng));
        for (auto& g : gaps) g = trial % 4 == 0 ? coarse(rng) : gap(rng);
        const double tb = trial % 2 ? 0.1 : trim(rng);
        const auto b = breakpoint_theta(gaps, tb);
        const auto o = exhaustive_split(gaps, tb);
        REQUIRE(b.has_value() == o.has_value());
        if (b) {
            CHECK(b->split == o->split);
            CHECK(b->sse == o->sse);
            CHECK(b->theta == static_cast<double>(o->split) / static_cast<double>(gaps.size()));
        }
    }
}

TEST_CASE("five-asset cluster keeps the tight cluster and drops the weak pairs") {
    std::vector<std::vector<double>> rows;
    for (int k = 0; k < 4; ++k) rows.push_back({1.0, 0.1 * k, 0.0, 0.0, 0.0});
    rows.push_back({0.1, 0.0, 1.0, 0.0, 0.0});
    const auto cs = correlation_set(matrix_from_rows(rows));
    const auto net = build_adjacency(cs, 0.1);
    const auto& a = net.adjacency.a;
    CHECK(a == oracle_adjacency(cs, 0.1));
    for (Eigen::Index i = 0; i < 4; ++i) {
        for (Eigen::Index j = 0; j < 4; ++j) CHECK(a(i, j) == (i == j ? 0 : 1));
        CHECK(a(i, 4) == 0);
    }
    CHECK(net.breakpoints.n1 == 10);
    CHECK(net.breakpoints.positive_edges == 6);
    CHECK_FALSE(net.breakpoints.theta_minus);
}

TEST_CASE("a single pair yields no edges") {
    const auto net = build_adjacency(set_of({0.8}, 2), 0.1);
    CHECK(net.adjacency.a == Eigen::MatrixXi::Zero(2, 2));
    CHECK_FALSE(net.breakpoints.theta_plus);
    CHECK_FALSE(net.breakpoints.theta_minus);
}

TEST_CASE("groups smaller than three have no breakpoint") {
    const auto net = build_adjacency(set_of({0.8, -0.3, -0.5, 0.7, 0.2, 0.9}, 4), 0.1);
    CHECK(net.breakpoints.theta_plus);
    CHECK_FALSE(net.breakpoints.theta_minus);
    CHECK(net.breakpoints.negative_edges == 0);
}

TEST_CASE("adjacency is well formed and matches the oracle on random inputs") {
    std::mt19937_64 rng(73);
    std::uniform_int_distribution<std::size_t> size(3, 30);
    std::normal_distribution<double> z;
    for (int trial = 0; trial < 300; ++trial) {
        const auto n = size(rng);
        std::vector<std::vector<double>> rows(n, std::vector<double>(n));
        for (auto& r : rows)
            for (auto& v : r) v = z(rng);
        const auto cs = correlation_set(matrix_from_rows(rows));
        const auto net = build_adjacency(cs, 0.1);
        CHECK(net.adjacency.well_formed());
        CHECK(net.adjacency.a == oracle_adjacency(cs, 0.1));
        const auto& bp = net.breakpoints;
        CHECK(bp.n1 + bp.n2 + bp.n_zero == cs.size());
        std::size_t negatives = 0;
        for (const double r : cs.rho) negatives += r < 0.0;
        CHECK(bp.n2 == negatives);
        CHECK(bp.negative_ratio() == static_cast<double>(negatives) / static_cast<double>(cs.size()));
        CHECK(bp.theta_plus.has_value() == (bp.n1 >= 3));
        CHECK(bp.theta_minus.has_value() == (bp.n2 >= 3));
        if (bp.theta_plus) {
            CHECK(*bp.theta_plus >= 0.1 - 1e-12);
            CHECK(*bp.theta_plus <= 0.9 + 1e-12);
        }
    }
}

TEST_CASE("fixed threshold fallback") {
    const auto net = build_adjacency_fixed(set_of({0.8, -0.3, -0.5, 0.7, 0.2, 0.9}, 4), 0.4);
    CHECK(net.adjacency.well_formed());
    CHECK(net.breakpoints.positive_edges == 3);
    CHECK(net.breakpoints.negative_edges == 1);
    CHECK(net.adjacency.a(0, 3) == -1);
    CHECK(net.adjacency.a(3, 0) == -1);
}

TEST_CASE("stablecoin-like asset carries the negative edges") {
    const auto spec = synthlab::preset("tether-like", 25, 5, 600);
    const auto panel = synthlab::generate_panel(spec);
    const auto tensor = rolling_coes(panel, TailConfig{});
    const std::size_t last = 24;
    for (const auto k : {std::size_t{0}, tensor.size() / 2, tensor.size() - 1}) {
        const auto net = build_adjacency(correlation_set(tensor[k]), 0.1);
        const auto& a = net.adjacency.a;
        CHECK((a.row(last).array() == -1).any());
        for (Eigen::Index i = 0; i < 24; ++i) {
            for (Eigen::Index j = 0; j < 24; ++j) CHECK(a(i, j) >= 0);
        }
    }
}
