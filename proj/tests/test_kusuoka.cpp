#include <catch_amalgamated.hpp>

#include <random>

#include "frictionlab/kusuoka.hpp"
#include "oracles.hpp"

using namespace frictionlab;
using Catch::Approx;

namespace {

double j_closed(double a, double lambda) {
    const double alpha2 = 0.04 + 0.4 * a;
    return oracle::bs_call(100, 100, std::sqrt(alpha2)) - a * a / (4 * lambda) * 1e4 * std::expm1(alpha2) / alpha2;
}

}  // namespace

TEST_CASE("zero kappa gives the CRR measure") {
    for (int n : {1, 5, 12}) {
        const MarketParams p{n, 0.2, 100.0};
        const auto k = kusuoka_measure(p, KappaProcess::constant(n, 0.0));
        for (double q : k.measure.q) CHECK(q == Approx(p.crr_probability()).epsilon(1e-12));
        for (std::size_t u = 0; u < k.martingale.size(); ++u)
            CHECK(k.martingale[u] == Approx(price_at_level(p, tree::level(u))).epsilon(1e-14));
    }
}

TEST_CASE("martingale identity holds at every node") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> u(-0.08, 0.08);
    for (int n : {2, 6, 11}) {
        const MarketParams p{n, 0.2, 100.0};
        for (int trial = 0; trial < 5; ++trial) {
            std::vector<double> v(tree::node_count(n), 0.0);
            for (std::size_t node = 0; node < tree::index(n, 0); ++node) {
                // Predictable: one draw per parent, shared by both children.
                const double draw = u(rng);
                v[tree::down_child(node)] = draw;
                v[tree::up_child(node)] = draw;
            }
            for (std::size_t node = tree::index(n, 0); node < v.size(); ++node) v[node] = 0.0;
            v[0] = u(rng);
            const auto k = kusuoka_measure(p, KappaProcess::per_node(n, v));
            CHECK(k.max_residual <= 1e-12);
            const auto m = conditional_terminal_expectation(p, k.measure);
            for (std::size_t node = 0; node < m.size(); ++node) CHECK(m[node] == Approx(k.martingale[node]).epsilon(1e-12));
        }
    }
    for (int n : {16, 64, 256}) {
        const auto k = kusuoka_measure_lattice({n, 0.2, 100.0}, KappaProcess::constant(n, 0.05));
        CHECK(k.max_residual <= 1e-12);
    }
}

TEST_CASE("q solves the explicit formula") {
    const MarketParams p{64, 0.2, 100.0};
    const auto k = kusuoka_measure_lattice(p, KappaProcess::constant(64, 0.05));
    for (int step = 0; step < 64; ++step)
        for (int i = 0; i <= step; ++i)
            for (int last = 0; last <= (step ? 1 : 0); ++last) {
                if (step > 0 && ((i == 0 && last == 1) || (i == step && last == 0))) continue;  // unreachable
                const int xi = step == 0 ? 0 : (last ? 1 : -1);
                const double next = step + 1 == 64 ? 0.0 : 0.05;
                CHECK(k.measure.at(step, 2 * i - step, last) ==
                      Approx(detail::kusuoka_q_formula(p, xi, 0.05, next)).epsilon(1e-12));
            }
}

TEST_CASE("lattice and tree constructions agree") {
    const MarketParams p{9, 0.2, 100.0};
    const auto kappa = KappaProcess::constant(9, 0.04);
    const auto t = kusuoka_measure(p, kappa);
    const auto l = kusuoka_measure_lattice(p, kappa);
    const auto embedded = l.measure.to_tree();
    for (std::size_t u = 0; u < t.measure.q.size(); ++u) CHECK(t.measure.q[u] == Approx(embedded.q[u]).epsilon(1e-14));
}

TEST_CASE("constant kappa stays inside the band") {
    const int n = 64;
    const double a = 0.05;
    const MarketParams p{n, 0.2, 100.0};
    const auto k = kusuoka_measure_lattice(p, KappaProcess::constant(n, a));
    const double width = a / std::sqrt(double(n));
    for (int step = 0; step <= n; ++step)
        for (int i = 0; i <= step; ++i)
            for (int last = 0; last <= 1; ++last) {
                const double s = price_at_level(p, 2 * i - step);
                const double m = k.martingale[LatticeMeasure::slot(step, 2 * i - step, last)];
                CHECK(std::abs(m - s) <= width * s * (1 + width));
            }
    CHECK(kusuoka_lower_bound(p, Penalty::truncated_quadratic(1.0, 0.06), Claim::call(100), a).is_finite());
}

TEST_CASE("kappa validation and bounds") {
    CHECK_THROWS_AS(KappaProcess::deterministic({0.1, 0.1}), InvalidInput);
    std::vector<double> unpredictable(tree::node_count(2), 0.0);
    unpredictable[1] = 0.1;
    CHECK_THROWS_AS(KappaProcess::per_node(2, unpredictable), InvalidInput);
    const auto c = KappaProcess::constant(100, 0.05);
    const auto rep = c.check({0.1, 0.01, 0.4});
    CHECK(rep.level);
    CHECK(rep.floor);
    CHECK(rep.terminal);
    // The drop to kappa(n) = 0 is a jump of a * sqrt(n).
    CHECK_FALSE(rep.lipschitz);
    CHECK(rep.max_jump == Approx(0.5));
    CHECK(c.check({0.1, 0.01, 0.5 + 1e-12}).ok());
    CHECK_FALSE(c.check({0.05, 0.0, 10}).level);
    CHECK_THROWS_AS(kusuoka_measure_lattice({4, 0.2, 100.0}, KappaProcess::constant(4, 0.3)), InvalidInput);
}

TEST_CASE("lower bound against primal and closed form") {
    const auto pen = Penalty::quadratic(1.0);
    CHECK(j_closed(0.0, 1.0) == Approx(oracle::bs_call(100, 100, 0.2)).epsilon(1e-15));
    double prev_gap = HUGE_VAL;
    for (int n : {16, 64, 256}) {
        const MarketParams p{n, 0.2, 100.0};
        const double bound = kusuoka_lower_bound(p, pen, Claim::call(100), 0.05).value();
        const double gap = std::abs(bound - j_closed(0.05, 1.0));
        CHECK(gap < prev_gap);
        prev_gap = gap;
        if (n <= 64) CHECK(bound <= superrep_lattice(p, pen, Claim::call(100), GammaGrid{-0.5, 1.5, 401}).value + 1e-9);
    }
    CHECK(prev_gap <= 0.02 * j_closed(0.05, 1.0));
    const MarketParams p{40, 0.2, 100.0};
    const double crr = oracle::crr_price(40, 0.2, 100.0, [](double s) { return std::max(s - 100.0, 0.0); });
    CHECK(kusuoka_lower_bound(p, pen, Claim::call(100), 0.0).value() == Approx(crr).epsilon(1e-12));
    for (double a : {-0.05, 0.02, 0.08})
        CHECK(kusuoka_lower_bound(p, Penalty::truncated_quadratic(0.5, 0.1), Claim::call(100), a).value() <=
              superrep_lattice(p, Penalty::truncated_quadratic(0.5, 0.1), Claim::call(100), GammaGrid{-0.5, 1.5, 401}).value + 1e-9);
    CHECK_THROWS_AS(kusuoka_lower_bound(p, Penalty::truncated_quadratic(0.5, 0.1), Claim::call(100), 0.1), InvalidInput);
    // Path-dependent claims go through the tree.
    const MarketParams small{8, 0.2, 100.0};
    CHECK(kusuoka_lower_bound(small, pen, Claim::asian_call(100), 0.03).value() <=
          superrep_exact(small, pen, Claim::asian_call(100)).value + 1e-9);
}
