#include <catch_amalgamated.hpp>

#include <random>

#include "frictionlab/payoffs.hpp"
#include "oracles.hpp"

using namespace frictionlab;
using Catch::Approx;

TEST_CASE("payoff examples") {
    CHECK(payoff_eval(Claim::call(100), PLPath(std::vector<double>{100, 110.5171})) == Approx(10.5171).epsilon(1e-14));
    CHECK(payoff_eval(Claim::asian_call(100), PLPath(std::vector<double>{100, 110})) == 5.0);
    CHECK(payoff_eval(Claim::constant(5), PLPath(std::vector<double>{1, 2, 3})) == 5.0);
    CHECK(payoff_eval(Claim::put(100), PLPath(std::vector<double>{100, 90})) == 10.0);
    CHECK(payoff_eval(Claim::lookback_max(100), PLPath(std::vector<double>{100, 120, 90})) == 20.0);
    CHECK(payoff_eval(Claim::asian_put(100), PLPath(std::vector<double>{100, 90, 80})) == 10.0);
    const auto knot = Claim::asian_call(90).with_averaging(Averaging::knot_mean);
    CHECK(payoff_eval(knot, PLPath(std::vector<double>{90, 120, 90})) == 10.0);
}

TEST_CASE("markov state") {
    CHECK(markov_dimension(Claim::call(1)) == MarkovState::terminal_price);
    CHECK(markov_dimension(Claim::put(1)) == MarkovState::terminal_price);
    CHECK(markov_dimension(Claim::constant(1)) == MarkovState::terminal_price);
    CHECK(markov_dimension(Claim::tabulated({1, 2}, {0, 1})) == MarkovState::terminal_price);
    CHECK(markov_dimension(Claim::asian_call(1)) == MarkovState::price_and_average);
    CHECK(markov_dimension(Claim::lookback_max(1)) == MarkovState::full_path);
}

TEST_CASE("growth check") {
    const MarketParams p{16, 0.2, 100.0};
    CHECK(growth_check(Claim::call(100), p, 200).passed);
    CHECK(growth_check(Claim::constant(5).with_growth({5, 1}), p, 50).passed);
    const auto rep = growth_check(Claim::call(100).with_growth({0.01, 0.5}), p, 20);
    CHECK_FALSE(rep.passed);
    CHECK(rep.worst_path == PathPrefix(16, 1));
    CHECK_THROWS_AS(growth_check(Claim::call(100), p, 0), InvalidInput);
    CHECK_THROWS_AS(Claim::call(100).with_growth({0.0, 1.0}), InvalidInput);
}

TEST_CASE("put-call parity and monotonicity on random paths") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(20.0, 200.0);
    std::uniform_real_distribution<double> bump(0.0, 10.0);
    for (int trial = 0; trial < 2000; ++trial) {
        std::vector<double> a(9), b(9);
        for (std::size_t i = 0; i < a.size(); ++i) {
            a[i] = u(rng);
            b[i] = a[i] + bump(rng);
        }
        const PLPath pa(a), pb(b);
        const double k = u(rng);
        CHECK(payoff_eval(Claim::call(k), pa) - payoff_eval(Claim::put(k), pa) == Approx(pa.terminal() - k).margin(1e-12));
        for (const auto& c : {Claim::call(k), Claim::asian_call(k), Claim::lookback_max(k)}) {
            CHECK(payoff_eval(c, pb) >= payoff_eval(c, pa));
            CHECK(payoff_eval(c, pa) >= 0.0);
            CHECK(payoff_eval(c, pa) == payoff_eval(c, PLPath(a)));
        }
    }
}

TEST_CASE("tabulated payoff") {
    const auto c = Claim::tabulated({90, 100, 110}, {10, 0, 10});
    CHECK(payoff_eval(c, PLPath(std::vector<double>{100, 95})) == 5.0);
    CHECK(payoff_eval(c, PLPath(std::vector<double>{100, 120})) == 20.0);
    CHECK(payoff_eval(c, PLPath(std::vector<double>{100, 80})) == 20.0);
    CHECK(c.lipschitz() == 1.0);
    const auto floor = Claim::tabulated({90, 100}, {5, 0});
    CHECK(payoff_eval(floor, PLPath(std::vector<double>{100, 130})) == 0.0);
    CHECK_THROWS_AS(Claim::tabulated({100, 90}, {0, 1}), InvalidInput);
    CHECK_THROWS_AS(Claim::tabulated({90, 100}, {-1, 1}), InvalidInput);
    CHECK_THROWS_AS(Claim::call(-1), InvalidInput);
}
