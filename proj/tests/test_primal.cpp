#include <catch_amalgamated.hpp>

#include "frictionlab/primal.hpp"
#include "oracles.hpp"

using namespace frictionlab;
using Catch::Approx;

namespace {

const MarketParams kOne{1, 0.2, 100.0};

double crr_call(int n, double k) {
    return oracle::crr_price(n, 0.2, 100.0, [k](double s) { return std::max(s - k, 0.0); });
}
double crr_put(int n, double k) {
    return oracle::crr_price(n, 0.2, 100.0, [k](double s) { return std::max(k - s, 0.0); });
}

}  // namespace

TEST_CASE("constant claim costs exactly K and never trades") {
    const auto r = superrep_exact({3, 0.2, 100.0}, Penalty::quadratic(0.5), Claim::constant(5.0));
    CHECK(r.value == 5.0);
    for (double h : r.strategy.holdings) CHECK(h == 0.0);
    CHECK_FALSE(r.boundary_hit);
    for (int n : {1, 7, 40}) CHECK(superrep_lattice({n, 0.2, 100.0}, Penalty::quadratic(1.0), Claim::constant(3.0)).value == 3.0);
}

TEST_CASE("frictionless one-step call") {
    const double q = (1 - std::exp(-0.2)) / (std::exp(0.2) - std::exp(-0.2));
    const double expected = q * (100 * std::exp(0.2) - 100);
    CHECK(q == Approx(0.45017).margin(1e-5));
    CHECK(expected == Approx(9.9668).margin(1e-4));
    const auto r = superrep_exact(kOne, Penalty::proportional(0.0), Claim::call(100), GammaGrid{-2, 2, 401});
    CHECK(r.value == Approx(expected).margin(1e-12));
    const double delta = (100 * std::exp(0.2) - 100) / (100 * std::exp(0.2) - 100 * std::exp(-0.2));
    CHECK(r.strategy.holdings[0] == Approx(delta).margin(1e-12));
}

TEST_CASE("frictionless recovery of the CRR price") {
    for (int n = 1; n <= 10; ++n) {
        for (double k : {80.0, 100.0, 115.0}) {
            INFO("n=" << n << " K=" << k);
            const auto grid = GammaGrid{-2, 2, 401};
            CHECK(std::abs(superrep_exact({n, 0.2, 100.0}, Penalty::proportional(0.0), Claim::call(k), grid).value -
                           crr_call(n, k)) <= 1e-8);
            CHECK(std::abs(superrep_exact({n, 0.2, 100.0}, Penalty::proportional(0.0), Claim::put(k), grid).value -
                           crr_put(n, k)) <= 1e-8);
            CHECK(std::abs(superrep_lattice({n, 0.2, 100.0}, Penalty::proportional(0.0), Claim::call(k), grid).value -
                           crr_call(n, k)) <= 1e-8);
        }
    }
}

TEST_CASE("lattice agrees with the exhaustive tree") {
    const GammaGrid grid{-2, 2, 401};
    for (const auto& pen : {Penalty::quadratic(1.0), Penalty::truncated_zero(0.1), Penalty::truncated_quadratic(0.5, 0.25)}) {
        const MarketParams p{8, 0.2, 100.0};
        const double exact = superrep_exact(p, pen, Claim::call(100), grid).value;
        const double lattice = superrep_lattice(p, pen, Claim::call(100), grid).value;
        INFO(pen.describe());
        CHECK(std::abs(exact - lattice) <= 1e-6);
    }
}

TEST_CASE("value surfaces are convex in holdings") {
    for (const auto& pen : {Penalty::quadratic(0.5), Penalty::truncated_zero(0.1), Penalty::power(1.5),
                            Penalty::truncated_quadratic(0.5, 0.25)}) {
        for (const auto& claim : {Claim::call(100), Claim::put(95), Claim::asian_call(100), Claim::lookback_max(100)}) {
            const auto r = superrep_exact({6, 0.2, 100.0}, pen, claim, GammaGrid{-2, 2, 201});
            INFO(pen.describe() << " " << claim.describe());
            CHECK(r.surface.min_second_difference() >= -1e-9);
        }
        const auto l = superrep_lattice({30, 0.2, 100.0}, pen, Claim::call(100), GammaGrid{-2, 2, 201});
        CHECK(l.surface.min_second_difference() >= -1e-9);
    }
}

TEST_CASE("ordering in the cost") {
    const MarketParams p{6, 0.2, 100.0};
    const GammaGrid grid{-2, 2, 201};
    const auto call = Claim::call(100);
    const double crr = crr_call(6, 100);
    const double lo = superrep_exact(p, Penalty::quadratic(0.25), call, grid).value;
    const double hi = superrep_exact(p, Penalty::quadratic(1.0), call, grid).value;
    CHECK(lo <= hi);
    CHECK(crr <= lo + 1e-12);
    const double full = superrep_exact(p, Penalty::quadratic(0.5), call, grid).value;
    double prev = crr;
    for (double c : {0.05, 0.1, 0.3, 1.0}) {
        const double v = superrep_exact(p, Penalty::truncated_quadratic(0.5, c), call, grid).value;
        CHECK(v >= prev - 1e-12);
        CHECK(v <= full + 1e-12);
        prev = v;
    }
    for (const auto& pen : {Penalty::power(1.0), Penalty::power(2.0), Penalty::truncated_zero(0.2)})
        CHECK(crr <= superrep_exact(p, pen, call, grid).value + 1e-12);
}

TEST_CASE("grid refinement only lowers the value") {
    const MarketParams p{6, 0.2, 100.0};
    for (const auto& pen : {Penalty::quadratic(0.5), Penalty::truncated_zero(0.1)}) {
        const auto r = refinement_study(p, pen, Claim::call(100), GammaGrid{-2, 2, 51}, Engine::exact);
        CHECK(r.change >= -1e-12);
        const auto r2 = refinement_study(p, pen, Claim::call(100), GammaGrid{-2, 2, 101}, Engine::exact);
        CHECK(r2.change >= -1e-12);
        CHECK(r2.fine <= r.fine + 1e-12);
        CHECK(r2.change <= r.change + 1e-12);
    }
}

TEST_CASE("extracted strategy super-replicates") {
    for (int n : {1, 4, 8, 10}) {
        const MarketParams p{n, 0.2, 100.0};
        for (const auto& pen : {Penalty::quadratic(0.5), Penalty::truncated_zero(0.1), Penalty::power(1.5),
                                Penalty::proportional(0.0)}) {
            for (const auto& claim : {Claim::call(100), Claim::asian_put(100), Claim::lookback_max(105)}) {
                const auto r = superrep_exact(p, pen, claim, GammaGrid{-2, 2, 401});
                const auto rep = verify_superreplication(p, pen, r.strategy, claim, r.value);
                INFO("n=" << n << " " << pen.describe() << " " << claim.describe());
                CHECK(rep.min_slack >= -1e-8);
                CHECK(rep.paths == (std::size_t{1} << n));
                if (n == 8) {
                    const auto low = verify_superreplication(p, pen, r.strategy, claim, r.value - 0.01);
                    CHECK(low.min_slack == Approx(rep.min_slack - 0.01).margin(1e-12));
                }
            }
        }
    }
}

TEST_CASE("wealth recursion") {
    const MarketParams p{5, 0.2, 100.0};
    const auto never = Strategy::never_trade(5, 7.0);
    for (const auto& path : oracle::all_paths(5)) CHECK(wealth_simulate(p, Penalty::quadratic(1.0), never, path) == 7.0);

    const auto r = superrep_exact(kOne, Penalty::proportional(0.0), Claim::call(100), GammaGrid{-2, 2, 401});
    CHECK(wealth_simulate(kOne, Penalty::proportional(0.0), r.strategy, PathPrefix{1}) ==
          Approx(100 * std::exp(0.2) - 100).epsilon(1e-12));
    CHECK(wealth_simulate(kOne, Penalty::proportional(0.0), r.strategy, PathPrefix{-1}) == Approx(0.0).margin(1e-12));

    Strategy s = Strategy::never_trade(5, 3.0);
    for (std::size_t i = 0; i < s.holdings.size(); ++i) s.holdings[i] = 0.1 * static_cast<double>(i % 4) - 0.1;
    const auto pen = Penalty::quadratic(0.7);
    for (const auto& path : oracle::all_paths(5)) {
        const double free = wealth_simulate(p, Penalty::proportional(0.0), s, path);
        double cost = 0.0, gamma = 0.0;
        std::size_t node = 0;
        for (int mv : path) {
            cost += 0.7 * (s.holdings[node] - gamma) * (s.holdings[node] - gamma);
            gamma = s.holdings[node];
            node = mv > 0 ? tree::up_child(node) : tree::down_child(node);
        }
        CHECK(free - wealth_simulate(p, pen, s, path) == Approx(cost).margin(1e-12));
    }
}

TEST_CASE("never trading with the largest payoff super-replicates") {
    const MarketParams p{6, 0.2, 100.0};
    const auto claim = Claim::call(100);
    const double top = claim.terminal(price_at_level(p, 6));
    const auto rep = verify_superreplication(p, Penalty::quadratic(1.0), Strategy::never_trade(6, top), claim, top);
    CHECK(rep.min_slack >= 0.0);
}

TEST_CASE("engine limits") {
    CHECK_THROWS_AS(superrep_exact({15, 0.2, 100.0}, Penalty::quadratic(1.0), Claim::call(100)), EngineRefusal);
    CHECK_THROWS_AS(superrep_lattice({20, 0.2, 100.0}, Penalty::quadratic(1.0), Claim::lookback_max(100)), EngineRefusal);
    CHECK_THROWS_AS(superrep_exact(kOne, Penalty::quadratic(1.0), Claim::call(100), GammaGrid{1, 1, 11}), InvalidInput);
    CHECK_THROWS_AS(superrep_exact(kOne, Penalty::quadratic(1.0), Claim::call(100), GammaGrid{-1, 1, 2}), InvalidInput);
}

TEST_CASE("narrow grids are widened") {
    const MarketParams p{4, 0.2, 100.0};
    PrimalOptions opt;
    const auto r = superrep_exact(p, Penalty::quadratic(0.5), Claim::call(90), GammaGrid{-0.2, 0.2, 21}, opt);
    CHECK(r.widenings >= 1);
    CHECK(r.grid.hi > 0.2);
    opt.auto_widen = false;
    const auto flagged = superrep_exact(p, Penalty::quadratic(0.5), Claim::call(90), GammaGrid{-0.2, 0.2, 21}, opt);
    CHECK(flagged.boundary_hit);
    CHECK(flagged.value > r.value);
    const auto lat = superrep_lattice(p, Penalty::quadratic(0.5), Claim::call(90), GammaGrid{-0.2, 0.2, 21});
    CHECK(lat.widenings >= 1);
}

TEST_CASE("results do not depend on the thread count") {
    PrimalOptions one, many;
    many.threads = 3;
    const MarketParams p{9, 0.2, 100.0};
    const auto a = superrep_exact(p, Penalty::truncated_zero(0.1), Claim::call(100), GammaGrid{-2, 2, 101}, one);
    const auto b = superrep_exact(p, Penalty::truncated_zero(0.1), Claim::call(100), GammaGrid{-2, 2, 101}, many);
    CHECK(a.value == b.value);
    CHECK(a.surface.values == b.surface.values);
    const auto c = superrep_lattice({60, 0.2, 100.0}, Penalty::quadratic(1.0), Claim::call(100), GammaGrid{-2, 2, 101}, one);
    const auto d = superrep_lattice({60, 0.2, 100.0}, Penalty::quadratic(1.0), Claim::call(100), GammaGrid{-2, 2, 101}, many);
    CHECK(c.value == d.value);
}

TEST_CASE("Asian lattice approaches the exhaustive value") {
    const MarketParams p{8, 0.2, 100.0};
    const GammaGrid grid{-2, 2, 201};
    for (const auto& pen : {Penalty::proportional(0.0), Penalty::quadratic(1.0)}) {
        const double exact = superrep_exact(p, pen, Claim::asian_call(100), grid).value;
        PrimalOptions opt;
        opt.average_buckets = 201;
        const double lattice = superrep_lattice(p, pen, Claim::asian_call(100), grid, opt).value;
        INFO(pen.describe());
        CHECK(lattice == Approx(exact).epsilon(5e-3));
    }
}

TEST_CASE("warm-started sweep matches independent solves") {
    PrimalOptions warm, cold;
    cold.warm_start = false;
    const MarketParams p{7, 0.25, 100.0};
    for (const auto& pen : {Penalty::quadratic(0.3), Penalty::truncated_zero(0.15), Penalty::power(1.0), Penalty::power(1.3),
                            Penalty::truncated_quadratic(1.0, 0.2), Penalty::tabulated({-2, -0.5, 0, 1, 3}, {3, 0.4, 0, 0.2, 2}, true)}) {
        for (const auto& claim : {Claim::call(100), Claim::put(110), Claim::lookback_max(100)}) {
            const auto a = superrep_exact(p, pen, claim, GammaGrid{-2, 2, 161}, warm);
            const auto b = superrep_exact(p, pen, claim, GammaGrid{-2, 2, 161}, cold);
            INFO(pen.describe() << " " << claim.describe());
            REQUIRE(a.surface.values.size() == b.surface.values.size());
            double worst = 0.0;
            for (std::size_t i = 0; i < a.surface.values.size(); ++i)
                worst = std::max(worst, std::abs(a.surface.values[i] - b.surface.values[i]));
            CHECK(worst <= 1e-10);
        }
    }
}

TEST_CASE("free-start value drops only the opening trade") {
    const MarketParams p{6, 0.2, 100.0};
    const GammaGrid g{-0.5, 1.5, 401};
    PrimalOptions no_store;
    no_store.store_surfaces = false;
    for (const auto& pen : {Penalty::quadratic(1.0), Penalty::truncated_zero(0.1)}) {
        const auto t = superrep_exact(p, pen, Claim::call(100), g, no_store);
        const auto l = superrep_lattice(p, pen, Claim::call(100), g, no_store);
        CHECK(t.value_free_start <= t.value);
        CHECK(t.value_free_start == Approx(l.value_free_start).epsilon(1e-12));
        // One step later the holding is already in place; the difference is
        // at most the cost of buying the root position.
        const double h = t.strategy.holdings[0];
        const double open = pen.bind(detail::node_context(p, 0, 100.0)).cost(h);
        CHECK(t.value - t.value_free_start <= open + 1e-9);
    }
    const auto f = superrep_exact(p, Penalty::proportional(0.0), Claim::call(100), g);
    CHECK(f.value_free_start == Approx(f.value).epsilon(1e-10));
}
