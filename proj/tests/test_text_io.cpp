#include <catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <random>
#include <sstream>

#include "frictionlab/text_io.hpp"

using namespace frictionlab;
using Catch::Approx;

namespace {

std::string temp_file(const std::string& name, const std::string& body) {
    const auto path = std::filesystem::temp_directory_path() / ("frictionlab_" + name);
    std::ofstream(path) << body;
    return path.string();
}

}  // namespace

TEST_CASE("strategy round trip is exact") {
    const MarketParams p{5, 0.2, 100.0};
    const auto r = superrep_exact(p, Penalty::quadratic(0.5), Claim::call(100), GammaGrid{-0.5, 1.5, 201});
    std::stringstream ss;
    write_strategy(ss, r.strategy);
    const auto back = read_strategy(ss);
    CHECK(back.n == r.strategy.n);
    CHECK(back.capital == r.strategy.capital);
    CHECK(back.holdings == r.strategy.holdings);

    std::stringstream again;
    write_strategy(again, back);
    std::stringstream first;
    write_strategy(first, r.strategy);
    CHECK(again.str() == first.str());
}

TEST_CASE("rows may come in any order") {
    std::istringstream in("#format=strategy\n#n=1\n#capital=2.5\nnode,holding\n\n# a comment\n0,0.25\n");
    const auto s = read_strategy(in);
    CHECK(s.capital == 2.5);
    CHECK(s.holdings == std::vector<double>{0.25});
    std::istringstream shuffled("#format=tree_measure\n#n=2\nnode,q\n2,0.3\n0,0.5\n1,0.7\n");
    CHECK(read_tree_measure(shuffled).q == std::vector<double>{0.5, 0.7, 0.3});
}

TEST_CASE("measure and kappa round trips") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0.01, 0.99);
    TreeMeasure m = TreeMeasure::constant(6, 0.5);
    for (double& q : m.q) q = u(rng);
    std::stringstream ss;
    write_measure(ss, m);
    CHECK(read_tree_measure(ss).q == m.q);

    const MarketParams p{12, 0.2, 100.0};
    const auto lat = kusuoka_measure_lattice(p, KappaProcess::constant(12, 0.04)).measure;
    std::stringstream ls;
    write_measure(ls, lat);
    const auto lat_back = read_lattice_measure(ls);
    detail::for_each_slot(12, true, [&](int, std::size_t s, std::size_t, std::size_t) { CHECK(lat_back.q[s] == lat.q[s]); });

    const auto kt = KappaProcess::constant(7, -0.03);
    std::stringstream ks;
    write_kappa(ks, kt);
    const auto kt_back = read_kappa(ks);
    CHECK(kt_back.is_deterministic());
    CHECK(kt_back.values() == kt.values());

    std::vector<double> by_node(tree::node_count(3), 0.0);
    for (std::size_t node = 0; node < tree::index(3, 0); ++node) {
        const double d = u(rng) * 0.1;
        by_node[tree::up_child(node)] = d;
        by_node[tree::down_child(node)] = d;
    }
    for (std::size_t node = tree::index(3, 0); node < by_node.size(); ++node) by_node[node] = 0.0;
    const auto kn = KappaProcess::per_node(3, by_node);
    std::stringstream ns;
    write_kappa(ns, kn);
    const auto kn_back = read_kappa(ns);
    CHECK_FALSE(kn_back.is_deterministic());
    CHECK(kn_back.values() == kn.values());
}

TEST_CASE("malformed tables are rejected") {
    auto bad = [](const std::string& text) {
        std::istringstream in(text);
        return read_tree_measure(in);
    };
    CHECK_THROWS_AS(bad("#format=tree_measure\n#n=2\nnode,q\n0,0.5\n1,0.5\n"), InvalidInput);          // missing node
    CHECK_THROWS_AS(bad("#format=tree_measure\n#n=1\nnode,q\n0,0.5\n0,0.5\n"), InvalidInput);          // duplicate
    CHECK_THROWS_AS(bad("#format=tree_measure\n#n=1\nnode,q\n3,0.5\n"), InvalidInput);                 // out of range
    CHECK_THROWS_AS(bad("#format=tree_measure\n#n=1\nnode,q\n0,1.5\n"), InvalidInput);                 // q > 1
    CHECK_THROWS_AS(bad("#format=tree_measure\n#n=1\nnode,q\n0,abc\n"), InvalidInput);                 // not a number
    CHECK_THROWS_AS(bad("#format=tree_measure\n#n=1\nnode,q\n0.5,0.5\n"), InvalidInput);               // fractional id
    CHECK_THROWS_AS(bad("#format=strategy\n#n=1\nnode,q\n0,0.5\n"), InvalidInput);                     // wrong format
    CHECK_THROWS_AS(bad("#format=tree_measure\nnode,q\n0,0.5\n"), InvalidInput);                       // no n
    CHECK_THROWS_AS(bad("#format=tree_measure\n#n=1\nnode,q\n0,0.5,1\n"), InvalidInput);               // extra field
    std::istringstream lat("#format=lattice_measure\n#n=2\nk,level,last,q\n0,0,0,0.5\n1,1,1,0.5\n");
    CHECK_THROWS_AS(read_lattice_measure(lat), InvalidInput);
    std::istringstream kap("#format=kappa_time\n#n=1\nk,kappa\n0,0.1\n1,0.1\n");
    CHECK_THROWS_AS(read_kappa(kap), InvalidInput);
}

TEST_CASE("two-column files for penalties and payoffs") {
    const auto pen = temp_file("pen.txt", "# nu g\nnu,g\n-1 0.5\n0, 0\n1\t0.5\n2 2.0 # steeper\n");
    const auto table = load_penalty_table(pen);
    const auto quad = Penalty::quadratic(0.5);
    CHECK(table.kind() == PenaltyKind::tabulated);
    const TradeContext ctx{0.0, 100.0, 4};
    CHECK(table.bind(ctx).cost(1.0) == Approx(quad.bind(ctx).cost(1.0)));

    const auto pay = temp_file("pay.txt", "80 0\n100 0\n120 20\n");
    const auto claim = load_payoff_table(pay);
    CHECK(claim.terminal(110.0) == Approx(10.0));
    CHECK(claim.terminal(130.0) == Approx(30.0));

    CHECK_THROWS_AS(load_payoff_table(temp_file("bad.txt", "80 0\n70 1\n")), InvalidInput);
    CHECK_THROWS_AS(load_payoff_table(temp_file("bad2.txt", "80 0\n90 x\n")), InvalidInput);
    CHECK_THROWS_AS(load_penalty_table(temp_file("bad3.txt", "-1 1\n0 0\n1 3\n2 3.5\n")), InvalidInput);  // not convex
    CHECK_THROWS_AS(load_payoff_table("/nonexistent/frictionlab.txt"), InvalidInput);
}

TEST_CASE("surface and dual record output") {
    const MarketParams p{2, 0.2, 100.0};
    const auto r = superrep_exact(p, Penalty::quadratic(0.5), Claim::call(100), GammaGrid{0.0, 1.0, 5});
    std::ostringstream os;
    write_surface_csv(os, r.surface);
    const std::string csv = os.str();
    CHECK(csv.rfind("state,gamma,value\n", 0) == 0);
    CHECK(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')) == 1 + r.surface.states * static_cast<std::size_t>(r.surface.grid.m));

    DualReport rep;
    rep.value = 6.5;
    rep.measure = TreeMeasure::constant(2, 0.5);
    rep.iterations = 12;
    rep.method = "ascent";
    std::ostringstream ds;
    write_dual_record(ds, rep, 6.5 * (1 + 1e-4));
    std::istringstream in(ds.str());
    std::string header, row;
    std::getline(in, header);
    std::getline(in, row);
    CHECK(header == "method,n,value,primal,gap,iterations,starts,evaluations,gradient_norm,certified");
    CHECK(row.rfind("ascent,2,6.5,", 0) == 0);
    CHECK(row.find(",12,") != std::string::npos);
}
