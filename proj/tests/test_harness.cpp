#include <catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "frictionlab/harness/config.hpp"
#include "frictionlab/harness/experiments.hpp"

using namespace frictionlab;
using namespace frictionlab::harness;
using Catch::Approx;

namespace {

ExperimentConfig cfg_from(const std::string& body, const std::vector<std::string>& env = {}) {
    return parse_config("{\"schema_version\": 1, " + body + "}", env);
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("frictionlab_harness_" + name);
    std::filesystem::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("config defaults and fields") {
    const auto c = parse_config("{\"schema_version\": 1}");
    CHECK(c.n == std::vector<int>{8});
    CHECK(c.sigma == 0.2);
    CHECK(c.make_claim().kind() == ClaimKind::call);

    const auto d = cfg_from(R"("market": {"n": [2, 4], "sigma": 0.3, "s0": 50},
        "penalty": {"kind": "quadratic", "lambda": 2, "truncation": 0.25},
        "claim": {"kind": "put", "strike": 45},
        "grids": {"gamma": {"lo": -1, "hi": 1, "m": 101}, "hjb": {"nx": 401, "scan_controls": true}},
        "dual": {"method": "ascent", "starts": 2}, "kusuoka_a": 0.05, "seed": 9, "output": {"dir": "x"})");
    CHECK(d.n == std::vector<int>{2, 4});
    CHECK(d.s0 == 50.0);
    CHECK(d.make_penalty().kind() == PenaltyKind::truncated_quadratic);
    CHECK(d.make_penalty().truncation_level() == Approx(0.25));
    CHECK(d.make_claim().strike() == 45.0);
    CHECK(d.gamma->m == 101);
    CHECK(d.hjb_scan);
    CHECK(d.ascent_options().starts == 2);
    CHECK(d.ascent_options().seed == 9);
    CHECK(*d.kusuoka_a == 0.05);
    CHECK(d.out_dir == "x");
    CHECK(cfg_from(R"("market": {"n": 5})").n == std::vector<int>{5});
    CHECK(cfg_from(R"("penalty": {"kind": "zero", "truncation": 0.1})").make_penalty().kind() == PenaltyKind::truncated_zero);
}

TEST_CASE("invalid configs are rejected") {
    CHECK_THROWS_AS(parse_config("not json"), InvalidInput);
    CHECK_THROWS_AS(parse_config("{}"), InvalidInput);
    CHECK_THROWS_AS(parse_config("{\"schema_version\": 2}"), InvalidInput);
    CHECK_THROWS_AS(cfg_from(R"("markt": {})"), InvalidInput);
    CHECK_THROWS_AS(cfg_from(R"("market": {"n": [4, 2]})"), InvalidInput);
    CHECK_THROWS_AS(cfg_from(R"("market": {"n": []})"), InvalidInput);
    CHECK_THROWS_AS(cfg_from(R"("market": {"sigma": "high"})"), InvalidInput);
    CHECK_THROWS_AS(cfg_from(R"("market": {"sigma": -1})"), InvalidInput);
    CHECK_THROWS_AS(cfg_from(R"("penalty": {"kind": "cubic"})"), InvalidInput);
    CHECK_THROWS_AS(cfg_from(R"("penalty": {"kind": "zero"})"), InvalidInput);
    CHECK_THROWS_AS(cfg_from(R"("penalty": {"kind": "quadratic", "lamda": 1})"), InvalidInput);
    CHECK_THROWS_AS(cfg_from(R"("claim": {"kind": "tabulated", "table": "/nonexistent/pay.txt"})"), InvalidInput);
    CHECK_THROWS_AS(cfg_from(R"("engine": "gpu")"), InvalidInput);
    CHECK_THROWS_AS(cfg_from(R"("grids": {"gamma": {"lo": 1, "hi": 0}})"), InvalidInput);
    CHECK_THROWS_AS(cfg_from(R"("threads": 0)"), InvalidInput);
}

TEST_CASE("environment overrides") {
    const std::vector<std::string> env{"FRICTIONLAB_MARKET__SIGMA=0.3", "FRICTIONLAB_SEED=7", "FRICTIONLAB_MARKET__N=[2,3]",
                                       "FRICTIONLAB_CLAIM__KIND=put", "PATH=/usr/bin", "FRICTIONLAB_PENALTY__LAMBDA=0.25"};
    const auto c = cfg_from(R"("market": {"n": [8], "sigma": 0.2}, "penalty": {"kind": "quadratic", "lambda": 1})", env);
    CHECK(c.sigma == 0.3);
    CHECK(c.seed == 7);
    CHECK(c.n == std::vector<int>{2, 3});
    CHECK(c.claim.kind == "put");
    CHECK(c.penalty.lambda == 0.25);
    CHECK_THROWS_AS(cfg_from("", {"FRICTIONLAB_BOGUS=1"}), InvalidInput);
}

TEST_CASE("duality check examples") {
    const auto quad = cfg_from(R"("market": {"n": [2]}, "penalty": {"kind": "quadratic", "lambda": 0.5},
        "grids": {"gamma": {"lo": -0.5, "hi": 1.5, "m": 401}})");
    const auto rep = run_duality_check(quad);
    CHECK(rep.passed());
    CHECK(std::abs(rep.rows[0].gap) <= 1e-3);

    const auto flat = cfg_from(R"("market": {"n": [3]}, "claim": {"kind": "constant", "strike": 7})");
    const auto f = run_duality_check(flat);
    CHECK(f.rows[0].primal == 7.0);
    CHECK(f.rows[0].dual == 7.0);

    const auto zero = cfg_from(R"("market": {"n": [2]}, "penalty": {"kind": "zero", "truncation": 0.1},
        "grids": {"gamma": {"lo": -0.5, "hi": 1.5, "m": 401}})");
    const auto z = run_duality_check(zero);
    CHECK(z.passed());
    CHECK(std::abs(z.rows[0].gap) <= 1e-3);
    CHECK(z.rows[0].dual <= z.rows[0].primal + 1e-9);

    const auto asc = cfg_from(R"("market": {"n": [5]}, "penalty": {"kind": "quadratic", "lambda": 0.5},
        "grids": {"gamma": {"lo": -0.5, "hi": 1.5, "m": 401}})");
    const auto a = run_duality_check(asc);
    CHECK(a.rows[0].method == "ascent");
    CHECK(std::abs(a.rows[0].gap) <= 2e-3);
}

TEST_CASE("convergence study rows") {
    const auto flat = cfg_from(R"("market": {"n": [4, 8, 16]}, "claim": {"kind": "constant", "strike": 3},
        "penalty": {"kind": "quadratic", "lambda": 1, "truncation": 0.25}, "kusuoka_a": 0.05, "grids": {"hjb": {"nx": 201}})");
    const auto rf = run_convergence(flat);
    for (const auto& r : rf.rows) {
        CHECK(r.primal == 3.0);
        CHECK(r.limit == Approx(3.0).epsilon(1e-13));
        CHECK(r.gap == Approx(0.0).margin(1e-12));
        CHECK(*r.kusuoka <= 3.0);  // the measure is not CRR, so it pays a penalty
    }

    const auto quad = cfg_from(R"("market": {"n": [4, 8, 16]}, "penalty": {"kind": "quadratic", "lambda": 1, "truncation": 0.25},
        "kusuoka_a": 0.05, "dual": {"method": "ascent", "steps": 100, "starts": 2},
        "grids": {"gamma": {"lo": -0.5, "hi": 1.5, "m": 201}, "hjb": {"nx": 201}}, "threads": 3)");
    const auto rq = run_convergence(quad);
    REQUIRE(rq.rows.size() == 3);
    CHECK(rq.ordering_ok);
    for (const auto& r : rq.rows) {
        CHECK(*r.dual <= r.primal + 1e-6);
        CHECK(*r.kusuoka <= r.primal + 1e-6);
        CHECK(r.primal_free_start <= r.primal);
    }

    std::vector<ConvergenceRow> rows(4);
    for (int i = 0; i < 4; ++i) rows[i].gap = 1.0 / (i + 1);
    CHECK(last_three_decreasing(rows));
    rows[0].gap = 0.1;  // outside the last three
    CHECK(last_three_decreasing(rows));
    rows[3].gap = -0.6;
    CHECK_FALSE(last_three_decreasing(rows));

    const auto asian = cfg_from(R"("market": {"n": [4]}, "claim": {"kind": "asian_call"}, "penalty": {"kind": "zero", "truncation": 0.1})");
    CHECK_THROWS_AS(run_convergence(asian), EngineRefusal);
    const auto untruncated = cfg_from(R"("market": {"n": [4]}, "penalty": {"kind": "quadratic"})");
    CHECK_THROWS_AS(run_convergence(untruncated), InvalidInput);
}

TEST_CASE("premium probe examples") {
    const auto zero = cfg_from(R"("penalty": {"kind": "zero", "truncation": 0.05}, "premium": {"eps": 0.05})");
    const auto z = run_premium_probe(zero);
    CHECK(z.probe.premium > 0.0);
    REQUIRE(z.probe.closed_form.has_value());
    CHECK(std::abs(z.probe.premium - *z.probe.closed_form) <= 1e-3 * z.probe.lower_estimate);

    const auto flat = cfg_from(R"("penalty": {"kind": "zero", "truncation": 0.05}, "claim": {"kind": "constant", "strike": 2})");
    CHECK(std::abs(run_premium_probe(flat).probe.premium) <= 1e-12);

    const auto quad = cfg_from(R"("penalty": {"kind": "quadratic", "lambda": 1, "truncation": 0.25}, "premium": {"eps": 0.1},
        "market": {"n": [16]}, "kusuoka_a": 0.05)");
    const auto q = run_premium_probe(quad);
    REQUIRE(q.probe.constant_control_bound.has_value());
    CHECK(q.probe.premium >= *q.probe.constant_control_bound - 1e-3);
    CHECK(q.limit_at_c >= q.probe.lower_estimate - 1e-9);
    CHECK(*q.kusuoka_n == 16);
}

TEST_CASE("exit codes") {
    std::ostringstream log, err;
    auto dir = scratch("codes");
    auto with_out = [&](ExperimentConfig c) {
        c.out_dir = dir.string();
        return c;
    };
    const auto ok = with_out(cfg_from(R"("market": {"n": [2]}, "penalty": {"kind": "quadratic", "lambda": 0.5})"));
    CHECK(run_command("dual", ok, log, err) == ExitCode::ok);
    CHECK(std::filesystem::exists(dir / "dual.csv"));

    auto strict = ok;
    strict.thresholds.duality_gap = 0.0;
    strict.dual_method = "ascent";
    strict.ascent.steps = 1;
    CHECK(run_command("dual", strict, log, err) == ExitCode::threshold_breach);

    auto big = ok;
    big.n = {20};
    CHECK(run_command("dual", big, log, err) == ExitCode::invalid_config);
    CHECK(run_command("frobnicate", ok, log, err) == ExitCode::invalid_config);

    const auto asian = with_out(cfg_from(R"("market": {"n": [4]}, "claim": {"kind": "asian_call"},
        "penalty": {"kind": "zero", "truncation": 0.1})"));
    CHECK(run_command("converge", asian, log, err) == ExitCode::engine_refusal);
    CHECK(run_command("hjb", asian, log, err) == ExitCode::engine_refusal);

    // A strategy with too little capital fails the audit.
    const auto priced = with_out(cfg_from(R"("market": {"n": [4]}, "engine": "exact", "penalty": {"kind": "quadratic", "lambda": 0.5})"));
    CHECK(run_command("price", priced, log, err) == ExitCode::ok);
    auto in = open_input((dir / "strategy_n4.csv").string());
    auto s = read_strategy(in);
    auto audited = priced;
    audited.strategy_file = (dir / "strategy_n4.csv").string();
    CHECK(run_command("verify", audited, log, err) == ExitCode::ok);
    s.capital -= 0.01;
    {
        std::ofstream out(dir / "short.csv");
        write_strategy(out, s);
    }
    audited.strategy_file = (dir / "short.csv").string();
    CHECK(run_command("verify", audited, log, err) == ExitCode::threshold_breach);
}

TEST_CASE("output is deterministic and thread-independent") {
    const std::string body = R"("market": {"n": [3, 6, 12]}, "penalty": {"kind": "quadratic", "lambda": 1, "truncation": 0.25},
        "kusuoka_a": 0.05, "dual": {"method": "ascent", "steps": 60, "starts": 3},
        "grids": {"gamma": {"lo": -0.5, "hi": 1.5, "m": 101}, "hjb": {"nx": 101}})";
    std::vector<std::string> files;
    for (int threads : {1, 1, 4}) {
        auto c = cfg_from(body);
        c.threads = threads;
        const auto dir = scratch("det" + std::to_string(files.size()));
        c.out_dir = dir.string();
        std::ostringstream log, err;
        run_command("converge", c, log, err);
        files.push_back(slurp(dir / "convergence.csv"));
    }
    CHECK(files[0] == files[1]);
    CHECK(files[0] == files[2]);
    CHECK(files[0].rfind("n,primal,primal_free_start,dual,kusuoka,limit,gap,relative_gap\n", 0) == 0);
}

TEST_CASE("number formatting") {
    CHECK(fmt12(1.0 / 3.0) == "0.333333333333");
    CHECK(fmt12(12345678.9012345) == "12345678.9012");
    CHECK(fmt12(std::optional<double>{}) == "");
}
