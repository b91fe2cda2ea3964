#pragma once

// Experiment drivers behind the command-line tool. Each run_* function
// returns a report; write_* renders it as CSV with a fixed column order and
// 12 significant digits. Wall-clock times are kept out of the main tables
// (they go to timings.csv) so that repeated runs give identical files.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "frictionlab/dual.hpp"
#include "frictionlab/harness/config.hpp"
#include "frictionlab/kusuoka.hpp"
#include "frictionlab/limit_pde.hpp"
#include "frictionlab/parallel.hpp"
#include "frictionlab/primal.hpp"
#include "frictionlab/text_io.hpp"

namespace frictionlab::harness {

enum class ExitCode : int { ok = 0, failure = 1, invalid_config = 2, threshold_breach = 3, engine_refusal = 4 };

inline std::string fmt12(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string fmt12(const std::optional<double>& v) { return v ? fmt12(*v) : std::string(); }

namespace run_detail {

using Clock = std::chrono::steady_clock;

inline double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

inline double relative(double diff, double ref) { return diff / std::max(std::abs(ref), 1e-12); }

}  // namespace run_detail

// price

struct PriceRow {
    int n = 0;
    std::string engine;
    double value = 0.0;
    double value_free_start = 0.0;
    bool boundary_hit = false;
    int widenings = 0;
    GammaGrid grid;
    std::optional<Strategy> strategy;  // exact engine only
    double runtime_ms = 0.0;
};

inline PriceRow price_one(const ExperimentConfig& cfg, int n, const Penalty& penalty, const Claim& claim, int threads) {
    const auto t0 = run_detail::Clock::now();
    PrimalOptions opt = cfg.primal_options();
    opt.threads = threads;
    opt.store_surfaces = false;
    PriceRow row;
    row.n = n;
    if (cfg.use_lattice(n, claim)) {
        const auto r = superrep_lattice(cfg.market(n), penalty, claim, cfg.gamma_grid(claim), opt);
        row.engine = "lattice";
        row.value = r.value;
        row.value_free_start = r.value_free_start;
        row.boundary_hit = r.boundary_hit;
        row.widenings = r.widenings;
        row.grid = r.grid;
    } else {
        auto r = superrep_exact(cfg.market(n), penalty, claim, cfg.gamma_grid(claim), opt);
        row.engine = "exact";
        row.value = r.value;
        row.value_free_start = r.value_free_start;
        row.boundary_hit = r.boundary_hit;
        row.widenings = r.widenings;
        row.grid = r.grid;
        row.strategy = std::move(r.strategy);
    }
    row.runtime_ms = run_detail::ms_since(t0);
    return row;
}

inline std::vector<PriceRow> run_price(const ExperimentConfig& cfg) {
    const auto penalty = cfg.make_penalty();
    const auto claim = cfg.make_claim();
    std::vector<PriceRow> rows(cfg.n.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = price_one(cfg, cfg.n[i], penalty, claim, cfg.threads);
    return rows;
}

inline void write_price_csv(std::ostream& os, const std::vector<PriceRow>& rows) {
    os << "n,engine,value,value_free_start,boundary_hit,widenings,gamma_lo,gamma_hi,gamma_m\n";
    for (const auto& r : rows)
        os << r.n << ',' << r.engine << ',' << fmt12(r.value) << ',' << fmt12(r.value_free_start) << ','
           << (r.boundary_hit ? 1 : 0) << ',' << r.widenings << ',' << fmt12(r.grid.lo) << ',' << fmt12(r.grid.hi) << ','
           << r.grid.m << '\n';
}

// dual

struct DualityRow {
    int n = 0;
    double primal = 0.0;
    double dual = 0.0;
    double gap = 0.0;  // (primal - dual) / |primal|
    std::string method;
    long long evaluations = 0;
    double runtime_ms = 0.0;
};

struct DualityReport {
    std::vector<DualityRow> rows;
    double threshold = 0.0;

    bool passed() const {
        for (const auto& r : rows)
            if (!(std::abs(r.gap) <= threshold)) return false;
        return true;
    }
};

inline DualReport solve_dual(const ExperimentConfig& cfg, int n, const Penalty& penalty, const Claim& claim, bool lattice) {
    const auto params = cfg.market(n);
    std::string method = cfg.dual_method;
    if (method == "auto") method = n <= kBruteForceCap ? "brute" : "ascent";
    if (method == "brute") return dual_brute_force(params, penalty, claim, cfg.q_resolution);
    if (lattice && claim.markov_state() == MarkovState::terminal_price)
        return dual_ascent_lattice(params, penalty, claim, cfg.ascent_options());
    return dual_ascent(params, penalty, claim, cfg.ascent_options());
}

/// Primal on the exhaustive tree against the dual; every n must be within
/// the exhaustive cap.
inline DualityReport run_duality_check(const ExperimentConfig& cfg) {
    for (int n : cfg.n)
        frictionlab::detail::require(n <= kExhaustiveCap, "dual: n=" + std::to_string(n) + " exceeds the exhaustive cap " +
                                                              std::to_string(kExhaustiveCap));
    frictionlab::detail::require(cfg.dual_method != "none", "dual: dual.method is 'none'");
    const auto penalty = cfg.make_penalty();
    const auto claim = cfg.make_claim();
    DualityReport rep;
    rep.threshold = cfg.thresholds.duality_gap;
    for (int n : cfg.n) {
        const auto t0 = run_detail::Clock::now();
        PrimalOptions opt = cfg.primal_options();
        opt.store_surfaces = false;
        const double primal = superrep_exact(cfg.market(n), penalty, claim, cfg.gamma_grid(claim), opt).value;
        const auto d = solve_dual(cfg, n, penalty, claim, false);
        DualityRow row;
        row.n = n;
        row.primal = primal;
        row.dual = d.value;
        row.gap = run_detail::relative(primal - d.value, primal);
        row.method = d.method;
        row.evaluations = d.evaluations;
        row.runtime_ms = run_detail::ms_since(t0);
        rep.rows.push_back(row);
    }
    return rep;
}

inline void write_duality_csv(std::ostream& os, const DualityReport& rep) {
    os << "n,primal,dual,gap,method,evaluations,within_threshold\n";
    for (const auto& r : rep.rows)
        os << r.n << ',' << fmt12(r.primal) << ',' << fmt12(r.dual) << ',' << fmt12(r.gap) << ',' << r.method << ','
           << r.evaluations << ',' << (std::abs(r.gap) <= rep.threshold ? 1 : 0) << '\n';
}

// converge

struct ConvergenceRow {
    int n = 0;
    double primal = 0.0;                 // V_n
    double primal_free_start = 0.0;      // V_n with the opening position acquired at no cost
    std::optional<double> dual;          // lower bound from the dual solver
    std::optional<double> kusuoka;       // lower bound from the constant-kappa measure
    double limit = 0.0;
    double gap = 0.0;                    // primal - limit
    double runtime_ms = 0.0;
};

struct ConvergenceReport {
    std::vector<ConvergenceRow> rows;
    double limit = 0.0;
    bool trend_decreasing = true;  // |gap| strictly decreasing over the last three rows
    double final_relative_gap = 0.0;
    bool ordering_ok = true;       // dual and Kusuoka below the primal
    double threshold = 0.0;

    bool passed() const { return trend_decreasing && ordering_ok && final_relative_gap <= threshold; }
};

/// Decreasing |gap| over the last min(3, rows) entries.
inline bool last_three_decreasing(const std::vector<ConvergenceRow>& rows) {
    const std::size_t from = rows.size() >= 3 ? rows.size() - 3 : 0;
    for (std::size_t i = from + 1; i < rows.size(); ++i)
        if (!(std::abs(rows[i].gap) < std::abs(rows[i - 1].gap))) return false;
    return true;
}

/// Lattice primal, dual bound, optional Kusuoka bound and the HJB limit for
/// each n. Rows are computed concurrently and reported in config order.
inline ConvergenceReport run_convergence(const ExperimentConfig& cfg) {
    const auto penalty = cfg.make_penalty();
    const auto claim = cfg.make_claim();
    if (claim.markov_state() != MarkovState::terminal_price)
        throw EngineRefusal(std::string("converge: the limit is only evaluated for terminal-price claims, got ") +
                            to_string(claim.kind()));
    const auto spec = cfg.limit_spec();
    ConvergenceReport rep;
    rep.threshold = cfg.thresholds.convergence_gap;
    HJBGrid grid = cfg.hjb_grid(spec);
    grid.store_every = 0;
    rep.limit = hjb_solve(spec, claim, grid).value;

    std::vector<ConvergenceRow> rows(cfg.n.size());
    ExperimentConfig inner = cfg;
    inner.threads = 1;
    parallel_for(cfg.threads, rows.size(), [&](std::size_t i) {
        const int n = cfg.n[i];
        const auto t0 = run_detail::Clock::now();
        const auto p = price_one(inner, n, penalty, claim, 1);
        ConvergenceRow& row = rows[i];
        row.n = n;
        row.primal = p.value;
        row.primal_free_start = p.value_free_start;
        if (cfg.dual_method != "none") row.dual = solve_dual(inner, n, penalty, claim, p.engine == "lattice").value;
        if (cfg.kusuoka_a) row.kusuoka = kusuoka_lower_bound(cfg.market(n), penalty, claim, *cfg.kusuoka_a).value();
        row.limit = rep.limit;
        row.gap = row.primal - rep.limit;
        row.runtime_ms = run_detail::ms_since(t0);
    });
    rep.rows = std::move(rows);
    for (const auto& r : rep.rows) {
        if (r.dual && *r.dual > r.primal + cfg.thresholds.ordering) rep.ordering_ok = false;
        if (r.kusuoka && *r.kusuoka > r.primal + cfg.thresholds.ordering) rep.ordering_ok = false;
    }
    rep.trend_decreasing = last_three_decreasing(rep.rows);
    rep.final_relative_gap = std::abs(run_detail::relative(rep.rows.back().gap, rep.limit));
    return rep;
}

inline void write_convergence_csv(std::ostream& os, const ConvergenceReport& rep) {
    os << "n,primal,primal_free_start,dual,kusuoka,limit,gap,relative_gap\n";
    for (const auto& r : rep.rows)
        os << r.n << ',' << fmt12(r.primal) << ',' << fmt12(r.primal_free_start) << ',' << fmt12(r.dual) << ','
           << fmt12(r.kusuoka) << ',' << fmt12(r.limit) << ',' << fmt12(r.gap) << ','
           << fmt12(run_detail::relative(r.gap, r.limit)) << '\n';
}

inline void write_timings_csv(std::ostream& os, const std::vector<std::pair<int, double>>& rows) {
    os << "n,runtime_ms\n";
    for (const auto& [n, ms] : rows) os << n << ',' << fmt12(ms) << '\n';
}

// hjb

inline HJBResult run_hjb(const ExperimentConfig& cfg) {
    const auto spec = cfg.limit_spec();
    return hjb_solve(spec, cfg.make_claim(), cfg.hjb_grid(spec));
}

// premium

struct PremiumSummary {
    double eps = 0.0;
    double c = 0.0;
    PremiumReport probe;
    double limit_at_c = 0.0;
    std::optional<int> kusuoka_n;
    std::optional<double> kusuoka;  // Kusuoka bound at the largest n, minus BS(sigma)
};

inline PremiumSummary run_premium_probe(const ExperimentConfig& cfg) {
    const auto spec = cfg.limit_spec();
    const auto claim = cfg.make_claim();
    PremiumSummary s;
    s.eps = cfg.premium_eps;
    s.c = spec.c;
    s.probe = liquidity_premium_probe(spec, claim, cfg.premium_eps, cfg.hjb_nx);
    HJBGrid grid = cfg.hjb_grid(spec);
    grid.store_every = 0;
    s.limit_at_c = hjb_solve(spec, claim, grid).value;
    if (cfg.kusuoka_a) {
        s.kusuoka_n = cfg.n.back();
        s.kusuoka = kusuoka_lower_bound(cfg.market(cfg.n.back()), cfg.make_penalty(), claim, *cfg.kusuoka_a).value() -
                    s.probe.bs_baseline;
    }
    return s;
}

inline void write_premium_csv(std::ostream& os, const PremiumSummary& s) {
    const auto& p = s.probe;
    os << "eps,c,bs,limit_eps,limit_c,premium,closed_form,constant_control_bound,best_constant_a,kusuoka_n,kusuoka_"
          "premium,cost_scale\n";
    os << fmt12(s.eps) << ',' << fmt12(s.c) << ',' << fmt12(p.bs_baseline) << ',' << fmt12(p.lower_estimate) << ','
       << fmt12(s.limit_at_c) << ',' << fmt12(p.premium) << ',' << fmt12(p.closed_form) << ','
       << fmt12(p.constant_control_bound) << ',' << fmt12(p.best_constant_a) << ','
       << (s.kusuoka_n ? std::to_string(*s.kusuoka_n) : std::string()) << ',' << fmt12(s.kusuoka) << ','
       << fmt12(p.cost_scale) << '\n';
}

// verify

struct VerifySummary {
    int n = 0;
    double capital = 0.0;
    VerifyReport report;
    double threshold = 0.0;

    bool passed() const { return report.min_slack >= threshold; }
};

/// Audits the strategy in cfg.strategy_file, or the optimal one at the
/// largest n when no file is given.
inline VerifySummary run_verify(const ExperimentConfig& cfg) {
    const auto penalty = cfg.make_penalty();
    const auto claim = cfg.make_claim();
    VerifySummary s;
    s.threshold = cfg.thresholds.verify_slack;
    Strategy strategy;
    if (!cfg.strategy_file.empty()) {
        auto in = open_input(cfg.resolve(cfg.strategy_file));
        strategy = read_strategy(in);
    } else {
        const int n = cfg.n.back();
        frictionlab::detail::require(n <= kExhaustiveCap, "verify: n=" + std::to_string(n) + " exceeds the exhaustive cap");
        PrimalOptions opt = cfg.primal_options();
        opt.store_surfaces = false;
        strategy = superrep_exact(cfg.market(n), penalty, claim, cfg.gamma_grid(claim), opt).strategy;
    }
    s.n = strategy.n;
    s.capital = strategy.capital;
    s.report = verify_superreplication(cfg.market(strategy.n), penalty, strategy, claim, strategy.capital);
    return s;
}

inline void write_verify_csv(std::ostream& os, const VerifySummary& s) {
    os << "n,capital,paths,min_slack,worst_path\n";
    std::string path;
    for (int mv : s.report.worst_path) path += mv > 0 ? 'u' : 'd';
    os << s.n << ',' << fmt12(s.capital) << ',' << s.report.paths << ',' << fmt12(s.report.min_slack) << ',' << path << '\n';
}

// dispatch

inline const std::vector<std::string>& command_names() {
    static const std::vector<std::string> names{"price", "dual", "converge", "hjb", "verify", "premium"};
    return names;
}

inline void write_file(const ExperimentConfig& cfg, const std::string& name, const std::string& body) {
    std::filesystem::create_directories(cfg.out_dir);
    const auto path = std::filesystem::path(cfg.out_dir) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidInput("cannot write " + path.string());
    out << body;
}

/// Runs one command, writes its files under cfg.out_dir and a summary to
/// log. Errors are reported on err and mapped to exit codes.
inline ExitCode run_command(const std::string& name, const ExperimentConfig& cfg, std::ostream& log, std::ostream& err) {
    try {
        std::ostringstream table;
        ExitCode code = ExitCode::ok;
        if (name == "price") {
            const auto rows = run_price(cfg);
            write_price_csv(table, rows);
            write_file(cfg, "price.csv", table.str());
            for (const auto& r : rows)
                if (r.strategy) {
                    std::ostringstream s;
                    write_strategy(s, *r.strategy);
                    write_file(cfg, "strategy_n" + std::to_string(r.n) + ".csv", s.str());
                }
            std::vector<std::pair<int, double>> t;
            for (const auto& r : rows) t.emplace_back(r.n, r.runtime_ms);
            std::ostringstream ts;
            write_timings_csv(ts, t);
            write_file(cfg, "timings.csv", ts.str());
        } else if (name == "dual") {
            const auto rep = run_duality_check(cfg);
            write_duality_csv(table, rep);
            write_file(cfg, "dual.csv", table.str());
            if (!rep.passed()) code = ExitCode::threshold_breach;
        } else if (name == "converge") {
            const auto rep = run_convergence(cfg);
            write_convergence_csv(table, rep);
            write_file(cfg, "convergence.csv", table.str());
            std::vector<std::pair<int, double>> t;
            for (const auto& r : rep.rows) t.emplace_back(r.n, r.runtime_ms);
            std::ostringstream ts;
            write_timings_csv(ts, t);
            write_file(cfg, "timings.csv", ts.str());
            table << "# trend_decreasing=" << (rep.trend_decreasing ? 1 : 0)
                  << " final_relative_gap=" << fmt12(rep.final_relative_gap) << " ordering_ok=" << (rep.ordering_ok ? 1 : 0)
                  << '\n';
            if (!rep.passed()) code = ExitCode::threshold_breach;
        } else if (name == "hjb") {
            const auto r = run_hjb(cfg);
            table << "value,steps,dt,nx\n"
                  << fmt12(r.value) << ',' << r.steps << ',' << fmt12(r.dt) << ',' << r.x.size() << '\n';
            write_file(cfg, "hjb.csv", table.str());
            if (!r.slices.empty()) {
                std::ostringstream s;
                write_hjb_csv(s, r);
                write_file(cfg, "hjb_surface.csv", s.str());
            }
        } else if (name == "verify") {
            const auto s = run_verify(cfg);
            write_verify_csv(table, s);
            write_file(cfg, "verify.csv", table.str());
            if (!s.passed()) code = ExitCode::threshold_breach;
        } else if (name == "premium") {
            const auto s = run_premium_probe(cfg);
            write_premium_csv(table, s);
            write_file(cfg, "premium.csv", table.str());
        } else {
            err << "unknown command '" << name << "'\n";
            return ExitCode::invalid_config;
        }
        log << table.str();
        return code;
    } catch (const InvalidInput& e) {
        err << "invalid input: " << e.what() << '\n';
        return ExitCode::invalid_config;
    } catch (const EngineRefusal& e) {
        err << "engine refusal: " << e.what() << '\n';
        return ExitCode::engine_refusal;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return ExitCode::failure;
    }
}

}  // namespace frictionlab::harness
