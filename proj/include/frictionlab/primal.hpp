#pragma once

// Super-replication cost by backward induction on the wealth recursion
//   Y(k+1) = Y(k) + gamma(k+1) (S(k+1) - S(k)) - g(k/n, S, gamma(k+1) - gamma(k)).
//
// C_k(u, gamma) is the minimal capital needed at node u holding gamma shares
// before trading:
//   C_n(u, .) = F(u)
//   C_k(u, gamma) = min_{gamma'} g(gamma' - gamma)
//                   + max_{v child} [C_{k+1}(v, gamma') - gamma' (S(v) - S(u))].
// Each C_k(u, .) is convex and is stored on a uniform holdings grid and read
// piecewise-linearly in between. The inner minimization is exact for that
// piecewise-linear representation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "frictionlab/error.hpp"
#include "frictionlab/friction.hpp"
#include "frictionlab/market_tree.hpp"
#include "frictionlab/parallel.hpp"
#include "frictionlab/payoffs.hpp"

namespace frictionlab {

/// Uniform grid of m holdings on [lo, hi].
struct GammaGrid {
    double lo = -2.0;
    double hi = 2.0;
    int m = 401;

    void validate() const {
        detail::require(std::isfinite(lo) && std::isfinite(hi) && lo < hi, "GammaGrid: need lo < hi");
        detail::require(m >= 3, "GammaGrid: need m >= 3");
    }
    double step() const { return (hi - lo) / (m - 1); }
    double point(int j) const { return j == m - 1 ? hi : lo + j * step(); }

    /// Default bounds [-2 Lip, 2 Lip] (or [-1, 1] for a flat payoff).
    static GammaGrid for_claim(const Claim& claim, int m = 401) {
        const double lip = claim.lipschitz();
        const double w = lip > 0.0 ? 2.0 * lip : 1.0;
        return GammaGrid{-w, w, m};
    }

    /// Same step, twice the width, centred at the same point. For odd m the
    /// old points are a subset of the new ones.
    GammaGrid widened() const {
        const double half = hi - lo;
        const double mid = 0.5 * (lo + hi);
        return GammaGrid{mid - half, mid + half, 2 * m - 1};
    }
    /// Same bounds, half the step.
    GammaGrid refined() const { return GammaGrid{lo, hi, 2 * m - 1}; }
};

/// Piecewise-linear read of grid samples, extended linearly past the ends.
inline double interpolate_on(const GammaGrid& grid, const double* v, double x) {
    const double h = grid.step();
    double pos = (x - grid.lo) / h;
    int i = static_cast<int>(std::floor(pos));
    i = std::clamp(i, 0, grid.m - 2);
    const double w = pos - i;
    if (w == 0.0) return v[i];
    if (w == 1.0) return v[i + 1];
    return (1.0 - w) * v[i] + w * v[i + 1];
}

/// Per-state convex functions of pre-trade holdings, sampled on a GammaGrid.
struct ValueSurface {
    GammaGrid grid;
    std::size_t states = 0;
    std::vector<double> values;  // state-major, grid.m values per state

    std::span<const double> at(std::size_t state) const {
        return {values.data() + state * static_cast<std::size_t>(grid.m), static_cast<std::size_t>(grid.m)};
    }
    double value(std::size_t state, double gamma) const { return interpolate_on(grid, at(state).data(), gamma); }
    bool empty() const { return values.empty(); }

    /// Most negative discrete second difference over all states.
    double min_second_difference() const {
        double out = HUGE_VAL;
        for (std::size_t s = 0; s < states; ++s) {
            const auto v = at(s);
            for (int j = 1; j + 1 < grid.m; ++j) out = std::min(out, v[j - 1] - 2 * v[j] + v[j + 1]);
        }
        return out;
    }
};

/// Lattice state numbering: (k, level) -> k(k+1)/2 + (level + k)/2.
inline std::size_t lattice_state(int k, int level) {
    return static_cast<std::size_t>(k) * (k + 1) / 2 + static_cast<std::size_t>((level + k) / 2);
}
inline std::size_t lattice_state_count(int n) { return static_cast<std::size_t>(n + 1) * (n + 2) / 2; }

/// Post-trade holdings gamma(k+1) for every interior node of the full tree
/// (heap order), plus the initial capital.
struct Strategy {
    int n = 0;
    double capital = 0.0;
    std::vector<double> holdings;

    static Strategy never_trade(int n, double capital) {
        return Strategy{n, capital, std::vector<double>(tree::interior_count(n), 0.0)};
    }
    double at(std::span<const int> prefix) const { return holdings.at(tree::from_moves(prefix)); }
};

struct PrimalOptions {
    int exhaustive_cap = kExhaustiveCap;
    int threads = 1;
    bool store_surfaces = true;
    bool auto_widen = true;
    int max_widenings = 3;
    int average_buckets = 101;  // lattice engine, Asian claims
    bool warm_start = true;     // reuse the previous holding when sweeping the grid
};

struct PrimalResult {
    double value = 0.0;
    double value_free_start = 0.0;  // min over gamma of the root surface: opening position acquired at no cost
    Strategy strategy;
    ValueSurface surface;  // tree nodes in heap order
    bool boundary_hit = false;
    int widenings = 0;
    GammaGrid grid;
};

struct LatticeResult {
    double value = 0.0;
    double value_free_start = 0.0;
    ValueSurface surface;  // lattice states, terminal-price claims only
    bool boundary_hit = false;
    int widenings = 0;
    GammaGrid grid;
};

namespace detail {

/// One node of the recursion: children surfaces, price moves, bound cost.
class StepProblem {
public:
    struct Choice {
        double value;
        double holding;
        bool at_boundary;
    };

    StepProblem(const GammaGrid& grid, const double* up, const double* down, double d_up, double d_down,
                const BoundPenalty& cost)
        : grid_(grid), up_(up), down_(down), du_(d_up), dd_(d_down), cost_(cost), h_(grid.step()) {}

    double phi_node(int j) const {
        const double x = grid_.point(j);
        return std::max(up_[j] - x * du_, down_[j] - x * dd_);
    }
    double phi(double x) const {
        return std::max(interpolate_on(grid_, up_, x) - x * du_, interpolate_on(grid_, down_, x) - x * dd_);
    }

    Choice solve(double gamma) const {
        const int m = grid_.m;
        auto total_at = [&](int j) { return cost_.cost(grid_.point(j) - gamma) + phi_node(j); };

        int lo = 0;
        int hi = m - 1;
        while (hi - lo > 2) {
            const int third = (hi - lo) / 3;
            const int m1 = lo + third;
            const int m2 = hi - third;
            const double h1 = total_at(m1);
            const double h2 = total_at(m2);
            if (h1 < h2) {
                hi = m2;
            } else if (h1 > h2) {
                lo = m1;
            } else {
                lo = m1;
                hi = m2;
            }
        }
        best_x_ = grid_.point(lo);
        best_v_ = total_at(lo);
        for (int j = lo + 1; j <= hi; ++j) consider(grid_.point(j), total_at(j), gamma);
        const int jb = static_cast<int>(std::lround((best_x_ - grid_.lo) / h_));

        const int a = std::max(jb - 1, 0);
        const int b = std::min(jb + 1, m - 1);
        for (int i = a; i < b; ++i) scan_cell(i, gamma);
        return finish(gamma);
    }

    /// Solve at gamma given a minimizer x_prev for some gamma_prev in
    /// [gamma - h, gamma]. The optimal holding is nondecreasing in gamma and
    /// the optimal trade is nonincreasing, so a minimizer lies in
    /// [x_prev, x_prev + h]; one extra cell on each side absorbs rounding.
    Choice solve_near(double gamma, double x_prev) const {
        const int m = grid_.m;
        const int c0 = std::clamp(static_cast<int>(std::floor((x_prev - grid_.lo) / h_)), 0, m - 2);
        const int a = std::max(c0 - 1, 0);
        const int b = std::min(c0 + 3, m - 1);
        best_x_ = grid_.point(a);
        best_v_ = total(best_x_, gamma);
        for (int i = a; i < b; ++i) scan_cell(i, gamma);
        return finish(gamma);
    }

private:
    Choice finish(double gamma) const {
        bool boundary = false;
        const double tol = 1e-12 * std::max(1.0, std::abs(best_v_));
        if (best_x_ <= grid_.lo) boundary = total(grid_.lo + 0.5 * h_, gamma) > best_v_ + tol;
        if (best_x_ >= grid_.hi) boundary = total(grid_.hi - 0.5 * h_, gamma) > best_v_ + tol;
        return {best_v_, best_x_, boundary};
    }

    double total(double x, double gamma) const { return cost_.cost(x - gamma) + phi(x); }

public:
    /// Values at every grid point, in increasing order of gamma.
    template <class Sink>
    void sweep(bool warm_start, Sink&& sink) const {
        double x_prev = 0.0;
        for (int j = 0; j < grid_.m; ++j) {
            const double gamma = grid_.point(j);
            const Choice c = (warm_start && j > 0) ? solve_near(gamma, x_prev) : solve(gamma);
            x_prev = c.holding;
            sink(j, c);
        }
    }

private:

    void consider(double x, double v, double gamma) const {
        const double tol = 1e-13 * std::max(1.0, std::abs(best_v_));
        if (v < best_v_ - tol || (v <= best_v_ + tol && std::abs(x - gamma) < std::abs(best_x_ - gamma))) {
            best_v_ = v;
            best_x_ = x;
        }
    }

    // Exact minimum of cost(x - gamma) + phi(x) over grid cell i. phi is linear
    // on each side of the crossing of the two child branches.
    void scan_cell(int i, double gamma) const {
        const double x0 = grid_.point(i);
        const double x1 = grid_.point(i + 1);
        const double su = (up_[i + 1] - up_[i]) / h_ - du_;
        const double sd = (down_[i + 1] - down_[i]) / h_ - dd_;
        const double d0 = (up_[i] - x0 * du_) - (down_[i] - x0 * dd_);
        const double d1 = (up_[i + 1] - x1 * du_) - (down_[i + 1] - x1 * dd_);
        double cuts[3] = {x0, x1, x1};
        int pieces = 1;
        if ((d0 < 0.0 && d1 > 0.0) || (d0 > 0.0 && d1 < 0.0)) {
            const double xc = std::clamp(x0 + (x1 - x0) * d0 / (d0 - d1), x0, x1);
            cuts[1] = xc;
            cuts[2] = x1;
            pieces = 2;
            consider(xc, total(xc, gamma), gamma);
        }
        consider(x0, total(x0, gamma), gamma);
        consider(x1, total(x1, gamma), gamma);
        for (int p = 0; p < pieces; ++p) {
            const double p0 = cuts[p];
            const double p1 = cuts[p + 1];
            if (!(p1 > p0)) continue;
            const double mid = 0.5 * (p0 + p1);
            const double dm = d0 + (d1 - d0) * (mid - x0) / (x1 - x0);
            const double slope = dm >= 0.0 ? su : sd;
            const double nu = cost_.minimizer_with_slope(slope);
            if (!std::isfinite(nu)) continue;
            const double x = gamma + nu;
            if (x > p0 && x < p1) consider(x, total(x, gamma), gamma);
        }
    }

    const GammaGrid& grid_;
    const double* up_;
    const double* down_;
    double du_;
    double dd_;
    const BoundPenalty& cost_;
    double h_;
    mutable double best_x_ = 0.0;
    mutable double best_v_ = 0.0;
};

inline TradeContext node_context(const MarketParams& params, int k, double spot) {
    return {static_cast<double>(k) / params.n, spot, params.n};
}

inline PrimalResult solve_tree(const MarketParams& params, const Penalty& penalty, const Claim& claim,
                               const GammaGrid& grid, const PrimalOptions& opt) {
    const int n = params.n;
    const int m = grid.m;
    const std::size_t nodes = tree::node_count(n);
    const std::size_t mm = static_cast<std::size_t>(m);
    std::vector<double> surf(nodes * mm);

    const std::size_t first_leaf = tree::index(n, 0);
    const std::size_t leaves = std::size_t{1} << n;
    parallel_for(opt.threads, leaves, [&](std::size_t l) {
        const std::size_t u = first_leaf + l;
        const double f = payoff_eval(claim, node_path(params, u));
        std::fill_n(surf.begin() + static_cast<std::ptrdiff_t>(u * mm), m, f);
    });

    for (int k = n - 1; k >= 0; --k) {
        const std::size_t first = tree::index(k, 0);
        parallel_for(opt.threads, std::size_t{1} << k, [&](std::size_t off) {
            const std::size_t u = first + off;
            const int lev = tree::level(u);
            const double s = price_at_level(params, lev);
            const double su = price_at_level(params, lev + 1);
            const double sd = price_at_level(params, lev - 1);
            const BoundPenalty cost = penalty.bind(node_context(params, k, s));
            const StepProblem step(grid, &surf[tree::up_child(u) * mm], &surf[tree::down_child(u) * mm], su - s,
                                   sd - s, cost);
            double* out = &surf[u * mm];
            step.sweep(opt.warm_start, [&](int j, const StepProblem::Choice& c) { out[j] = c.value; });
        });
    }

    PrimalResult res;
    res.grid = grid;
    res.strategy.n = n;
    res.strategy.holdings.assign(tree::interior_count(n), 0.0);
    std::vector<double> pre(tree::interior_count(n), 0.0);
    for (std::size_t u = 0; u < tree::interior_count(n); ++u) {
        const int k = tree::depth(u);
        const int lev = tree::level(u);
        const double s = price_at_level(params, lev);
        const double su = price_at_level(params, lev + 1);
        const double sd = price_at_level(params, lev - 1);
        const BoundPenalty cost = penalty.bind(node_context(params, k, s));
        const StepProblem step(grid, &surf[tree::up_child(u) * mm], &surf[tree::down_child(u) * mm], su - s,
                               sd - s, cost);
        const auto choice = step.solve(pre[u]);
        if (u == 0) res.value = choice.value;
        res.strategy.holdings[u] = choice.holding;
        res.boundary_hit = res.boundary_hit || choice.at_boundary;
        for (std::size_t c : {tree::down_child(u), tree::up_child(u)})
            if (c < pre.size()) pre[c] = choice.holding;
    }
    res.strategy.capital = res.value;
    res.value_free_start = *std::min_element(surf.begin(), surf.begin() + m);
    if (opt.store_surfaces) {
        res.surface.grid = grid;
        res.surface.states = nodes;
        res.surface.values = std::move(surf);
    }
    return res;
}

struct AverageRule {
    bool time_integral = true;
    int n = 1;
    double start(double s0) const { return time_integral ? 0.0 : s0 / (n + 1); }
    double increment(double s, double s_next) const {
        return time_integral ? 0.5 * (s + s_next) / n : s_next / (n + 1);
    }
};

inline LatticeResult solve_lattice(const MarketParams& params, const Penalty& penalty, const Claim& claim,
                                   const GammaGrid& grid, const PrimalOptions& opt) {
    const int n = params.n;
    const int m = grid.m;
    const std::size_t mm = static_cast<std::size_t>(m);
    const bool asian = claim.markov_state() == MarkovState::price_and_average;
    const int buckets = asian ? opt.average_buckets : 1;
    detail::require(buckets >= 2 || !asian, "superrep_lattice: need at least 2 average buckets");
    const std::size_t bb = static_cast<std::size_t>(buckets);
    const AverageRule rule{claim.averaging() == Averaging::time_integral, n};

    // Range of the running average quantity reachable at each (k, i).
    std::vector<std::vector<double>> rlo(n + 1), rhi(n + 1);
    if (asian) {
        rlo[0] = rhi[0] = {rule.start(params.s0)};
        for (int k = 0; k < n; ++k) {
            rlo[k + 1].assign(k + 2, HUGE_VAL);
            rhi[k + 1].assign(k + 2, -HUGE_VAL);
            for (int i = 0; i <= k; ++i) {
                const double s = price_at_level(params, 2 * i - k);
                for (int up = 0; up <= 1; ++up) {
                    const int ci = i + up;
                    const double inc = rule.increment(s, price_at_level(params, 2 * ci - (k + 1)));
                    rlo[k + 1][ci] = std::min(rlo[k + 1][ci], rlo[k][i] + inc);
                    rhi[k + 1][ci] = std::max(rhi[k + 1][ci], rhi[k][i] + inc);
                }
            }
        }
    }
    auto bucket_value = [&](int k, int i, int b) {
        if (buckets == 1) return 0.0;
        return rlo[k][i] + (rhi[k][i] - rlo[k][i]) * b / (buckets - 1);
    };

    const bool keep = opt.store_surfaces && !asian;
    ValueSurface surface;
    if (keep) {
        surface.grid = grid;
        surface.states = lattice_state_count(n);
        surface.values.resize(surface.states * mm);
    }

    std::vector<double> next(static_cast<std::size_t>(n + 1) * bb * mm);
    std::vector<double> cur(next.size());
    for (int i = 0; i <= n; ++i) {
        for (int b = 0; b < buckets; ++b) {
            const double f = asian ? claim.of_average(bucket_value(n, i, b)) : claim.terminal(price_at_level(params, 2 * i - n));
            std::fill_n(next.begin() + static_cast<std::ptrdiff_t>((i * bb + b) * mm), m, f);
        }
        if (keep) std::copy_n(&next[i * bb * mm], m, &surface.values[lattice_state(n, 2 * i - n) * mm]);
    }

    bool boundary = false;
    double root_value = 0.0;
    double root_free = 0.0;
    const int j_lo = m / 4;
    const int j_hi = m - 1 - m / 4;
    for (int k = n - 1; k >= 0; --k) {
        std::vector<char> flags(static_cast<std::size_t>(k + 1), 0);
        parallel_for(opt.threads, static_cast<std::size_t>(k + 1), [&](std::size_t iu) {
            const int i = static_cast<int>(iu);
            const double s = price_at_level(params, 2 * i - k);
            const double su = price_at_level(params, 2 * (i + 1) - (k + 1));
            const double sd = price_at_level(params, 2 * i - (k + 1));
            const BoundPenalty cost = penalty.bind(node_context(params, k, s));
            std::vector<double> up_buf, down_buf;
            if (asian) {
                up_buf.resize(mm);
                down_buf.resize(mm);
            }
            // Child surface at a running-average value, linear between buckets.
            auto blend = [&](int ci, double r, std::vector<double>& out) {
                const double lo = rlo[k + 1][ci];
                const double hi = rhi[k + 1][ci];
                int b0 = 0;
                double w = 0.0;
                if (hi > lo) {
                    const double pos = std::clamp((r - lo) / (hi - lo) * (buckets - 1), 0.0, buckets - 1.0);
                    b0 = std::min(static_cast<int>(pos), buckets - 2);
                    w = pos - b0;
                }
                const double* c0 = &next[(ci * bb + b0) * mm];
                const double* c1 = &next[(ci * bb + std::min(b0 + 1, buckets - 1)) * mm];
                for (std::size_t j = 0; j < mm; ++j) out[j] = (1.0 - w) * c0[j] + w * c1[j];
            };
            for (int b = 0; b < buckets; ++b) {
                const double* up_ptr = &next[((i + 1) * bb) * mm];
                const double* down_ptr = &next[(i * bb) * mm];
                if (asian) {
                    const double r = bucket_value(k, i, b);
                    blend(i + 1, r + rule.increment(s, su), up_buf);
                    blend(i, r + rule.increment(s, sd), down_buf);
                    up_ptr = up_buf.data();
                    down_ptr = down_buf.data();
                }
                const StepProblem step(grid, up_ptr, down_ptr, su - s, sd - s, cost);
                double* out = &cur[(i * bb + b) * mm];
                step.sweep(opt.warm_start, [&](int j, const StepProblem::Choice& c) {
                    out[j] = c.value;
                    if (c.at_boundary && j >= j_lo && j <= j_hi) flags[iu] = 1;
                });
                if (k == 0 && b == 0) {
                    const auto root = step.solve(0.0);
                    root_value = root.value;
                    root_free = *std::min_element(out, out + m);
                    if (root.at_boundary) flags[iu] = 1;
                }
            }
        });
        for (char f : flags) boundary = boundary || f != 0;
        if (keep)
            for (int i = 0; i <= k; ++i) std::copy_n(&cur[i * bb * mm], m, &surface.values[lattice_state(k, 2 * i - k) * mm]);
        std::swap(cur, next);
    }

    LatticeResult res;
    res.value = root_value;
    res.value_free_start = root_free;
    res.surface = std::move(surface);
    res.boundary_hit = boundary;
    res.grid = grid;
    return res;
}

}  // namespace detail

/// Exhaustive full-tree engine (any claim, n <= opt.exhaustive_cap). When the
/// optimal holdings hit the grid boundary along the optimal strategy the grid
/// is widened and the solve repeated, up to opt.max_widenings times.
inline PrimalResult superrep_exact(const MarketParams& params, const Penalty& penalty, const Claim& claim,
                                   GammaGrid grid, const PrimalOptions& opt = {}) {
    params.validate();
    grid.validate();
    tree::check_depth(params.n, opt.exhaustive_cap);
    for (int attempt = 0;; ++attempt) {
        PrimalResult r = detail::solve_tree(params, penalty, claim, grid, opt);
        r.widenings = attempt;
        if (!r.boundary_hit || !opt.auto_widen || attempt >= opt.max_widenings) return r;
        grid = grid.widened();
    }
}

inline PrimalResult superrep_exact(const MarketParams& params, const Penalty& penalty, const Claim& claim) {
    return superrep_exact(params, penalty, claim, GammaGrid::for_claim(claim));
}

/// Recombining-lattice engine for terminal-price and Asian claims.
inline LatticeResult superrep_lattice(const MarketParams& params, const Penalty& penalty, const Claim& claim,
                                      GammaGrid grid, const PrimalOptions& opt = {}) {
    params.validate();
    grid.validate();
    if (claim.markov_state() == MarkovState::full_path)
        throw EngineRefusal(std::string("lattice engine: claim ") + to_string(claim.kind()) +
                            " needs the full path; use the exhaustive engine");
    for (int attempt = 0;; ++attempt) {
        LatticeResult r = detail::solve_lattice(params, penalty, claim, grid, opt);
        r.widenings = attempt;
        if (!r.boundary_hit || !opt.auto_widen || attempt >= opt.max_widenings) return r;
        grid = grid.widened();
    }
}

inline LatticeResult superrep_lattice(const MarketParams& params, const Penalty& penalty, const Claim& claim) {
    return superrep_lattice(params, penalty, claim, GammaGrid::for_claim(claim));
}

/// Final wealth Y(n) of a tree strategy along the given moves.
inline double wealth_simulate(const MarketParams& params, const Penalty& penalty, const Strategy& strategy,
                              std::span<const int> moves, double x) {
    params.validate();
    detail::require(strategy.n == params.n, "wealth_simulate: strategy built for a different n");
    detail::require(static_cast<int>(moves.size()) == params.n, "wealth_simulate: need n moves");
    double y = x;
    double gamma = 0.0;
    int level = 0;
    std::size_t node = 0;
    for (int k = 0; k < params.n; ++k) {
        const int mv = moves[k];
        detail::require(mv == 1 || mv == -1, "wealth_simulate: moves must be +1 or -1");
        const double s = price_at_level(params, level);
        const double g1 = strategy.holdings[node];
        y -= penalty.bind(detail::node_context(params, k, s)).cost(g1 - gamma);
        level += mv;
        y += g1 * (price_at_level(params, level) - s);
        gamma = g1;
        node = mv > 0 ? tree::up_child(node) : tree::down_child(node);
    }
    return y;
}

inline double wealth_simulate(const MarketParams& params, const Penalty& penalty, const Strategy& strategy,
                              std::span<const int> moves) {
    return wealth_simulate(params, penalty, strategy, moves, strategy.capital);
}

struct VerifyReport {
    double min_slack = HUGE_VAL;
    PathPrefix worst_path;
    std::size_t paths = 0;
};

/// min over all 2^n paths of Y(n) - F, starting from capital x.
inline VerifyReport verify_superreplication(const MarketParams& params, const Penalty& penalty,
                                            const Strategy& strategy, const Claim& claim, double x,
                                            int cap = kExhaustiveCap) {
    params.validate();
    tree::check_depth(params.n, cap);
    detail::require(strategy.n == params.n && strategy.holdings.size() == tree::interior_count(params.n),
                    "verify_superreplication: strategy does not match the market");
    const int n = params.n;
    VerifyReport rep;
    std::vector<double> knots(static_cast<std::size_t>(n) + 1);
    knots[0] = params.s0;
    PathPrefix moves(static_cast<std::size_t>(n));

    auto walk = [&](auto&& self, std::size_t node, int k, int level, double y, double gamma) -> void {
        if (k == n) {
            const double slack = y - payoff_eval(claim, PLPath(knots));
            ++rep.paths;
            if (slack < rep.min_slack) {
                rep.min_slack = slack;
                rep.worst_path = moves;
            }
            return;
        }
        const double s = knots[k];
        const double g1 = strategy.holdings[node];
        const double y_traded = y - penalty.bind(detail::node_context(params, k, s)).cost(g1 - gamma);
        for (int mv : {-1, 1}) {
            moves[k] = mv;
            knots[k + 1] = price_at_level(params, level + mv);
            self(self, mv > 0 ? tree::up_child(node) : tree::down_child(node), k + 1, level + mv,
                 y_traded + g1 * (knots[k + 1] - s), g1);
        }
    };
    walk(walk, 0, 0, 0, x, 0.0);
    return rep;
}

enum class Engine { exact, lattice };

inline const char* to_string(Engine e) { return e == Engine::exact ? "exact" : "lattice"; }

struct RefinementReport {
    double coarse = 0.0;
    double fine = 0.0;
    double change = 0.0;        // coarse - fine (>= 0 up to rounding on nested grids)
    double extrapolated = 0.0;  // Richardson estimate assuming second order in the step
    double error_estimate = 0.0;
};

/// Solves on grid and on grid.refined() (nested) and reports the change.
inline RefinementReport refinement_study(const MarketParams& params, const Penalty& penalty, const Claim& claim,
                                         const GammaGrid& grid, Engine engine, PrimalOptions opt = {}) {
    opt.auto_widen = false;
    opt.store_surfaces = false;
    auto run = [&](const GammaGrid& g) {
        return engine == Engine::exact ? superrep_exact(params, penalty, claim, g, opt).value
                                       : superrep_lattice(params, penalty, claim, g, opt).value;
    };
    RefinementReport r;
    r.coarse = run(grid);
    r.fine = run(grid.refined());
    r.change = r.coarse - r.fine;
    r.extrapolated = r.fine - r.change / 3.0;
    r.error_estimate = std::abs(r.change) / 3.0;
    return r;
}

}  // namespace frictionlab
