#pragma once

// Continuous-time limit values. In log-price x = ln S the value function
// solves, backward from v(1, x) = F(e^x),
//
//   v_t + sup_{a_lo <= a <= c} [ (sigma^2 + 2 sigma a)/2 (v_xx - v_x) - Ghat(a e^x) ] = 0,
//
// with Ghat(y) = k y^2. Writing D = v_xx - v_x (= S^2 v_SS), the bracket is
// sigma^2 D / 2 + sigma a D - k a^2 e^{2x}, concave in a, maximized at
// a* = sigma D / (2 k e^{2x}) clipped to the interval, or at an end of the
// interval when k = 0. The lower end is max(-c, -sigma/2 + 1e-9) so that the
// diffusion coefficient stays nonnegative.
//
// The explicit scheme uses central differences for both derivatives. With
// dx <= 2 and dt <= dx^2 / max(sigma^2 + 2 sigma a) every update is a
// nonnegative combination of old values, so the scheme is monotone.

#include <cmath>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "frictionlab/error.hpp"
#include "frictionlab/friction.hpp"
#include "frictionlab/parallel.hpp"
#include "frictionlab/payoffs.hpp"

namespace frictionlab {

inline constexpr double kVolatilityFloor = 1e-9;

enum class OptionType { call, put };

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Zero-rate Black-Scholes price with maturity 1.
inline double bs_closed_form(OptionType type, double s0, double strike, double vol) {
    detail::require(vol > 0.0 && std::isfinite(vol), "bs_closed_form: vol must be > 0");
    detail::require(s0 > 0.0 && strike >= 0.0, "bs_closed_form: need s0 > 0 and K >= 0");
    if (strike == 0.0) return type == OptionType::call ? s0 : 0.0;
    const double d1 = (std::log(s0 / strike) + 0.5 * vol * vol) / vol;
    const double d2 = d1 - vol;
    if (type == OptionType::call) return s0 * normal_cdf(d1) - strike * normal_cdf(d2);
    return strike * normal_cdf(-d2) - s0 * normal_cdf(-d1);
}

/// Call value under the constant control alpha = sqrt(sigma^2 + 2 sigma a)
/// with running cost Ghat(y) = y^2 / (4 Lambda), y = a S:
///   BS(alpha) - a^2 / (4 Lambda) * s0^2 * (e^{alpha^2} - 1) / alpha^2.
inline double j_constant_alpha(double a, double lambda, double sigma, double s0, double strike) {
    detail::require(lambda > 0.0, "j_constant_alpha: Lambda must be > 0");
    const double alpha2 = sigma * sigma + 2.0 * sigma * a;
    detail::require(alpha2 > 0.0, "j_constant_alpha: sigma^2 + 2 sigma a must be > 0");
    const double growth = std::expm1(alpha2) / alpha2;
    return bs_closed_form(OptionType::call, s0, strike, std::sqrt(alpha2)) -
           a * a / (4.0 * lambda) * s0 * s0 * growth;
}

/// Limit problem data: controls |a| <= c, running cost Ghat, market sigma and s0.
struct LimitSpec {
    double c = 0.0;
    ScaledLimit ghat;
    double sigma = 0.2;
    double s0 = 100.0;

    /// c from the penalty's truncation level unless given explicitly.
    static LimitSpec from_penalty(const Penalty& penalty, double sigma, double s0, std::optional<double> c = std::nullopt) {
        LimitSpec out;
        out.ghat = scaled_limit(penalty);
        out.sigma = sigma;
        out.s0 = s0;
        if (c) {
            out.c = *c;
        } else {
            detail::require(penalty.truncation_level().has_value(),
                            "LimitSpec: untruncated penalty, give the control level c explicitly");
            out.c = *penalty.truncation_level();
        }
        return out;
    }

    void validate() const {
        detail::require(sigma > 0.0 && std::isfinite(sigma), "LimitSpec: sigma must be > 0");
        detail::require(s0 > 0.0 && std::isfinite(s0), "LimitSpec: s0 must be > 0");
        detail::require(c >= 0.0 && std::isfinite(c), "LimitSpec: c must be finite and >= 0");
        detail::require(ghat.coefficient >= 0.0, "LimitSpec: Ghat coefficient must be >= 0");
    }

    double a_low() const { return std::max(-c, -sigma / 2.0 + kVolatilityFloor); }
    double a_high() const { return c; }
    double max_diffusion() const { return sigma * sigma + 2.0 * sigma * a_high(); }
};

struct HJBGrid {
    double x_min = 0.0;
    double x_max = 0.0;
    int nx = 801;
    int nt = 0;      // 0: twice the smallest count meeting the CFL bound
    int na = 201;    // control grid points when scanning
    bool scan_controls = false;  // grid scan over a instead of the clipped maximizer
    int store_every = 0;         // keep every k-th time slice (0: none)
    int threads = 1;

    /// +-6 standard deviations (volatility sqrt(sigma (sigma + 2c))) around ln s0.
    static HJBGrid around(const LimitSpec& spec, int nx = 801) {
        const double vol = std::sqrt(std::max(spec.max_diffusion(), spec.sigma * spec.sigma));
        const double x0 = std::log(spec.s0);
        HJBGrid g;
        g.x_min = x0 - 6.0 * vol;
        g.x_max = x0 + 6.0 * vol;
        g.nx = nx;
        return g;
    }

    double dx() const { return (x_max - x_min) / (nx - 1); }

    int steps_for(const LimitSpec& spec) const {
        const double limit = dx() * dx() / spec.max_diffusion();
        if (nt > 0) {
            if (1.0 / nt > limit * (1.0 + 1e-12))
                throw InvalidInput("HJBGrid: dt = " + std::to_string(1.0 / nt) + " violates the CFL bound " +
                                   std::to_string(limit));
            return nt;
        }
        // At the bound itself the kink of the payoff leaves an odd-even
        // error that spoils the second-order rate.
        return static_cast<int>(std::ceil(2.0 / limit));
    }

    void validate(const LimitSpec& spec) const {
        detail::require(nx >= 5, "HJBGrid: need nx >= 5");
        detail::require(x_min < std::log(spec.s0) && std::log(spec.s0) < x_max, "HJBGrid: need x_min < ln s0 < x_max");
        detail::require(dx() <= 2.0, "HJBGrid: dx must be <= 2 for a monotone scheme");
        detail::require(na >= 2, "HJBGrid: need na >= 2");
        detail::require(nt >= 0 && store_every >= 0, "HJBGrid: nt and store_every must be >= 0");
    }
};

struct HJBSlice {
    double t = 0.0;
    std::vector<double> v;
};

struct HJBResult {
    double value = 0.0;         // v(0, ln s0)
    std::vector<double> x;      // grid
    std::vector<double> v0;     // v(0, x)
    std::vector<HJBSlice> slices;  // stored time slices, t decreasing, t = 1 first
    int steps = 0;
    double dt = 0.0;
};

namespace detail {

inline double clip(double a, double lo, double hi) { return std::min(std::max(a, lo), hi); }

/// Optimal control and Hamiltonian value for given D and x.
inline double hamiltonian(const LimitSpec& spec, const HJBGrid& grid, double D, double x, double* control) {
    const double lo = spec.a_low(), hi = spec.a_high();
    const double sigma = spec.sigma;
    const double k = spec.ghat.coefficient;
    const double e2x = std::exp(2.0 * x);
    auto value = [&](double a) { return 0.5 * (sigma * sigma + 2.0 * sigma * a) * D - k * a * a * e2x; };
    double best_a;
    if (grid.scan_controls) {
        best_a = lo;
        double best = value(lo);
        for (int j = 1; j < grid.na; ++j) {
            const double a = lo + (hi - lo) * j / (grid.na - 1);
            const double v = value(a);
            if (v > best) {
                best = v;
                best_a = a;
            }
        }
    } else if (k > 0.0) {
        best_a = clip(sigma * D / (2.0 * k * e2x), lo, hi);
    } else {
        best_a = D > 0.0 ? hi : (D < 0.0 ? lo : 0.0);
    }
    if (control) *control = best_a;
    return value(best_a);
}

template <class Hamiltonian>
HJBResult hjb_march(const LimitSpec& spec, const Claim& claim, const HJBGrid& grid, Hamiltonian&& h) {
    spec.validate();
    grid.validate(spec);
    if (claim.markov_state() != MarkovState::terminal_price)
        throw EngineRefusal(std::string("hjb_solve: claim ") + to_string(claim.kind()) + " is not a terminal-price claim");
    const int nx = grid.nx;
    const double dx = grid.dx();
    const int nt = grid.steps_for(spec);
    const double dt = 1.0 / nt;
    HJBResult out;
    out.steps = nt;
    out.dt = dt;
    out.x.resize(nx);
    for (int i = 0; i < nx; ++i) out.x[i] = grid.x_min + dx * i;
    std::vector<double> v(nx), next(nx);
    for (int i = 0; i < nx; ++i) v[i] = claim.terminal(std::exp(out.x[i]));
    if (grid.store_every > 0) out.slices.push_back({1.0, v});
    const double inv_dx2 = 1.0 / (dx * dx);
    const double inv_2dx = 1.0 / (2.0 * dx);
    for (int step = 1; step <= nt; ++step) {
        // End points: linear in S (v_SS = 0), so D = 0 there and the value
        // keeps its terminal payoff.
        next[0] = v[0];
        next[nx - 1] = v[nx - 1];
        parallel_for(grid.threads, static_cast<std::size_t>(nx - 2), [&](std::size_t j) {
            const std::size_t i = j + 1;
            const double D = (v[i + 1] - 2.0 * v[i] + v[i - 1]) * inv_dx2 - (v[i + 1] - v[i - 1]) * inv_2dx;
            next[i] = v[i] + dt * h(D, out.x[i]);
        });
        v.swap(next);
        if (grid.store_every > 0 && (step % grid.store_every == 0 || step == nt))
            out.slices.push_back({1.0 - static_cast<double>(step) / nt, v});
    }
    out.v0 = v;
    // Linear interpolation at ln s0.
    const double x0 = std::log(spec.s0);
    const double pos = (x0 - grid.x_min) / dx;
    const int i = std::min(static_cast<int>(pos), nx - 2);
    const double w = pos - i;
    out.value = (1.0 - w) * v[i] + w * v[i + 1];
    return out;
}

}  // namespace detail

/// Value of the limit control problem for a terminal-price claim.
inline HJBResult hjb_solve(const LimitSpec& spec, const Claim& claim, const HJBGrid& grid) {
    return detail::hjb_march(spec, claim, grid,
                             [&](double D, double x) { return detail::hamiltonian(spec, grid, D, x, nullptr); });
}

inline HJBResult hjb_solve(const LimitSpec& spec, const Claim& claim) { return hjb_solve(spec, claim, HJBGrid::around(spec)); }

/// Value under one fixed control a (a linear PDE): the expected payoff minus
/// the running cost under volatility sqrt(sigma^2 + 2 sigma a).
inline HJBResult hjb_fixed_control(const LimitSpec& spec, const Claim& claim, const HJBGrid& grid, double a) {
    detail::require(a >= spec.a_low() - 1e-15 && a <= spec.a_high() + 1e-15, "hjb_fixed_control: a outside [a_lo, c]");
    const double sigma = spec.sigma;
    const double k = spec.ghat.coefficient;
    return detail::hjb_march(spec, claim, grid, [&](double D, double x) {
        return 0.5 * (sigma * sigma + 2.0 * sigma * a) * D - k * a * a * std::exp(2.0 * x);
    });
}

/// Optimal control a*(t, x) recovered from a stored slice.
inline std::vector<double> hjb_controls(const LimitSpec& spec, const HJBGrid& grid, const std::vector<double>& x,
                                        const std::vector<double>& v) {
    std::vector<double> a(v.size(), 0.0);
    const double dx = grid.dx();
    for (std::size_t i = 1; i + 1 < v.size(); ++i) {
        const double D = (v[i + 1] - 2.0 * v[i] + v[i - 1]) / (dx * dx) - (v[i + 1] - v[i - 1]) / (2.0 * dx);
        detail::hamiltonian(spec, grid, D, x[i], &a[i]);
    }
    return a;
}

/// t,x,v rows for every stored slice.
inline void write_hjb_csv(std::ostream& os, const HJBResult& r) {
    os << "t,x,v\n";
    char buf[96];
    for (const auto& slice : r.slices)
        for (std::size_t i = 0; i < r.x.size(); ++i) {
            std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g\n", slice.t, r.x[i], slice.v[i]);
            os << buf;
        }
}

struct PremiumReport {
    double lower_estimate = 0.0;  // HJB value at level eps
    double bs_baseline = 0.0;     // frictionless price BS(sigma)
    double premium = 0.0;         // lower_estimate - bs_baseline
    std::optional<double> closed_form;            // BS(sqrt(sigma(sigma + 2 eps))) - BS(sigma), zero running cost, call
    std::optional<double> constant_control_bound; // max_a J(a) - BS(sigma) over a scan, quadratic running cost, call
    std::optional<double> best_constant_a;
    double cost_scale = 0.0;      // eps^2: order of the running-cost correction
};

/// Premium of the limit value at level eps over the frictionless price.
inline PremiumReport liquidity_premium_probe(const LimitSpec& spec, const Claim& claim, double eps, int nx = 801,
                                             int scan_points = 201) {
    detail::require(eps >= 0.0 && eps <= spec.c, "liquidity_premium_probe: need 0 <= eps <= c");
    LimitSpec at = spec;
    at.c = eps;
    at.validate();
    const HJBGrid grid = HJBGrid::around(at, nx);
    PremiumReport out;
    out.lower_estimate = hjb_solve(at, claim, grid).value;
    const bool call = claim.kind() == ClaimKind::call;
    const bool put = claim.kind() == ClaimKind::put;
    if (call || put) {
        out.bs_baseline = bs_closed_form(call ? OptionType::call : OptionType::put, spec.s0, claim.strike(), spec.sigma);
    } else {
        LimitSpec none = at;
        none.c = 0.0;
        out.bs_baseline = hjb_solve(none, claim, grid).value;
    }
    out.premium = out.lower_estimate - out.bs_baseline;
    out.cost_scale = eps * eps;
    if (call && at.ghat.is_zero()) {
        out.closed_form = bs_closed_form(OptionType::call, spec.s0, claim.strike(), std::sqrt(spec.sigma * (spec.sigma + 2 * eps))) -
                          out.bs_baseline;
    }
    if (call && !at.ghat.is_zero()) {
        const double lambda = 1.0 / (4.0 * at.ghat.coefficient);
        double best = -HUGE_VAL, best_a = 0.0;
        for (int j = 0; j < scan_points; ++j) {
            const double a = at.a_low() + (at.a_high() - at.a_low()) * j / std::max(scan_points - 1, 1);
            const double v = j_constant_alpha(a, lambda, spec.sigma, spec.s0, claim.strike());
            if (v > best) {
                best = v;
                best_a = a;
            }
        }
        out.constant_control_bound = best - out.bs_baseline;
        out.best_constant_a = best_a;
    }
    return out;
}

}  // namespace frictionlab
