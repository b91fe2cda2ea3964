#pragma once

// Trading-cost functions g(t, S, nu), their Legendre conjugates
// G(t, S, y) = sup_nu (nu*y - g(t, S, nu)), truncation at a level c, and the
// scaled limit Ghat(y) = lim n * G(y / sqrt(n)).
//
// Every built-in penalty is convex in nu with g(.,.,0) = 0. Costs depend on
// the path only through the current price S(t) (and on n through the
// truncation band c*S(t)/sqrt(n)), which makes them adapted by construction.

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "frictionlab/error.hpp"
#include "frictionlab/extended_real.hpp"
#include "frictionlab/market_tree.hpp"

namespace frictionlab {

/// Where a cost is evaluated: time t in [0,1], current price S(t), and the
/// number of steps n of the market the trade happens in.
struct TradeContext {
    double t = 0.0;
    double spot = 1.0;
    int n = 1;
};

inline TradeContext context_at(const PLPath& path, double t) { return {t, path(t), path.steps()}; }

enum class PenaltyKind {
    quadratic,            // Lambda * nu^2
    proportional,         // (c / sqrt(n)) * S(t) * |nu|
    truncated_zero,       // truncation at c of the "no trading" cost; same g as proportional
    truncated_quadratic,  // Lambda * nu^2 truncated at c
    power,                // |nu|^gamma / gamma, gamma in [1, 2]
    tabulated,            // convex piecewise-linear samples (nu_i, g_i)
    truncated_power,
    truncated_tabulated,
};

inline const char* to_string(PenaltyKind k) {
    switch (k) {
        case PenaltyKind::quadratic: return "quadratic";
        case PenaltyKind::proportional: return "proportional";
        case PenaltyKind::truncated_zero: return "truncated_zero";
        case PenaltyKind::truncated_quadratic: return "truncated_quadratic";
        case PenaltyKind::power: return "power";
        case PenaltyKind::tabulated: return "tabulated";
        case PenaltyKind::truncated_power: return "truncated_power";
        case PenaltyKind::truncated_tabulated: return "truncated_tabulated";
    }
    return "?";
}

/// Convex piecewise-linear cost sampled at strictly increasing nu, extended
/// linearly with the boundary slopes.
struct TabulatedCost {
    std::vector<double> nu;
    std::vector<double> g;
    std::vector<double> slopes;  // slopes[i] on [nu[i], nu[i+1]]
    bool price_scaled = false;   // cost is S(t) * table(nu)

    TabulatedCost(std::vector<double> nu_in, std::vector<double> g_in, bool scaled)
        : nu(std::move(nu_in)), g(std::move(g_in)), price_scaled(scaled) {
        detail::require(nu.size() == g.size(), "tabulated penalty: column lengths differ");
        detail::require(nu.size() >= 2, "tabulated penalty: need at least two samples");
        for (std::size_t i = 0; i + 1 < nu.size(); ++i)
            detail::require(nu[i + 1] > nu[i], "tabulated penalty: nu must be strictly increasing");
        for (double v : g) detail::require(v >= 0.0 && std::isfinite(v), "tabulated penalty: g must be >= 0");
        detail::require(nu.front() <= 0.0 && nu.back() >= 0.0, "tabulated penalty: grid must contain nu = 0");
        slopes.resize(nu.size() - 1);
        for (std::size_t i = 0; i + 1 < nu.size(); ++i) slopes[i] = (g[i + 1] - g[i]) / (nu[i + 1] - nu[i]);
        for (std::size_t i = 0; i + 1 < slopes.size(); ++i) {
            const double scale = std::max({1.0, std::abs(slopes[i]), std::abs(slopes[i + 1])});
            detail::require(slopes[i + 1] >= slopes[i] - 1e-12 * scale, "tabulated penalty: samples are not convex");
        }
        detail::require(std::abs(value(0.0)) <= 1e-12 * std::max(1.0, *std::max_element(g.begin(), g.end())),
                        "tabulated penalty: g(0) must be 0");
    }

    double value(double x) const {
        if (x <= nu.front()) return g.front() + slopes.front() * (x - nu.front());
        if (x >= nu.back()) return g.back() + slopes.back() * (x - nu.back());
        const auto it = std::upper_bound(nu.begin(), nu.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - nu.begin()) - 1;
        return g[i] + slopes[i] * (x - nu[i]);
    }

    /// Subdifferential [lo, hi] at x.
    std::pair<double, double> subgradient(double x) const {
        if (x < nu.front()) return {slopes.front(), slopes.front()};
        if (x > nu.back()) return {slopes.back(), slopes.back()};
        const auto it = std::lower_bound(nu.begin(), nu.end(), x);
        const std::size_t j = static_cast<std::size_t>(it - nu.begin());
        if (*it == x) {
            const double lo = j == 0 ? slopes.front() : slopes[j - 1];
            const double hi = j == slopes.size() ? slopes.back() : slopes[j];
            return {lo, hi};
        }
        return {slopes[j - 1], slopes[j - 1]};
    }

    /// Conjugate sup_x (x*z - table(x)): finite on [slopes.front(), slopes.back()].
    /// Returns {value, argmax}; argmax is +-HUGE_VAL when the sup is unbounded.
    std::pair<ExtendedReal, double> conjugate(double z) const {
        if (z < slopes.front()) return {ExtendedReal::plus_infinity(), -HUGE_VAL};
        if (z > slopes.back()) return {ExtendedReal::plus_infinity(), HUGE_VAL};
        // Every knot in [j_lo, j_hi] is a maximizer; take the one nearest 0.
        const auto j_lo = static_cast<std::size_t>(std::lower_bound(slopes.begin(), slopes.end(), z) - slopes.begin());
        const auto j_hi = static_cast<std::size_t>(std::upper_bound(slopes.begin(), slopes.end(), z) - slopes.begin());
        std::size_t j = j_lo;
        for (std::size_t i = j_lo + 1; i <= j_hi; ++i)
            if (std::abs(nu[i]) < std::abs(nu[j])) j = i;
        return {ExtendedReal(nu[j] * z - g[j]), nu[j]};
    }
};

/// Quadratic coefficient form of the scaled limit, Ghat(y) = coefficient * y^2,
/// together with the admissibility level c (|a| <= c) when the penalty is
/// truncated.
struct ScaledLimit {
    double coefficient = 0.0;
    std::optional<double> level;

    double operator()(double y) const { return coefficient * y * y; }
    bool is_zero() const { return coefficient == 0.0; }
};

/// Penalty evaluated at a fixed (t, S(t), n): the hot-loop representation.
struct BoundPenalty {
    /// zero_indicator is the "no trading" cost (0 at nu = 0, +inf elsewhere)
    /// whose conjugate vanishes identically; it is only used truncated.
    enum class Base { quadratic, zero_indicator, power, tabulated };
    Base base = Base::quadratic;
    double lambda = 0.0;  // quadratic
    double gamma = 2.0;   // power
    const TabulatedCost* table = nullptr;
    double table_scale = 1.0;     // S(t) for price-scaled tables
    double spot = 1.0;
    std::optional<double> band;   // truncation half-width c*S/sqrt(n)

    /// Relative slack (in units of S(t)) applied to domain membership so that
    /// measures which are martingales up to rounding stay feasible.
    static constexpr double kBandTolerance = 1e-10;

    // --- untruncated base --------------------------------------------------
    double base_cost(double nu) const {
        switch (base) {
            case Base::quadratic: return lambda * nu * nu;
            case Base::zero_indicator: return nu == 0.0 ? 0.0 : HUGE_VAL;
            case Base::power: return gamma == 1.0 ? std::abs(nu) : std::pow(std::abs(nu), gamma) / gamma;
            case Base::tabulated: return table_scale * table->value(nu);
        }
        return 0.0;
    }

    std::pair<double, double> base_subgradient(double nu) const {
        switch (base) {
            case Base::quadratic: return {2 * lambda * nu, 2 * lambda * nu};
            case Base::zero_indicator:
                if (nu == 0.0) return {-HUGE_VAL, HUGE_VAL};
                return {std::copysign(HUGE_VAL, nu), std::copysign(HUGE_VAL, nu)};
            case Base::power: {
                if (gamma == 1.0) {
                    if (nu == 0.0) return {-1.0, 1.0};
                    return {std::copysign(1.0, nu), std::copysign(1.0, nu)};
                }
                const double s = std::copysign(std::pow(std::abs(nu), gamma - 1.0), nu);
                return {s, s};
            }
            case Base::tabulated: {
                auto [lo, hi] = table->subgradient(nu);
                return {table_scale * lo, table_scale * hi};
            }
        }
        return {0.0, 0.0};
    }

    /// Effective domain of the untruncated conjugate.
    std::pair<double, double> base_domain() const {
        switch (base) {
            case Base::power:
                if (gamma == 1.0) return {-1.0, 1.0};
                break;
            case Base::tabulated:
                return {table_scale * table->slopes.front(), table_scale * table->slopes.back()};
            default: break;
        }
        return {-HUGE_VAL, HUGE_VAL};
    }

    /// {G(y), argmax nu} for y inside base_domain().
    std::pair<double, double> base_conjugate(double y) const {
        switch (base) {
            case Base::quadratic: return {y * y / (4 * lambda), y / (2 * lambda)};
            case Base::zero_indicator: return {0.0, 0.0};
            case Base::power: {
                if (gamma == 1.0) return {0.0, 0.0};
                const double gs = gamma / (gamma - 1.0);
                const double a = std::abs(y);
                return {std::pow(a, gs) / gs, std::copysign(std::pow(a, 1.0 / (gamma - 1.0)), y)};
            }
            case Base::tabulated: {
                auto [v, arg] = table->conjugate(y / table_scale);
                return {table_scale * v.value(), arg};
            }
        }
        return {0.0, 0.0};
    }

    // --- possibly truncated penalty ----------------------------------------
    double cost(double nu) const {
        if (nu == 0.0) return 0.0;
        if (!band) return base_cost(nu);
        const double b = *band;
        auto [lo, hi] = base_subgradient(nu);
        if (hi >= -b && lo <= b) return base_cost(nu);
        // The constrained maximizer of nu*y - G(y) sits on the band edge.
        const double edge = lo > b ? b : -b;
        return nu * edge - base_conjugate(edge).first;
    }

    /// Lower/upper end of the effective domain of G (HUGE_VAL if unbounded).
    std::pair<double, double> domain() const {
        auto [lo, hi] = base_domain();
        if (band) {
            lo = std::max(lo, -*band);
            hi = std::min(hi, *band);
        }
        return {lo, hi};
    }

    /// {G(y), argmax nu}; the argmax is +-HUGE_VAL where G(y) = +inf.
    std::pair<ExtendedReal, double> conjugate(double y) const {
        auto [lo, hi] = domain();
        const double tol = kBandTolerance * std::max(1.0, spot);
        if (y < lo - tol) return {ExtendedReal::plus_infinity(), -HUGE_VAL};
        if (y > hi + tol) return {ExtendedReal::plus_infinity(), HUGE_VAL};
        auto [v, arg] = base_conjugate(std::clamp(y, lo, hi));
        return {ExtendedReal(v), arg};
    }

    ExtendedReal G(double y) const { return conjugate(y).first; }

    /// A subgradient of G at y (the conjugate argmax), for y in the domain.
    double G_slope(double y) const {
        auto [lo, hi] = domain();
        return base_conjugate(std::clamp(y, lo, hi)).second;
    }

    /// Minimizer of g(nu) + s*nu, i.e. the conjugate argmax at y = -s;
    /// +-HUGE_VAL when unbounded. Ties resolve toward the smaller |nu|.
    double minimizer_with_slope(double s) const {
        const double y = -s;
        auto [lo, hi] = domain();
        if (y < lo) return -HUGE_VAL;
        if (y > hi) return HUGE_VAL;
        return base_conjugate(y).second;
    }
};

/// A trading-cost function. Immutable; cheap to copy.
class Penalty {
public:
    static Penalty quadratic(double lambda) {
        detail::require(lambda > 0.0 && std::isfinite(lambda), "quadratic penalty: Lambda must be > 0");
        Penalty p(PenaltyKind::quadratic);
        p.lambda_ = lambda;
        return p;
    }
    /// (c / sqrt(n)) * S(t) * |nu|; c = 0 is the frictionless market.
    static Penalty proportional(double c) {
        detail::require(c >= 0.0 && std::isfinite(c), "proportional penalty: c must be >= 0");
        Penalty p(PenaltyKind::proportional);
        p.base_ = BoundPenalty::Base::zero_indicator;
        p.level_ = c;
        return p;
    }
    static Penalty truncated_zero(double c) {
        detail::require(c > 0.0 && std::isfinite(c), "truncated-zero penalty: c must be > 0");
        Penalty p = proportional(c);
        p.kind_ = PenaltyKind::truncated_zero;
        return p;
    }
    static Penalty truncated_quadratic(double lambda, double c) { return truncate(quadratic(lambda), c); }
    static Penalty power(double gamma) {
        detail::require(gamma >= 1.0 && gamma <= 2.0,
                        "power penalty: gamma must lie in [1,2]; gamma > 2 has no finite scaled limit");
        Penalty p(PenaltyKind::power);
        p.base_ = BoundPenalty::Base::power;
        p.gamma_ = gamma;
        return p;
    }
    static Penalty tabulated(std::vector<double> nu, std::vector<double> g, bool price_scaled = false) {
        Penalty p(PenaltyKind::tabulated);
        p.base_ = BoundPenalty::Base::tabulated;
        p.table_ = std::make_shared<const TabulatedCost>(std::move(nu), std::move(g), price_scaled);
        return p;
    }

    /// Truncation at level c: the penalty whose conjugate equals G on
    /// |y| <= c*S(t)/sqrt(n) and +inf outside.
    friend Penalty truncate(const Penalty& p, double c) {
        detail::require(c > 0.0 && std::isfinite(c), "truncate: c must be > 0");
        Penalty out = p;
        out.level_ = p.level_ ? std::min(*p.level_, c) : c;
        switch (p.kind_) {
            case PenaltyKind::quadratic: out.kind_ = PenaltyKind::truncated_quadratic; break;
            case PenaltyKind::power: out.kind_ = PenaltyKind::truncated_power; break;
            case PenaltyKind::tabulated: out.kind_ = PenaltyKind::truncated_tabulated; break;
            default: break;
        }
        return out;
    }

    PenaltyKind kind() const { return kind_; }
    std::optional<double> truncation_level() const { return level_; }
    double lambda() const { return lambda_; }
    double gamma() const { return gamma_; }
    const TabulatedCost* table() const { return table_.get(); }

    /// True when the cost varies with S(t) (band or price-scaled table).
    bool depends_on_spot() const { return level_.has_value() || (table_ && table_->price_scaled); }

    BoundPenalty bind(const TradeContext& ctx) const {
        BoundPenalty b;
        b.base = base_;
        b.lambda = lambda_;
        b.gamma = gamma_;
        b.table = table_.get();
        b.spot = ctx.spot;
        if (table_ && table_->price_scaled) b.table_scale = ctx.spot;
        if (level_) b.band = *level_ * ctx.spot / std::sqrt(static_cast<double>(ctx.n));
        return b;
    }

    std::string describe() const {
        std::ostringstream os;
        os << to_string(kind_);
        if (kind_ == PenaltyKind::quadratic || kind_ == PenaltyKind::truncated_quadratic) os << " Lambda=" << lambda_;
        if (kind_ == PenaltyKind::power || kind_ == PenaltyKind::truncated_power) os << " gamma=" << gamma_;
        if (level_) os << " c=" << *level_;
        return os.str();
    }

private:
    explicit Penalty(PenaltyKind k) : kind_(k) {}

    PenaltyKind kind_;
    BoundPenalty::Base base_ = BoundPenalty::Base::quadratic;
    double lambda_ = 0.0;
    double gamma_ = 2.0;
    std::shared_ptr<const TabulatedCost> table_;
    std::optional<double> level_;
};

inline double g_eval(const Penalty& p, const TradeContext& ctx, double nu) { return p.bind(ctx).cost(nu); }
inline double g_eval(const Penalty& p, double t, const PLPath& path, double nu) {
    return g_eval(p, context_at(path, t), nu);
}

inline ExtendedReal G_eval(const Penalty& p, const TradeContext& ctx, double y) { return p.bind(ctx).G(y); }
inline ExtendedReal G_eval(const Penalty& p, double t, const PLPath& path, double y) {
    return G_eval(p, context_at(path, t), y);
}

/// Finite domain [lo, hi] of the conjugate (HUGE_VAL sides are unbounded).
inline std::pair<double, double> dual_domain(const Penalty& p, const TradeContext& ctx) { return p.bind(ctx).domain(); }

inline ScaledLimit scaled_limit(const Penalty& p) {
    ScaledLimit out;
    out.level = p.truncation_level();
    switch (p.kind()) {
        case PenaltyKind::quadratic:
        case PenaltyKind::truncated_quadratic: out.coefficient = 1.0 / (4.0 * p.lambda()); break;
        case PenaltyKind::proportional:
        case PenaltyKind::truncated_zero: out.coefficient = 0.0; break;
        case PenaltyKind::power:
        case PenaltyKind::truncated_power: out.coefficient = p.gamma() == 2.0 ? 0.5 : 0.0; break;
        case PenaltyKind::tabulated:
        case PenaltyKind::truncated_tabulated: {
            const auto& s = p.table()->slopes;
            if (!(s.front() < 0.0 && s.back() > 0.0)) {
                // 0 is on the boundary of dom G: n*G(y/sqrt(n)) blows up on one side.
                throw InvalidInput("tabulated penalty: conjugate is not finite around 0, no scaled limit");
            }
            out.coefficient = 0.0;
            break;
        }
    }
    return out;
}

inline double G_hat_eval(const ScaledLimit& limit, double /*t*/, const PLPath& /*path*/, double y) { return limit(y); }

/// Brute-force conjugate of sampled g over its own grid: max_i (nu_i*y - g_i).
inline double conjugate_numeric(std::span<const double> nu, std::span<const double> g, double y) {
    detail::require(!nu.empty() && nu.size() == g.size(), "conjugate_numeric: empty or mismatched grid");
    double best = -HUGE_VAL;
    for (std::size_t i = 0; i < nu.size(); ++i) best = std::max(best, nu[i] * y - g[i]);
    return best;
}

/// Liquidity cost of a supply curve: g(nu) = (supply(nu) - S) * nu sampled on
/// nu_grid, returned as a tabulated penalty (convexity is validated).
inline Penalty from_supply_curve(const std::function<double(double)>& supply, double spot,
                                 const std::vector<double>& nu_grid) {
    std::vector<double> g(nu_grid.size());
    for (std::size_t i = 0; i < nu_grid.size(); ++i) g[i] = (supply(nu_grid[i]) - spot) * nu_grid[i];
    return Penalty::tabulated(nu_grid, std::move(g), false);
}

}  // namespace frictionlab
