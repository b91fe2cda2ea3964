#pragma once

// Path-dependent European claims F on piecewise-linear price paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "frictionlab/error.hpp"
#include "frictionlab/market_tree.hpp"

namespace frictionlab {

enum class ClaimKind { constant, call, put, asian_call, asian_put, lookback_max, tabulated };

/// What an engine has to carry to evaluate the claim at maturity.
enum class MarkovState { terminal_price, price_and_average, full_path };

enum class Averaging { time_integral, knot_mean };

inline const char* to_string(ClaimKind k) {
    switch (k) {
        case ClaimKind::constant: return "constant";
        case ClaimKind::call: return "call";
        case ClaimKind::put: return "put";
        case ClaimKind::asian_call: return "asian_call";
        case ClaimKind::asian_put: return "asian_put";
        case ClaimKind::lookback_max: return "lookback_max";
        case ClaimKind::tabulated: return "tabulated";
    }
    return "?";
}

inline const char* to_string(MarkovState s) {
    switch (s) {
        case MarkovState::terminal_price: return "terminal-price";
        case MarkovState::price_and_average: return "price+running-average";
        case MarkovState::full_path: return "full-path";
    }
    return "?";
}

/// Terminal payoff sampled at increasing prices, linear in between and
/// extended with the boundary slopes (floored at 0).
struct TabulatedPayoff {
    std::vector<double> price;
    std::vector<double> payoff;

    TabulatedPayoff(std::vector<double> p, std::vector<double> f) : price(std::move(p)), payoff(std::move(f)) {
        detail::require(price.size() == payoff.size() && price.size() >= 2, "tabulated payoff: need >= 2 samples");
        for (std::size_t i = 0; i + 1 < price.size(); ++i)
            detail::require(price[i + 1] > price[i], "tabulated payoff: prices must be strictly increasing");
        for (double v : payoff) detail::require(v >= 0.0 && std::isfinite(v), "tabulated payoff: values must be >= 0");
    }

    double operator()(double s) const {
        const std::size_t m = price.size();
        double v;
        if (s <= price.front()) {
            const double slope = (payoff[1] - payoff[0]) / (price[1] - price[0]);
            v = payoff[0] + slope * (s - price[0]);
        } else if (s >= price.back()) {
            const double slope = (payoff[m - 1] - payoff[m - 2]) / (price[m - 1] - price[m - 2]);
            v = payoff[m - 1] + slope * (s - price[m - 1]);
        } else {
            const auto it = std::upper_bound(price.begin(), price.end(), s);
            const std::size_t i = static_cast<std::size_t>(it - price.begin()) - 1;
            const double w = (s - price[i]) / (price[i + 1] - price[i]);
            v = (1 - w) * payoff[i] + w * payoff[i + 1];
        }
        return std::max(v, 0.0);
    }

    double max_abs_slope() const {
        double out = 0.0;
        for (std::size_t i = 0; i + 1 < price.size(); ++i)
            out = std::max(out, std::abs((payoff[i + 1] - payoff[i]) / (price[i + 1] - price[i])));
        return out;
    }
};

/// Polynomial growth constants: F(y) <= C * (1 + ||y||_inf^p).
struct Growth {
    double C = 1.0;
    double p = 1.0;
};

class Claim {
public:
    static Claim constant(double k) { return Claim(ClaimKind::constant, k, Growth{std::max(k, 1e-300), 1.0}); }
    static Claim call(double k) { return Claim(ClaimKind::call, k); }
    static Claim put(double k) { return Claim(ClaimKind::put, k, Growth{std::max(k, 1e-300), 1.0}); }
    static Claim asian_call(double k) { return Claim(ClaimKind::asian_call, k); }
    static Claim asian_put(double k) { return Claim(ClaimKind::asian_put, k, Growth{std::max(k, 1e-300), 1.0}); }
    /// (max_t S(t) - K)^+
    static Claim lookback_max(double k) { return Claim(ClaimKind::lookback_max, k); }
    static Claim tabulated(std::vector<double> price, std::vector<double> payoff) {
        Claim c(ClaimKind::tabulated, 0.0);
        c.table_ = std::make_shared<const TabulatedPayoff>(std::move(price), std::move(payoff));
        const double top = *std::max_element(c.table_->payoff.begin(), c.table_->payoff.end());
        c.growth_ = Growth{std::max(top, 1.0) + c.table_->max_abs_slope(), 1.0};
        return c;
    }

    Claim with_growth(Growth g) const {
        detail::require(g.C > 0.0 && g.p > 0.0, "Claim: growth constants must be positive");
        Claim out = *this;
        out.growth_ = g;
        return out;
    }
    Claim with_averaging(Averaging a) const {
        Claim out = *this;
        out.averaging_ = a;
        return out;
    }

    ClaimKind kind() const { return kind_; }
    double strike() const { return strike_; }
    Growth growth() const { return growth_; }
    Averaging averaging() const { return averaging_; }
    const TabulatedPayoff* table() const { return table_.get(); }

    MarkovState markov_state() const {
        switch (kind_) {
            case ClaimKind::asian_call:
            case ClaimKind::asian_put: return MarkovState::price_and_average;
            case ClaimKind::lookback_max: return MarkovState::full_path;
            default: return MarkovState::terminal_price;
        }
    }

    /// Payoff as a function of the terminal price (terminal-price claims only).
    double terminal(double s) const {
        switch (kind_) {
            case ClaimKind::constant: return strike_;
            case ClaimKind::call: return std::max(s - strike_, 0.0);
            case ClaimKind::put: return std::max(strike_ - s, 0.0);
            case ClaimKind::tabulated: return (*table_)(s);
            default: throw EngineRefusal(std::string("claim ") + to_string(kind_) + " is not a terminal-price claim");
        }
    }

    /// Payoff of an Asian claim given the path average.
    double of_average(double avg) const {
        switch (kind_) {
            case ClaimKind::asian_call: return std::max(avg - strike_, 0.0);
            case ClaimKind::asian_put: return std::max(strike_ - avg, 0.0);
            default: throw EngineRefusal("of_average: not an Asian claim");
        }
    }

    /// Lipschitz estimate with respect to the price, used for holdings bounds.
    double lipschitz() const {
        switch (kind_) {
            case ClaimKind::constant: return 0.0;
            case ClaimKind::tabulated: return table_->max_abs_slope();
            default: return 1.0;
        }
    }

    std::string describe() const {
        std::string s = to_string(kind_);
        if (kind_ != ClaimKind::tabulated) s += " K=" + std::to_string(strike_);
        return s;
    }

private:
    Claim(ClaimKind kind, double k, Growth g = Growth{1.0, 1.0}) : kind_(kind), strike_(k), growth_(g) {
        detail::require(k >= 0.0 && std::isfinite(k), "Claim: strike/constant must be >= 0");
    }

    ClaimKind kind_;
    double strike_;
    Growth growth_;
    Averaging averaging_ = Averaging::time_integral;
    std::shared_ptr<const TabulatedPayoff> table_;
};

inline double payoff_eval(const Claim& claim, const PLPath& path) {
    switch (claim.kind()) {
        case ClaimKind::asian_call:
        case ClaimKind::asian_put:
            return claim.of_average(claim.averaging() == Averaging::time_integral ? path.average() : path.knot_mean());
        case ClaimKind::lookback_max: return std::max(path.max() - claim.strike(), 0.0);
        default: return claim.terminal(path.terminal());
    }
}

inline MarkovState markov_dimension(const Claim& claim) { return claim.markov_state(); }

struct GrowthReport {
    bool passed = true;
    double worst_ratio = 0.0;  // max F / (C (1 + ||path||^p)) over samples
    PathPrefix worst_path;
    int samples = 0;
};

/// Samples tree paths (always including the all-up and all-down paths) and
/// checks F <= C(1 + ||path||_inf^p) on each.
inline GrowthReport growth_check(const Claim& claim, const MarketParams& params, int sample_count,
                                 std::uint64_t seed = 0x5eed) {
    params.validate();
    detail::require(sample_count >= 1, "growth_check: sample_count must be >= 1");
    std::mt19937_64 rng(seed);
    std::bernoulli_distribution coin(0.5);
    GrowthReport rep;
    const Growth g = claim.growth();
    auto check = [&](const PathPrefix& moves) {
        std::vector<double> knots(static_cast<std::size_t>(params.n) + 1);
        knots[0] = params.s0;
        int sum = 0;
        for (int k = 1; k <= params.n; ++k) {
            sum += moves[k - 1];
            knots[k] = price_at_level(params, sum);
        }
        const PLPath path(std::move(knots));
        const double bound = g.C * (1.0 + std::pow(path.max(), g.p));
        const double ratio = payoff_eval(claim, path) / bound;
        if (rep.samples++ == 0 || ratio > rep.worst_ratio) {
            rep.worst_ratio = ratio;
            rep.worst_path = moves;
        }
        if (ratio > 1.0) rep.passed = false;
    };
    check(PathPrefix(static_cast<std::size_t>(params.n), 1));
    if (sample_count >= 2) check(PathPrefix(static_cast<std::size_t>(params.n), -1));
    for (int s = 2; s < sample_count; ++s) {
        PathPrefix mv(static_cast<std::size_t>(params.n));
        for (auto& m : mv) m = coin(rng) ? 1 : -1;
        check(mv);
    }
    return rep;
}

}  // namespace frictionlab
